"""
Service and pipeline configuration.

A YAML file maps onto ServiceConfig; every field has a default, so an empty
file (or no file at all) gives the bundled rules with the rule scorer.
"""

import logging
import os
from pathlib import Path
from typing import Annotated, Any, Dict, Mapping, Optional, Union

import yaml
from pydantic import (
    AfterValidator,
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
)

from .detector import PurposeDetector
from .errors import ConfigurationError
from .model import PatternTag
from .patterns import load_rules
from .scoring import RuleScorer, Scorer
from .selection import GateConfig, ThresholdTable
from .trained import load_model

logger = logging.getLogger(__name__)


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GateSettings(_Settings):
    max_start_time_s: float = Field(default=180.0, gt=0)
    max_utterance_index: int = Field(default=30, gt=0)
    min_tokens: int = Field(default=4, gt=0)
    max_tokens: int = Field(default=150, gt=0)

    def to_gate(self) -> GateConfig:
        return GateConfig(
            self.max_start_time_s,
            self.max_utterance_index,
            self.min_tokens,
            self.max_tokens,
        )


class ThresholdSettings(_Settings):
    default: float = Field(default=0.60, ge=0)
    per_tag: Dict[PatternTag, float] = Field(
        default_factory=lambda: {PatternTag.CALL_PURPOSE_PHRASE: 0.85}
    )

    def to_table(self) -> ThresholdTable:
        return ThresholdTable(self.default, dict(self.per_tag))


def _check_readable(path: Path) -> Path:
    if not (path.is_file() and os.access(path, os.R_OK)):
        raise ValueError(f"{path} is not a readable file")
    return path


ReadablePath = Annotated[Path, AfterValidator(_check_readable)]


class ServiceConfig(_Settings):
    """Everything the detector and the streaming service need."""

    rules_path: Optional[ReadablePath] = None
    model_path: Optional[ReadablePath] = None
    gate: GateSettings = Field(default_factory=GateSettings)
    thresholds: ThresholdSettings = Field(default_factory=ThresholdSettings)
    host: str = "127.0.0.1"
    port: int = Field(default=7878, ge=0, le=65535)
    max_sessions: int = Field(default=10_000, gt=0)
    deadline_s: float = Field(default=3.0, gt=0)
    idle_timeout_s: float = Field(default=600.0, gt=0)
    log_level: str = "WARNING"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"unknown log level '{value}'")
        return level

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ServiceConfig":
        """Copy with the non-None entries of ``overrides`` applied and validated."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return config_from_mapping(data)

    def scorer(self) -> Scorer:
        if self.model_path is None:
            return RuleScorer()
        return load_model(self.model_path)

    def build_detector(self, scorer: Optional[Scorer] = None) -> PurposeDetector:
        """Load rules and model and assemble the pipeline; fails fast.

        An explicit ``scorer`` replaces the configured one.
        """
        detector = PurposeDetector(
            rules=load_rules(self.rules_path),
            scorer=scorer if scorer is not None else self.scorer(),
            gate_config=self.gate.to_gate(),
            thresholds=self.thresholds.to_table(),
        )
        logger.info(
            "detector ready: %d rule expressions, %s",
            detector.rules.expression_count,
            type(detector.scorer).__name__,
        )
        return detector


def config_from_mapping(data: Mapping[str, Any]) -> ServiceConfig:
    try:
        return ServiceConfig.model_validate(dict(data))
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        raise ConfigurationError(
            f"invalid configuration at '{location}': {first.get('msg')}"
        ) from exc


def load_config(path: Optional[Union[str, Path]] = None) -> ServiceConfig:
    """Read a YAML configuration file; None gives the defaults."""
    if path is None:
        return ServiceConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return config_from_mapping(data)
