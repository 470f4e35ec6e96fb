"""
Scoring contract and the rule-derived scorers.

A scorer assigns every gated utterance a ScoreTriple over
(purpose, question, negative). The rule scorer maps the pattern engine's
verdict onto a fixed table; the oracle scorer reads gold annotations.
The trained scorer lives in ``trained``.
"""

from dataclasses import dataclass
from typing import Mapping, Protocol, Tuple

import numpy as np

from .model import CallSide, ScoreTriple, Utterance
from .patterns import PatternAnalysis
from .transcript import GoldAnnotation

MAX_START_TIME_S = 180.0


@dataclass(frozen=True)
class FeatureSet:
    """Which tabular features reach the scorer; disabled ones read as zero."""

    start_time: bool = True
    call_side: bool = True

    @property
    def name(self) -> str:
        if self.start_time and self.call_side:
            return "all features"
        if self.start_time:
            return "text + start time"
        if self.call_side:
            return "text + call side"
        return "text only"


ALL_FEATURES = FeatureSet()
TEXT_ONLY = FeatureSet(start_time=False, call_side=False)
ABLATION_FEATURE_SETS: Tuple[FeatureSet, ...] = (
    TEXT_ONLY,
    FeatureSet(start_time=True, call_side=False),
    FeatureSet(start_time=False, call_side=True),
    ALL_FEATURES,
)


@dataclass(frozen=True)
class TabularFeatures:
    """Start time normalized by the 180 s cap, and the call-initiator flag."""

    start_time: float
    call_side: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.start_time <= 1.0:
            raise ValueError(f"normalized start time out of range: {self.start_time}")

    @classmethod
    def from_values(
        cls, start_time_s: float, side: CallSide, initiator: CallSide
    ) -> "TabularFeatures":
        normalized = min(max(start_time_s / MAX_START_TIME_S, 0.0), 1.0)
        return cls(normalized, 1.0 if side is initiator else 0.0)

    @classmethod
    def from_utterance(
        cls, utterance: Utterance, initiator: CallSide
    ) -> "TabularFeatures":
        return cls.from_values(utterance.start_time_s, utterance.side, initiator)

    def as_array(self, features: FeatureSet = ALL_FEATURES) -> np.ndarray:
        return np.array(
            [
                self.start_time if features.start_time else 0.0,
                self.call_side if features.call_side else 0.0,
            ],
            dtype=np.float64,
        )


class Scorer(Protocol):
    """Anything that turns one utterance into a ScoreTriple."""

    def score(
        self,
        utterance: Utterance,
        analysis: PatternAnalysis,
        tabular: TabularFeatures,
    ) -> ScoreTriple: ...


@dataclass(frozen=True)
class ScoreTable:
    """Fixed triples the rule scorer hands out."""

    purpose: ScoreTriple = ScoreTriple(0.90, 0.02, 0.08)
    question: ScoreTriple = ScoreTriple(0.05, 0.90, 0.05)
    negative: ScoreTriple = ScoreTriple(0.05, 0.05, 0.90)


DEFAULT_SCORE_TABLE = ScoreTable()


def rule_score(
    analysis: PatternAnalysis, table: ScoreTable = DEFAULT_SCORE_TABLE
) -> ScoreTriple:
    """Map a pattern verdict to a triple: purpose beats prompt beats the rest."""
    if analysis.qualifying:
        return table.purpose
    if analysis.is_prompt:
        return table.question
    return table.negative


class RuleScorer:
    def __init__(self, table: ScoreTable = DEFAULT_SCORE_TABLE):
        self.table = table

    def score(
        self,
        utterance: Utterance,
        analysis: PatternAnalysis,
        tabular: TabularFeatures,
    ) -> ScoreTriple:
        return rule_score(analysis, self.table)


_ORACLE_PURPOSE = ScoreTriple(1.0, 0.0, 0.0)
_ORACLE_OTHER = ScoreTriple(0.0, 0.0, 1.0)


class OracleScorer:
    """Scores the gold purpose utterance of each call as certain."""

    def __init__(self, gold: Mapping[str, GoldAnnotation]):
        self.gold = gold

    def score(
        self,
        utterance: Utterance,
        analysis: PatternAnalysis,
        tabular: TabularFeatures,
    ) -> ScoreTriple:
        annotation = self.gold.get(utterance.call_id)
        if annotation is not None and annotation.purpose_index == utterance.index:
            return _ORACLE_PURPOSE
        return _ORACLE_OTHER
