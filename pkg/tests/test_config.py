"""
Tests for configuration loading and detector assembly.
"""

import os
import tempfile
from pathlib import Path

import pytest

from call_purpose_detector.config import (
    ServiceConfig,
    config_from_mapping,
    load_config,
)
from call_purpose_detector.errors import ConfigurationError, RuleLoadError
from call_purpose_detector.model import PatternTag
from call_purpose_detector.scoring import RuleScorer
from call_purpose_detector.trained import (
    Hyperparameters,
    TrainedScorer,
    save_model,
    train,
)

from .builders import toy_rows


class TestLoadConfig:
    """Test suite for reading configuration files."""

    def setup_method(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.temp_dir.name)

    def teardown_method(self):
        """Clean up test fixtures."""
        self.temp_dir.cleanup()

    def write(self, name, text):
        path = self.root / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults(self):
        """Test the configuration used without a file."""
        config = load_config()
        assert config.port == 7878
        assert config.deadline_s == 3.0
        assert config.max_sessions == 10_000
        assert config.rules_path is None and config.model_path is None
        assert config.thresholds.per_tag == {PatternTag.CALL_PURPOSE_PHRASE: 0.85}

    def test_empty_file(self):
        """Test that an empty file gives the defaults."""
        assert load_config(self.write("empty.yaml", "")) == ServiceConfig()

    def test_file_values(self):
        """Test nested gate and threshold settings."""
        path = self.write(
            "service.yaml",
            "port: 9000\n"
            "log_level: info\n"
            "gate:\n"
            "  max_utterance_index: 20\n"
            "thresholds:\n"
            "  default: 0.7\n"
            "  per_tag:\n"
            "    call_purpose_phrase: 0.9\n"
            "    greeting: 0.8\n",
        )
        config = load_config(path)
        assert config.port == 9000
        assert config.log_level == "INFO"
        assert config.gate.to_gate().max_utterance_index == 20
        table = config.thresholds.to_table()
        assert table.threshold_for(frozenset({PatternTag.GREETING})) == 0.8
        assert table.default == 0.7

    def test_invalid_values_name_their_location(self):
        """Test that validation errors point at the offending key."""
        cases = [
            ("port: 70000\n", "port"),
            ("gate:\n  min_tokens: 0\n", "gate.min_tokens"),
            ("unknown_key: 1\n", "unknown_key"),
            ("log_level: loud\n", "log_level"),
        ]
        for text, location in cases:
            with pytest.raises(ConfigurationError) as info:
                load_config(self.write("bad.yaml", text))
            assert f"'{location}'" in str(info.value), text

    def test_unreadable_paths(self):
        """Test that rules and model paths must be readable files."""
        with pytest.raises(ConfigurationError, match="rules_path"):
            config_from_mapping({"rules_path": str(self.root / "missing.yaml")})
        with pytest.raises(ConfigurationError, match="model_path"):
            config_from_mapping({"model_path": str(self.root)})

    def test_bad_documents(self):
        """Test missing, non-YAML and non-mapping files."""
        with pytest.raises(ConfigurationError, match="cannot read"):
            load_config(self.root / "nothing.yaml")
        with pytest.raises(ConfigurationError, match="invalid YAML"):
            load_config(self.write("broken.yaml", "port: [1,\n"))
        with pytest.raises(ConfigurationError, match="mapping"):
            load_config(self.write("list.yaml", "- 1\n- 2\n"))

    def test_with_overrides(self):
        """Test that only the given overrides change."""
        config = ServiceConfig(port=9000).with_overrides(
            {"host": "0.0.0.0", "port": None}
        )
        assert (config.host, config.port) == ("0.0.0.0", 9000)
        with pytest.raises(ConfigurationError):
            config.with_overrides({"port": -1})


class TestBuildDetector:
    """Test suite for assembling the pipeline from a configuration."""

    def test_default_pipeline(self):
        """Test the bundled rules with the rule scorer."""
        detector = ServiceConfig().build_detector()
        assert isinstance(detector.scorer, RuleScorer)
        assert detector.rules.expression_count > 0

    def test_explicit_scorer_wins(self):
        """Test that a passed scorer replaces the configured one."""
        scorer = RuleScorer()
        assert ServiceConfig().build_detector(scorer).scorer is scorer

    def test_threshold_ordering_is_enforced(self):
        """Test that the purpose-phrase threshold may not undercut the default."""
        config = config_from_mapping(
            {"thresholds": {"default": 0.9, "per_tag": {"call_purpose_phrase": 0.5}}}
        )
        with pytest.raises(ConfigurationError):
            config.build_detector()

    def test_broken_rules_file(self):
        """Test that a bad rules file fails fast."""
        with tempfile.NamedTemporaryFile(
            mode="w", suffix=".yaml", delete=False, encoding="utf-8"
        ) as f:
            f.write("negative:\n  - id: broken\n    expressions: ['(']\n")
            temp_file = f.name
        try:
            config = config_from_mapping({"rules_path": temp_file})
            with pytest.raises(RuleLoadError):
                config.build_detector()
        finally:
            os.unlink(temp_file)

    def test_model_path_loads_trained_scorer(self):
        """Test that a configured model file becomes the scorer."""
        scorer = train(toy_rows(2), Hyperparameters(epochs=1, hash_bits=8, dim=4))
        with tempfile.NamedTemporaryFile(suffix=".cpm", delete=False) as f:
            temp_file = f.name
        try:
            save_model(scorer, temp_file)
            config = config_from_mapping({"model_path": temp_file})
            assert isinstance(config.build_detector().scorer, TrainedScorer)
        finally:
            os.unlink(temp_file)
