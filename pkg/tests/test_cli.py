"""
Test cases for the CLI module.
"""

import csv
import json
import os
import sys
import tempfile
from dataclasses import replace
from io import BytesIO, StringIO, TextIOWrapper
from unittest.mock import patch

import pytest

from call_purpose_detector import __version__
from call_purpose_detector.bootstrap import Split, weak_label, write_dataset
from call_purpose_detector.cli import main
from call_purpose_detector.generator import GenSpec, generate
from call_purpose_detector.model import Label
from call_purpose_detector.transcript import Corpus, write_corpus

from .builders import PROMPT


def run_cli(*arguments, stdin=None):
    """Run the command with mocked argv and exit; return (code, stdout, stderr)."""
    test_args = ["call-purpose", *arguments]
    with patch.object(sys, "argv", test_args):
        with patch.object(sys, "exit") as mock_exit:
            with patch("sys.stdout", new=StringIO()) as fake_out:
                with patch("sys.stderr", new=StringIO()) as fake_err:
                    if stdin is not None:
                        stream = TextIOWrapper(
                            BytesIO(stdin.encode("utf-8")), encoding="utf-8"
                        )
                        with patch("sys.stdin", new=stream):
                            main()
                    else:
                        main()
    mock_exit.assert_called_once()
    return mock_exit.call_args[0][0], fake_out.getvalue(), fake_err.getvalue()


class TestCLI:
    """Test cases for the command-line interface."""

    @classmethod
    def setup_class(cls):
        cls.corpus = generate(GenSpec(n_calls=200, seed=21))

    def setup_method(self):
        """Set up a scratch directory holding a generated corpus."""
        self.tmp = tempfile.TemporaryDirectory()
        self.corpus_path = self.path("corpus.jsonl")
        with open(self.corpus_path, "w", encoding="utf-8") as handle:
            write_corpus(self.corpus, handle)

    def teardown_method(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def write(self, name, text):
        target = self.path(name)
        with open(target, "w", encoding="utf-8") as handle:
            handle.write(text)
        return target

    def write_dataset(self, rows, name="dataset.jsonl"):
        target = self.path(name)
        with open(target, "w", encoding="utf-8") as handle:
            write_dataset(rows, handle)
        return target

    def split_rows(self):
        rows = weak_label(self.corpus.calls)
        held_out = set(sorted({row.call_id for row in rows})[::5])
        return [
            replace(row, split=Split.DEV if row.call_id in held_out else Split.TRAIN)
            for row in rows
        ]

    def test_version(self):
        """Test the --version flag."""
        with patch.object(sys, "argv", ["call-purpose", "--version"]):
            with patch("sys.stdout", new=StringIO()) as fake_out:
                with pytest.raises(SystemExit) as exc_info:
                    main()
        assert exc_info.value.code == 0
        assert __version__ in fake_out.getvalue()

    def test_no_command(self):
        """Test that a missing subcommand is a usage error."""
        with patch.object(sys, "argv", ["call-purpose"]):
            with patch("sys.stderr", new=StringIO()) as fake_err:
                with pytest.raises(SystemExit) as exc_info:
                    main()
        assert exc_info.value.code == 1
        assert "COMMAND" in fake_err.getvalue()

    def test_unknown_option(self):
        """Test that bad options exit with the usage status."""
        with patch.object(sys, "argv", ["call-purpose", "detect", "--bogus", "x"]):
            with patch("sys.stderr", new=StringIO()):
                with pytest.raises(SystemExit) as exc_info:
                    main()
        assert exc_info.value.code == 1

    def test_synth_is_deterministic(self):
        """Test that synth writes the same corpus for the same seed."""
        outputs = []
        for name in ("a.jsonl", "b.jsonl"):
            code, _, _ = run_cli(
                "synth", "--calls", "30", "--seed", "4", "-o", self.path(name)
            )
            assert code == 0, f"Expected exit 0, got {code}"
            with open(self.path(name), encoding="utf-8") as handle:
                outputs.append(handle.read())
        assert outputs[0] == outputs[1]
        assert outputs[0].count('"type":"gold"') == 30

    def test_synth_to_stdout(self):
        """Test synth without an output file."""
        code, out, _ = run_cli("synth", "--calls", "5", "--no-purpose-rate", "0")
        assert code == 0
        gold = [json.loads(line) for line in out.splitlines() if '"gold"' in line]
        assert len(gold) == 5
        assert all(record["purpose_index"] is not None for record in gold)

    def test_detect(self):
        """Test one decision record per call, in input order."""
        code, out, err = run_cli("detect", self.corpus_path)
        assert code == 0, f"Expected exit 0, got {code}: {err}"
        records = [json.loads(line) for line in out.splitlines()]
        assert [r["call_id"] for r in records] == [c.call_id for c in self.corpus.calls]
        decided = [r for r in records if r["decision"] is not None]
        assert decided
        for record in decided:
            assert record["decision"]["combined_score"] >= 0.6

    def test_detect_streaming_matches_batch(self):
        """Test that --streaming does not change the decisions."""
        _, batch, _ = run_cli("detect", self.corpus_path)
        _, streaming, _ = run_cli("detect", "--streaming", self.corpus_path)
        assert batch == streaming

    def test_detect_directory(self):
        """Test reading every transcript file of a directory."""
        output = self.path("decisions.out")
        code, _, _ = run_cli("detect", self.tmp.name, "-o", output)
        assert code == 0
        with open(output, encoding="utf-8") as handle:
            assert len(handle.read().splitlines()) == 200

    def test_detect_empty_directory(self):
        """Test a directory without transcript files."""
        empty = self.path("empty")
        os.mkdir(empty)
        code, _, err = run_cli("detect", empty)
        assert code == 2
        assert "no transcript files" in err

    def test_detect_missing_file(self):
        """Test a nonexistent input file."""
        code, _, err = run_cli("detect", self.path("nope.jsonl"))
        assert code == 2
        assert "cannot read" in err

    def test_detect_duplicate_calls(self):
        """Test that a call may appear in one input file only."""
        code, _, err = run_cli("detect", self.corpus_path, self.corpus_path)
        assert code == 2
        assert "also appears in an earlier file" in err

    def test_detect_bad_record(self):
        """Test that a broken line is reported with its position."""
        broken = self.write("broken.jsonl", '{"type": "utterance"}\n')
        code, _, err = run_cli("detect", broken)
        assert code == 2
        assert "broken.jsonl" in err

    def test_eval_oracle(self):
        """Test that the oracle scorer is always right."""
        code, out, err = run_cli(
            "eval", "--oracle", "--format", "csv", self.corpus_path
        )
        assert code == 0, f"Expected exit 0, got {code}: {err}"
        rows = list(csv.DictReader(StringIO(out)))
        assert {row["model"] for row in rows} == {"oracle"}
        assert rows[-1]["domain"] == "overall"
        for row in rows[:-1]:
            if int(row["decisions"]) > 0:
                assert row["precision"] == "1.0000", row

    def test_eval_text(self):
        """Test the text report of the rule pipeline."""
        code, out, _ = run_cli("eval", self.corpus_path)
        assert code == 0
        assert out.splitlines()[0].split() == ["Domain", "Model", "P", "HR", "F1"]
        assert "rules" in out

    def test_eval_without_gold(self):
        """Test that evaluation needs gold records."""
        bare = self.path("bare.ndjson")
        with open(bare, "w", encoding="utf-8") as handle:
            write_corpus(Corpus(self.corpus.calls[:3], {}), handle)
        code, _, err = run_cli("eval", bare)
        assert code == 2
        assert "no gold records" in err

    def test_train_needs_every_label(self):
        """Test that a single-class dataset is rejected."""
        rows = [row for row in self.split_rows() if row.label is Label.NEGATIVE]
        dataset = self.write_dataset(rows)
        code, _, err = run_cli("train", dataset, "-o", self.path("model.bin"))
        assert code == 2
        assert "missing" in err
        assert not os.path.exists(self.path("model.bin"))

    def test_train_and_use_model(self):
        """Test training, then detection and evaluation with the model."""
        dataset = self.write_dataset(self.split_rows())
        model = self.path("model.bin")
        code, out, err = run_cli(
            "train",
            dataset,
            "-o",
            model,
            "--epochs",
            "2",
            "--hash-bits",
            "10",
            "--dim",
            "8",
        )
        assert code == 0, f"Expected exit 0, got {code}: {err}"
        summary = json.loads(out)
        assert summary["features"] == "all features"
        assert summary["train_rows"] > 0
        assert "dev" in summary and "majority_baseline" in summary
        assert os.path.getsize(model) > 0

        code, out, _ = run_cli("detect", "--model", model, self.corpus_path)
        assert code == 0
        assert len(out.splitlines()) == 200

        code, out, _ = run_cli(
            "eval", "--model", model, "--baseline", "--format", "csv", self.corpus_path
        )
        assert code == 0
        models = {row["model"] for row in csv.DictReader(StringIO(out))}
        assert models == {"rules", "hybrid"}

    def test_model_must_exist(self):
        """Test that an unreadable model path is a configuration error."""
        missing = self.path("x.bin")
        code, _, err = run_cli("detect", "--model", missing, self.corpus_path)
        assert code == 2
        assert "invalid configuration" in err

    def test_bootstrap_deficit(self):
        """Test that an oversized sample names the short stratum."""
        code, _, err = run_cli("bootstrap", self.corpus_path, "--size", "100000")
        assert code == 2
        assert "Stratum" in err

    def test_simplify_texts(self):
        """Test simplifying texts given on the command line."""
        code, out, _ = run_cli("simplify", "Hi, I need a refund for my order.")
        assert code == 0
        (record,) = [json.loads(line) for line in out.splitlines()]
        assert record["simplified"] == "I need a refund for my order."
        assert record["removed"]

    def test_simplify_stats_from_file(self):
        """Test the summary over an input file."""
        texts = self.write(
            "texts.txt", "Hi, I need a refund for my order.\n\nI want to cancel.\n"
        )
        code, out, _ = run_cli("simplify", "-i", texts, "--stats")
        assert code == 0
        stats = json.loads(out)
        assert stats["fraction_simplified"] == pytest.approx(0.5)
        assert stats["mean_length_reduction"] > 0

    def test_simplify_stdin(self):
        """Test simplifying lines read from stdin."""
        code, out, _ = run_cli("simplify", stdin="I want to cancel.\n")
        assert code == 0
        assert json.loads(out)["simplified"] == "I want to cancel."

    def test_serve_stdio(self):
        """Test pipe mode of the service."""
        events = [
            {
                "type": "utterance",
                "call_id": "a",
                "index": 0,
                "side": "agent",
                "start_time_s": 0.0,
                "text": PROMPT,
            },
            {
                "type": "utterance",
                "call_id": "a",
                "index": 1,
                "side": "customer",
                "start_time_s": 5.0,
                "text": "I need a refund for my order.",
            },
            {"type": "call_end", "call_id": "a"},
        ]
        stdin = "".join(json.dumps(event) + "\n" for event in events)
        code, out, _ = run_cli("serve", "--stdio", stdin=stdin)
        assert code == 0
        (update,) = [json.loads(line) for line in out.splitlines()]
        assert update["type"] == "purpose_update"
        assert update["utterance_index"] == 1

    def test_config_thresholds(self):
        """Test that configured thresholds reach the detector."""
        config = self.write(
            "config.yaml",
            "thresholds:\n"
            "  default: 2.5\n"
            "  per_tag:\n"
            "    call_purpose_phrase: 2.5\n",
        )
        code, out, _ = run_cli("detect", "--config", config, self.corpus_path)
        assert code == 0
        records = [json.loads(line) for line in out.splitlines()]
        assert len(records) == 200
        assert all(record["decision"] is None for record in records)

    def test_invalid_config(self):
        """Test that a bad configuration exits with the data status."""
        config = self.write("config.yaml", "gate:\n  min_tokens: -1\n")
        code, _, err = run_cli("detect", "--config", config, self.corpus_path)
        assert code == 2
        assert "invalid configuration at 'gate.min_tokens'" in err

    def test_ablate(self):
        """Test the feature-set comparison."""
        dataset = self.write_dataset(self.split_rows())
        code, out, err = run_cli(
            "ablate",
            dataset,
            self.corpus_path,
            "--epochs",
            "1",
            "--hash-bits",
            "10",
            "--dim",
            "8",
        )
        assert code == 0, f"Expected exit 0, got {code}: {err}"
        lines = out.splitlines()
        assert len(lines) == 5
        assert lines[1].startswith("text only")
