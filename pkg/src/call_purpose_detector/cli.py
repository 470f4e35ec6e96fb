"""
Command-line interface for the call purpose detector.

One subcommand per pipeline stage: synth, bootstrap, train, detect, eval,
simplify, ablate, plus serve for the streaming service. Machine-readable
results go to stdout (or --output); logs and errors go to stderr.
"""

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import IO, Any, Callable, Dict, Iterator, List, Optional, Sequence, Set

from . import __version__
from .bootstrap import (
    Dataset,
    SamplingSpec,
    Split,
    filter_false_positives,
    read_dataset_file,
    resample,
    weak_label,
    write_dataset,
)
from .config import ServiceConfig, load_config
from .errors import (
    CallPurposeError,
    EvaluationError,
    TrainingError,
    TranscriptParseError,
    TranscriptValidationError,
)
from .evaluation import (
    EvalReport,
    evaluate,
    render_ablation,
    render_csv,
    render_text,
    run_detection,
    run_feature_ablation,
)
from .events import DecisionBody, DecisionRecord, encode
from .generator import GenSpec, generate, load_templates
from .model import Call
from .patterns import load_rules
from .scoring import ABLATION_FEATURE_SETS, OracleScorer, RuleScorer
from .service import serve
from .simplification import Simplifier, simplification_stats
from .trained import (
    Hyperparameters,
    evaluate_utterances,
    majority_baseline,
    save_model,
    train,
)
from .transcript import (
    Corpus,
    GoldAnnotation,
    read_corpus,
    read_corpus_file,
    write_corpus,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

TRANSCRIPT_SUFFIXES = (".jsonl", ".ndjson")
FEATURE_CHOICES = {features.name: features for features in ABLATION_FEATURE_SETS}

Handler = Callable[[argparse.Namespace], int]


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _input_files(paths: Sequence[str]) -> List[Path]:
    files: List[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            found = sorted(
                p for p in path.iterdir() if p.suffix in TRANSCRIPT_SUFFIXES
            )
            if not found:
                raise TranscriptValidationError(f"no transcript files in {path}")
            files.extend(found)
        else:
            files.append(path)
    return files


def _read_one(path: Path) -> Corpus:
    if str(path) == "-":
        return read_corpus(sys.stdin.buffer)
    try:
        return read_corpus_file(str(path))
    except OSError as exc:
        raise TranscriptParseError(f"cannot read {path}: {exc.strerror}") from exc
    except (TranscriptParseError, TranscriptValidationError) as exc:
        raise type(exc)(f"{path}: {exc.message}", exc.line) from exc


def read_inputs(paths: Sequence[str]) -> Corpus:
    """Read and merge transcript files and directories in argument order."""
    calls: List[Call] = []
    seen: Set[str] = set()
    gold: Dict[str, GoldAnnotation] = {}
    for path in _input_files(paths):
        corpus = _read_one(path)
        for call in corpus.calls:
            if call.call_id in seen:
                raise TranscriptValidationError(
                    f"{path}: call '{call.call_id}' also appears in an earlier file"
                )
        calls.extend(corpus.calls)
        seen.update(corpus.call_ids())
        gold.update(corpus.gold)
        logger.info("read %d calls from %s", len(corpus.calls), path)
    return Corpus(tuple(calls), gold)


@contextmanager
def _output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None or path == "-":
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        yield handle


def _config(args: argparse.Namespace) -> ServiceConfig:
    config = load_config(args.config)
    overrides = {
        "rules_path": getattr(args, "rules", None),
        "model_path": getattr(args, "model", None),
        "host": getattr(args, "host", None),
        "port": getattr(args, "port", None),
    }
    if any(value is not None for value in overrides.values()):
        config = config.with_overrides(overrides)
    if args.log_level is None:
        logging.getLogger().setLevel(config.log_level)
    return config


def _seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else 0


def _given(args: argparse.Namespace, names: Dict[str, str]) -> Dict[str, Any]:
    """Map flag attributes that were set onto keyword arguments."""
    return {
        keyword: getattr(args, attribute)
        for attribute, keyword in names.items()
        if getattr(args, attribute) is not None
    }


def _cmd_detect(args: argparse.Namespace) -> int:
    detector = _config(args).build_detector()
    corpus = read_inputs(args.inputs)
    decisions = run_detection(detector, corpus.calls, streaming=args.streaming)
    with _output(args.output) as out:
        for call in corpus.calls:
            decision = decisions[call.call_id]
            body = DecisionBody.from_decision(decision) if decision else None
            out.write(encode(DecisionRecord(call_id=call.call_id, decision=body)))
            out.write("\n")
    hits = sum(1 for decision in decisions.values() if decision is not None)
    logger.info("decided %d of %d calls", hits, len(corpus.calls))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    serve(_config(args), stdio=args.stdio)
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    keywords = _given(
        args,
        {
            "calls": "n_calls",
            "no_purpose_rate": "no_purpose_rate",
            "inbound_rate": "inbound_rate",
            "prompt_rate": "prompt_rate",
            "dysfluency_rate": "dysfluency_rate",
            "greeting_prefix_rate": "greeting_prefix_rate",
        },
    )
    spec = GenSpec(seed=_seed(args), **keywords)
    corpus = generate(spec, load_templates(args.templates))
    with _output(args.output) as out:
        write_corpus(corpus, out)
    return EXIT_OK


def _cmd_bootstrap(args: argparse.Namespace) -> int:
    detector = _config(args).build_detector()
    corpus = read_inputs(args.inputs)
    rows = weak_label(corpus.calls, detector)
    if not args.keep_false_positives:
        rows = filter_false_positives(rows, detector.engine)
    dataset = resample(rows, SamplingSpec(size=args.size, seed=_seed(args)))
    with _output(args.output) as out:
        write_dataset(dataset.rows, out)
    return EXIT_OK


def _load_dataset(path: str) -> Dataset:
    try:
        return read_dataset_file(path)
    except OSError as exc:
        raise TrainingError(f"cannot read dataset {path}: {exc.strerror}") from exc


def _hyperparameters(args: argparse.Namespace) -> Hyperparameters:
    keywords = _given(
        args,
        {
            "epochs": "epochs",
            "learning_rate": "learning_rate",
            "batch_size": "batch_size",
            "dim": "dim",
            "hash_bits": "hash_bits",
        },
    )
    return Hyperparameters(seed=_seed(args), **keywords)


def _cmd_train(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    training = dataset.split(Split.TRAIN) or list(dataset.rows)
    scorer = train(training, _hyperparameters(args), FEATURE_CHOICES[args.features])
    save_model(scorer, args.output)
    logger.info("saved model to %s", args.output)

    summary: Dict[str, Any] = {
        "model": args.output,
        "features": args.features,
        "train_rows": len(training),
    }
    dev = dataset.split(Split.DEV)
    if dev:
        summary["dev"] = asdict(evaluate_utterances(scorer, dev))
        summary["majority_baseline"] = asdict(majority_baseline(dev))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    corpus = read_inputs(args.inputs)
    if not corpus.gold:
        raise EvaluationError("input carries no gold records")

    runs = []
    if args.oracle:
        runs.append(("oracle", config.build_detector(OracleScorer(corpus.gold))))
    else:
        if args.baseline and config.model_path is not None:
            runs.append(("rules", config.build_detector(RuleScorer())))
        name = "hybrid" if config.model_path is not None else "rules"
        runs.append((name, config.build_detector()))

    reports: List[EvalReport] = []
    for name, detector in runs:
        decisions = run_detection(detector, corpus.calls, streaming=args.streaming)
        reports.append(evaluate(decisions, corpus, name))
    render = render_csv if args.format == "csv" else render_text
    with _output(args.output) as out:
        out.write(render(reports))
    return EXIT_OK


def _text_lines(stream: IO[str]) -> List[str]:
    return [line.rstrip("\n") for line in stream if line.strip()]


def _cmd_simplify(args: argparse.Namespace) -> int:
    rules = load_rules(_config(args).rules_path)
    simplifier = Simplifier(rules.simplification)
    if args.texts:
        texts = list(args.texts)
    elif args.input in (None, "-"):
        texts = _text_lines(sys.stdin)
    else:
        with open(args.input, encoding="utf-8") as handle:
            texts = _text_lines(handle)

    results = [simplifier.simplify(text) for text in texts]
    with _output(args.output) as out:
        if args.stats:
            stats = simplification_stats(
                (text, result.text) for text, result in zip(texts, results)
            )
            out.write(json.dumps(asdict(stats), sort_keys=True) + "\n")
            return EXIT_OK
        for text, result in zip(texts, results):
            record = {
                "text": text,
                "simplified": result.text,
                "removed": [span.category.value for span in result.removed],
            }
            out.write(json.dumps(record) + "\n")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _config(args)
    dataset = _load_dataset(args.dataset)
    corpus = read_inputs(args.inputs)
    if not corpus.gold:
        raise EvaluationError("input carries no gold records")
    rows = run_feature_ablation(
        dataset, corpus, _hyperparameters(args), load_rules(config.rules_path)
    )
    with _output(args.output) as out:
        out.write(render_ablation(rows))
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
        help="Logging level on stderr (default: from config, else WARNING)",
    )
    common.add_argument("--seed", type=int, help="Random seed (default: 0)")
    return common


def _add_training_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--learning-rate", type=float, help="SGD learning rate")
    parser.add_argument("--batch-size", type=int, help="Mini-batch size")
    parser.add_argument("--dim", type=int, help="Text embedding dimension")
    parser.add_argument("--hash-bits", type=int, help="log2 of n-gram buckets")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="call-purpose",
        description="Purpose-of-Call detection for call transcripts",
        epilog="Examples:\n"
        "  call-purpose synth --calls 1000 --seed 7 -o corpus.jsonl\n"
        "  call-purpose detect corpus.jsonl -o decisions.jsonl\n"
        "  call-purpose eval corpus.jsonl --format csv",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    common = _common_options()
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    def command(name: str, handler: Handler, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.set_defaults(handler=handler)
        return sub

    detect = command("detect", _cmd_detect, "Detect the purpose of each call")
    detect.add_argument("inputs", nargs="+", help="Transcript files or directories")
    detect.add_argument("-o", "--output", help="Decisions file (default: stdout)")
    detect.add_argument("--rules", help="Rules file (overrides config)")
    detect.add_argument("--model", help="Trained model file (overrides config)")
    detect.add_argument(
        "--streaming",
        action="store_true",
        help="Process utterance by utterance instead of per call",
    )

    serve_cmd = command("serve", _cmd_serve, "Run the streaming service")
    serve_cmd.add_argument("--stdio", action="store_true", help="Serve stdin/stdout")
    serve_cmd.add_argument("--host", help="Listen address (overrides config)")
    serve_cmd.add_argument("--port", type=int, help="Listen port (overrides config)")
    serve_cmd.add_argument("--rules", help="Rules file (overrides config)")
    serve_cmd.add_argument("--model", help="Trained model file (overrides config)")

    synth = command("synth", _cmd_synth, "Generate a synthetic gold corpus")
    synth.add_argument("--calls", type=int, help="Number of calls (default: 1000)")
    synth.add_argument("--no-purpose-rate", type=float)
    synth.add_argument("--inbound-rate", type=float)
    synth.add_argument("--prompt-rate", type=float)
    synth.add_argument("--dysfluency-rate", type=float)
    synth.add_argument("--greeting-prefix-rate", type=float)
    synth.add_argument("--templates", help="Templates file (default: bundled)")
    synth.add_argument("-o", "--output", help="Corpus file (default: stdout)")

    bootstrap = command("bootstrap", _cmd_bootstrap, "Weak-label and resample")
    bootstrap.add_argument("inputs", nargs="+", help="Transcript files or directories")
    bootstrap.add_argument("--size", type=int, default=10_000, help="Dataset rows")
    bootstrap.add_argument("--rules", help="Rules file (overrides config)")
    bootstrap.add_argument(
        "--keep-false-positives",
        action="store_true",
        help="Skip the signpost and dysfluency filter",
    )
    bootstrap.add_argument("-o", "--output", help="Dataset file (default: stdout)")

    train_cmd = command("train", _cmd_train, "Train the utterance scorer")
    train_cmd.add_argument("dataset", help="Dataset file from bootstrap")
    train_cmd.add_argument("-o", "--output", required=True, help="Model file")
    train_cmd.add_argument(
        "--features",
        choices=sorted(FEATURE_CHOICES),
        default="all features",
        help="Tabular features fed to the scorer",
    )
    _add_training_options(train_cmd)

    eval_cmd = command("eval", _cmd_eval, "Evaluate against gold annotations")
    eval_cmd.add_argument("inputs", nargs="+", help="Gold corpus files or directories")
    eval_cmd.add_argument("--rules", help="Rules file (overrides config)")
    eval_cmd.add_argument("--model", help="Trained model file (overrides config)")
    eval_cmd.add_argument(
        "--oracle", action="store_true", help="Score with the gold annotations"
    )
    eval_cmd.add_argument(
        "--baseline",
        action="store_true",
        help="Also report the rule scorer when a model is configured",
    )
    eval_cmd.add_argument("--streaming", action="store_true")
    eval_cmd.add_argument("--format", choices=["text", "csv"], default="text")
    eval_cmd.add_argument("-o", "--output", help="Report file (default: stdout)")

    simplify = command("simplify", _cmd_simplify, "Simplify purpose utterances")
    simplify.add_argument("texts", nargs="*", help="Texts (default: read --input)")
    simplify.add_argument("-i", "--input", help="One text per line (default: stdin)")
    simplify.add_argument("--rules", help="Rules file (overrides config)")
    simplify.add_argument(
        "--stats", action="store_true", help="Print a summary instead of each text"
    )
    simplify.add_argument("-o", "--output", help="Output file (default: stdout)")

    ablate = command("ablate", _cmd_ablate, "Compare tabular feature sets")
    ablate.add_argument("dataset", help="Dataset file from bootstrap")
    ablate.add_argument("inputs", nargs="+", help="Gold corpus files or directories")
    ablate.add_argument("--rules", help="Rules file (overrides config)")
    ablate.add_argument("-o", "--output", help="Report file (default: stdout)")
    _add_training_options(ablate)

    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """Entry point of the call-purpose command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        sys.exit(EXIT_USAGE)

    logging.basicConfig(
        level=args.log_level or "WARNING",
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        code = args.handler(args)
    except CallPurposeError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        code = EXIT_DATA
    except Exception as exc:
        logger.debug("unexpected failure", exc_info=True)
        print(f"Error: {exc}", file=sys.stderr)
        code = EXIT_RUNTIME
    sys.exit(code)


if __name__ == "__main__":
    main()
