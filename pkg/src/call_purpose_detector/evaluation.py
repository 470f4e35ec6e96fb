"""
Call-level evaluation: precision, hit rate and F1 per domain.

A decision is correct when it picks the gold purpose utterance. Hit rate
only counts calls that last at least 30 seconds. The overall row averages
the domain rows.
"""

import csv
import io
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .bootstrap import Dataset, Split
from .detector import PurposeDetector
from .errors import EvaluationError
from .model import Call, CallDomain, PurposeDecision
from .patterns import RuleSet, load_rules
from .scoring import ABLATION_FEATURE_SETS
from .trained import Hyperparameters, evaluate_utterances, train
from .transcript import Corpus

logger = logging.getLogger(__name__)

MIN_ELIGIBLE_DURATION_S = 30.0
OVERALL = "overall"
DOMAIN_ORDER: Tuple[CallDomain, ...] = (
    CallDomain.SUPPORT,
    CallDomain.GENERAL,
    CallDomain.SALES,
    CallDomain.UNKNOWN,
)

Decisions = Mapping[str, Optional[PurposeDecision]]


def harmonic_mean(precision: float, hit_rate: float) -> float:
    total = precision + hit_rate
    return 2 * precision * hit_rate / total if total > 0 else 0.0


@dataclass(frozen=True)
class DomainScores:
    """One report row.

    ``degenerate`` marks a row without any decision, whose precision is
    reported as 0.
    """

    domain: str
    precision: float
    hit_rate: float
    f1: float
    decisions: int = 0
    correct: int = 0
    eligible_calls: int = 0
    hits: int = 0
    degenerate: bool = False

    @classmethod
    def from_counts(
        cls, domain: str, decisions: int, correct: int, eligible_calls: int, hits: int
    ) -> "DomainScores":
        precision = correct / decisions if decisions > 0 else 0.0
        hit_rate = hits / eligible_calls if eligible_calls > 0 else 0.0
        return cls(
            domain=domain,
            precision=precision,
            hit_rate=hit_rate,
            f1=harmonic_mean(precision, hit_rate),
            decisions=decisions,
            correct=correct,
            eligible_calls=eligible_calls,
            hits=hits,
            degenerate=decisions == 0,
        )


def average_rows(rows: Sequence[DomainScores], name: str = OVERALL) -> DomainScores:
    """Arithmetic mean of the metric columns; counts are summed."""
    if not rows:
        raise EvaluationError("cannot average zero report rows")
    n = len(rows)
    return DomainScores(
        domain=name,
        precision=sum(row.precision for row in rows) / n,
        hit_rate=sum(row.hit_rate for row in rows) / n,
        f1=sum(row.f1 for row in rows) / n,
        decisions=sum(row.decisions for row in rows),
        correct=sum(row.correct for row in rows),
        eligible_calls=sum(row.eligible_calls for row in rows),
        hits=sum(row.hits for row in rows),
        degenerate=any(row.degenerate for row in rows),
    )


@dataclass(frozen=True)
class EvalReport:
    """Per-domain rows plus their average, for one model."""

    rows: Tuple[DomainScores, ...]
    model: str = "rules"

    def __post_init__(self) -> None:
        if not self.rows:
            raise EvaluationError("an evaluation report needs at least one row")

    @property
    def overall(self) -> DomainScores:
        return average_rows(self.rows)

    def row(self, domain: str) -> DomainScores:
        for row in self.rows:
            if row.domain == domain:
                return row
        if domain == OVERALL:
            return self.overall
        raise KeyError(domain)


def evaluate(
    decisions: Decisions,
    corpus: Corpus,
    model: str = "rules",
    min_duration_s: float = MIN_ELIGIBLE_DURATION_S,
) -> EvalReport:
    """Score final decisions against the gold annotations of ``corpus``."""
    if not corpus.calls:
        raise EvaluationError("cannot evaluate an empty corpus")
    unknown = [call_id for call_id in decisions if call_id not in corpus.gold]
    if unknown:
        raise EvaluationError(
            f"{len(unknown)} decided call(s) have no gold annotation, "
            f"first: '{unknown[0]}'"
        )

    counts: Dict[CallDomain, List[int]] = {}
    for call in corpus.calls:
        tally = counts.setdefault(call.domain, [0, 0, 0, 0])
        decision = decisions.get(call.call_id)
        if decision is not None:
            tally[0] += 1
            if corpus.gold[call.call_id].purpose_index == decision.utterance_index:
                tally[1] += 1
        if call.duration_s >= min_duration_s:
            tally[2] += 1
            if decision is not None:
                tally[3] += 1

    rows = tuple(
        DomainScores.from_counts(domain.value, *counts[domain])
        for domain in DOMAIN_ORDER
        if domain in counts
    )
    report = EvalReport(rows, model)
    overall = report.overall
    logger.info(
        "%s: precision %.3f, hit rate %.3f, F1 %.3f",
        model,
        overall.precision,
        overall.hit_rate,
        overall.f1,
    )
    return report


def _percent(value: float) -> str:
    return f"{100 * value:.1f}"


def render_text(reports: Sequence[EvalReport]) -> str:
    """Aligned grid: one line per domain and model, then the averages."""
    if not reports:
        raise EvaluationError("nothing to report")
    header = ("Domain", "Model", "P", "HR", "F1")
    lines: List[Tuple[str, ...]] = []
    for report in reports:
        for row in report.rows + (report.overall,):
            flag = " *" if row.degenerate else ""
            lines.append(
                (
                    row.domain.capitalize(),
                    report.model,
                    _percent(row.precision) + flag,
                    _percent(row.hit_rate),
                    _percent(row.f1),
                )
            )
    widths = [max(len(cell) for cell in column) for column in zip(header, *lines)]
    out = []
    for cells in [header] + lines:
        out.append(
            "  ".join(
                cell.ljust(width) if i < 2 else cell.rjust(width)
                for i, (cell, width) in enumerate(zip(cells, widths))
            ).rstrip()
        )
    if any(row.degenerate for report in reports for row in report.rows):
        out.append("* no decisions; precision reported as 0")
    return "\n".join(out) + "\n"


CSV_COLUMNS = (
    "domain",
    "model",
    "precision",
    "hit_rate",
    "f1",
    "decisions",
    "correct",
    "eligible_calls",
    "hits",
    "degenerate",
)


def render_csv(reports: Sequence[EvalReport]) -> str:
    if not reports:
        raise EvaluationError("nothing to report")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        for row in report.rows + (report.overall,):
            writer.writerow(
                [
                    row.domain,
                    report.model,
                    f"{row.precision:.4f}",
                    f"{row.hit_rate:.4f}",
                    f"{row.f1:.4f}",
                    row.decisions,
                    row.correct,
                    row.eligible_calls,
                    row.hits,
                    str(row.degenerate).lower(),
                ]
            )
    return buffer.getvalue()


def run_detection(
    detector: PurposeDetector, calls: Sequence[Call], streaming: bool = False
) -> Dict[str, Optional[PurposeDecision]]:
    """Final decision per call, batch or utterance by utterance."""
    decisions: Dict[str, Optional[PurposeDecision]] = {}
    for call in calls:
        if streaming:
            _, decisions[call.call_id] = detector.stream_call(call)
        else:
            decisions[call.call_id] = detector.detect_call(call)
    return decisions


@dataclass(frozen=True)
class AblationRow:
    features: str
    precision: float
    hit_rate: float
    f1: float
    positive_precision: float


def run_feature_ablation(
    dataset: Dataset,
    corpus: Corpus,
    hyperparameters: Optional[Hyperparameters] = None,
    rules: Optional[RuleSet] = None,
) -> List[AblationRow]:
    """Train one scorer per feature set and evaluate each end to end."""
    training = dataset.split(Split.TRAIN)
    held_out = dataset.split(Split.VALIDATION) or dataset.split(Split.DEV)
    if not held_out:
        raise EvaluationError("ablation needs validation or dev rows")
    rule_set = rules if rules is not None else load_rules()

    rows: List[AblationRow] = []
    for features in ABLATION_FEATURE_SETS:
        scorer = train(training, hyperparameters, features)
        detector = PurposeDetector(rule_set, scorer)
        overall = evaluate(
            run_detection(detector, corpus.calls), corpus, features.name
        ).overall
        metrics = evaluate_utterances(scorer, held_out)
        rows.append(
            AblationRow(
                features.name,
                overall.precision,
                overall.hit_rate,
                overall.f1,
                metrics.positive_precision,
            )
        )
        logger.info("ablation %s: F1 %.3f", features.name, overall.f1)
    return rows


def render_ablation(rows: Sequence[AblationRow]) -> str:
    if not rows:
        raise EvaluationError("nothing to report")
    header = f"{'Features':<20}{'P':>7}{'HR':>7}{'F1':>7}{'PP':>7}"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row.features:<20}"
            f"{_percent(row.precision):>7}"
            f"{_percent(row.hit_rate):>7}"
            f"{_percent(row.f1):>7}"
            f"{_percent(row.positive_precision):>7}"
        )
    return "\n".join(lines) + "\n"
