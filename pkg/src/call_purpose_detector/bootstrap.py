"""
Weak supervision: training data for the scorer from the rule pipeline.

The rule pipeline labels every gated utterance of a corpus (its final
decision is positive, question prompts are question, the rest negative).
Signpost-only positives are filtered out, then the rows are resampled to a
fixed label and pattern mix and split by call into train/dev/validation.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .detector import PurposeDetector
from .errors import (
    ConfigurationError,
    StratumDeficitError,
    TrainingError,
    TranscriptParseError,
)
from .events import WireModel
from .model import (
    Call,
    CallDirection,
    CallSide,
    Label,
    PatternTag,
    Utterance,
    initiator_side,
)
from .patterns import PatternEngine
from .scoring import TabularFeatures
from .selection import dominant_tag

logger = logging.getLogger(__name__)

MIX_TOLERANCE = 1e-9
OTHER_STRATUM = "other"
NAMED_STRATA: Tuple[PatternTag, ...] = (
    PatternTag.CALL_PURPOSE_PHRASE,
    PatternTag.DESIRE_PHRASE,
    PatternTag.PROBLEM_PHRASE,
)


class Split(Enum):
    TRAIN = "train"
    DEV = "dev"
    VALIDATION = "validation"


SPLIT_ORDER: Tuple[Split, ...] = (Split.TRAIN, Split.DEV, Split.VALIDATION)


def stratum_of(tag: Optional[PatternTag]) -> str:
    """Positive-pattern stratum; everything but the named three pools as 'other'."""
    if tag is not None and tag in NAMED_STRATA:
        return tag.value
    return OTHER_STRATUM


@dataclass(frozen=True)
class LabeledUtterance:
    """A weakly labeled utterance, optionally assigned to a split."""

    utterance: Utterance
    label: Label
    source_pattern: Optional[PatternTag] = None
    from_hit_call: bool = True
    direction: CallDirection = CallDirection.UNKNOWN
    split: Optional[Split] = None

    @property
    def text(self) -> str:
        return self.utterance.text

    @property
    def call_id(self) -> str:
        return self.utterance.call_id

    @property
    def tabular(self) -> TabularFeatures:
        return TabularFeatures.from_utterance(
            self.utterance, initiator_side(self.direction)
        )


def _default_label_mix() -> Dict[Label, float]:
    return {Label.POSITIVE: 0.425, Label.NEGATIVE: 0.425, Label.QUESTION: 0.15}


def _default_pattern_mix() -> Dict[str, float]:
    return {
        PatternTag.CALL_PURPOSE_PHRASE.value: 0.30,
        PatternTag.DESIRE_PHRASE.value: 0.30,
        PatternTag.PROBLEM_PHRASE.value: 0.20,
        OTHER_STRATUM: 0.20,
    }


def _default_split_mix() -> Dict[Split, float]:
    return {Split.TRAIN: 0.8, Split.DEV: 0.1, Split.VALIDATION: 0.1}


@dataclass(frozen=True)
class SamplingSpec:
    """Target size and distributions of a resampled dataset."""

    size: int = 10_000
    label_mix: Mapping[Label, float] = field(default_factory=_default_label_mix)
    pattern_mix: Mapping[str, float] = field(default_factory=_default_pattern_mix)
    split_mix: Mapping[Split, float] = field(default_factory=_default_split_mix)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ConfigurationError(f"sample size must be positive, got {self.size}")
        for name in ("label_mix", "pattern_mix", "split_mix"):
            mix: Mapping = getattr(self, name)
            if any(weight < 0 for weight in mix.values()):
                raise ConfigurationError(f"{name} weights must be >= 0")
            total = sum(mix.values())
            if abs(total - 1.0) > MIX_TOLERANCE:
                raise ConfigurationError(f"{name} must sum to 1, got {total}")
        known = {tag.value for tag in NAMED_STRATA} | {OTHER_STRATUM}
        unknown = set(self.pattern_mix) - known
        if unknown:
            raise ConfigurationError(f"unknown pattern strata: {sorted(unknown)}")


def allocate(total: int, mix: Mapping) -> Dict:
    """Split ``total`` into integer counts following ``mix`` (largest remainder)."""
    keys = list(mix)
    exact = [total * mix[key] for key in keys]
    counts = [int(value) for value in exact]
    by_remainder = sorted(
        range(len(keys)), key=lambda i: (exact[i] - counts[i], -i), reverse=True
    )
    for i in by_remainder[: total - sum(counts)]:
        counts[i] += 1
    return dict(zip(keys, counts))


def weak_label(
    calls: Sequence[Call], detector: Optional[PurposeDetector] = None
) -> List[LabeledUtterance]:
    """Label every gated utterance of ``calls`` with the rule pipeline."""
    if not calls:
        raise TrainingError("cannot weak-label an empty corpus")
    pipeline = detector if detector is not None else PurposeDetector()
    rows: List[LabeledUtterance] = []
    hits = 0
    for call in calls:
        candidates = pipeline.candidates(call)
        decision = pipeline.decide(call.call_id, candidates)
        hit = decision is not None
        hits += hit
        for candidate in candidates:
            index = candidate.utterance.index
            if decision is not None and index == decision.utterance_index:
                label, pattern = Label.POSITIVE, dominant_tag(decision.tags)
            elif candidate.analysis.is_prompt:
                label, pattern = Label.QUESTION, PatternTag.QUESTION_PROMPT
            else:
                label, pattern = Label.NEGATIVE, None
            rows.append(
                LabeledUtterance(
                    candidate.utterance, label, pattern, hit, call.direction
                )
            )
    logger.info(
        "weak labeling: %d rows from %d calls (%d with a hit)",
        len(rows),
        len(calls),
        hits,
    )
    return rows


def filter_false_positives(
    rows: Iterable[LabeledUtterance], engine: Optional[PatternEngine] = None
) -> List[LabeledUtterance]:
    """Drop positives that are signpost-only statements or dysfluent noise."""
    checker = engine if engine is not None else PurposeDetector().engine
    kept: List[LabeledUtterance] = []
    dropped = 0
    for row in rows:
        if row.label is Label.POSITIVE and checker.is_false_positive(row.text):
            dropped += 1
            continue
        kept.append(row)
    logger.info("false-positive filter dropped %d positive rows", dropped)
    return kept


@dataclass(frozen=True)
class Dataset:
    """Resampled rows, each assigned to a split."""

    rows: Tuple[LabeledUtterance, ...]

    def split(self, name: Split) -> List[LabeledUtterance]:
        return [row for row in self.rows if row.split is name]

    def __len__(self) -> int:
        return len(self.rows)


def _draw(
    pool: Sequence[LabeledUtterance],
    needed: int,
    stratum: str,
    rng: np.random.Generator,
) -> List[LabeledUtterance]:
    if needed > len(pool):
        raise StratumDeficitError(stratum, needed, len(pool))
    if needed == 0:
        return []
    chosen = rng.choice(len(pool), size=needed, replace=False)
    return [pool[int(i)] for i in chosen]


def _assign_splits(
    rows: Sequence[LabeledUtterance],
    mix: Mapping[Split, float],
    rng: np.random.Generator,
) -> List[LabeledUtterance]:
    """Assign whole calls to splits, filling the neediest split first."""
    by_call: Dict[str, List[LabeledUtterance]] = defaultdict(list)
    for row in rows:
        by_call[row.call_id].append(row)
    call_ids = sorted(by_call)
    order = rng.permutation(len(call_ids))

    targets = allocate(len(rows), mix)
    filled = {split: 0 for split in targets}
    assigned: List[LabeledUtterance] = []
    for position in order:
        call_rows = by_call[call_ids[int(position)]]
        split = max(
            targets,
            key=lambda s: (targets[s] - filled[s]) / targets[s] if targets[s] else -1,
        )
        filled[split] += len(call_rows)
        assigned.extend(replace(row, split=split) for row in call_rows)
    return assigned


def resample(rows: Sequence[LabeledUtterance], spec: SamplingSpec) -> Dataset:
    """Sample a dataset by the label and pattern mix, with call-disjoint splits.

    Only rows from calls with a rule hit are eligible.
    """
    rng = np.random.default_rng(spec.seed)
    eligible = [row for row in rows if row.from_hit_call]
    label_counts = allocate(spec.size, spec.label_mix)

    sampled: List[LabeledUtterance] = []
    for label in (Label.POSITIVE, Label.QUESTION, Label.NEGATIVE):
        needed = label_counts.get(label, 0)
        pool = [row for row in eligible if row.label is label]
        if label is not Label.POSITIVE:
            sampled.extend(_draw(pool, needed, label.value, rng))
            continue
        pattern_counts = allocate(needed, spec.pattern_mix)
        for stratum, count in pattern_counts.items():
            stratum_pool = [
                row for row in pool if stratum_of(row.source_pattern) == stratum
            ]
            sampled.extend(_draw(stratum_pool, count, f"positive/{stratum}", rng))

    assigned = _assign_splits(sampled, spec.split_mix, rng)
    assigned.sort(
        key=lambda row: (
            SPLIT_ORDER.index(row.split) if row.split else 0,
            row.call_id,
            row.utterance.index,
        )
    )
    dataset = Dataset(tuple(assigned))
    logger.info("resampled %d rows: %s", len(dataset), describe_dataset(dataset))
    return dataset


def describe_dataset(dataset: Dataset) -> Dict[str, Dict[str, int]]:
    """Row counts per split and label, plus an 'all' total."""
    summary: Dict[str, Dict[str, int]] = {}
    totals: Counter = Counter()
    for split in SPLIT_ORDER:
        counts = Counter(row.label.value for row in dataset.split(split))
        summary[split.value] = {label.value: counts[label.value] for label in Label}
        totals.update(counts)
    summary["all"] = {label.value: totals[label.value] for label in Label}
    return summary


class DatasetRecord(WireModel):
    """One dataset row on disk."""

    text: str
    label: Label
    tag: Optional[PatternTag] = None
    call_id: str
    index: int
    start_time_s: float
    side: CallSide
    direction: CallDirection = CallDirection.UNKNOWN
    split: Optional[Split] = None
    from_hit_call: bool = True

    @classmethod
    def from_row(cls, row: LabeledUtterance) -> "DatasetRecord":
        utterance = row.utterance
        return cls(
            text=utterance.text,
            label=row.label,
            tag=row.source_pattern,
            call_id=utterance.call_id,
            index=utterance.index,
            start_time_s=utterance.start_time_s,
            side=utterance.side,
            direction=row.direction,
            split=row.split,
            from_hit_call=row.from_hit_call,
        )

    def to_row(self) -> LabeledUtterance:
        utterance = Utterance(
            self.call_id, self.index, self.side, self.start_time_s, self.text
        )
        return LabeledUtterance(
            utterance,
            self.label,
            self.tag,
            self.from_hit_call,
            self.direction,
            self.split,
        )


def write_dataset(rows: Iterable[LabeledUtterance], stream: IO[str]) -> None:
    for row in rows:
        stream.write(DatasetRecord.from_row(row).model_dump_json() + "\n")


def read_dataset(stream: Iterable[str]) -> Dataset:
    rows: List[LabeledUtterance] = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = DatasetRecord.model_validate_json(line)
            rows.append(record.to_row())
        except ValidationError as exc:
            raise TranscriptParseError(
                f"invalid dataset row: {exc.errors()[0].get('msg')}", line_no
            ) from exc
        except ValueError as exc:
            raise TranscriptParseError(f"invalid dataset row: {exc}", line_no) from exc
    return Dataset(tuple(rows))


def read_dataset_file(path: str) -> Dataset:
    with open(path, encoding="utf-8") as handle:
        return read_dataset(handle)


def write_dataset_file(dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        write_dataset(dataset.rows, handle)
