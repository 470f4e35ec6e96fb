"""
Shared data model: calls, utterances, score triples and purpose decisions.

All types here are immutable value objects and can be shared between
concurrent call sessions without locking.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, Optional, Tuple

from .tokenizer import token_count as count_tokens

SIMPLEX_TOLERANCE = 1e-6


class CallSide(Enum):
    """One of the two participants of a call."""

    AGENT = "agent"
    CUSTOMER = "customer"

    @property
    def other(self) -> "CallSide":
        return CallSide.CUSTOMER if self is CallSide.AGENT else CallSide.AGENT


class CallDirection(Enum):
    INBOUND = "inbound"
    OUTBOUND = "outbound"
    UNKNOWN = "unknown"


class CallDomain(Enum):
    SUPPORT = "support"
    SALES = "sales"
    GENERAL = "general"
    UNKNOWN = "unknown"


class PatternTag(Enum):
    """Language pattern types recognised by the pattern engine."""

    CALL_PURPOSE_PHRASE = "call_purpose_phrase"
    DESIRE_PHRASE = "desire_phrase"
    QUESTION_RESPONSE = "question_response"
    GREETING = "greeting"
    PROBLEM_PHRASE = "problem_phrase"
    UPDATE = "update"
    CONTINUATION = "continuation"
    QUESTION_PROMPT = "question_prompt"
    NEGATIVE_FILTER = "negative_filter"


# Tags that can make an utterance a Purpose of Call.
PURPOSE_TAGS: FrozenSet[PatternTag] = frozenset(
    {
        PatternTag.CALL_PURPOSE_PHRASE,
        PatternTag.DESIRE_PHRASE,
        PatternTag.QUESTION_RESPONSE,
        PatternTag.GREETING,
        PatternTag.PROBLEM_PHRASE,
        PatternTag.UPDATE,
        PatternTag.CONTINUATION,
    }
)


class Label(Enum):
    """Scoring classes, in the column order of every score vector."""

    POSITIVE = "positive"
    QUESTION = "question"
    NEGATIVE = "negative"

    @property
    def column(self) -> int:
        return LABEL_ORDER.index(self)


LABEL_ORDER: Tuple[Label, ...] = (Label.POSITIVE, Label.QUESTION, Label.NEGATIVE)


def initiator_side(direction: CallDirection) -> CallSide:
    """Side that started the call; unknown calls are treated as inbound."""
    if direction is CallDirection.OUTBOUND:
        return CallSide.AGENT
    return CallSide.CUSTOMER


@dataclass(frozen=True)
class Utterance:
    """One transcribed speech segment."""

    call_id: str
    index: int
    side: CallSide
    start_time_s: float
    text: str
    token_count: int = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"utterance index must be non-negative, got {self.index}")
        if not math.isfinite(self.start_time_s) or self.start_time_s < 0:
            raise ValueError(
                f"start_time_s must be a finite value >= 0, got {self.start_time_s}"
            )
        object.__setattr__(self, "token_count", count_tokens(self.text))


@dataclass(frozen=True)
class Call:
    """A whole call: metadata plus its utterances ordered by index."""

    call_id: str
    utterances: Tuple[Utterance, ...]
    direction: CallDirection = CallDirection.UNKNOWN
    domain: CallDomain = CallDomain.UNKNOWN
    duration_s: float = 0.0

    def __post_init__(self) -> None:
        previous: Optional[Utterance] = None
        for utterance in self.utterances:
            if utterance.call_id != self.call_id:
                raise ValueError(
                    f"utterance {utterance.index} belongs to call "
                    f"'{utterance.call_id}', not '{self.call_id}'"
                )
            if previous is not None:
                if utterance.index <= previous.index:
                    raise ValueError(
                        f"utterance indices must strictly increase "
                        f"({previous.index} then {utterance.index})"
                    )
                if utterance.start_time_s < previous.start_time_s:
                    raise ValueError(
                        f"start_time_s decreases between utterances "
                        f"{previous.index} and {utterance.index}"
                    )
            previous = utterance
        if self.duration_s < 0:
            raise ValueError(f"duration_s must be >= 0, got {self.duration_s}")

    @property
    def initiator(self) -> CallSide:
        return initiator_side(self.direction)


@dataclass(frozen=True)
class ScoreTriple:
    """Probabilities of an utterance being a purpose, a question or negative."""

    p_purpose: float
    p_question: float
    p_negative: float

    def __post_init__(self) -> None:
        values = self.as_tuple()
        for value in values:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"score components must lie in [0, 1]: {values}")
        if abs(sum(values) - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"score components must sum to 1: {values}")

    @classmethod
    def from_probabilities(cls, probabilities: Iterable[float]) -> "ScoreTriple":
        """Build a triple from three probabilities in LABEL_ORDER."""
        p_purpose, p_question, p_negative = (float(p) for p in probabilities)
        return cls(p_purpose, p_question, p_negative)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.p_purpose, self.p_question, self.p_negative)

    @property
    def label(self) -> Label:
        """Most probable class; ties resolve in LABEL_ORDER."""
        values = self.as_tuple()
        return LABEL_ORDER[values.index(max(values))]


@dataclass(frozen=True)
class PurposeDecision:
    """The currently best Purpose of Call of a call."""

    call_id: str
    utterance_index: int
    combined_score: float
    tags: FrozenSet[PatternTag]
    original_text: str
    simplified_text: str
    decided_at_utterance_index: int

    def __post_init__(self) -> None:
        if not self.simplified_text:
            raise ValueError("simplified_text must not be empty")
        if self.combined_score < 0:
            raise ValueError("combined_score must be non-negative")

    def to_record(self) -> Dict[str, Any]:
        """Serializable form used by decision files and update events."""
        return {
            "utterance_index": self.utterance_index,
            "combined_score": round(self.combined_score, 6),
            "text": self.original_text,
            "simplified_text": self.simplified_text,
            "tags": sorted(tag.value for tag in self.tags),
            "decided_at_utterance_index": self.decided_at_utterance_index,
        }
