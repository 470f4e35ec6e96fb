"""
Selection: the candidate gate, score combination and best-so-far tracking.

A CallSession holds the streaming state of one call. Utterances that pass
the gate are scored elsewhere and handed to ``consider``; the session keeps
the question scores of the last two utterances of each side so that an
answer to the other side's question gets boosted.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, FrozenSet, Mapping, Optional, Tuple

from .errors import ConfigurationError, SessionStateError
from .model import CallSide, PatternTag, PurposeDecision, ScoreTriple, Utterance

logger = logging.getLogger(__name__)

QUESTION_WINDOW = 2

# Highest priority first; decides which threshold applies to a candidate.
TAG_PRIORITY: Tuple[PatternTag, ...] = (
    PatternTag.CALL_PURPOSE_PHRASE,
    PatternTag.UPDATE,
    PatternTag.PROBLEM_PHRASE,
    PatternTag.DESIRE_PHRASE,
    PatternTag.CONTINUATION,
    PatternTag.QUESTION_RESPONSE,
    PatternTag.GREETING,
)


@dataclass(frozen=True)
class GateConfig:
    max_start_time_s: float = 180.0
    max_utterance_index: int = 30
    min_tokens: int = 4
    max_tokens: int = 150

    def __post_init__(self) -> None:
        if min(self.max_start_time_s, self.max_utterance_index, self.min_tokens) <= 0:
            raise ConfigurationError("gate bounds must be positive")
        if self.min_tokens > self.max_tokens:
            raise ConfigurationError("gate min_tokens must not exceed max_tokens")

    def admits(self, utterance: Utterance) -> bool:
        return (
            utterance.start_time_s <= self.max_start_time_s
            and utterance.index < self.max_utterance_index
            and self.min_tokens <= utterance.token_count <= self.max_tokens
        )


DEFAULT_GATE = GateConfig()


def dominant_tag(tags: FrozenSet[PatternTag]) -> Optional[PatternTag]:
    for tag in TAG_PRIORITY:
        if tag in tags:
            return tag
    return None


@dataclass(frozen=True)
class ThresholdTable:
    """Admission thresholds on the combined score, per dominant tag."""

    default: float = 0.60
    per_tag: Mapping[PatternTag, float] = field(
        default_factory=lambda: {PatternTag.CALL_PURPOSE_PHRASE: 0.85}
    )

    def __post_init__(self) -> None:
        signposted = self.per_tag.get(PatternTag.CALL_PURPOSE_PHRASE, self.default)
        if signposted < self.default:
            raise ConfigurationError(
                "the call_purpose_phrase threshold must not be below the default"
            )

    def threshold_for(self, tags: FrozenSet[PatternTag]) -> float:
        tag = dominant_tag(tags)
        if tag is None:
            return self.default
        return self.per_tag.get(tag, self.default)


DEFAULT_THRESHOLDS = ThresholdTable()


def gate(utterance: Utterance, config: GateConfig = DEFAULT_GATE) -> bool:
    """Is the utterance a Purpose-of-Call candidate at all?"""
    return config.admits(utterance)


class CallSession:
    """Streaming selection state of one call."""

    def __init__(
        self,
        call_id: str,
        gate_config: GateConfig = DEFAULT_GATE,
        thresholds: ThresholdTable = DEFAULT_THRESHOLDS,
    ):
        self.call_id = call_id
        self.gate_config = gate_config
        self.thresholds = thresholds
        self.utterances_seen = 0
        self.last_index: Optional[int] = None
        self.question_scores: Dict[CallSide, Deque[float]] = {
            side: deque(maxlen=QUESTION_WINDOW) for side in CallSide
        }
        self.best: Optional[PurposeDecision] = None
        self.closed = False

    def __repr__(self) -> str:
        return (
            f"CallSession({self.call_id!r}, seen={self.utterances_seen}, "
            f"closed={self.closed})"
        )

    def ensure_open(self, action: str) -> None:
        if self.closed:
            raise SessionStateError(f"cannot {action}: call '{self.call_id}' is closed")

    def check_next(self, utterance: Utterance) -> None:
        """Raise unless ``utterance`` may be the next one of this call."""
        self.ensure_open("accept an utterance")
        if utterance.call_id != self.call_id:
            raise SessionStateError(
                f"utterance of call '{utterance.call_id}' sent to session "
                f"'{self.call_id}'"
            )
        if self.last_index is not None and utterance.index <= self.last_index:
            raise SessionStateError(
                f"utterance index {utterance.index} does not follow "
                f"{self.last_index} in call '{self.call_id}'"
            )

    def _advance(self, utterance: Utterance) -> None:
        self.check_next(utterance)
        self.last_index = utterance.index
        self.utterances_seen += 1

    def gate(self, utterance: Utterance) -> bool:
        self.ensure_open("gate an utterance")
        return self.gate_config.admits(utterance)

    def recent_question_scores(self, side: CallSide) -> Tuple[float, ...]:
        return tuple(self.question_scores[side])

    def record(self, utterance: Utterance, question_score: float = 0.0) -> None:
        """Count an utterance and remember its question score.

        Gated-out utterances are recorded with a question score of 0.
        """
        self.ensure_open("record an utterance")
        self._advance(utterance)
        self.question_scores[utterance.side].append(question_score)

    @property
    def best_score(self) -> Optional[float]:
        return None if self.best is None else self.best.combined_score


def combine_scores(triple: ScoreTriple, session: CallSession, side: CallSide) -> float:
    """Purpose score plus the best question score of the other side's last two."""
    boosts = session.recent_question_scores(side.other)
    return triple.p_purpose + (max(boosts) if boosts else 0.0)


def consider(
    session: CallSession,
    utterance: Utterance,
    triple: ScoreTriple,
    tags: FrozenSet[PatternTag],
    simplify: Optional[Callable[[str], str]] = None,
) -> Optional[PurposeDecision]:
    """Offer a gated candidate; returns the new decision when the best changes."""
    session.ensure_open("consider an utterance")
    combined = combine_scores(triple, session, utterance.side)
    session.record(utterance, triple.p_question)

    best = session.best_score
    if best is not None and combined <= best:
        return None
    if combined < session.thresholds.threshold_for(tags):
        return None

    simplified = simplify(utterance.text) if simplify else utterance.text
    decision = PurposeDecision(
        call_id=session.call_id,
        utterance_index=utterance.index,
        combined_score=combined,
        tags=frozenset(tags),
        original_text=utterance.text,
        simplified_text=simplified or utterance.text,
        decided_at_utterance_index=utterance.index,
    )
    session.best = decision
    logger.debug(
        "call %s: new best at utterance %d (%.3f)",
        session.call_id,
        utterance.index,
        combined,
    )
    return decision


def close(session: CallSession) -> Optional[PurposeDecision]:
    """Close the session and return its final decision, if any."""
    session.ensure_open("close the session")
    session.closed = True
    return session.best
