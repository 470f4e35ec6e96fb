"""
The detection pipeline: gate, match, score, combine, consider, simplify.

PurposeDetector bundles the shared read-only parts (pattern engine, scorer,
gate, thresholds, simplifier) and drives per-call sessions, either one
utterance at a time or over a whole call.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .model import (
    Call,
    CallDirection,
    CallSide,
    PurposeDecision,
    ScoreTriple,
    Utterance,
    initiator_side,
)
from .patterns import (
    EMPTY_CONTEXT,
    PatternAnalysis,
    PatternContext,
    PatternEngine,
    RuleSet,
    load_rules,
)
from .scoring import RuleScorer, Scorer, TabularFeatures
from .selection import (
    DEFAULT_GATE,
    DEFAULT_THRESHOLDS,
    CallSession,
    GateConfig,
    ThresholdTable,
    close,
    combine_scores,
    consider,
)
from .simplification import Simplifier

logger = logging.getLogger(__name__)


class DetectorSession:
    """A CallSession plus the pattern context of the call."""

    def __init__(self, session: CallSession, initiator: CallSide):
        self.session = session
        self.initiator = initiator
        self.context: PatternContext = EMPTY_CONTEXT

    @property
    def call_id(self) -> str:
        return self.session.call_id

    @property
    def closed(self) -> bool:
        return self.session.closed

    @property
    def best(self) -> Optional[PurposeDecision]:
        return self.session.best


@dataclass(frozen=True)
class Candidate:
    """A gated utterance with its scores, as seen by batch detection."""

    utterance: Utterance
    analysis: PatternAnalysis
    triple: ScoreTriple
    combined: float
    threshold: float

    @property
    def admissible(self) -> bool:
        return self.combined >= self.threshold


class PurposeDetector:
    """Detects the Purpose of Call; shareable across any number of calls."""

    def __init__(
        self,
        rules: Optional[RuleSet] = None,
        scorer: Optional[Scorer] = None,
        gate_config: GateConfig = DEFAULT_GATE,
        thresholds: ThresholdTable = DEFAULT_THRESHOLDS,
    ):
        self.rules = rules if rules is not None else load_rules()
        self.engine = PatternEngine(self.rules)
        self.scorer: Scorer = scorer if scorer is not None else RuleScorer()
        self.gate_config = gate_config
        self.thresholds = thresholds
        self.simplifier = Simplifier(self.rules.simplification)

    def simplify(self, text: str) -> str:
        return self.simplifier.simplify(text).text

    def open_session(
        self, call_id: str, direction: CallDirection = CallDirection.UNKNOWN
    ) -> DetectorSession:
        session = CallSession(call_id, self.gate_config, self.thresholds)
        return DetectorSession(session, initiator_side(direction))

    def _analyze(
        self, state: DetectorSession, utterance: Utterance
    ) -> PatternAnalysis:
        analysis = self.engine.analyze(utterance, state.context)
        state.context = self.engine.advance(state.context, utterance, analysis)
        return analysis

    def _score(
        self, state: DetectorSession, utterance: Utterance, analysis: PatternAnalysis
    ) -> ScoreTriple:
        tabular = TabularFeatures.from_utterance(utterance, state.initiator)
        return self.scorer.score(utterance, analysis, tabular)

    def process(
        self, state: DetectorSession, utterance: Utterance
    ) -> Optional[PurposeDecision]:
        """Feed one utterance; returns a decision when the best one changes."""
        state.session.check_next(utterance)
        gated = state.session.gate(utterance)
        analysis = self._analyze(state, utterance)
        if not gated:
            state.session.record(utterance)
            return None
        triple = self._score(state, utterance, analysis)
        return consider(
            state.session,
            utterance,
            triple,
            analysis.purpose_tags,
            self.simplify,
        )

    def close(self, state: DetectorSession) -> Optional[PurposeDecision]:
        return close(state.session)

    def stream_call(
        self, call: Call
    ) -> Tuple[List[PurposeDecision], Optional[PurposeDecision]]:
        """Process a call utterance by utterance; returns updates and the final."""
        state = self.open_session(call.call_id, call.direction)
        updates = []
        for utterance in call.utterances:
            decision = self.process(state, utterance)
            if decision is not None:
                updates.append(decision)
        return updates, self.close(state)

    def candidates(self, call: Call) -> List[Candidate]:
        """Score every gated utterance of a completed call."""
        state = self.open_session(call.call_id, call.direction)
        found: List[Candidate] = []
        for utterance in call.utterances:
            analysis = self._analyze(state, utterance)
            if not self.gate_config.admits(utterance):
                state.session.record(utterance)
                continue
            triple = self._score(state, utterance, analysis)
            combined = combine_scores(triple, state.session, utterance.side)
            state.session.record(utterance, triple.p_question)
            found.append(
                Candidate(
                    utterance,
                    analysis,
                    triple,
                    combined,
                    self.thresholds.threshold_for(analysis.purpose_tags),
                )
            )
        return found

    def decide(
        self, call_id: str, candidates: List[Candidate]
    ) -> Optional[PurposeDecision]:
        """Best admissible candidate; the earliest wins ties."""
        best: Optional[Candidate] = None
        for candidate in candidates:
            if not candidate.admissible:
                continue
            if best is None or candidate.combined > best.combined:
                best = candidate
        if best is None:
            return None
        text = best.utterance.text
        return PurposeDecision(
            call_id=call_id,
            utterance_index=best.utterance.index,
            combined_score=best.combined,
            tags=best.analysis.purpose_tags,
            original_text=text,
            simplified_text=self.simplify(text) or text,
            decided_at_utterance_index=best.utterance.index,
        )

    def detect_call(self, call: Call) -> Optional[PurposeDecision]:
        """Pick the best admissible candidate of a whole call at once."""
        return self.decide(call.call_id, self.candidates(call))
