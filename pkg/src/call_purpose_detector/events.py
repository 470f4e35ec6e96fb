"""
Newline-delimited wire records.

One JSON object per line, UTF-8. Unknown fields are ignored; an unknown
``type`` is rejected. The same records make up transcript files, gold corpora
and the streaming service protocol.
"""

from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from .model import CallDirection, CallDomain, CallSide, PatternTag, PurposeDecision


class WireModel(BaseModel):
    model_config = ConfigDict(extra="ignore", frozen=True)


class UtteranceEvent(WireModel):
    """A transcribed utterance arriving for a call."""

    type: Literal["utterance"] = "utterance"
    call_id: str = Field(..., min_length=1)
    index: int
    side: CallSide
    start_time_s: float
    text: str


class CallStartEvent(WireModel):
    """Optional call header carrying metadata."""

    type: Literal["call_start"] = "call_start"
    call_id: str = Field(..., min_length=1)
    direction: CallDirection = CallDirection.UNKNOWN
    domain: CallDomain = CallDomain.UNKNOWN
    duration_s: Optional[float] = Field(default=None, ge=0.0)


class CallEndEvent(WireModel):
    type: Literal["call_end"] = "call_end"
    call_id: str = Field(..., min_length=1)


class GoldRecord(WireModel):
    """Gold annotation: the purpose utterance of a call, or none."""

    type: Literal["gold"] = "gold"
    call_id: str = Field(..., min_length=1)
    purpose_index: Optional[int] = Field(default=None, ge=0)
    pattern: Optional[PatternTag] = None


class StatsRequest(WireModel):
    type: Literal["stats"] = "stats"


InboundEvent = Annotated[
    Union[UtteranceEvent, CallStartEvent, CallEndEvent, GoldRecord, StatsRequest],
    Field(discriminator="type"),
]

INBOUND_ADAPTER: TypeAdapter = TypeAdapter(InboundEvent)


class DecisionBody(WireModel):
    utterance_index: int
    combined_score: float
    text: str
    simplified_text: str
    tags: List[str]
    decided_at_utterance_index: int

    @classmethod
    def from_decision(cls, decision: PurposeDecision) -> "DecisionBody":
        return cls(**decision.to_record())


class PurposeUpdateEvent(WireModel):
    """Emitted whenever the best Purpose of Call of a call changes."""

    type: Literal["purpose_update"] = "purpose_update"
    call_id: str
    utterance_index: int
    combined_score: float
    text: str
    simplified_text: str
    tags: List[str]
    decided_at_utterance_index: int

    @classmethod
    def from_decision(cls, decision: PurposeDecision) -> "PurposeUpdateEvent":
        return cls(call_id=decision.call_id, **decision.to_record())

    def body(self) -> DecisionBody:
        return DecisionBody(**self.model_dump(exclude={"type", "call_id"}))


class DecisionRecord(WireModel):
    """Final outcome of one call: its decision, or null for a miss."""

    call_id: str
    decision: Optional[DecisionBody] = None


class ErrorEvent(WireModel):
    type: Literal["error"] = "error"
    message: str
    call_id: Optional[str] = None
    line: Optional[int] = None


class StatsEvent(WireModel):
    """Latency and session counters reported by the service."""

    type: Literal["stats"] = "stats"
    utterances: int
    p50_ms: float
    p95_ms: float
    deadline_overruns: int
    open_sessions: int
    closed_sessions: int
    evicted_sessions: int
    errors: int


def decode_event(line: str) -> InboundEvent:
    """Decode one inbound line; raises pydantic.ValidationError when invalid."""
    return INBOUND_ADAPTER.validate_json(line)


def encode(record: WireModel) -> str:
    """Encode a record as a single JSON line without the trailing newline."""
    return record.model_dump_json(exclude_none=False)
