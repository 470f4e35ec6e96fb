"""
Tests for the newline-delimited wire records.
"""

import json

import pytest
from pydantic import ValidationError

from call_purpose_detector.events import (
    CallEndEvent,
    DecisionBody,
    DecisionRecord,
    ErrorEvent,
    PurposeUpdateEvent,
    StatsRequest,
    UtteranceEvent,
    decode_event,
    encode,
)
from call_purpose_detector.model import CallSide, PatternTag, PurposeDecision


class TestWireRecords:
    """Test suite for decoding and encoding wire records."""

    def setup_method(self):
        """Set up test fixtures."""
        self.decision = PurposeDecision(
            call_id="c1",
            utterance_index=0,
            combined_score=0.9,
            tags=frozenset({PatternTag.CALL_PURPOSE_PHRASE}),
            original_text="Hi, the reason for my call is my bill.",
            simplified_text="the reason for my call is my bill.",
            decided_at_utterance_index=0,
        )

    def test_decode_utterance_ignores_unknown_fields(self):
        """Test that unknown fields are ignored."""
        line = json.dumps(
            {
                "type": "utterance",
                "call_id": "c1",
                "index": 2,
                "side": "agent",
                "start_time_s": 4.5,
                "text": "Hello.",
                "confidence": 0.93,
            }
        )
        event = decode_event(line)
        assert isinstance(event, UtteranceEvent), f"Got {type(event).__name__}"
        assert event.side is CallSide.AGENT
        assert event.index == 2

    def test_decode_dispatches_on_type(self):
        """Test that each type decodes to its own record class."""
        assert isinstance(decode_event('{"type": "stats"}'), StatsRequest)
        end = decode_event('{"type": "call_end", "call_id": "c9"}')
        assert isinstance(end, CallEndEvent) and end.call_id == "c9"

    def test_unknown_type_is_rejected(self):
        """Test that an unknown record type fails validation."""
        with pytest.raises(ValidationError):
            decode_event('{"type": "hangup", "call_id": "c1"}')

    def test_malformed_json_is_rejected(self):
        """Test that a line that is not JSON fails validation."""
        with pytest.raises(ValidationError):
            decode_event("{not json")

    def test_update_event_from_decision(self):
        """Test that an update event carries the decision fields."""
        event = PurposeUpdateEvent.from_decision(self.decision)
        assert event.type == "purpose_update"
        assert event.call_id == "c1"
        assert event.tags == ["call_purpose_phrase"]
        assert event.body() == DecisionBody.from_decision(self.decision)

    def test_encode_is_one_line(self):
        """Test that encoding gives a single JSON line."""
        line = encode(PurposeUpdateEvent.from_decision(self.decision))
        assert "\n" not in line
        assert json.loads(line)["utterance_index"] == 0

    def test_miss_record_keeps_null_decision(self):
        """Test that a miss is written with an explicit null decision."""
        data = json.loads(encode(DecisionRecord(call_id="c2")))
        assert data == {"call_id": "c2", "decision": None}, f"Got {data}"

    def test_error_event_optional_fields(self):
        """Test that error events may omit call id and line."""
        data = json.loads(encode(ErrorEvent(message="bad")))
        assert data["type"] == "error"
        assert data["call_id"] is None and data["line"] is None
