"""
Tests for the streaming service core, router and pipe mode.
"""

import asyncio
import json
from io import BytesIO, StringIO

import pytest

from call_purpose_detector.config import ServiceConfig
from call_purpose_detector.detector import PurposeDetector
from call_purpose_detector.evaluation import run_detection
from call_purpose_detector.events import (
    CallEndEvent,
    DecisionBody,
    ErrorEvent,
    PurposeUpdateEvent,
    StatsEvent,
)
from call_purpose_detector.generator import GenSpec, generate
from call_purpose_detector.service import (
    CallRouter,
    LatencyTracker,
    ServiceCore,
    serve_stream,
)
from call_purpose_detector.transcript import serialize_call

from .builders import PROMPT

DESIRE_TURN = "Hi, I need a refund for my order."


def utterance_line(call_id, index, side, text, start=None):
    record = {
        "type": "utterance",
        "call_id": call_id,
        "index": index,
        "side": side,
        "start_time_s": index * 5.0 if start is None else start,
        "text": text,
    }
    return json.dumps(record)


def end_line(call_id):
    return json.dumps({"type": "call_end", "call_id": call_id})


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


class TestServiceCore:
    """Test suite for the synchronous event handlers."""

    def setup_method(self):
        """Set up test fixtures."""
        self.clock = FakeClock()
        self.detector = PurposeDetector()
        self.core = ServiceCore(self.detector, ServiceConfig(), self.clock)

    def test_utterances_produce_updates(self):
        """Test a prompt followed by its answer."""
        assert self.core.handle_line(utterance_line("a", 0, "agent", PROMPT)) == []
        (update,) = self.core.handle_line(
            utterance_line("a", 1, "customer", DESIRE_TURN)
        )
        assert isinstance(update, PurposeUpdateEvent)
        assert update.utterance_index == 1
        assert update.simplified_text == "I need a refund for my order."
        assert update.combined_score == pytest.approx(1.8)

    def test_blank_lines_are_ignored(self):
        """Test that empty lines produce nothing."""
        assert self.core.handle_line("   \n") == []

    def test_malformed_line(self):
        """Test that undecodable lines become error events."""
        for line in ["{not json", '{"type": "bogus"}', '{"type": "utterance"}']:
            (error,) = self.core.handle_line(line, 7)
            assert isinstance(error, ErrorEvent), line
            assert error.message.startswith("malformed event"), error.message
            assert error.line == 7

    def test_call_end_then_utterance(self):
        """Test that a closed call rejects further utterances."""
        self.core.handle_line(utterance_line("a", 0, "customer", DESIRE_TURN))
        assert self.core.handle_line(end_line("a")) == []
        (error,) = self.core.handle_line(utterance_line("a", 1, "customer", "More."))
        assert error.message == "call 'a' is already closed"
        (error,) = self.core.handle_line(end_line("a"))
        assert error.message == "call 'a' is already closed"

    def test_end_without_session(self):
        """Test ending a call that never started."""
        (error,) = self.core.handle_line(end_line("ghost"))
        assert error.message == "call 'ghost' has no open session"
        assert error.call_id == "ghost"

    def test_call_start_twice(self):
        """Test that a call cannot be opened twice."""
        start = json.dumps(
            {"type": "call_start", "call_id": "a", "direction": "inbound"}
        )
        assert self.core.handle_line(start) == []
        (error,) = self.core.handle_line(start)
        assert error.message == "call 'a' is already open"

    def test_out_of_order_utterance(self):
        """Test that index regressions are reported, not raised."""
        self.core.handle_line(utterance_line("a", 3, "customer", DESIRE_TURN))
        (error,) = self.core.handle_line(utterance_line("a", 2, "customer", "Again."))
        assert isinstance(error, ErrorEvent)
        assert "does not follow" in error.message

    def test_invalid_utterance_values(self):
        """Test that a negative start time is an error event."""
        (error,) = self.core.handle_line(
            utterance_line("a", 0, "customer", DESIRE_TURN, start=-1.0)
        )
        assert "start_time_s" in error.message

    def test_session_limit(self):
        """Test the cap on concurrent sessions."""
        core = ServiceCore(self.detector, ServiceConfig(max_sessions=1), self.clock)
        core.handle_line(utterance_line("a", 0, "customer", DESIRE_TURN))
        (error,) = core.handle_line(utterance_line("b", 0, "customer", DESIRE_TURN))
        assert error.message == "session limit of 1 reached"
        core.handle_line(end_line("a"))
        assert core.handle_line(utterance_line("b", 0, "customer", DESIRE_TURN))

    def test_idle_sessions_are_evicted(self):
        """Test eviction after the idle timeout."""
        core = ServiceCore(self.detector, ServiceConfig(idle_timeout_s=10), self.clock)
        core.handle_line(utterance_line("a", 0, "customer", DESIRE_TURN))
        self.clock.now = 5.0
        core.handle_line(utterance_line("b", 0, "customer", DESIRE_TURN))
        core.handle_line(end_line("b"))
        assert core.evict_idle(now=12.0) == 1
        assert list(core.sessions) == []
        assert "b" in core.closed_calls
        core.evict_idle(now=20.0)
        assert core.closed_calls == {}

    def test_stats(self):
        """Test the stats reply."""
        self.core.handle_line(utterance_line("a", 0, "agent", PROMPT))
        self.core.handle_line(utterance_line("a", 1, "customer", DESIRE_TURN))
        self.core.handle_line("oops")
        (stats,) = self.core.handle_line('{"type": "stats"}')
        assert isinstance(stats, StatsEvent)
        assert stats.utterances == 2
        assert stats.open_sessions == 1
        assert stats.errors == 1
        assert stats.p95_ms >= stats.p50_ms >= 0.0

    def test_deadline_overruns_are_counted(self):
        """Test that slow utterances are counted against the deadline."""
        core = ServiceCore(self.detector, ServiceConfig(deadline_s=1e-12), self.clock)
        core.handle_line(utterance_line("a", 0, "customer", DESIRE_TURN))
        assert core.stats().deadline_overruns == 1

    def test_gold_records_are_accepted(self):
        """Test that gold lines in a replayed corpus are ignored."""
        line = json.dumps({"type": "gold", "call_id": "a", "purpose_index": 1})
        assert self.core.handle_line(line) == []


class TestLatencyTracker:
    """Test suite for latency percentiles."""

    def test_empty(self):
        """Test percentiles without samples."""
        assert LatencyTracker().percentile(95) == 0.0

    def test_percentiles_in_milliseconds(self):
        """Test recorded samples and the sliding window."""
        tracker = LatencyTracker(window=3)
        for seconds in [0.001, 0.002, 0.003, 0.004]:
            tracker.add(seconds)
        assert tracker.count == 4
        assert tracker.percentile(50) == pytest.approx(3.0)


class TestCallRouter:
    """Test suite for per-call ordering over asyncio."""

    def test_interleaved_calls_keep_per_call_order(self):
        """Test that each call's updates arrive in order and none are lost."""
        core = ServiceCore(PurposeDetector())
        lines = []
        for index in range(3):
            for call_id in ("a", "b", "c"):
                if index == 0:
                    lines.append(utterance_line(call_id, 0, "customer", DESIRE_TURN))
                elif index == 1:
                    lines.append(utterance_line(call_id, 1, "agent", PROMPT))
                else:
                    text = "I also need to change the shipping address."
                    lines.append(utterance_line(call_id, 2, "customer", text))
        lines += [end_line(call_id) for call_id in ("a", "b", "c")]
        lines.append("{broken")

        emitted = []

        async def emit(records):
            emitted.extend(records)

        async def run():
            router = CallRouter(core, emit)
            for line_no, line in enumerate(lines, start=1):
                await router.route(line, line_no)
            await router.drain()

        asyncio.run(run())
        for call_id in ("a", "b", "c"):
            updates = [
                r
                for r in emitted
                if isinstance(r, PurposeUpdateEvent) and r.call_id == call_id
            ]
            assert [u.utterance_index for u in updates] == [0, 2], call_id
        errors = [r for r in emitted if isinstance(r, ErrorEvent)]
        assert len(errors) == 1 and errors[0].line == len(lines)
        assert core.closed_count == 3

    def test_reopened_call_id_is_rejected_after_end(self):
        """Test that an utterance after call_end is an error, in order."""
        core = ServiceCore(PurposeDetector())
        emitted = []

        async def emit(records):
            emitted.extend(records)

        async def run():
            router = CallRouter(core, emit)
            await router.route(utterance_line("a", 0, "customer", DESIRE_TURN))
            await router.route(end_line("a"))
            await router.route(utterance_line("a", 1, "customer", DESIRE_TURN))
            await router.drain()

        asyncio.run(run())
        assert isinstance(emitted[0], PurposeUpdateEvent)
        assert isinstance(emitted[-1], ErrorEvent)
        assert emitted[-1].message == "call 'a' is already closed"

    def test_finished_workers_are_forgotten(self):
        """Test that ended calls leave no task or queue behind."""
        core = ServiceCore(PurposeDetector())

        async def emit(records):
            pass

        async def run():
            router = CallRouter(core, emit)
            for number in range(50):
                call_id = f"call-{number}"
                await router.route(utterance_line(call_id, 0, "customer", DESIRE_TURN))
                await router.route(end_line(call_id))
            await asyncio.gather(*list(router.tasks.values()))
            await asyncio.sleep(0)
            return router

        router = asyncio.run(run())
        assert router.tasks == {}, f"Leftover tasks: {sorted(router.tasks)}"
        assert router.queues == {}
        assert core.closed_count == 50

    def test_evicted_session_stops_its_worker(self):
        """Test that idle eviction releases the call's queue and task."""
        clock = FakeClock()
        core = ServiceCore(PurposeDetector(), ServiceConfig(idle_timeout_s=10), clock)

        async def emit(records):
            pass

        async def run():
            router = CallRouter(core, emit)
            await router.route(utterance_line("a", 0, "customer", DESIRE_TURN))
            while "a" not in core.sessions:
                await asyncio.sleep(0)
            task = router.tasks["a"]
            clock.now = 100.0
            assert core.evict_idle() == 1
            await asyncio.wait_for(task, 1)
            await asyncio.sleep(0)
            return router

        router = asyncio.run(run())
        assert "a" not in router.queues
        assert router.tasks == {}
        assert core.evicted_count == 1


class TestServeStream:
    """Test suite for pipe mode."""

    def test_pipe_mode(self):
        """Test reading events from one stream and writing records to another."""
        source = StringIO(
            "\n".join(
                [
                    utterance_line("a", 0, "agent", PROMPT),
                    utterance_line("a", 1, "customer", DESIRE_TURN),
                    end_line("a"),
                    '{"type": "stats"}',
                ]
            )
            + "\n"
        )
        sink = StringIO()
        core = ServiceCore(PurposeDetector())
        serve_stream(core, source, sink)
        records = [json.loads(line) for line in sink.getvalue().splitlines()]
        assert [record["type"] for record in records] == ["purpose_update", "stats"]
        assert records[0]["call_id"] == "a"
        assert records[1]["closed_sessions"] == 1

    def test_call_end_event_type(self):
        """Test that call_end lines decode to the end event."""
        record = ServiceCore(PurposeDetector()).decode(end_line("x"))
        assert isinstance(record, CallEndEvent)

    def test_invalid_utf8_line_is_reported_and_skipped(self):
        """Test that a line of invalid UTF-8 yields an error and serving goes on."""
        source = BytesIO(
            utterance_line("a", 0, "customer", DESIRE_TURN).encode("utf-8")
            + b"\n"
            + b'{"type": "utterance", "text": "caf\xff"}\n'
            + b'{"type": "stats"}\n'
        )
        sink = StringIO()
        core = ServiceCore(PurposeDetector())
        serve_stream(core, source, sink)
        records = [json.loads(line) for line in sink.getvalue().splitlines()]
        kinds = [record["type"] for record in records]
        assert kinds == ["purpose_update", "error", "stats"], f"Got {kinds}"
        assert records[1]["line"] == 2
        assert records[1]["message"].startswith("malformed event")
        assert records[2]["errors"] == 1

    def test_decode_bytes(self):
        """Test strict decoding of one raw line."""
        core = ServiceCore(PurposeDetector())
        assert core.decode_bytes("héllo".encode("utf-8"), 1) == "héllo"
        error = core.decode_bytes(b"ab\xc3", 4)
        assert isinstance(error, ErrorEvent)
        assert error.message == "malformed event: invalid UTF-8 at byte 2"
        assert error.line == 4


def renamed(line, suffix):
    record = json.loads(line)
    record["call_id"] = f"{record['call_id']}-{suffix}"
    return json.dumps(record)


class TestCorpusReplay:
    """Replays of a generated corpus through the service core."""

    @classmethod
    def setup_class(cls):
        """Generate a seeded corpus once for the class."""
        cls.corpus = generate(GenSpec(n_calls=1000, seed=7))
        cls.transcripts = [
            serialize_call(call) + [end_line(call.call_id)] for call in cls.corpus.calls
        ]

    def test_service_matches_batch_detection(self):
        """Test that the last update of every call equals the batch decision."""
        detector = PurposeDetector()
        batch = run_detection(detector, self.corpus.calls)
        core = ServiceCore(detector)
        latest = {}
        for lines in self.transcripts:
            for line in lines:
                for record in core.handle_line(line):
                    assert not isinstance(record, ErrorEvent), record.message
                    if isinstance(record, PurposeUpdateEvent):
                        latest[record.call_id] = record.body()
        assert core.closed_count == len(self.corpus.calls)
        for call in self.corpus.calls:
            decision = batch[call.call_id]
            expected = (
                None if decision is None else DecisionBody.from_decision(decision)
            )
            assert latest.get(call.call_id) == expected, f"Mismatch for {call.call_id}"

    def test_p95_latency_under_deadline(self):
        """Test the per-utterance p95 over at least ten thousand utterances."""
        core = ServiceCore(PurposeDetector())
        rounds = 0
        while core.latency.count < 10_000:
            for lines in self.transcripts:
                for line in lines:
                    core.handle_line(renamed(line, rounds) if rounds else line)
            rounds += 1
        stats = core.stats()
        assert stats.utterances >= 10_000
        assert stats.p95_ms < 100.0, f"p95 was {stats.p95_ms} ms"
