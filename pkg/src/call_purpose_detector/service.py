"""
Streaming service: newline-delimited events in, purpose updates out.

ServiceCore owns the per-call sessions and turns one inbound record into
zero or more outbound records; it is synchronous and transport-agnostic.
CallRouter feeds it from an asyncio stream, running one worker per call so
that different calls proceed independently while each call's events are
handled strictly in arrival order.
"""

import asyncio
import logging
import sys
import time
from collections import deque
from dataclasses import dataclass
from functools import partial
from typing import (
    IO,
    Awaitable,
    Callable,
    Deque,
    Dict,
    Iterable,
    List,
    Optional,
    Tuple,
    Union,
)

import numpy as np
from pydantic import ValidationError

from .config import ServiceConfig
from .detector import DetectorSession, PurposeDetector
from .errors import CallPurposeError
from .events import (
    CallEndEvent,
    CallStartEvent,
    ErrorEvent,
    GoldRecord,
    InboundEvent,
    PurposeUpdateEvent,
    StatsEvent,
    StatsRequest,
    UtteranceEvent,
    WireModel,
    decode_event,
    encode,
)
from .model import CallDirection, Utterance

logger = logging.getLogger(__name__)

LATENCY_WINDOW = 100_000
EVICTION_INTERVAL = 1_000

Clock = Callable[[], float]


class LatencyTracker:
    """Per-utterance processing times over a sliding window."""

    def __init__(self, window: int = LATENCY_WINDOW):
        self.samples_ms: Deque[float] = deque(maxlen=window)
        self.count = 0

    def add(self, seconds: float) -> None:
        self.samples_ms.append(seconds * 1000.0)
        self.count += 1

    def percentile(self, q: float) -> float:
        if not self.samples_ms:
            return 0.0
        return float(np.percentile(np.fromiter(self.samples_ms, dtype=float), q))


@dataclass
class _Entry:
    state: DetectorSession
    last_seen: float


class ServiceCore:
    """Session table plus the event handlers of the wire protocol."""

    def __init__(
        self,
        detector: PurposeDetector,
        config: Optional[ServiceConfig] = None,
        clock: Clock = time.monotonic,
    ):
        self.detector = detector
        self.config = config if config is not None else ServiceConfig()
        self.clock = clock
        self.sessions: Dict[str, _Entry] = {}
        self.closed_calls: Dict[str, float] = {}
        self.latency = LatencyTracker()
        self.deadline_overruns = 0
        self.closed_count = 0
        self.evicted_count = 0
        self.errors = 0
        self.evict_listeners: List[Callable[[str], None]] = []
        self._events = 0

    def _error(
        self, message: str, call_id: Optional[str] = None, line: Optional[int] = None
    ) -> ErrorEvent:
        self.errors += 1
        logger.warning(
            "event error (call %s, line %s): %s", call_id or "-", line or "-", message
        )
        return ErrorEvent(message=message, call_id=call_id, line=line)

    def decode(self, line: str, line_no: Optional[int] = None) -> WireModel:
        """Decode a line into an inbound record, or an ErrorEvent."""
        try:
            return decode_event(line)
        except ValidationError as exc:
            first = exc.errors()[0]
            return self._error(f"malformed event: {first.get('msg')}", line=line_no)
        except ValueError as exc:
            return self._error(f"malformed event: {exc}", line=line_no)

    def decode_bytes(
        self, raw: bytes, line_no: Optional[int] = None
    ) -> Union[str, ErrorEvent]:
        """Strict UTF-8 decoding of one raw line, or an ErrorEvent."""
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            return self._error(
                f"malformed event: invalid UTF-8 at byte {exc.start}", line=line_no
            )

    def handle_line(self, line: str, line_no: Optional[int] = None) -> List[WireModel]:
        if not line.strip():
            return []
        record = self.decode(line, line_no)
        if isinstance(record, ErrorEvent):
            return [record]
        return self.handle_event(record, line_no)

    def handle_event(
        self, event: Union[InboundEvent, WireModel], line_no: Optional[int] = None
    ) -> List[WireModel]:
        self._events += 1
        if self._events % EVICTION_INTERVAL == 0:
            self.evict_idle()
        try:
            if isinstance(event, UtteranceEvent):
                return self._on_utterance(event, line_no)
            if isinstance(event, CallStartEvent):
                return self._on_call_start(event, line_no)
            if isinstance(event, CallEndEvent):
                return self._on_call_end(event, line_no)
            if isinstance(event, StatsRequest):
                return [self.stats()]
            if isinstance(event, GoldRecord):
                return []
        except CallPurposeError as exc:
            return [self._error(str(exc), getattr(event, "call_id", None), line_no)]
        return [self._error(f"unsupported event {type(event).__name__}", line=line_no)]

    def _open(
        self, call_id: str, direction: CallDirection, line_no: Optional[int]
    ) -> Union[_Entry, ErrorEvent]:
        if call_id in self.closed_calls:
            return self._error(f"call '{call_id}' is already closed", call_id, line_no)
        if len(self.sessions) >= self.config.max_sessions:
            return self._error(
                f"session limit of {self.config.max_sessions} reached", call_id, line_no
            )
        entry = _Entry(self.detector.open_session(call_id, direction), self.clock())
        self.sessions[call_id] = entry
        logger.debug("opened session %s", call_id)
        return entry

    def _on_call_start(
        self, event: CallStartEvent, line_no: Optional[int]
    ) -> List[WireModel]:
        if event.call_id in self.sessions:
            return [
                self._error(
                    f"call '{event.call_id}' is already open", event.call_id, line_no
                )
            ]
        opened = self._open(event.call_id, event.direction, line_no)
        return [opened] if isinstance(opened, ErrorEvent) else []

    def _on_utterance(
        self, event: UtteranceEvent, line_no: Optional[int]
    ) -> List[WireModel]:
        started = time.perf_counter()
        entry = self.sessions.get(event.call_id)
        if entry is None:
            opened = self._open(event.call_id, CallDirection.UNKNOWN, line_no)
            if isinstance(opened, ErrorEvent):
                return [opened]
            entry = opened
        entry.last_seen = self.clock()
        try:
            utterance = Utterance(
                event.call_id, event.index, event.side, event.start_time_s, event.text
            )
        except ValueError as exc:
            return [self._error(str(exc), event.call_id, line_no)]

        decision = self.detector.process(entry.state, utterance)
        elapsed = time.perf_counter() - started
        self.latency.add(elapsed)
        if elapsed > self.config.deadline_s:
            self.deadline_overruns += 1
            logger.warning(
                "call %s utterance %d took %.3f s (deadline %.3f s)",
                event.call_id,
                event.index,
                elapsed,
                self.config.deadline_s,
            )
        if decision is None:
            return []
        return [PurposeUpdateEvent.from_decision(decision)]

    def _on_call_end(
        self, event: CallEndEvent, line_no: Optional[int]
    ) -> List[WireModel]:
        entry = self.sessions.pop(event.call_id, None)
        if entry is None:
            if event.call_id in self.closed_calls:
                message = f"call '{event.call_id}' is already closed"
            else:
                message = f"call '{event.call_id}' has no open session"
            return [self._error(message, event.call_id, line_no)]
        self.detector.close(entry.state)
        self.closed_calls[event.call_id] = self.clock()
        self.closed_count += 1
        logger.debug("closed session %s", event.call_id)
        return []

    def evict_idle(self, now: Optional[float] = None) -> int:
        """Drop sessions and closed-call markers idle past the timeout."""
        current = self.clock() if now is None else now
        limit = self.config.idle_timeout_s
        stale = [
            call_id
            for call_id, entry in self.sessions.items()
            if current - entry.last_seen > limit
        ]
        for call_id in stale:
            del self.sessions[call_id]
            logger.debug("evicted idle session %s", call_id)
            for listener in list(self.evict_listeners):
                listener(call_id)
        self.evicted_count += len(stale)
        for call_id in [c for c, t in self.closed_calls.items() if current - t > limit]:
            del self.closed_calls[call_id]
        return len(stale)

    def stats(self) -> StatsEvent:
        return StatsEvent(
            utterances=self.latency.count,
            p50_ms=round(self.latency.percentile(50), 3),
            p95_ms=round(self.latency.percentile(95), 3),
            deadline_overruns=self.deadline_overruns,
            open_sessions=len(self.sessions),
            closed_sessions=self.closed_count,
            evicted_sessions=self.evicted_count,
            errors=self.errors,
        )


Emit = Callable[[List[WireModel]], Awaitable[None]]
_Item = Optional[Tuple[WireModel, Optional[int]]]


class CallRouter:
    """Runs one worker task per call on top of a ServiceCore."""

    def __init__(self, core: ServiceCore, emit: Emit):
        self.core = core
        self.emit = emit
        self.queues: Dict[str, "asyncio.Queue[_Item]"] = {}
        self.tasks: Dict[str, "asyncio.Task[None]"] = {}
        core.evict_listeners.append(self.release)

    async def route(self, line: str, line_no: Optional[int] = None) -> None:
        if not line.strip():
            return
        record = self.core.decode(line, line_no)
        call_id = getattr(record, "call_id", None)
        if isinstance(record, ErrorEvent) or call_id is None:
            await self.emit(
                [record]
                if isinstance(record, ErrorEvent)
                else self.core.handle_event(record, line_no)
            )
            return
        queue = self.queues.get(call_id)
        if queue is None:
            queue = asyncio.Queue()
            self.queues[call_id] = queue
            previous = self.tasks.get(call_id)
            task = asyncio.create_task(self._work(queue, previous))
            task.add_done_callback(partial(self._forget, call_id))
            self.tasks[call_id] = task
        await queue.put((record, line_no))
        if isinstance(record, CallEndEvent):
            await queue.put(None)
            del self.queues[call_id]

    def _forget(self, call_id: str, task: "asyncio.Task[None]") -> None:
        if self.tasks.get(call_id) is task:
            del self.tasks[call_id]

    def release(self, call_id: str) -> None:
        """Stop the worker of a call whose session was evicted."""
        queue = self.queues.pop(call_id, None)
        if queue is not None:
            queue.put_nowait(None)

    async def _work(
        self, queue: "asyncio.Queue[_Item]", previous: Optional["asyncio.Task[None]"]
    ) -> None:
        if previous is not None:
            await previous
        while True:
            item = await queue.get()
            if item is None:
                return
            record, line_no = item
            await self.emit(self.core.handle_event(record, line_no))

    async def drain(self) -> None:
        """Let every worker finish its queue, then stop them."""
        if self.release in self.core.evict_listeners:
            self.core.evict_listeners.remove(self.release)
        for queue in self.queues.values():
            await queue.put(None)
        self.queues.clear()
        tasks = list(self.tasks.values())
        self.tasks.clear()
        if tasks:
            await asyncio.gather(*tasks)


async def _handle_client(
    core: ServiceCore, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
) -> None:
    lock = asyncio.Lock()

    async def emit(records: List[WireModel]) -> None:
        if not records:
            return
        async with lock:
            for record in records:
                writer.write((encode(record) + "\n").encode("utf-8"))
            await writer.drain()

    router = CallRouter(core, emit)
    line_no = 0
    try:
        while True:
            raw = await reader.readline()
            if not raw:
                break
            line_no += 1
            text = core.decode_bytes(raw, line_no)
            if isinstance(text, ErrorEvent):
                await emit([text])
                continue
            await router.route(text, line_no)
        await router.drain()
    finally:
        writer.close()


async def serve_tcp(core: ServiceCore, host: str, port: int) -> None:
    """Accept connections until cancelled."""
    server = await asyncio.start_server(
        lambda r, w: _handle_client(core, r, w), host, port
    )
    addresses = ", ".join(str(sock.getsockname()) for sock in server.sockets or ())
    logger.info("serving on %s", addresses)
    async with server:
        await server.serve_forever()


def serve_stream(
    core: ServiceCore, source: Iterable[Union[bytes, str]], sink: IO[str]
) -> None:
    """Pipe mode: one input stream, events handled in arrival order.

    Byte lines are decoded one at a time so that invalid UTF-8 costs only
    that line.
    """
    logger.info("serving on standard streams")
    for line_no, raw in enumerate(source, start=1):
        line = core.decode_bytes(raw, line_no) if isinstance(raw, bytes) else raw
        records: List[WireModel]
        if isinstance(line, ErrorEvent):
            records = [line]
        else:
            records = core.handle_line(line, line_no)
        for record in records:
            sink.write(encode(record) + "\n")
        sink.flush()
    logger.info("input closed after %d utterances", core.latency.count)


def serve(
    config: ServiceConfig,
    stdio: bool = False,
    source: Optional[Iterable[Union[bytes, str]]] = None,
    sink: Optional[IO[str]] = None,
) -> ServiceCore:
    """Build the pipeline from ``config`` and serve until input ends or interrupt."""
    core = ServiceCore(config.build_detector(), config)
    if stdio:
        serve_stream(core, source or sys.stdin.buffer, sink or sys.stdout)
        return core
    try:
        asyncio.run(serve_tcp(core, config.host, config.port))
    except KeyboardInterrupt:
        logger.info("shutting down")
    return core
