"""
Transcript and corpus reading/writing.

A transcript is a stream of newline-delimited records (see ``events``): an
optional ``call_start`` header, ``utterance`` records in any order, and
optionally ``call_end`` and ``gold`` records. A corpus is the same format with
several calls interleaved or concatenated.
"""

from dataclasses import dataclass, field
from typing import IO, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from pydantic import ValidationError

from .errors import TranscriptParseError, TranscriptValidationError
from .events import (
    CallEndEvent,
    CallStartEvent,
    GoldRecord,
    InboundEvent,
    UtteranceEvent,
    decode_event,
    encode,
)
from .model import Call, PatternTag, Utterance

LineSource = Union[IO[bytes], IO[str], Iterable[Union[bytes, str]]]


@dataclass(frozen=True)
class GoldAnnotation:
    """The correct purpose utterance of a call, if it has one."""

    call_id: str
    purpose_index: Optional[int]
    pattern: Optional[PatternTag] = None


@dataclass(frozen=True)
class Corpus:
    """Calls in file order plus any gold annotations found alongside them."""

    calls: Tuple[Call, ...]
    gold: Dict[str, GoldAnnotation] = field(default_factory=dict)

    def call_ids(self) -> List[str]:
        return [call.call_id for call in self.calls]


def _summarize(exc: ValidationError) -> str:
    first = exc.errors()[0]
    location = ".".join(str(part) for part in first.get("loc", ()))
    message = first.get("msg", "invalid record")
    return f"{location}: {message}" if location else message


def iter_records(source: LineSource) -> Iterator[Tuple[int, InboundEvent]]:
    """Decode non-blank lines, yielding (line number, record)."""
    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise TranscriptParseError(f"invalid UTF-8: {exc}", line_no) from exc
        line = raw.strip()
        if not line:
            continue
        try:
            record = decode_event(line)
        except ValidationError as exc:
            raise TranscriptParseError(_summarize(exc), line_no) from exc
        yield line_no, record


class _CallBuilder:
    """Collects the records of one call and validates them into a Call."""

    def __init__(self, call_id: str):
        self.call_id = call_id
        self.header: Optional[CallStartEvent] = None
        self.events: List[Tuple[int, UtteranceEvent]] = []

    def add(self, line_no: int, record: InboundEvent) -> None:
        if isinstance(record, CallStartEvent):
            if self.header is not None:
                raise TranscriptValidationError(
                    f"second call_start record for call '{self.call_id}'", line_no
                )
            self.header = record
        elif isinstance(record, UtteranceEvent):
            self.events.append((line_no, record))

    def build(self) -> Call:
        ordered = sorted(self.events, key=lambda item: item[1].index)
        utterances: List[Utterance] = []
        previous_line = 0
        for line_no, event in ordered:
            if utterances and event.index == utterances[-1].index:
                raise TranscriptValidationError(
                    f"duplicate utterance index {event.index} in call "
                    f"'{self.call_id}' (first seen at line {previous_line})",
                    line_no,
                )
            try:
                utterance = Utterance(
                    call_id=self.call_id,
                    index=event.index,
                    side=event.side,
                    start_time_s=event.start_time_s,
                    text=event.text,
                )
            except ValueError as exc:
                raise TranscriptValidationError(str(exc), line_no) from exc
            if utterances and utterance.start_time_s < utterances[-1].start_time_s:
                raise TranscriptValidationError(
                    f"start_time_s of utterance {utterance.index} is earlier than "
                    f"that of utterance {utterances[-1].index}",
                    line_no,
                )
            utterances.append(utterance)
            previous_line = line_no

        header = self.header or CallStartEvent(call_id=self.call_id)
        duration = header.duration_s
        if duration is None:
            duration = utterances[-1].start_time_s if utterances else 0.0
        return Call(
            call_id=self.call_id,
            utterances=tuple(utterances),
            direction=header.direction,
            domain=header.domain,
            duration_s=duration,
        )


def read_corpus(source: LineSource) -> Corpus:
    """Read every call (and gold record) from a newline-delimited stream."""
    builders: Dict[str, _CallBuilder] = {}
    gold: Dict[str, GoldAnnotation] = {}

    for line_no, record in iter_records(source):
        if isinstance(record, GoldRecord):
            gold[record.call_id] = GoldAnnotation(
                record.call_id, record.purpose_index, record.pattern
            )
            builders.setdefault(record.call_id, _CallBuilder(record.call_id))
        elif isinstance(record, (CallStartEvent, UtteranceEvent)):
            builder = builders.setdefault(record.call_id, _CallBuilder(record.call_id))
            builder.add(line_no, record)
        elif isinstance(record, CallEndEvent):
            builders.setdefault(record.call_id, _CallBuilder(record.call_id))
        else:
            raise TranscriptParseError(
                f"unexpected '{record.type}' record in a transcript", line_no
            )

    calls = tuple(builder.build() for builder in builders.values())
    return Corpus(calls=calls, gold=gold)


def parse_transcript(source: LineSource) -> Call:
    """Parse a single-call transcript stream into a validated Call."""
    corpus = read_corpus(source)
    if len(corpus.calls) != 1:
        raise TranscriptValidationError(
            f"expected exactly one call in transcript, found {len(corpus.calls)}"
        )
    return corpus.calls[0]


def serialize_call(call: Call) -> List[str]:
    """Encode a call as transcript lines (header first, then utterances)."""
    lines = [
        encode(
            CallStartEvent(
                call_id=call.call_id,
                direction=call.direction,
                domain=call.domain,
                duration_s=call.duration_s,
            )
        )
    ]
    for utterance in call.utterances:
        lines.append(
            encode(
                UtteranceEvent(
                    call_id=call.call_id,
                    index=utterance.index,
                    side=utterance.side,
                    start_time_s=utterance.start_time_s,
                    text=utterance.text,
                )
            )
        )
    return lines


def write_corpus(corpus: Corpus, stream: IO[str]) -> None:
    """Write calls followed by their gold records, one call after another."""
    for call in corpus.calls:
        for line in serialize_call(call):
            stream.write(line + "\n")
        annotation = corpus.gold.get(call.call_id)
        if annotation is not None:
            record = GoldRecord(
                call_id=call.call_id,
                purpose_index=annotation.purpose_index,
                pattern=annotation.pattern,
            )
            stream.write(encode(record) + "\n")


def read_corpus_file(path: str) -> Corpus:
    with open(path, "rb") as handle:
        return read_corpus(handle)
