"""
Small constructors shared by the test modules.
"""

from typing import List, Optional, Sequence, Tuple

from call_purpose_detector.bootstrap import LabeledUtterance
from call_purpose_detector.model import (
    Call,
    CallDirection,
    CallDomain,
    CallSide,
    Label,
    Utterance,
)

AGENT = CallSide.AGENT
CUSTOMER = CallSide.CUSTOMER

PROMPT = "Thank you for calling Acme, this is Dana, how can I help you today?"
CPP_EXAMPLE = (
    "The reason for my call is that my internet has been down since Monday."
)
DESIRE_EXAMPLE = "Hi, I need a refund for my order."
UPDATE_EXAMPLE = "I have an update on your passport status."
SIGNPOST_ONLY = "I'm calling to ask a question"
PROBLEM_EXAMPLE = (
    "I got a really big problem here. When I log in, it asks for some pin, and "
    "I really, I can't use it. So there's obviously an issue here and can you "
    "help me with it?"
)


def make_call(
    call_id: str,
    turns: Sequence[Tuple[CallSide, str]],
    direction: CallDirection = CallDirection.INBOUND,
    domain: CallDomain = CallDomain.SUPPORT,
    gap_s: float = 5.0,
    duration_s: Optional[float] = None,
) -> Call:
    """Build a call whose utterances are ``gap_s`` seconds apart."""
    utterances = tuple(
        Utterance(call_id, index, side, index * gap_s, text)
        for index, (side, text) in enumerate(turns)
    )
    if duration_s is None:
        duration_s = len(turns) * gap_s
    return Call(call_id, utterances, direction, domain, duration_s)


def utterance(
    text: str,
    index: int = 0,
    side: CallSide = CUSTOMER,
    start_time_s: Optional[float] = None,
    call_id: str = "c1",
) -> Utterance:
    start = index * 5.0 if start_time_s is None else start_time_s
    return Utterance(call_id, index, side, start, text)


TOY_PHRASES = {
    Label.POSITIVE: [
        "I need a refund for my order",
        "The reason for my call is my bill",
        "I would like to cancel my subscription",
        "I need to change my shipping address",
    ],
    Label.QUESTION: [
        "How can I help you today",
        "What can I do for you",
        "How may I help you",
    ],
    Label.NEGATIVE: [
        "Okay thanks so much bye",
        "Please hold on a moment",
        "Can you hear me",
        "Alright sounds good",
    ],
}


def labeled(text: str, label: Label, number: int = 0) -> LabeledUtterance:
    side = AGENT if label is Label.QUESTION else CUSTOMER
    item = utterance(text, 1, side, start_time_s=5.0, call_id=f"call-{number}")
    return LabeledUtterance(item, label, direction=CallDirection.INBOUND)


def toy_rows(copies: int = 6) -> List[LabeledUtterance]:
    """Separable labeled rows: every toy phrase ``copies`` times."""
    rows = []
    for label, phrases in TOY_PHRASES.items():
        for copy in range(copies):
            for phrase in phrases:
                rows.append(labeled(phrase, label, copy))
    return rows
