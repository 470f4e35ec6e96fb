"""
Call Purpose Detector

Finds the utterance in a call transcript where a party states why they are
calling, combining lexical patterns, a per-utterance scorer and the questions
asked just before it. Works on whole calls or utterance by utterance as a
call unfolds.

This package provides the detection pipeline, weak-supervision tooling for
training the scorer, a synthetic gold-corpus generator, evaluation and a
streaming service.
"""

__version__ = "1.0.0"
__license__ = "MIT"

from .detector import PurposeDetector
from .errors import CallPurposeError
from .model import (
    Call,
    CallDirection,
    CallDomain,
    CallSide,
    PatternTag,
    PurposeDecision,
    Utterance,
)
from .patterns import load_rules
from .transcript import Corpus, parse_transcript, read_corpus

__all__ = [
    "PurposeDetector",
    "CallPurposeError",
    "Call",
    "CallDirection",
    "CallDomain",
    "CallSide",
    "PatternTag",
    "PurposeDecision",
    "Utterance",
    "load_rules",
    "Corpus",
    "parse_transcript",
    "read_corpus",
]
