"""
Simplification of the winning utterance.

Removes greetings, pleasantries, introductions and trouble-hearing phrases
from the start and end of an utterance, and drops sentences that are nothing
but a pleasantry. Spans in the middle of a sentence are never touched.
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, List, Mapping, Sequence, Tuple

from .errors import EvaluationError, RuleLoadError

_WHITESPACE = re.compile(r"\s+")
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")
_CONTENT = re.compile(r"\w")
_MAX_PASSES = 16


class SimplificationCategory(Enum):
    GREETING = "greeting"
    PLEASANTRY = "pleasantry"
    INTRODUCTION = "introduction"
    TECHNICAL_PROBLEM = "technical_problem"


class SpanPosition(Enum):
    """Where a removable expression may match."""

    LEADING = "leading"
    TRAILING = "trailing"
    SENTENCE = "sentence"


@dataclass(frozen=True)
class SimplificationRule:
    rule_id: str
    category: SimplificationCategory
    position: SpanPosition
    patterns: Tuple["re.Pattern[str]", ...]


@dataclass(frozen=True)
class SimplificationRuleSet:
    """Ordered removable-span expressions."""

    rules: Tuple[SimplificationRule, ...] = ()

    def by_position(self, position: SpanPosition) -> List[SimplificationRule]:
        return [rule for rule in self.rules if rule.position is position]


@dataclass(frozen=True)
class RemovedSpan:
    category: SimplificationCategory
    text: str


@dataclass(frozen=True)
class SimplificationResult:
    text: str
    removed: Tuple[RemovedSpan, ...] = field(default_factory=tuple)

    @property
    def simplified(self) -> bool:
        return bool(self.removed)


def parse_simplification_rules(
    records: Sequence[Mapping[str, Any]],
) -> SimplificationRuleSet:
    """Compile the ``simplification`` section of a rules file."""
    rules: List[SimplificationRule] = []
    for number, record in enumerate(records, start=1):
        rule_id = str(record.get("id") or f"simplification_{number}")
        try:
            category = SimplificationCategory(record.get("category"))
        except ValueError as exc:
            raise RuleLoadError(
                f"unknown simplification category {record.get('category')!r}",
                rule_id,
            ) from exc
        try:
            position = SpanPosition(record.get("position", "leading"))
        except ValueError as exc:
            raise RuleLoadError(
                f"unknown span position {record.get('position')!r}", rule_id
            ) from exc
        flags = 0 if record.get("case_sensitive") else re.IGNORECASE
        expressions = record.get("expressions") or []
        if not isinstance(expressions, list):
            raise RuleLoadError("expressions must be a list", rule_id)
        compiled = []
        for expression in expressions:
            try:
                compiled.append(re.compile(str(expression), flags))
            except re.error as exc:
                raise RuleLoadError(str(exc), rule_id, str(expression)) from exc
        rules.append(SimplificationRule(rule_id, category, position, tuple(compiled)))
    return SimplificationRuleSet(tuple(rules))


def _normalize(text: str) -> str:
    return _WHITESPACE.sub(" ", text).strip()


class Simplifier:
    """Applies a SimplificationRuleSet; stateless and safe to share."""

    def __init__(self, rules: SimplificationRuleSet):
        self.rules = rules
        self._leading = rules.by_position(SpanPosition.LEADING)
        self._trailing = rules.by_position(SpanPosition.TRAILING)
        self._sentence = rules.by_position(SpanPosition.SENTENCE)

    def _strip_leading(self, text: str, removed: List[RemovedSpan]) -> str:
        changed = True
        while changed and text:
            changed = False
            for rule in self._leading:
                for pattern in rule.patterns:
                    match = pattern.match(text)
                    if match and match.end() > 0:
                        removed.append(RemovedSpan(rule.category, match.group(0)))
                        text = text[match.end() :]
                        changed = True
                        break
                if changed:
                    break
        return text

    def _strip_trailing(self, text: str, removed: List[RemovedSpan]) -> str:
        changed = True
        while changed and text:
            changed = False
            for rule in self._trailing:
                for pattern in rule.patterns:
                    match = pattern.search(text)
                    if match and match.end() == len(text) and match.start() < len(text):
                        removed.append(RemovedSpan(rule.category, match.group(0)))
                        text = text[: match.start()]
                        changed = True
                        break
                if changed:
                    break
        return text

    def _drop_sentences(self, text: str, removed: List[RemovedSpan]) -> str:
        if not self._sentence:
            return text
        kept: List[str] = []
        for sentence in _SENTENCE_BREAK.split(text):
            category = self._sentence_category(sentence.strip())
            if category is None:
                kept.append(sentence)
            else:
                removed.append(RemovedSpan(category, sentence))
        return " ".join(kept)

    def _sentence_category(self, sentence: str) -> "SimplificationCategory | None":
        for rule in self._sentence:
            for pattern in rule.patterns:
                if pattern.fullmatch(sentence):
                    return rule.category
        return None

    def simplify(self, text: str) -> SimplificationResult:
        """Remove purpose-irrelevant spans; never returns empty text."""
        removed: List[RemovedSpan] = []
        current = text
        for _ in range(_MAX_PASSES):
            before = len(removed)
            current = self._strip_leading(current, removed)
            current = self._strip_trailing(current, removed)
            current = self._drop_sentences(current, removed)
            if len(removed) == before:
                break

        if not removed:
            return SimplificationResult(text)
        current = _normalize(current)
        if not _CONTENT.search(current):
            return SimplificationResult(text)
        return SimplificationResult(current, tuple(removed))


@dataclass(frozen=True)
class SimplificationStats:
    fraction_simplified: float
    mean_length_reduction: float


def simplification_stats(
    pairs: Iterable[Tuple[str, str]],
) -> SimplificationStats:
    """Summarize (original, simplified) text pairs of a set of decisions."""
    total = 0
    simplified = 0
    reduction = 0.0
    for original, short in pairs:
        total += 1
        if short != original:
            simplified += 1
        if original:
            reduction += (len(original) - len(short)) / len(original)
    if total == 0:
        raise EvaluationError("simplification_stats needs at least one decision")
    return SimplificationStats(simplified / total, reduction / total)
