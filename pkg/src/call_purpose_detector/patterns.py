"""
Declarative pattern engine.

Loads the rules file (YAML, see ``data/rules.yaml``) into an immutable RuleSet
and tags utterances with language patterns, question prompts and negative
filters. Context-dependent tags are resolved against a PatternContext holding
the two most recent utterances of each call side.
"""

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import yaml

from .errors import RuleLoadError
from .model import PURPOSE_TAGS, CallSide, PatternTag, Utterance
from .simplification import SimplificationRuleSet, parse_simplification_rules

logger = logging.getLogger(__name__)

DEFAULT_RULES_RESOURCE = "rules.yaml"
CONTEXT_WINDOW = 2

# Constraints applied when a rules file leaves them out.
DEFAULT_CONSTRAINTS: Dict[PatternTag, Tuple[int, int]] = {
    PatternTag.PROBLEM_PHRASE: (12, 10),
    PatternTag.GREETING: (30, 6),
}

_SECTION_TAGS: Dict[str, Optional[PatternTag]] = {
    "positive": None,
    "negative": PatternTag.NEGATIVE_FILTER,
    "prompts": PatternTag.QUESTION_PROMPT,
    "signposts": PatternTag.CONTINUATION,
    "false_positives": PatternTag.NEGATIVE_FILTER,
}


@dataclass(frozen=True)
class Rule:
    """One named rule: a tag, its expressions and optional constraints."""

    rule_id: str
    tag: PatternTag
    patterns: Tuple["re.Pattern[str]", ...]
    min_tokens: Optional[int] = None
    max_utterance_index: Optional[int] = None

    @property
    def expressions(self) -> Tuple[str, ...]:
        return tuple(pattern.pattern for pattern in self.patterns)

    def admits(self, utterance: Utterance) -> bool:
        """Check the rule's length and position constraints."""
        if self.min_tokens is not None and utterance.token_count < self.min_tokens:
            return False
        if (
            self.max_utterance_index is not None
            and utterance.index >= self.max_utterance_index
        ):
            return False
        return True

    def search(self, text: str) -> Optional["re.Match[str]"]:
        for pattern in self.patterns:
            match = pattern.search(text)
            if match:
                return match
        return None

    def prefix_match(self, text: str) -> Optional["re.Match[str]"]:
        for pattern in self.patterns:
            match = pattern.match(text)
            if match:
                return match
        return None


@dataclass(frozen=True)
class PatternMatch:
    tag: PatternTag
    span: Tuple[int, int]
    rule_id: str


@dataclass(frozen=True)
class RuleSet:
    """Compiled rules; immutable and shared read-only by every session."""

    version: int = 1
    positive_rules: Tuple[Rule, ...] = ()
    negative_rules: Tuple[Rule, ...] = ()
    prompt_rules: Tuple[Rule, ...] = ()
    signpost_rules: Tuple[Rule, ...] = ()
    false_positive_rules: Tuple[Rule, ...] = ()
    simplification: SimplificationRuleSet = field(
        default_factory=SimplificationRuleSet
    )

    @property
    def expression_count(self) -> int:
        rules = self.positive_rules + self.negative_rules
        return sum(len(rule.patterns) for rule in rules)


def _compile_rule(record: Any, section: str, number: int) -> Rule:
    if not isinstance(record, Mapping):
        raise RuleLoadError(f"entry {number} of '{section}' is not a mapping")
    rule_id = str(record.get("id") or f"{section}_{number}")

    fixed_tag = _SECTION_TAGS[section]
    raw_tag = record.get("tag")
    if fixed_tag is None:
        try:
            tag = PatternTag(raw_tag)
        except ValueError as exc:
            raise RuleLoadError(f"unknown tag {raw_tag!r}", rule_id) from exc
        if tag not in PURPOSE_TAGS:
            raise RuleLoadError(f"tag '{tag.value}' is not a purpose tag", rule_id)
    else:
        tag = fixed_tag
        if raw_tag is not None and raw_tag != fixed_tag.value:
            raise RuleLoadError(
                f"rules in '{section}' must use tag '{fixed_tag.value}'", rule_id
            )

    expressions = record.get("expressions") or []
    if not isinstance(expressions, list):
        raise RuleLoadError("expressions must be a list", rule_id)
    compiled = []
    for expression in expressions:
        try:
            compiled.append(re.compile(str(expression), re.IGNORECASE))
        except re.error as exc:
            raise RuleLoadError(str(exc), rule_id, str(expression)) from exc

    min_tokens = record.get("min_tokens")
    max_index = record.get("max_utterance_index")
    if min_tokens is None and max_index is None and tag in DEFAULT_CONSTRAINTS:
        min_tokens, max_index = DEFAULT_CONSTRAINTS[tag]
    constraints = (("min_tokens", min_tokens), ("max_utterance_index", max_index))
    for name, value in constraints:
        if value is not None and (not isinstance(value, int) or value < 0):
            raise RuleLoadError(f"{name} must be a non-negative integer", rule_id)

    return Rule(rule_id, tag, tuple(compiled), min_tokens, max_index)


def parse_rules(text: str, source: str = "<string>") -> RuleSet:
    """Build a RuleSet from rules-file text; nothing is returned on failure."""
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise RuleLoadError(f"{source}: {exc}") from exc
    if document is None:
        return RuleSet()
    if not isinstance(document, Mapping):
        raise RuleLoadError(f"{source}: top level must be a mapping")

    groups: Dict[str, Tuple[Rule, ...]] = {}
    for section in _SECTION_TAGS:
        records = document.get(section) or []
        if not isinstance(records, list):
            raise RuleLoadError(f"{source}: section '{section}' must be a list")
        groups[section] = tuple(
            _compile_rule(record, section, number)
            for number, record in enumerate(records, start=1)
        )

    simplification_records = document.get("simplification") or []
    if not isinstance(simplification_records, list):
        raise RuleLoadError(f"{source}: section 'simplification' must be a list")

    rule_set = RuleSet(
        version=int(document.get("version", 1)),
        positive_rules=groups["positive"],
        negative_rules=groups["negative"],
        prompt_rules=groups["prompts"],
        signpost_rules=groups["signposts"],
        false_positive_rules=groups["false_positives"],
        simplification=parse_simplification_rules(simplification_records),
    )
    logger.debug(
        "Loaded %d positive and %d negative rules from %s",
        len(rule_set.positive_rules),
        len(rule_set.negative_rules),
        source,
    )
    return rule_set


def load_rules(path: Optional[Union[str, Path]] = None) -> RuleSet:
    """Load a rules file, or the bundled default rules when path is None."""
    if path is None:
        text = (
            resources.files("call_purpose_detector")
            .joinpath("data")
            .joinpath(DEFAULT_RULES_RESOURCE)
            .read_text(encoding="utf-8")
        )
        return parse_rules(text, DEFAULT_RULES_RESOURCE)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RuleLoadError(f"cannot read {path}: {exc}") from exc
    return parse_rules(text, str(path))


@dataclass(frozen=True)
class ContextEntry:
    """A preceding utterance with the outcome of matching it."""

    utterance: Utterance
    matches: FrozenSet[PatternMatch]
    signposted: bool = False

    def has_tag(self, tag: PatternTag) -> bool:
        return any(match.tag is tag for match in self.matches)


@dataclass(frozen=True)
class PatternContext:
    """The most recent utterances of each side, oldest first."""

    agent: Tuple[ContextEntry, ...] = ()
    customer: Tuple[ContextEntry, ...] = ()

    def for_side(self, side: CallSide) -> Tuple[ContextEntry, ...]:
        return self.agent if side is CallSide.AGENT else self.customer

    def push(self, entry: ContextEntry) -> "PatternContext":
        """Return a new context with ``entry`` appended to its side's window."""
        if entry.utterance.side is CallSide.AGENT:
            return PatternContext(
                agent=(self.agent + (entry,))[-CONTEXT_WINDOW:],
                customer=self.customer,
            )
        return PatternContext(
            agent=self.agent,
            customer=(self.customer + (entry,))[-CONTEXT_WINDOW:],
        )


EMPTY_CONTEXT = PatternContext()


@dataclass(frozen=True)
class PatternAnalysis:
    """Everything the pattern engine knows about one utterance."""

    matches: FrozenSet[PatternMatch]
    qualifying: Optional[FrozenSet[PatternTag]]
    vetoed: bool
    signposted: bool

    @property
    def tags(self) -> FrozenSet[PatternTag]:
        return frozenset(match.tag for match in self.matches)

    @property
    def purpose_tags(self) -> FrozenSet[PatternTag]:
        return self.tags & PURPOSE_TAGS

    @property
    def is_prompt(self) -> bool:
        return PatternTag.QUESTION_PROMPT in self.tags


def _as_match(rule: Rule, match: "re.Match[str]") -> PatternMatch:
    return PatternMatch(rule.tag, (match.start(), match.end()), rule.rule_id)


class PatternEngine:
    """Matches utterances against a RuleSet; stateless apart from the rules."""

    def __init__(self, rules: RuleSet):
        self.rules = rules
        self._positive = {rule.rule_id: rule for rule in rules.positive_rules}

    def _signpost_end(self, text: str) -> Optional[int]:
        ends = [
            match.end()
            for rule in self.rules.signpost_rules
            for pattern in rule.patterns
            for match in pattern.finditer(text)
        ]
        return min(ends) if ends else None

    def _continuation_match(
        self, rule: Rule, utterance: Utterance, context: PatternContext
    ) -> Optional[PatternMatch]:
        text = utterance.text
        signpost_end = self._signpost_end(text)
        previous = context.for_side(utterance.side)
        after_previous = bool(previous) and previous[-1].signposted
        for pattern in rule.patterns:
            for match in pattern.finditer(text):
                if after_previous or (
                    signpost_end is not None and signpost_end <= match.start()
                ):
                    return _as_match(rule, match)
        return None

    def _prompted(self, utterance: Utterance, context: PatternContext) -> bool:
        return any(
            entry.has_tag(PatternTag.QUESTION_PROMPT)
            for entry in context.for_side(utterance.side.other)
        )

    def match_patterns(
        self, utterance: Utterance, context: PatternContext = EMPTY_CONTEXT
    ) -> FrozenSet[PatternMatch]:
        """Return every pattern match of ``utterance`` given its context."""
        text = utterance.text
        found: List[PatternMatch] = []

        for rule in self.rules.positive_rules:
            if rule.tag is PatternTag.GREETING:
                if not rule.admits(utterance):
                    continue
                match = rule.prefix_match(text)
                if match:
                    found.append(_as_match(rule, match))
            elif rule.tag is PatternTag.QUESTION_RESPONSE:
                if not self._prompted(utterance, context):
                    continue
                match = rule.search(text)
                if match:
                    found.append(_as_match(rule, match))
            elif rule.tag is PatternTag.CONTINUATION:
                continuation = self._continuation_match(rule, utterance, context)
                if continuation is not None:
                    found.append(continuation)
            else:
                match = rule.search(text)
                if match:
                    found.append(_as_match(rule, match))

        for rule in self.rules.prompt_rules + self.rules.negative_rules:
            match = rule.search(text)
            if match:
                found.append(_as_match(rule, match))

        return frozenset(found)

    def is_negative_filtered(self, utterance: Utterance) -> bool:
        """True when any negative rule matches the utterance text."""
        return any(rule.search(utterance.text) for rule in self.rules.negative_rules)

    def is_false_positive(self, text: str) -> bool:
        return any(rule.search(text) for rule in self.rules.false_positive_rules)

    def rule_classify(
        self,
        utterance: Utterance,
        context: PatternContext = EMPTY_CONTEXT,
        matches: Optional[FrozenSet[PatternMatch]] = None,
    ) -> Optional[FrozenSet[PatternTag]]:
        """Purpose tags whose rule constraints hold, or None."""
        if matches is None:
            matches = self.match_patterns(utterance, context)
        if any(match.tag is PatternTag.NEGATIVE_FILTER for match in matches):
            return None
        qualifying = set()
        for match in matches:
            if match.tag not in PURPOSE_TAGS:
                continue
            rule = self._positive.get(match.rule_id)
            if rule is not None and rule.admits(utterance):
                qualifying.add(match.tag)
        return frozenset(qualifying) or None

    def analyze(
        self, utterance: Utterance, context: PatternContext = EMPTY_CONTEXT
    ) -> PatternAnalysis:
        matches = self.match_patterns(utterance, context)
        return PatternAnalysis(
            matches=matches,
            qualifying=self.rule_classify(utterance, context, matches),
            vetoed=any(match.tag is PatternTag.NEGATIVE_FILTER for match in matches),
            signposted=self._signpost_end(utterance.text) is not None,
        )

    @staticmethod
    def advance(
        context: PatternContext, utterance: Utterance, analysis: PatternAnalysis
    ) -> PatternContext:
        """Context for the next utterance once ``utterance`` has been seen."""
        return context.push(
            ContextEntry(utterance, analysis.matches, analysis.signposted)
        )
