"""
Synthetic gold corpus generator.

Calls are assembled from the template bank in ``data/templates.yaml``: filler
openings and confirmations, at most one planted purpose utterance realised
from the sampled pattern's template family, then acknowledgements and a
closing. The position, timing and length of the purpose follow the
distributions observed on real call-center traffic.
"""

import logging
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import yaml

from .errors import GenerationError
from .model import (
    PURPOSE_TAGS,
    Call,
    CallDirection,
    CallDomain,
    CallSide,
    PatternTag,
    Utterance,
    initiator_side,
)
from .tokenizer import token_count
from .transcript import Corpus, GoldAnnotation

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATES_RESOURCE = "templates.yaml"
MIX_TOLERANCE = 1e-9
MEAN_TURN_GAP_S = 5.0

# Share of purposes per language pattern in annotated traffic.
PATTERN_FREQUENCIES: Dict[PatternTag, float] = {
    PatternTag.CALL_PURPOSE_PHRASE: 32.7,
    PatternTag.DESIRE_PHRASE: 31.7,
    PatternTag.QUESTION_RESPONSE: 15.8,
    PatternTag.GREETING: 9.1,
    PatternTag.UPDATE: 5.8,
    PatternTag.PROBLEM_PHRASE: 4.4,
    PatternTag.CONTINUATION: 0.4,
}

# Position limits the default rules place on some patterns.
_MAX_INDEX: Dict[PatternTag, int] = {
    PatternTag.PROBLEM_PHRASE: 9,
    PatternTag.GREETING: 5,
}
_MIN_TOKENS: Dict[PatternTag, int] = {
    PatternTag.PROBLEM_PHRASE: 12,
    PatternTag.GREETING: 30,
}
_GATE_MAX_INDEX = 29

# Patterns whose opening words must stay first.
_NO_PREFIX = frozenset({PatternTag.GREETING, PatternTag.CONTINUATION})


def _normalized(weights: Mapping[Any, float]) -> Dict[Any, float]:
    total = sum(weights.values())
    return {key: value / total for key, value in weights.items()}


def _default_pattern_mix() -> Dict[PatternTag, float]:
    return _normalized(PATTERN_FREQUENCIES)


def _default_domain_mix() -> Dict[CallDomain, float]:
    return {CallDomain.SUPPORT: 0.40, CallDomain.GENERAL: 0.30, CallDomain.SALES: 0.30}


@dataclass(frozen=True)
class GenSpec:
    """Parameters of a synthetic corpus."""

    n_calls: int = 1000
    seed: int = 0
    domain_mix: Mapping[CallDomain, float] = field(default_factory=_default_domain_mix)
    inbound_rate: float = 0.592
    pattern_mix: Mapping[PatternTag, float] = field(
        default_factory=_default_pattern_mix
    )
    no_purpose_rate: float = 0.07
    purpose_time_mean_s: float = 29.9
    purpose_time_sd_s: float = 19.1
    max_purpose_time_s: float = 180.0
    purpose_length_mean: float = 45.5
    purpose_length_sd: float = 29.9
    min_purpose_tokens: int = 4
    max_purpose_tokens: int = 224
    prompt_rate: float = 0.6
    dysfluency_rate: float = 0.1
    greeting_prefix_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.n_calls < 0:
            raise GenerationError(f"n_calls must be >= 0, got {self.n_calls}")
        self._check_mix("domain_mix", self.domain_mix)
        self._check_mix("pattern_mix", self.pattern_mix)
        stray = set(self.pattern_mix) - PURPOSE_TAGS
        if stray:
            names = ", ".join(sorted(tag.value for tag in stray))
            raise GenerationError(f"pattern_mix names non-purpose tags: {names}")
        for name in (
            "inbound_rate",
            "no_purpose_rate",
            "prompt_rate",
            "dysfluency_rate",
            "greeting_prefix_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise GenerationError(f"{name} must lie in [0, 1], got {value}")
        if self.purpose_time_sd_s < 0 or self.purpose_length_sd < 0:
            raise GenerationError("standard deviations must be >= 0")
        if self.max_purpose_time_s < 0:
            raise GenerationError("max_purpose_time_s must be >= 0")
        if not 1 <= self.min_purpose_tokens <= self.max_purpose_tokens:
            raise GenerationError(
                "purpose token bounds must satisfy 1 <= min <= max, got "
                f"[{self.min_purpose_tokens}, {self.max_purpose_tokens}]"
            )

    @staticmethod
    def _check_mix(name: str, mix: Mapping[Any, float]) -> None:
        if not mix:
            raise GenerationError(f"{name} must not be empty")
        if any(weight < 0 for weight in mix.values()):
            raise GenerationError(f"{name} weights must be >= 0")
        total = sum(mix.values())
        if abs(total - 1.0) > MIX_TOLERANCE:
            raise GenerationError(f"{name} must sum to 1, got {total}")


Slots = Dict[str, List[str]]


@dataclass(frozen=True)
class TemplateBank:
    """Parsed templates file."""

    slots: Dict[str, Slots]
    purposes: Dict[PatternTag, List[str]]
    details: List[str]
    signposts: List[str]
    openers: Dict[str, List[str]]
    prompts: Dict[str, List[str]]
    fillers: Dict[str, Dict[str, List[str]]]
    dysfluencies: List[str]
    greeting_prefixes: List[str]

    def slots_for(self, domain: CallDomain) -> Slots:
        merged = dict(self.slots.get("common", {}))
        merged.update(self.slots.get(domain.value, {}))
        return merged

    def all_templates(self) -> List[str]:
        texts: List[str] = list(self.details) + list(self.signposts)
        for group in (self.purposes, self.openers, self.prompts):
            for entries in group.values():
                texts.extend(entries)
        for by_side in self.fillers.values():
            for entries in by_side.values():
                texts.extend(entries)
        return texts


def _string_lists(value: Any, where: str) -> List[str]:
    if not isinstance(value, list) or not value:
        raise GenerationError(f"templates: '{where}' must be a non-empty list")
    return [str(item) for item in value]


def _placeholders(template: str) -> Set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


def parse_templates(text: str) -> TemplateBank:
    """Parse and check a templates document."""
    try:
        document = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise GenerationError(f"templates: invalid YAML: {exc}") from exc
    if not isinstance(document, dict):
        raise GenerationError("templates: top level must be a mapping")

    slots: Dict[str, Slots] = {}
    for scope, entries in (document.get("slots") or {}).items():
        slots[str(scope)] = {
            str(name): _string_lists(values, f"slots.{scope}.{name}")
            for name, values in (entries or {}).items()
        }

    purposes: Dict[PatternTag, List[str]] = {}
    for name, entries in (document.get("purposes") or {}).items():
        try:
            tag = PatternTag(name)
        except ValueError as exc:
            raise GenerationError(f"templates: unknown pattern '{name}'") from exc
        purposes[tag] = _string_lists(entries, f"purposes.{name}")
    missing = PURPOSE_TAGS - set(purposes)
    if missing:
        names = ", ".join(sorted(tag.value for tag in missing))
        raise GenerationError(f"templates: no purpose templates for {names}")

    def sided(section: str) -> Dict[str, List[str]]:
        return {
            str(key): _string_lists(value, f"{section}.{key}")
            for key, value in (document.get(section) or {}).items()
        }

    fillers = {
        str(stage): {
            str(side): _string_lists(entries, f"fillers.{stage}.{side}")
            for side, entries in (by_side or {}).items()
        }
        for stage, by_side in (document.get("fillers") or {}).items()
    }

    bank = TemplateBank(
        slots=slots,
        purposes=purposes,
        details=_string_lists(document.get("details"), "details"),
        signposts=_string_lists(document.get("signposts"), "signposts"),
        openers=sided("openers"),
        prompts=sided("prompts"),
        fillers=fillers,
        dysfluencies=_string_lists(document.get("dysfluencies"), "dysfluencies"),
        greeting_prefixes=_string_lists(
            document.get("greeting_prefixes"), "greeting_prefixes"
        ),
    )
    for domain in (CallDomain.SUPPORT, CallDomain.SALES, CallDomain.GENERAL):
        known = set(bank.slots_for(domain))
        for template in bank.all_templates():
            unknown = _placeholders(template) - known
            if unknown:
                raise GenerationError(
                    f"templates: unknown slot(s) {sorted(unknown)} in '{template}' "
                    f"for domain {domain.value}"
                )
    return bank


def load_templates(path: Optional[Union[str, Path]] = None) -> TemplateBank:
    """Load a templates file, or the bundled one when path is None."""
    if path is None:
        text = (
            resources.files("call_purpose_detector")
            .joinpath("data")
            .joinpath(DEFAULT_TEMPLATES_RESOURCE)
            .read_text(encoding="utf-8")
        )
        return parse_templates(text)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GenerationError(f"cannot read templates {path}: {exc}") from exc
    return parse_templates(text)


def _prefixed(prefix: str, text: str) -> str:
    """Put ``prefix`` in front of a sentence, keeping a leading "I" capital."""
    head = text[:1]
    if head == "I" and (len(text) == 1 or not text[1].isalpha()):
        return f"{prefix}, {text}"
    return f"{prefix}, {head.lower()}{text[1:]}"


Turn = Tuple[CallSide, str]


class CorpusGenerator:
    """Draws calls from a GenSpec; one instance per corpus."""

    def __init__(self, spec: GenSpec, templates: TemplateBank):
        self.spec = spec
        self.templates = templates
        self.rng = np.random.default_rng(spec.seed)
        self._domains = list(spec.domain_mix)
        self._domain_p = np.array([spec.domain_mix[d] for d in self._domains])
        self._patterns = list(spec.pattern_mix)
        self._pattern_p = np.array([spec.pattern_mix[p] for p in self._patterns])

    def _pick(self, options: Sequence[str]) -> str:
        return options[int(self.rng.integers(len(options)))]

    def _chance(self, rate: float) -> bool:
        return bool(self.rng.random() < rate)

    def _fill(self, template: str, slots: Slots) -> str:
        values = {name: self._pick(slots[name]) for name in _placeholders(template)}
        return template.format(**values)

    def _say(self, options: Sequence[str], slots: Slots) -> str:
        return self._fill(self._pick(options), slots)

    def _filler(self, stage: str, side: CallSide, slots: Slots) -> str:
        text = self._say(self.templates.fillers[stage][side.value], slots)
        if self._chance(self.spec.dysfluency_rate):
            text = _prefixed(self._pick(self.templates.dysfluencies), text)
        return text

    def _purpose_text(self, pattern: PatternTag, slots: Slots) -> str:
        spec = self.spec
        text = self._say(self.templates.purposes[pattern], slots)
        sampled = self.rng.normal(spec.purpose_length_mean, spec.purpose_length_sd)
        target = int(round(sampled))
        target = min(max(target, spec.min_purpose_tokens), spec.max_purpose_tokens)
        target = max(target, _MIN_TOKENS.get(pattern, 0))
        while token_count(text) < target:
            text = f"{text} {self._say(self.templates.details, slots)}"
        if pattern not in _NO_PREFIX:
            if self._chance(spec.greeting_prefix_rate):
                text = _prefixed(self._pick(self.templates.greeting_prefixes), text)
            if self._chance(spec.dysfluency_rate):
                text = _prefixed(self._pick(self.templates.dysfluencies), text)
        return text

    def _purpose_time(self) -> float:
        spec = self.spec
        sampled = self.rng.normal(spec.purpose_time_mean_s, spec.purpose_time_sd_s)
        return round(float(min(max(sampled, 0.0), spec.max_purpose_time_s)), 2)

    def _outbound_opening(self, slots: Slots) -> List[Turn]:
        openers = self.templates.openers
        return [
            (CallSide.AGENT, self._say(openers["outbound_agent"], slots)),
            (CallSide.CUSTOMER, self._say(openers["outbound_customer"], slots)),
        ]

    def _lead_in(
        self,
        pattern: PatternTag,
        direction: CallDirection,
        slots: Slots,
    ) -> Tuple[List[Turn], List[Turn]]:
        """Opening turns and the turns right before the purpose.

        Only these turns may carry a question prompt, so no filler utterance
        after the purpose can ever be boosted above it.
        """
        templates = self.templates
        if direction is CallDirection.OUTBOUND:
            head = self._outbound_opening(slots)
            lead: List[Turn] = []
            if pattern is PatternTag.QUESTION_RESPONSE:
                prompt = self._say(templates.prompts["customer"], slots)
                lead.append((CallSide.CUSTOMER, prompt))
            if pattern is PatternTag.CONTINUATION:
                lead.append((CallSide.AGENT, self._pick(templates.signposts)))
            return head, lead

        prompted = pattern is PatternTag.QUESTION_RESPONSE or self._chance(
            self.spec.prompt_rate
        )
        pool = templates.prompts["agent"] if prompted else templates.openers["agent"]
        lead = [(CallSide.AGENT, self._say(pool, slots))]
        if pattern is PatternTag.CONTINUATION:
            lead.append((CallSide.CUSTOMER, self._pick(templates.signposts)))
        return [], lead

    def _timed(
        self, call_id: str, turns: Sequence[Turn], times: Sequence[float]
    ) -> Tuple[Utterance, ...]:
        return tuple(
            Utterance(call_id, index, side, start, text)
            for index, ((side, text), start) in enumerate(zip(turns, times))
        )

    def _after(self, speaker: CallSide, slots: Slots) -> List[Turn]:
        count = int(self.rng.integers(4, 13))
        turns: List[Turn] = []
        side = speaker.other
        for _ in range(count):
            turns.append((side, self._filler("after", side, slots)))
            side = side.other
        turns.append((CallSide.AGENT, self._filler("closing", CallSide.AGENT, slots)))
        turns.append(
            (CallSide.CUSTOMER, self._filler("closing", CallSide.CUSTOMER, slots))
        )
        return turns

    def _continue_times(self, start: float, count: int) -> List[float]:
        gaps = self.rng.uniform(2.0, 8.0, size=count)
        return [round(float(t), 2) for t in start + np.cumsum(gaps)]

    def _duration(self, last_start: float) -> float:
        return round(last_start + float(self.rng.uniform(2.0, 10.0)), 2)

    def _call_without_purpose(
        self, call_id: str, direction: CallDirection, domain: CallDomain, slots: Slots
    ) -> Call:
        templates = self.templates
        if direction is CallDirection.OUTBOUND:
            turns = self._outbound_opening(slots)
        else:
            turns = [(CallSide.AGENT, self._say(templates.openers["agent"], slots))]
        side = turns[-1][0].other
        for stage in ("before",) * int(self.rng.integers(2, 7)) + ("after",) * int(
            self.rng.integers(2, 7)
        ):
            turns.append((side, self._filler(stage, side, slots)))
            side = side.other
        turns.append((CallSide.AGENT, self._filler("closing", CallSide.AGENT, slots)))
        turns.append(
            (CallSide.CUSTOMER, self._filler("closing", CallSide.CUSTOMER, slots))
        )
        times = [0.0] + self._continue_times(0.0, len(turns) - 1)
        utterances = self._timed(call_id, turns, times)
        return Call(call_id, utterances, direction, domain, self._duration(times[-1]))

    def _call_with_purpose(
        self,
        call_id: str,
        direction: CallDirection,
        domain: CallDomain,
        slots: Slots,
        pattern: PatternTag,
    ) -> Tuple[Call, int]:
        speaker = initiator_side(direction)
        head, lead = self._lead_in(pattern, direction, slots)
        purpose_time = self._purpose_time()

        cap = _MAX_INDEX.get(pattern, _GATE_MAX_INDEX)
        wanted = int(round(purpose_time / MEAN_TURN_GAP_S))
        index = max(len(head) + len(lead), min(wanted, cap))
        extras = index - len(head) - len(lead)
        if extras > 0 and not head:
            head = [(CallSide.AGENT, self._say(self.templates.openers["agent"], slots))]
            extras -= 1

        turns: List[Turn] = list(head)
        side = head[-1][0].other if head else CallSide.AGENT
        for _ in range(extras):
            turns.append((side, self._filler("before", side, slots)))
            side = side.other
        turns.extend(lead)
        purpose_index = len(turns)
        turns.append((speaker, self._purpose_text(pattern, slots)))
        after = self._after(speaker, slots)
        turns.extend(after)

        before_times = [
            round(purpose_time * i / purpose_index, 2) for i in range(purpose_index)
        ]
        times = (
            before_times
            + [purpose_time]
            + self._continue_times(purpose_time, len(after))
        )
        utterances = self._timed(call_id, turns, times)
        call = Call(call_id, utterances, direction, domain, self._duration(times[-1]))
        return call, purpose_index

    def generate(self) -> Corpus:
        spec = self.spec
        calls: List[Call] = []
        gold: Dict[str, GoldAnnotation] = {}
        for number in range(spec.n_calls):
            call_id = f"call-{number:05d}"
            domain = self._domains[
                int(self.rng.choice(len(self._domains), p=self._domain_p))
            ]
            direction = (
                CallDirection.INBOUND
                if self._chance(spec.inbound_rate)
                else CallDirection.OUTBOUND
            )
            slots = self.templates.slots_for(domain)
            if self._chance(spec.no_purpose_rate):
                call = self._call_without_purpose(call_id, direction, domain, slots)
                calls.append(call)
                gold[call_id] = GoldAnnotation(call_id, None, None)
                continue
            pattern = self._patterns[
                int(self.rng.choice(len(self._patterns), p=self._pattern_p))
            ]
            call, index = self._call_with_purpose(
                call_id, direction, domain, slots, pattern
            )
            calls.append(call)
            gold[call_id] = GoldAnnotation(call_id, index, pattern)

        planted = sum(1 for entry in gold.values() if entry.purpose_index is not None)
        logger.info(
            "generated %d calls (%d with a planted purpose, seed %d)",
            len(calls),
            planted,
            spec.seed,
        )
        return Corpus(tuple(calls), gold)


def generate(spec: GenSpec, templates: Optional[TemplateBank] = None) -> Corpus:
    """Generate a gold corpus; deterministic for a given GenSpec and template bank."""
    bank = templates if templates is not None else load_templates()
    return CorpusGenerator(spec, bank).generate()
