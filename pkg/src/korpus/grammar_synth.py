"""Synthesize grammar-error multiple-choice items from dependency parses.

Each rule either exchanges the surface positions of an adjacent
head/dependent pair (kind "swap") or substitutes a token with its confusion
partner (kind "lexicon"). Both are involutions, so applying a rule at the
same site twice restores the original sentence. Items carry the corrupted
sentence with the error site parenthesized, a fixed question, four
error-name choices and the correcting token (or token order).
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ValidationError

QUESTION_PREFIX = "Apakah kesalahan tatabahasa untuk"
LETTERS = ("A", "B", "C", "D")


@dataclass
class ParseToken:
    index: int  # 1-based surface position
    form: str
    head: int  # 0 means root
    relation: str


@dataclass
class ParsedSentence:
    tokens: list[ParseToken]

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise ValidationError("empty sentence")
        roots = 0
        for want, tok in enumerate(self.tokens, start=1):
            if tok.index != want:
                raise ValidationError(
                    f"token indices must be contiguous from 1, got {tok.index} at position {want}")
            if tok.head == 0:
                roots += 1
            elif not 1 <= tok.head <= n:
                raise ValidationError(f"token {tok.index}: head {tok.head} out of range")
        if roots != 1:
            raise ValidationError(f"expected exactly one root, got {roots}")

    def text(self) -> str:
        return " ".join(t.form for t in self.tokens)


@dataclass
class SwapRule:
    kind: str  # "swap" or "lexicon"
    relations: list[str]
    pairs: list[list[str]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("swap", "lexicon"):
            raise ValidationError(f"unknown rule kind {self.kind!r}")
        if not self.relations:
            raise ValidationError("rule needs at least one relation")
        if self.kind == "lexicon":
            if not self.pairs or any(len(p) != 2 for p in self.pairs):
                raise ValidationError("lexicon rule needs two-element confusion pairs")


@dataclass
class ErrorSpec:
    error_id: int
    name: str
    swap_rule: SwapRule
    attested: bool = False

    def __post_init__(self):
        if not 1 <= self.error_id <= 14:
            raise ValidationError(f"error_id must be 1-14, got {self.error_id}")
        if not self.name:
            raise ValidationError("error spec needs a name")


@dataclass
class SwapRecord:
    error_id: int
    name: str
    kind: str
    positions: tuple[int, ...]  # 1-based, ascending
    original_forms: tuple[str, ...]
    corrupted_forms: tuple[str, ...]


@dataclass
class TatabahasaItem:
    context: str
    question: str
    choices: dict[str, str]
    answer: str
    fix: str
    record: SwapRecord

    def to_json_obj(self) -> dict:
        return {
            "context": self.context,
            "question": self.question,
            "choices": self.choices,
            "answer": self.answer,
            "fix": self.fix,
        }


def load_rules(path: str | None = None) -> list[ErrorSpec]:
    """Load the rule table; defaults to the packaged one."""
    if path is None:
        data = (resources.files("korpus") / "data" / "grammar_rules.toml").read_bytes()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    try:
        doc = tomllib.loads(data.decode("utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"bad rule table: {e}") from e
    rules = doc.get("rule")
    if not isinstance(rules, list) or not rules:
        raise ValidationError("rule table must hold a [[rule]] array")
    specs = []
    seen_ids: set[int] = set()
    for entry in rules:
        try:
            spec = ErrorSpec(
                error_id=entry["id"],
                name=entry["name"],
                swap_rule=SwapRule(kind=entry["kind"],
                                   relations=list(entry.get("relations", [])),
                                   pairs=[list(p) for p in entry.get("pairs", [])]),
                attested=bool(entry.get("attested", False)),
            )
        except KeyError as e:
            raise ValidationError(f"rule entry missing key {e}") from e
        if spec.error_id in seen_ids:
            raise ValidationError(f"duplicate rule id {spec.error_id}")
        seen_ids.add(spec.error_id)
        specs.append(spec)
    return specs


def _sites(s: ParsedSentence, spec: ErrorSpec) -> list[tuple[int, ...]]:
    """Match sites in surface order. Swap sites are (dep, head) position pairs
    at distance 1; lexicon sites are single positions whose form sits in a
    confusion pair."""
    rule = spec.swap_rule
    sites: list[tuple[int, ...]] = []
    if rule.kind == "swap":
        for tok in s.tokens:
            if tok.relation in rule.relations and tok.head != 0 \
                    and abs(tok.index - tok.head) == 1:
                sites.append(tuple(sorted((tok.index, tok.head))))
    else:
        members = {form for pair in rule.pairs for form in pair}
        for tok in s.tokens:
            if tok.relation in rule.relations and tok.form in members:
                sites.append((tok.index,))
    return sites


def _partner(rule: SwapRule, form: str) -> str:
    for a, b in rule.pairs:
        if form == a:
            return b
        if form == b:
            return a
    raise ValidationError(f"form {form!r} not in any confusion pair")


def apply_swap(s: ParsedSentence, spec: ErrorSpec,
               site_index: int) -> tuple[ParsedSentence, SwapRecord]:
    """Corrupt the sentence at the site_index-th matching site.

    Only token forms change; the parse structure is kept, which is what makes
    the operation an involution."""
    sites = _sites(s, spec)
    if site_index < 0 or site_index >= len(sites):
        raise ValidationError("rule not applicable")
    site = sites[site_index]
    forms = [t.form for t in s.tokens]
    if spec.swap_rule.kind == "swap":
        i, j = site[0] - 1, site[1] - 1
        original = (forms[i], forms[j])
        forms[i], forms[j] = forms[j], forms[i]
        corrupted_forms = (forms[i], forms[j])
    else:
        i = site[0] - 1
        original = (forms[i],)
        forms[i] = _partner(spec.swap_rule, forms[i])
        corrupted_forms = (forms[i],)
    corrupted = ParsedSentence(tokens=[
        ParseToken(index=t.index, form=forms[k], head=t.head, relation=t.relation)
        for k, t in enumerate(s.tokens)])
    return corrupted, SwapRecord(
        error_id=spec.error_id, name=spec.name, kind=spec.swap_rule.kind,
        positions=site, original_forms=original, corrupted_forms=corrupted_forms)


def _render_context(corrupted: ParsedSentence, record: SwapRecord) -> tuple[str, str]:
    """Returns (context string with the error site parenthesized, the
    parenthesized span text)."""
    lo = record.positions[0] - 1
    hi = record.positions[-1] - 1
    forms = [t.form for t in corrupted.tokens]
    span = " ".join(forms[lo:hi + 1])
    rendered = forms[:lo] + [f"({span})"] + forms[hi + 1:]
    return " ".join(rendered), span


def make_item(s: ParsedSentence, spec: ErrorSpec, distractor_pool: Sequence[ErrorSpec],
              rng_seed: int) -> TatabahasaItem:
    """Build one question. The rng drives, in order: site selection, the
    three distractor names, the answer slot."""
    names = []
    for other in distractor_pool:
        if other.name != spec.name and other.name not in names:
            names.append(other.name)
    if len(names) < 3:
        raise ValidationError("distractor pool needs at least 3 other error names")
    sites = _sites(s, spec)
    if not sites:
        raise ValidationError("rule not applicable")

    rng = random.Random(rng_seed)
    site_index = rng.randrange(len(sites))
    corrupted, record = apply_swap(s, spec, site_index)
    distractors = rng.sample(names, 3)
    slot = rng.randrange(4)
    ordered = distractors[:slot] + [spec.name] + distractors[slot:]
    choices = {letter: ordered[k] for k, letter in enumerate(LETTERS)}

    context, span = _render_context(corrupted, record)
    fix = " ".join(record.original_forms)
    return TatabahasaItem(
        context=context,
        question=f"{QUESTION_PREFIX} ({span})",
        choices=choices,
        answer=LETTERS[slot],
        fix=fix,
        record=record,
    )


def reconstruct(item: TatabahasaItem) -> str:
    """Undo an item: replace the parenthesized error span with item.fix. The
    result must equal the original sentence text; tests lean on this."""
    needle = "(" + " ".join(item.record.corrupted_forms) + ")"
    at = item.context.index(needle)
    return item.context[:at] + item.fix + item.context[at + len(needle):]


@dataclass
class GenerateReport:
    items: int = 0
    per_rule: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"items": self.items, "per_rule": self.per_rule, "skipped": self.skipped}


def generate_corpus(parsed: Sequence[ParsedSentence], specs: Sequence[ErrorSpec],
                    per_sentence: int, seed: int) -> tuple[list[TatabahasaItem], GenerateReport]:
    """Round-robin the rules across sentences, least-used first, so rule
    counts stay within 1 of each other when everything applies. Per-sentence
    rng seeds derive from seed ^ sentence-index."""
    if not specs:
        raise ValidationError("no error specs")
    if per_sentence < 1:
        raise ValidationError("per_sentence must be >= 1")
    report = GenerateReport(per_rule={spec.name: 0 for spec in specs},
                            skipped={spec.name: 0 for spec in specs})
    order = {spec.error_id: k for k, spec in enumerate(specs)}
    counts = {spec.error_id: 0 for spec in specs}
    items: list[TatabahasaItem] = []
    for si, sentence in enumerate(parsed):
        applicable = [spec for spec in specs if _sites(sentence, spec)]
        for spec in specs:
            if spec not in applicable:
                report.skipped[spec.name] += 1
        applicable.sort(key=lambda spec: (counts[spec.error_id], order[spec.error_id]))
        sentence_seed = seed ^ si
        for k, spec in enumerate(applicable[:per_sentence]):
            item = make_item(sentence, spec, [x for x in specs if x is not spec],
                             sentence_seed * 1000003 + k)
            items.append(item)
            counts[spec.error_id] += 1
            report.per_rule[spec.name] += 1
            report.items += 1
    return items, report


def read_parses(path: str) -> list[ParsedSentence]:
    """Column format: one token per line as "index form head relation",
    blank line between sentences, '#' comment lines skipped."""
    sentences: list[ParsedSentence] = []
    tokens: list[ParseToken] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                continue
            if not line.strip():
                if tokens:
                    sentences.append(ParsedSentence(tokens=tokens))
                    tokens = []
                continue
            cols = line.split()
            if len(cols) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
            try:
                tokens.append(ParseToken(index=int(cols[0]), form=cols[1],
                                         head=int(cols[2]), relation=cols[3]))
            except ValueError as e:
                raise ValidationError(f"{path}:{lineno}: bad token line: {e}") from e
    if tokens:
        sentences.append(ParsedSentence(tokens=tokens))
    return sentences


def write_items(items: Iterable[TatabahasaItem], path: str) -> int:
    count = 0
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json_obj(), ensure_ascii=False) + "\n")
            count += 1
    os.replace(tmp, path)
    return count
