"""Deterministic pattern detector for the sensitive-data taxonomy.

This is the built-in stand-in for a model-based prompt classifier: it scans a
prompt against the catalog's categories with regular-language patterns plus
cue-word context (fax vs phone, bank account digit runs) and returns a verdict
with verbatim entity spans. Spans are byte offsets over UTF-8.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import SpanMismatch, UnsupportedCategory
from .policy import Category, PolicyCatalog

DEFAULT_FAX_CUES = ("fax", "facsimile")
DEFAULT_BANK_CUES = ("account", "acct", "iban")
DEFAULT_CUE_WINDOW = 20


class Safety(str, Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"


@dataclass(frozen=True)
class Entity:
    """One detected sensitive entity: verbatim text plus its byte span."""

    category_code: str
    text: str
    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise SpanMismatch(f"empty span [{self.start}, {self.end})")


@dataclass(frozen=True)
class Verdict:
    """Safety classification of one prompt with supporting entities."""

    safety: Safety
    categories: frozenset[str]
    entities: tuple[Entity, ...]

    def __post_init__(self):
        unsafe = self.safety is Safety.UNSAFE
        if unsafe != bool(self.categories) or unsafe != bool(self.entities):
            raise SpanMismatch("safety flag inconsistent with categories/entities")
        if self.categories != frozenset(e.category_code for e in self.entities):
            raise SpanMismatch("category set inconsistent with entities")
        spans = sorted((e.start, e.end) for e in self.entities)
        for (s1, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                raise SpanMismatch("entity spans overlap")

    @classmethod
    def safe(cls) -> "Verdict":
        return cls(Safety.SAFE, frozenset(), ())

    @classmethod
    def from_entities(cls, entities: list[Entity]) -> "Verdict":
        if not entities:
            return cls.safe()
        ordered = tuple(sorted(entities, key=lambda e: e.start))
        return cls(
            Safety.UNSAFE,
            frozenset(e.category_code for e in ordered),
            ordered,
        )

    def entity_texts(self) -> list[str]:
        return [e.text for e in self.entities]


# -- built-in patterns ----------------------------------------------------------

EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}")

# grouped alphanumeric ID: non-empty head token, digit groups, optional
# trailing letters; counts validated in code (>=5 digits, 1..4 letters)
PERSONAL_ID_RE = re.compile(
    r"(?<![A-Za-z0-9])(?:[A-Za-z]\d*|\d+)(?:[ -]\d+)+[A-Za-z]{0,2}(?![A-Za-z0-9])"
)

# phone shape: international prefix or parenthesized area code, then digit
# groups; 7..15 total digits enforced in code
PHONE_RE = re.compile(
    r"(?<![\dA-Za-z+])(?:\+\d{1,3}(?:[ -]?\(\d{2,4}\))?|\(\d{2,4}\))(?:[ -]?\d{1,4}){1,5}(?!\d)"
)

IBAN_RE = re.compile(r"(?<![A-Z0-9])[A-Z]{2}\d{2}[A-Z0-9]{10,30}(?![A-Z0-9])")
DIGIT_RUN_RE = re.compile(r"(?<!\d)(?<!\d[,.])\d{8,22}(?!\d)(?![,.]\d)")

MONETARY_RE = re.compile(r"(?<!\d)(?<!\d[,.])\d{1,3}(?:,\d{3})+(?:\.\d{1,2})?(?!\d)(?![,.]\d)")


def _count_alnum(text: str) -> tuple[int, int]:
    digits = sum(c.isdigit() for c in text)
    letters = sum(c.isalpha() for c in text)
    return digits, letters


def _phone_digits_ok(text: str) -> bool:
    return 7 <= sum(c.isdigit() for c in text) <= 15


def _has_cue(prompt: str, start: int, cues: tuple[str, ...], window: int) -> bool:
    if not cues:
        return False
    lead = prompt[max(0, start - window): start].lower()
    return any(cue in lead for cue in cues)


class PatternDetector:
    """Catalog-bound detector; stateless after construction."""

    def __init__(self, catalog: PolicyCatalog):
        self.catalog = catalog
        self._custom: dict[str, re.Pattern] = {}
        for cat in catalog.categories:
            if cat.pattern is not None:
                self._custom[cat.code] = re.compile(cat.pattern)
        fax = self._category_or_none("T4")
        self._fax_cues = (tuple(fax.cue_words) or DEFAULT_FAX_CUES) if fax else ()
        self._fax_window = fax.cue_window if fax else DEFAULT_CUE_WINDOW

    def _category_or_none(self, code: str) -> Category | None:
        try:
            return self.catalog.category(code)
        except KeyError:
            return None

    # -- per-category candidate generation (character offsets) -----------------

    def _candidates(self, prompt: str, cat: Category) -> list[tuple[int, int]]:
        if cat.code in self._custom:
            return [m.span() for m in self._custom[cat.code].finditer(prompt)]
        kind = cat.ordinal
        if kind == 1:
            return [m.span() for m in EMAIL_RE.finditer(prompt)]
        if kind == 2:
            out = []
            for m in PERSONAL_ID_RE.finditer(prompt):
                digits, letters = _count_alnum(m.group())
                if digits >= 5 and 1 <= letters <= 4:
                    out.append(m.span())
            return out
        if kind == 3:
            return [
                m.span()
                for m in PHONE_RE.finditer(prompt)
                if _phone_digits_ok(m.group())
                and not (self._fax_cues and _has_cue(prompt, m.start(), self._fax_cues, self._fax_window))
            ]
        if kind == 4:
            return [
                m.span()
                for m in PHONE_RE.finditer(prompt)
                if _phone_digits_ok(m.group())
                and _has_cue(prompt, m.start(), tuple(cat.cue_words) or DEFAULT_FAX_CUES, cat.cue_window)
            ]
        if kind == 5:
            out = [m.span() for m in IBAN_RE.finditer(prompt)]
            cues = tuple(cat.cue_words) or DEFAULT_BANK_CUES
            out += [
                m.span()
                for m in DIGIT_RUN_RE.finditer(prompt)
                if _has_cue(prompt, m.start(), cues, cat.cue_window)
            ]
            return out
        if kind == 6:
            return [m.span() for m in MONETARY_RE.finditer(prompt)]
        raise UnsupportedCategory(
            f"category {cat.code} has no built-in pattern and no custom pattern"
        )

    # -- public operations ------------------------------------------------------

    def match_category(self, prompt: str, category: Category | str) -> list[Entity]:
        """All non-overlapping matches for one category, left to right."""
        cat = self.catalog.category(category) if isinstance(category, str) else category
        spans = sorted(self._candidates(prompt, cat))
        offsets = _ByteOffsets(prompt)
        out: list[Entity] = []
        last_end = -1
        for start, end in spans:
            if start < last_end:
                continue
            out.append(
                Entity(cat.code, prompt[start:end], offsets.at(start), offsets.at(end))
            )
            last_end = end
        return out

    def detect(self, prompt: str) -> Verdict:
        """Classify a prompt; longest-match, leftmost-first extraction."""
        if not self.catalog.categories:
            raise UnsupportedCategory("catalog has no categories with patterns")
        candidates: list[tuple[int, int, Category]] = []
        for cat in self.catalog.categories:
            for start, end in self._candidates(prompt, cat):
                candidates.append((start, end, cat))
        # overlaps resolved by longer span, then earlier start, then lower code
        candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], c[2].ordinal))
        taken: list[tuple[int, int]] = []
        accepted: list[tuple[int, int, Category]] = []
        for start, end, cat in candidates:
            if any(s < end and start < e for s, e in taken):
                continue
            taken.append((start, end))
            accepted.append((start, end, cat))
        offsets = _ByteOffsets(prompt)
        entities = [
            Entity(cat.code, prompt[s:e], offsets.at(s), offsets.at(e))
            for s, e, cat in accepted
        ]
        return Verdict.from_entities(entities)


class _ByteOffsets:
    """Maps character offsets to UTF-8 byte offsets."""

    def __init__(self, text: str):
        self._ascii = text.isascii()
        if not self._ascii:
            sizes = [len(ch.encode("utf-8")) for ch in text]
            prefix = [0]
            for s in sizes:
                prefix.append(prefix[-1] + s)
            self._prefix = prefix

    def at(self, char_offset: int) -> int:
        if self._ascii:
            return char_offset
        return self._prefix[char_offset]


def detect(prompt: str, catalog: PolicyCatalog) -> Verdict:
    return PatternDetector(catalog).detect(prompt)


def match_category(prompt: str, category: Category, catalog: PolicyCatalog | None = None) -> list[Entity]:
    if catalog is None:
        catalog = PolicyCatalog(categories=(category,))
    return PatternDetector(catalog).match_category(prompt, category)


def entity_slice(prompt_bytes: bytes, entity: Entity) -> str:
    """The prompt slice named by an entity's byte span; raises on mismatch."""
    piece = prompt_bytes[entity.start:entity.end].decode("utf-8", errors="strict")
    if piece != entity.text:
        raise SpanMismatch(
            f"span [{entity.start}, {entity.end}) holds {piece!r}, expected {entity.text!r}"
        )
    return piece
