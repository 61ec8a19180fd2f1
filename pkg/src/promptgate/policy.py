"""Sensitive-data taxonomy and free-text policy catalog.

A catalog holds taxonomy categories (T1, T2, ...) and free-text policy rules
(POL01, ...). Both render into the category block substituted into detector
prompts, and categories additionally carry the format profile used when their
entities are encrypted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DuplicateCode, EmptyCatalog, SchemaError

CATEGORY_CODE_RE = re.compile(r"^T[0-9]+$")
RULE_CODE_RE = re.compile(r"^POL[0-9]+$")


@dataclass(frozen=True)
class Category:
    """One taxonomy category: code, display name, guideline, crypto profile."""

    code: str
    name: str
    description: str
    fpe_profile_id: str = "digits"
    pattern: str | None = None
    cue_words: tuple[str, ...] = ()
    cue_window: int = 20

    def __post_init__(self):
        if not CATEGORY_CODE_RE.match(self.code):
            raise SchemaError(f"category code {self.code!r} must match T<digits>")
        if not self.description:
            raise SchemaError(f"category {self.code} has an empty description")

    @property
    def ordinal(self) -> int:
        return int(self.code[1:])


@dataclass(frozen=True)
class PolicyRule:
    """One free-text policy rule (non-taxonomy compliance mode)."""

    code: str
    title: str
    body: str

    def __post_init__(self):
        if not RULE_CODE_RE.match(self.code):
            raise SchemaError(f"rule code {self.code!r} must match POL<digits>")
        if not self.body:
            raise SchemaError(f"rule {self.code} has an empty body")


@dataclass(frozen=True)
class PolicyCatalog:
    """Immutable, ordered collection of categories and rules."""

    categories: tuple[Category, ...] = ()
    rules: tuple[PolicyRule, ...] = ()
    version: str = "1"

    def __post_init__(self):
        if not self.categories and not self.rules:
            raise EmptyCatalog("catalog needs at least one category or rule")
        seen: set[str] = set()
        for code in [c.code for c in self.categories] + [r.code for r in self.rules]:
            if code in seen:
                raise DuplicateCode(f"code {code} appears more than once")
            seen.add(code)

    @property
    def category_codes(self) -> list[str]:
        return [c.code for c in self.categories]

    def category(self, code: str) -> Category:
        for c in self.categories:
            if c.code == code:
                return c
        raise KeyError(code)


def _require(mapping: dict, key: str, context: str) -> object:
    if key not in mapping:
        raise SchemaError(f"{context} is missing required field {key!r}")
    return mapping[key]


def load_catalog(source: str | Path | dict) -> PolicyCatalog:
    """Load and validate a catalog from a JSON file path or parsed document."""
    if isinstance(source, (str, Path)):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                document = json.load(fh)
        except OSError as exc:
            raise SchemaError(f"cannot read catalog {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"catalog {source} is not valid JSON: {exc}") from exc
    else:
        document = source

    if not isinstance(document, dict):
        raise SchemaError("catalog document must be a JSON object")

    categories = []
    for i, raw in enumerate(document.get("categories", [])):
        if not isinstance(raw, dict):
            raise SchemaError(f"categories[{i}] must be an object")
        categories.append(
            Category(
                code=str(_require(raw, "code", f"categories[{i}]")),
                name=str(_require(raw, "name", f"categories[{i}]")),
                description=str(_require(raw, "description", f"categories[{i}]")),
                fpe_profile_id=str(raw.get("fpe_profile", "digits")),
                pattern=raw.get("pattern"),
                cue_words=tuple(raw.get("cue_words", ())),
                cue_window=int(raw.get("cue_window", 20)),
            )
        )

    rules = []
    for i, raw in enumerate(document.get("rules", [])):
        if not isinstance(raw, dict):
            raise SchemaError(f"rules[{i}] must be an object")
        rules.append(
            PolicyRule(
                code=str(_require(raw, "code", f"rules[{i}]")),
                title=str(_require(raw, "title", f"rules[{i}]")),
                body=str(_require(raw, "body", f"rules[{i}]")),
            )
        )

    return PolicyCatalog(
        categories=tuple(categories),
        rules=tuple(rules),
        version=str(document.get("version", "1")),
    )


def serialize(catalog: PolicyCatalog) -> dict:
    """Inverse of load_catalog for valid catalogs."""
    doc: dict = {"version": catalog.version, "categories": [], "rules": []}
    for c in catalog.categories:
        entry: dict = {
            "code": c.code,
            "name": c.name,
            "description": c.description,
            "fpe_profile": c.fpe_profile_id,
        }
        if c.pattern is not None:
            entry["pattern"] = c.pattern
        if c.cue_words:
            entry["cue_words"] = list(c.cue_words)
        if c.cue_window != 20:
            entry["cue_window"] = c.cue_window
        doc["categories"].append(entry)
    for r in catalog.rules:
        doc["rules"].append({"code": r.code, "title": r.title, "body": r.body})
    return doc


def render_category_block(catalog: PolicyCatalog) -> str:
    """Render the text substituted for the unsafe-categories placeholder.

    One block per category or rule: "<code>: <name>." then the guideline on
    the next line, blocks separated by a blank line. Byte-deterministic.
    """
    blocks = [f"{c.code}: {c.name}.\n{c.description}" for c in catalog.categories]
    blocks += [f"{r.code}: {r.title}.\n{r.body}" for r in catalog.rules]
    return "\n\n".join(blocks)


def default_taxonomy() -> PolicyCatalog:
    """The packaged six-category taxonomy."""
    data = resources.files("promptgate.data").joinpath("taxonomy.json").read_text("utf-8")
    return load_catalog(json.loads(data))


def default_policies() -> PolicyCatalog:
    """The packaged free-text policy set (no taxonomy categories)."""
    data = resources.files("promptgate.data").joinpath("policies.json").read_text("utf-8")
    return load_catalog(json.loads(data))
