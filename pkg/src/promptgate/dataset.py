"""Sample records and the deterministic synthetic corpus generator.

Guard-style samples carry a message, a safety label, violated category codes,
and an explanation listing the ground-truth entities joined by "; ". The
generator fills carrier sentences with entities drawn from pools that match
the built-in detector patterns, so corpus and detector form a closed loop.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .dlms_client import PromptTemplate, build_rft_prompt
from .errors import EntityNotInMessage, SchemaError, UnsupportedCategory
from .policy import PolicyCatalog

ABILITY = "privacy_risk_analysis"


@dataclass(frozen=True)
class SftSample:
    """One guard-style training sample."""

    message: str
    label: str
    violated_category_codes: tuple[str, ...] = ()
    explanation: str = ""

    def __post_init__(self):
        if self.label not in ("safe", "unsafe"):
            raise SchemaError(f"label must be safe/unsafe, got {self.label!r}")
        if self.label == "safe":
            if self.violated_category_codes or self.explanation:
                raise SchemaError("safe samples must have no codes and no explanation")
        else:
            if not self.violated_category_codes:
                raise SchemaError("unsafe samples must list violated category codes")
            for entity in self.entities:
                if entity not in self.message:
                    raise EntityNotInMessage(
                        f"entity {entity!r} does not occur in the message"
                    )

    @property
    def entities(self) -> list[str]:
        return [e.strip() for e in self.explanation.split(";") if e.strip()]

    def to_json(self) -> dict:
        return {
            "message": self.message,
            "label": self.label,
            "violated_category_codes": list(self.violated_category_codes),
            "explanation": self.explanation,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SftSample":
        entities = [
            e.strip() for e in str(data.get("explanation", "")).split(";") if e.strip()
        ]
        return cls(
            message=str(data["message"]),
            label=str(data["label"]),
            violated_category_codes=tuple(data.get("violated_category_codes", ())),
            explanation="; ".join(entities),
        )


@dataclass(frozen=True)
class RftSample:
    """One reasoning-style sample: instruction prompt plus reward signal."""

    prompt: str
    ability: str
    reward_model: dict
    extra_info: dict

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "ability": self.ability,
            "reward_model": self.reward_model,
            "extra_info": self.extra_info,
        }


def load_sft_dataset(path: str | Path) -> list[SftSample]:
    """Read and validate a JSONL guard-sample file; errors carry line numbers."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(SftSample.from_json(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {i}: invalid JSON: {exc}") from exc
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"line {i}: missing field: {exc}") from exc
            except EntityNotInMessage as exc:
                raise EntityNotInMessage(f"line {i}: {exc}") from exc
            except SchemaError as exc:
                raise SchemaError(f"line {i}: {exc}") from exc
    return samples


def save_sft_dataset(samples, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_json(), ensure_ascii=False) + "\n")


def convert_sft_to_rft(
    samples,
    catalog: PolicyCatalog,
    template: PromptTemplate,
    split: str = "train",
    role: str = "User",
) -> list[RftSample]:
    """Wrap each sample's message in the reasoning prompt and attach rewards."""
    out = []
    for index, sample in enumerate(samples):
        ground_truth = {
            "safety": sample.label,
            "categories": list(sample.violated_category_codes),
            "entities": "; ".join(sample.entities),
        }
        out.append(
            RftSample(
                prompt=build_rft_prompt(sample.message, catalog, template, role),
                ability=ABILITY,
                reward_model={"style": "rule", "ground_truth": ground_truth},
                extra_info={"split": split, "index": index},
            )
        )
    return out


# -- synthetic corpus --------------------------------------------------------------

SAFE_TEMPLATES = [
    "Summarize the quarterly report structure.",
    "Draft an agenda for the weekly product sync.",
    "Explain the difference between gross and operating margin.",
    "Rewrite this paragraph to sound more formal.",
    "List common pitfalls when negotiating vendor contracts.",
    "What are the key risks in launching a subscription tier?",
    "Give me talking points for the town hall on hybrid work.",
    "Translate the onboarding checklist into plain English.",
    "Outline a rollout plan for the new expense policy.",
    "Suggest improvements to our incident postmortem template.",
    "Compare waterfall and agile delivery for regulated industries.",
    "Write a polite follow-up note for an overdue design review.",
    "Describe best practices for archiving project documents.",
    "Draft a one-paragraph summary of the supplier briefing.",
    "How should we structure the mentorship program this year?",
]

# carrier sentences per category; {e} is the entity slot. Carriers contain no
# digits and no cue words of other categories.
UNSAFE_TEMPLATES = {
    "T1": [
        "Please draft a reply to {e} about the delayed shipment.",
        "Contact the customer at {e} for confirmation.",
        "Forward the signed agreement to {e} by end of day.",
        "Loop in {e} when the contract is ready.",
    ],
    "T2": [
        "Verify the applicant whose ID is {e} before onboarding.",
        "The staff ID {e} should be removed from the directory.",
        "Entry {e} appears twice in the registry export.",
        "Flag the badge {e} for renewal this quarter.",
    ],
    "T3": [
        "Call {e} to reschedule the audit.",
        "The customer can be reached at {e} anytime.",
        "Please text {e} about the venue change.",
        "Dial {e} for the bridge line.",
    ],
    "T4": [
        "Send the signed form by fax {e} before Friday.",
        "Use the fax {e} for the claims office.",
        "Submit the waiver via fax {e} to the registrar.",
    ],
    "T5-iban": [
        "Wire the deposit to IBAN {e} by Monday.",
        "Settle the invoice through IBAN {e} this week.",
    ],
    "T5-digits": [
        "Transfer the proceeds to account {e} tonight.",
        "Route payroll to the account {e} from April.",
    ],
    "T6": [
        "Fund value ${e} was confirmed by finance.",
        "The settlement totals ${e} according to the draft.",
        "Projected savings of ${e} were approved.",
        "The invoice closes at ${e} after discounts.",
    ],
}

_FIRST = ["tina", "omar", "lucia", "kenji", "petra", "ravi", "nora", "felix", "amara", "dmitri"]
_LAST = ["vang", "silva", "novak", "ahmed", "moreau", "tanaka", "boyle", "castro", "waters", "okafor"]
_DOMAIN = ["support", "sales", "corporate", "finance", "legal", "research", "helpdesk"]
_TLD = ["org", "com", "net", "io"]
_COUNTRY = ["1", "7", "33", "44", "49", "81", "86", "852", "853"]
_IBAN_CC = ["DE", "GB", "FR", "ES", "NL", "PL"]

# unsafe category mix used when only a total is given; proportions follow the
# observed per-category message distribution of the reference corpus
CATEGORY_WEIGHTS = {"T1": 567, "T2": 244, "T3": 255, "T4": 231, "T5": 248, "T6": 410}
DEFAULT_SAFE_SHARE = 0.29
DEFAULT_MULTI_LABEL_RATE = 0.13


def _digits(rng: random.Random, n: int, leading_nonzero: bool = False) -> str:
    first = str(rng.randint(1, 9)) if leading_nonzero else str(rng.randint(0, 9))
    return first + "".join(str(rng.randint(0, 9)) for _ in range(n - 1))


def _make_entity(rng: random.Random, code: str) -> tuple[str, str]:
    """Returns (entity text, template group key)."""
    if code == "T1":
        sep = rng.choice([".", ""])
        text = (
            f"{rng.choice(_FIRST)}{sep}{rng.choice(_LAST)}"
            f"@{rng.choice(_DOMAIN)}.{rng.choice(_TLD)}"
        )
        return text, "T1"
    if code == "T2":
        if rng.random() < 0.5:
            letter = chr(rng.randint(ord("A"), ord("Z")))
            text = f"{letter} {_digits(rng, 3)} {_digits(rng, 3)} {_digits(rng, 1)}"
        else:
            suffix = "".join(chr(rng.randint(ord("A"), ord("Z"))) for _ in range(2))
            text = f"{_digits(rng, 3)}-{_digits(rng, 4)}-{_digits(rng, 3)}{suffix}"
        return text, "T2"
    if code == "T3":
        cc = rng.choice(_COUNTRY)
        shape = rng.randrange(3)
        if shape == 0:
            text = f"+{cc} {_digits(rng, 3)} {_digits(rng, 3)} {_digits(rng, 4)}"
        elif shape == 1:
            text = f"+{cc}-{_digits(rng, 4)}-{_digits(rng, 4)}"
        else:
            text = f"+{cc} {_digits(rng, 2)} {_digits(rng, 4)} {_digits(rng, 4)}"
        return text, "T3"
    if code == "T4":
        text = f"({_digits(rng, 3, True)}) {_digits(rng, 4)}-{_digits(rng, 4)}"
        return text, "T4"
    if code == "T5":
        if rng.random() < 0.5:
            text = f"{rng.choice(_IBAN_CC)}{_digits(rng, 2)}{_digits(rng, rng.randint(16, 20))}"
            return text, "T5-iban"
        text = _digits(rng, rng.randint(10, 12), True)
        return text, "T5-digits"
    if code == "T6":
        groups = rng.randint(1, 2)
        head = str(rng.randint(1, 999))
        tail = ",".join(_digits(rng, 3) for _ in range(groups + 1))
        return f"{head},{tail}", "T6"
    raise UnsupportedCategory(f"no entity generator for category {code}")


def _unsafe_sentence(rng: random.Random, code: str, used: set[str]) -> tuple[str, str]:
    for _ in range(32):
        entity, group = _make_entity(rng, code)
        if entity not in used and not any(
            entity in u or u in entity for u in used
        ):
            used.add(entity)
            template = rng.choice(UNSAFE_TEMPLATES[group])
            return template.format(e=entity), entity
    raise RuntimeError(f"could not draw a fresh entity for {code}")


def default_counts(total: int, catalog: PolicyCatalog) -> dict[str, int]:
    """Split a total into the default safe share plus weighted category counts."""
    safe = round(total * DEFAULT_SAFE_SHARE)
    unsafe = total - safe
    codes = [c.code for c in catalog.categories if c.code in CATEGORY_WEIGHTS]
    weight_sum = sum(CATEGORY_WEIGHTS[c] for c in codes)
    counts = {"safe": safe}
    assigned = 0
    for code in codes[:-1]:
        n = round(unsafe * CATEGORY_WEIGHTS[code] / weight_sum)
        counts[code] = n
        assigned += n
    counts[codes[-1]] = unsafe - assigned
    return counts


def generate_synthetic_corpus(
    catalog: PolicyCatalog,
    counts: dict[str, int],
    seed: int,
    multi_label_rate: float = DEFAULT_MULTI_LABEL_RATE,
) -> list[SftSample]:
    """Deterministic corpus: counts maps "safe" and category codes to totals.

    Category counts are primary assignments; a multi_label_rate fraction of
    unsafe messages gains a second category sentence.
    """
    rng = random.Random(seed)
    known = {c.code for c in catalog.categories}
    for key in counts:
        if key != "safe" and key not in known:
            raise UnsupportedCategory(f"count for unknown category {key!r}")

    samples: list[SftSample] = []
    for _ in range(counts.get("safe", 0)):
        samples.append(SftSample(message=rng.choice(SAFE_TEMPLATES), label="safe"))

    codes = [c.code for c in catalog.categories if counts.get(c.code, 0) > 0]
    for code in codes:
        for _ in range(counts[code]):
            used: set[str] = set()
            sentence, entity = _unsafe_sentence(rng, code, used)
            parts = [(sentence, code, entity)]
            if len(codes) > 1 and rng.random() < multi_label_rate:
                other = rng.choice([c for c in codes if c != code])
                sentence2, entity2 = _unsafe_sentence(rng, other, used)
                parts.append((sentence2, other, entity2))
            message = " ".join(p[0] for p in parts)
            ordered = sorted({p[1] for p in parts}, key=lambda c: int(c[1:]))
            entities = [p[2] for p in parts]
            samples.append(
                SftSample(
                    message=message,
                    label="unsafe",
                    violated_category_codes=tuple(ordered),
                    explanation="; ".join(entities),
                )
            )
    rng.shuffle(samples)
    return samples
