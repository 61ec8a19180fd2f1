"""Rule-based reward scorer for reasoning-grammar detector outputs.

Four components: format (+2 valid, -2 invalid, softened to 0 at the first
curriculum stage), safety (+1/-1), category set (+2 exact, +1 proper non-empty
subset, -1 otherwise), entity set (+4 exact, +2 proper non-empty subset, -1
otherwise). The total is the sum of the components active in the given mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .dlms_client import ModelOutput, parse_rft_output


class ScoringMode(Enum):
    FULL = "full"
    STAGE1 = "stage1"
    STAGE2 = "stage2"
    STAGE3 = "stage3"

    @classmethod
    def parse(cls, value: str) -> "ScoringMode":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown scoring mode {value!r}") from None


_ACTIVE_COMPONENTS = {
    ScoringMode.FULL: frozenset({"fmt", "safety", "cat", "ent"}),
    ScoringMode.STAGE1: frozenset({"fmt", "safety"}),
    ScoringMode.STAGE2: frozenset({"fmt", "safety", "cat"}),
    ScoringMode.STAGE3: frozenset({"fmt", "safety", "cat", "ent"}),
}

# total reward range per mode (invalid format scores 0, not -2, at stage 1)
MODE_BOUNDS = {
    ScoringMode.FULL: (-5, 9),
    ScoringMode.STAGE1: (-1, 3),
    ScoringMode.STAGE2: (-4, 5),
    ScoringMode.STAGE3: (-5, 9),
}


@dataclass(frozen=True)
class GroundTruth:
    """Reference labels for one sample."""

    safety: str
    categories: frozenset[str] = frozenset()
    entities: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.safety not in ("safe", "unsafe"):
            raise ValueError(f"ground truth safety must be safe/unsafe, got {self.safety!r}")
        if self.safety == "safe" and (self.categories or self.entities):
            raise ValueError("safe ground truth must have empty categories and entities")

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        entities = data.get("entities", ())
        if isinstance(entities, str):
            entities = [e.strip() for e in entities.split(";") if e.strip()]
        return cls(
            safety=str(data.get("safety", "")).lower(),
            categories=frozenset(str(c).upper() for c in data.get("categories", ())),
            entities=frozenset(entities),
        )


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component scores; inactive components report 0 and are not summed."""

    r_fmt: int
    r_safety: int
    r_cat: int
    r_ent: int
    r_total: int
    components_active: frozenset[str]
    mode: ScoringMode

    def to_json(self) -> dict:
        return {
            "r_fmt": self.r_fmt,
            "r_safety": self.r_safety,
            "r_cat": self.r_cat,
            "r_ent": self.r_ent,
            "r_total": self.r_total,
            "components_active": sorted(self.components_active),
            "mode": self.mode.value,
        }


def score_format(output: ModelOutput, mode: ScoringMode = ScoringMode.FULL) -> int:
    """+2 when the tag structure is valid; otherwise 0 at stage 1, -2 elsewhere."""
    if output.structure_valid:
        return 2
    return 0 if mode is ScoringMode.STAGE1 else -2


def score_safety(predicted: str | None, truth: GroundTruth) -> int:
    """+1 for a correct safety label; -1 for mismatch or an unknown prediction."""
    if predicted is None:
        return -1
    return 1 if predicted == truth.safety else -1


def score_category(predicted: frozenset[str], truth: frozenset[str]) -> int:
    if predicted == truth:
        return 2
    if predicted and predicted < truth:
        return 1
    return -1


def score_entity(predicted: frozenset[str], truth: frozenset[str]) -> int:
    if predicted == truth:
        return 4
    if predicted and predicted < truth:
        return 2
    return -1


def score_total(
    output: ModelOutput, truth: GroundTruth, mode: ScoringMode = ScoringMode.FULL
) -> RewardBreakdown:
    """Sum the components active in the given mode; inactive ones report 0."""
    answer = output.answer
    predicted_safety = answer.safety if answer is not None else None
    predicted_cats = answer.category_set if answer is not None else frozenset()
    predicted_ents = (
        frozenset(e.strip() for e in answer.entities) if answer is not None else frozenset()
    )

    active = _ACTIVE_COMPONENTS[mode]
    truth_ents = frozenset(e.strip() for e in truth.entities)
    values = {
        "fmt": score_format(output, mode),
        "safety": score_safety(predicted_safety, truth),
        "cat": score_category(predicted_cats, truth.categories),
        "ent": score_entity(predicted_ents, truth_ents),
    }
    return RewardBreakdown(
        r_fmt=values["fmt"] if "fmt" in active else 0,
        r_safety=values["safety"] if "safety" in active else 0,
        r_cat=values["cat"] if "cat" in active else 0,
        r_ent=values["ent"] if "ent" in active else 0,
        r_total=sum(values[name] for name in active),
        components_active=active,
        mode=mode,
    )


def score_raw(
    raw_output: str, truth: GroundTruth, mode: ScoringMode = ScoringMode.FULL
) -> RewardBreakdown:
    """Parse a raw reasoning-grammar string and score it."""
    return score_total(parse_rft_output(raw_output), truth, mode)


def score_batch_line(line: str, default_mode: ScoringMode = ScoringMode.FULL) -> dict:
    """Score one batch-file record: {"output", "ground_truth", "mode"?}.

    Malformed records yield an {"error": ...} object so batch streams continue.
    """
    try:
        record = json.loads(line)
        if not isinstance(record, dict):
            raise ValueError("record must be a JSON object")
        output = record["output"]
        if not isinstance(output, str):
            raise ValueError("output must be a string")
        truth = GroundTruth.from_json(record["ground_truth"])
        mode = ScoringMode.parse(record.get("mode", default_mode.value))
    except (ValueError, KeyError, TypeError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    return score_raw(output, truth, mode).to_json()
