"""promptgate: privacy-compliance gateway for LLM traffic.

Detects sensitive entities in prompts against a configurable policy catalog,
anonymizes them with format-preserving encryption before forwarding upstream,
restores plaintext in responses, and ships the reward scorer and evaluation
harness used to train and assess detector models.
"""

from .anonymizer import EntityMap, EntityRecord, anonymize, profiles_from_catalog, restore
from .detector import Entity, PatternDetector, Safety, Verdict, detect
from .dlms_client import (
    DecodingParams,
    ModelOutput,
    ParsedAnswer,
    PromptTemplate,
    TemplateKind,
    build_rft_prompt,
    build_sft_prompt,
    format_sft_answer,
    parse_rft_output,
    parse_sft_output,
    query_model,
)
from .fpe import (
    Alphabet,
    Ff3Key,
    FormatProfile,
    FormatSkeleton,
    Tweak,
    decrypt_preserving,
    encrypt_preserving,
    extract_skeleton,
    ff3_decrypt,
    ff3_encrypt,
)
from .metrics import EvalReport, PredictionRecord, evaluate_run
from .policy import Category, PolicyCatalog, PolicyRule, default_taxonomy, load_catalog, render_category_block
from .reward import GroundTruth, RewardBreakdown, ScoringMode, score_total

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "Category",
    "DecodingParams",
    "Entity",
    "EntityMap",
    "EntityRecord",
    "EvalReport",
    "Ff3Key",
    "FormatProfile",
    "FormatSkeleton",
    "GroundTruth",
    "ModelOutput",
    "ParsedAnswer",
    "PatternDetector",
    "PolicyCatalog",
    "PolicyRule",
    "PredictionRecord",
    "PromptTemplate",
    "RewardBreakdown",
    "Safety",
    "ScoringMode",
    "TemplateKind",
    "Tweak",
    "Verdict",
    "anonymize",
    "build_rft_prompt",
    "build_sft_prompt",
    "decrypt_preserving",
    "default_taxonomy",
    "detect",
    "encrypt_preserving",
    "evaluate_run",
    "extract_skeleton",
    "ff3_decrypt",
    "ff3_encrypt",
    "format_sft_answer",
    "load_catalog",
    "parse_rft_output",
    "parse_sft_output",
    "profiles_from_catalog",
    "query_model",
    "render_category_block",
    "restore",
    "score_total",
]
