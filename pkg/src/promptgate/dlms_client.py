"""Prompt construction and output parsing for the remote detector model.

Two instruction grammars are supported: the guard-style three-line answer
(safe/unsafe, codes, entities) and the reasoning grammar that wraps analysis
in <analyze> tags and the final answer in <answer> tags. Builders are pure
and byte-deterministic; the HTTP client speaks the chat-completion wire format.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import httpx

from .detector import Entity, PatternDetector, Safety, Verdict, _ByteOffsets
from .errors import (
    MalformedOutput,
    MissingLines,
    TransportError,
    UpstreamError,
    UpstreamTimeout,
)
from .policy import PolicyCatalog, render_category_block

DEFAULT_EOS_MARKERS = ("<|eot_id|>", "<|end_of_text|>")
DEFAULT_ROLE = "User"


class TemplateKind(Enum):
    SFT_GUARD = "sft"
    RFT_ZERO_SHOT = "rft-zero-shot"
    RFT_FEW_SHOT = "rft-few-shot"


@dataclass(frozen=True)
class FewShotExample:
    analysis: str
    answer: str


DEFAULT_FEW_SHOT_EXAMPLES = (
    FewShotExample("analyzing process here", "unsafe\nT1, T6\ncustomer@gmail.com; 150,000"),
    FewShotExample("analyzing process here", "safe"),
    FewShotExample(
        "analyzing process here",
        "unsafe\nT2, T3, T6\n983-4012-949CN; +853-3406-2844; 875,500; 124,500",
    ),
)


@dataclass(frozen=True)
class PromptTemplate:
    """Template selector; the few-shot kind carries at least one example."""

    kind: TemplateKind
    examples: tuple[FewShotExample, ...] = ()

    def __post_init__(self):
        if self.kind is TemplateKind.RFT_FEW_SHOT and not self.examples:
            object.__setattr__(self, "examples", DEFAULT_FEW_SHOT_EXAMPLES)
        if self.kind is not TemplateKind.RFT_FEW_SHOT and self.examples:
            raise ValueError(f"{self.kind.value} template carries no examples")


_SFT_TEMPLATE = """\
[INST] Task: Check if there is unsafe content in '{role}' messages in conversations according to our safety policy with the below categories.

<BEGIN UNSAFE CONTENT CATEGORIES>
{categories}
<END UNSAFE CONTENT CATEGORIES>
<BEGIN CONVERSATION>
{role}: {message}
<END CONVERSATION>

Provide your safety assessment for {role} in the above conversation:

- The first line must state either 'safe' or 'unsafe'.
- If the assessment is 'unsafe':
     - The second line must list the violated category codes (e.g., 'T1', 'T5') as a comma-separated string.
     - The third line must list the unsafe entities as a semicolon-separated string. Output them exactly as they appear in the original message. [/INST]"""

_RFT_TEMPLATE = """\
[INST] Task: Check if there is unsafe content in '{role}' messages in conversations according to our safety policy with the below categories.

<BEGIN UNSAFE CONTENT CATEGORIES>
{categories}
<END UNSAFE CONTENT CATEGORIES>
<BEGIN CONVERSATION>
{role}: {message}
<END CONVERSATION>

Provide your safety assessment for ONLY THE LAST {role} message in the above conversation:

1. **Analyzing Process**:
   - Analyze the user's message for each unsafe content category and reason your way to a conclusion.
   - Enclose the analyzing process within '<analyze>...</analyze>' tags.

2. **Final Answer**:
   - Provide your final safety assessment enclosed within '<answer>...</answer>' tags.
   - The format inside '<answer>...</answer>' should be as follows:
     - The first line must state either 'safe' or 'unsafe'.
     - If the assessment is 'unsafe':
       - The second line must list the violated category codes (e.g., 'T1', 'T5') as a comma-separated string.
       - The third line must list the unsafe entities as a semicolon-separated string. Output them exactly as they appear in the original message.{examples} [/INST]"""


def _indent_block(text: str) -> str:
    return "\n".join("    " + line for line in text.split("\n"))


def _render_examples(examples: tuple[FewShotExample, ...]) -> str:
    parts = []
    for i, ex in enumerate(examples, 1):
        body = _indent_block(
            f"<analyze>\n{ex.analysis}\n</analyze>\n<answer>\n{ex.answer}\n</answer>"
        )
        parts.append(f"\n\n**Example {i}**:\n{body}")
    return "".join(parts)


def build_sft_prompt(message: str, catalog: PolicyCatalog, role: str = DEFAULT_ROLE) -> str:
    """Render the guard-style instruction around a user message."""
    return _SFT_TEMPLATE.format(
        role=role, categories=render_category_block(catalog), message=message
    )


def build_rft_prompt(
    message: str,
    catalog: PolicyCatalog,
    template: PromptTemplate,
    role: str = DEFAULT_ROLE,
) -> str:
    """Render the reasoning instruction; few-shot appends worked examples."""
    if template.kind is TemplateKind.SFT_GUARD:
        raise ValueError("use build_sft_prompt for the guard template")
    examples = (
        _render_examples(template.examples)
        if template.kind is TemplateKind.RFT_FEW_SHOT
        else ""
    )
    return _RFT_TEMPLATE.format(
        role=role,
        categories=render_category_block(catalog),
        message=message,
        examples=examples,
    )


# -- answer parsing -------------------------------------------------------------


@dataclass(frozen=True)
class ParsedAnswer:
    """Verdict-like payload parsed from a model answer.

    Model output need not satisfy verdict invariants, so categories and
    entities are kept exactly as stated (trimmed, deduplicated, order kept).
    """

    safety: str | None
    categories: tuple[str, ...] = ()
    entities: tuple[str, ...] = ()
    unknown_codes: frozenset[str] = frozenset()

    @property
    def category_set(self) -> frozenset[str]:
        return frozenset(self.categories)

    @property
    def entity_set(self) -> frozenset[str]:
        return frozenset(self.entities)


UNKNOWN_ANSWER = ParsedAnswer(safety=None)


def parse_sft_output(raw: str, catalog: PolicyCatalog | None = None) -> ParsedAnswer:
    """Parse the three-line guard answer grammar."""
    lines = [line.strip() for line in raw.strip().split("\n")]
    label = lines[0].lower() if lines else ""
    if label == "safe":
        return ParsedAnswer(safety="safe")
    if label != "unsafe":
        raise MalformedOutput(f"first line must be 'safe' or 'unsafe', got {lines[0]!r}")
    if len(lines) < 3:
        raise MissingLines("'unsafe' answers need category and entity lines")

    categories: list[str] = []
    for piece in lines[1].split(","):
        code = piece.strip().upper()
        if code and code not in categories:
            categories.append(code)
    entities: list[str] = []
    for piece in lines[2].split(";"):
        text = piece.strip()
        if text:
            entities.append(text)

    unknown: frozenset[str] = frozenset()
    if catalog is not None:
        known = {c.code for c in catalog.categories} | {r.code for r in catalog.rules}
        unknown = frozenset(c for c in categories if c not in known)
    return ParsedAnswer(
        safety="unsafe",
        categories=tuple(categories),
        entities=tuple(entities),
        unknown_codes=unknown,
    )


@dataclass(frozen=True)
class ModelOutput:
    """A raw reasoning-grammar output plus its parsed parts and validity."""

    raw: str
    structure_valid: bool
    analysis: str | None = None
    answer: ParsedAnswer | None = None
    trailing: str = ""


def _single_span(raw: str, open_tag: str, close_tag: str) -> tuple[int, int] | None:
    if raw.count(open_tag) != 1 or raw.count(close_tag) != 1:
        return None
    start = raw.find(open_tag)
    end = raw.find(close_tag)
    if end < start:
        return None
    return start, end


def parse_rft_output(
    raw: str,
    catalog: PolicyCatalog | None = None,
    eos_markers: tuple[str, ...] = DEFAULT_EOS_MARKERS,
) -> ModelOutput:
    """Validate the tag grammar and parse the answer body.

    Structural failures never raise: reward scoring must be able to consume
    malformed outputs, so validity is reported as a flag.
    """
    analyze_span = _single_span(raw, "<analyze>", "</analyze>")
    answer_span = _single_span(raw, "<answer>", "</answer>")

    analysis = None
    answer = None
    trailing = ""
    valid = analyze_span is not None and answer_span is not None

    if analyze_span is not None:
        analysis = raw[analyze_span[0] + len("<analyze>"): analyze_span[1]]
    if answer_span is not None:
        body = raw[answer_span[0] + len("<answer>"): answer_span[1]]
        try:
            answer = parse_sft_output(body, catalog)
        except MalformedOutput:
            answer = UNKNOWN_ANSWER
        trailing = raw[answer_span[1] + len("</answer>"):]

    if valid:
        a_start, a_end = analyze_span
        ans_start, ans_end = answer_span
        between = raw[a_end + len("</analyze>"): ans_start]
        leading = raw[:a_start]
        stripped_trailing = trailing.strip()
        valid = (
            a_end > a_start
            and ans_start >= a_end + len("</analyze>")
            and ans_end > ans_start
            and leading.strip() == ""
            and between.strip() == ""
            and (stripped_trailing == "" or stripped_trailing in eos_markers)
        )

    return ModelOutput(
        raw=raw,
        structure_valid=valid,
        analysis=analysis,
        answer=answer,
        trailing=trailing,
    )


def format_sft_answer(verdict: Verdict) -> str:
    """Emit a verdict in the three-line guard answer grammar."""
    if verdict.safety is Safety.SAFE:
        return "safe"
    codes = sorted(verdict.categories, key=_code_sort_key)
    entities = [e.text for e in verdict.entities]
    return f"unsafe\n{', '.join(codes)}\n{'; '.join(entities)}"


def _code_sort_key(code: str) -> tuple:
    digits = "".join(c for c in code if c.isdigit())
    return (code.rstrip("0123456789"), int(digits) if digits else 0)


def verdict_from_answer(
    message: str, answer: ParsedAnswer | None, catalog: PolicyCatalog
) -> Verdict:
    """Locate a parsed answer's entity strings in the message as spans.

    The model emits strings, not offsets: every verbatim occurrence of each
    entity is claimed, the category is the first predicted code whose pattern
    fully matches the string (else the first predicted code), and strings that
    do not occur in the message are dropped.
    """
    if answer is None or answer.safety != "unsafe" or not answer.entities:
        return Verdict.safe()

    detector = PatternDetector(catalog) if catalog.categories else None
    codes = sorted(answer.categories, key=_code_sort_key) or ["T0"]
    offsets = _ByteOffsets(message)

    claimed: list[tuple[int, int]] = []
    entities: list[Entity] = []
    for text in dict.fromkeys(answer.entities):
        code = _assign_code(text, codes, detector)
        start = message.find(text)
        while start != -1:
            end = start + len(text)
            if not any(s < end and start < e for s, e in claimed):
                claimed.append((start, end))
                entities.append(Entity(code, text, offsets.at(start), offsets.at(end)))
            start = message.find(text, start + 1)
    return Verdict.from_entities(entities)


def _assign_code(text: str, codes: list[str], detector) -> str:
    if detector is not None:
        for code in codes:
            try:
                matches = detector.match_category(text, code)
            except Exception:
                continue
            if any(m.text == text for m in matches):
                return code
    return codes[0]


# -- remote client ---------------------------------------------------------------


@dataclass(frozen=True)
class DecodingParams:
    model: str = "dlms"
    temperature: float = 0.7
    timeout: float = 30.0
    max_retries: int = 2
    api_key: str | None = None


def query_model(
    endpoint: str,
    prompt: str,
    params: DecodingParams = DecodingParams(),
    transport: httpx.BaseTransport | None = None,
) -> str:
    """Send one chat-completion request and return the assistant content.

    Retries idempotently on transport errors (including timeouts) up to the
    configured count; upstream error statuses are not retried.
    """
    payload = {
        "model": params.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
    }
    headers = {}
    if params.api_key:
        headers["Authorization"] = f"Bearer {params.api_key}"

    last_error: Exception | None = None
    for attempt in range(params.max_retries + 1):
        try:
            with httpx.Client(transport=transport, timeout=params.timeout) as client:
                response = client.post(endpoint, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            last_error = UpstreamTimeout(f"model endpoint timed out: {exc}")
        except httpx.TransportError as exc:
            last_error = TransportError(f"model endpoint unreachable: {exc}")
        else:
            if response.status_code >= 400:
                raise UpstreamError(response.status_code, response.text)
            return _extract_content(response)
        if attempt < params.max_retries:
            time.sleep(min(0.05 * 2**attempt, 0.5))
    assert last_error is not None
    raise last_error


def _extract_content(response: httpx.Response) -> str:
    try:
        body = response.json()
        content = body["choices"][0]["message"]["content"]
    except (ValueError, LookupError, TypeError) as exc:
        raise UpstreamError(response.status_code, response.text) from exc
    if not isinstance(content, str):
        raise UpstreamError(response.status_code, response.text)
    return content
