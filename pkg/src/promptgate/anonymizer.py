"""In-place entity encryption with a reversible per-request map.

Detected entity spans are replaced right-to-left by format-preserving
ciphertexts; a per-request map records plaintext/ciphertext pairs so upstream
responses can be restored by exact string matching. Entities the cipher cannot
cover (payload below the minimum domain, foreign alphabets) fall back to a
bracketed placeholder instead of failing the request.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .detector import Safety, Verdict
from .errors import FpeError, SpanMismatch
from .fpe import (
    DIGITS_PROFILE,
    Ff3Key,
    FormatProfile,
    Tweak,
    encrypt_preserving,
    profile_by_id,
)
from .policy import PolicyCatalog

MAX_TWEAK_RETRIES = 8
# retry stride keeps re-derived ordinals clear of real ones
_RETRY_STRIDE = 1 << 16


@dataclass(frozen=True)
class EntityRecord:
    """One reversible plaintext/ciphertext pair."""

    plaintext: str
    ciphertext: str
    category_code: str
    tweak_hex: str
    key_id: str
    fallback: bool = False


@dataclass
class EntityMap:
    """Per-request record set; ciphertexts are pairwise substring-free."""

    request_id: str
    records: list[EntityRecord] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)

    def validate(self) -> None:
        texts = [r.ciphertext for r in self.records]
        for i, a in enumerate(texts):
            for j, b in enumerate(texts):
                if i != j and a in b:
                    raise SpanMismatch(
                        f"ciphertext {a!r} is contained in {b!r} within one map"
                    )

    @property
    def fallback_count(self) -> int:
        return sum(r.fallback for r in self.records)


def profiles_from_catalog(catalog: PolicyCatalog) -> dict[str, FormatProfile]:
    return {c.code: profile_by_id(c.fpe_profile_id) for c in catalog.categories}


def derive_tweak(request_id: str, category_code: str, ordinal: int) -> Tweak:
    """7-byte truncated hash of the request id, category, and entity ordinal."""
    digest = hashlib.sha256(f"{request_id}|{category_code}|{ordinal}".encode()).digest()
    return Tweak(digest[:7])


def _placeholder(category_code: str, ordinal: int) -> str:
    return f"⟦{category_code}#{ordinal}⟧"


def anonymize(
    prompt: str,
    verdict: Verdict,
    key: Ff3Key,
    profiles: dict[str, FormatProfile],
    request_id: str,
) -> tuple[str, EntityMap]:
    """Replace every entity span with ciphertext; return the reversible map."""
    if verdict.safety is not Safety.UNSAFE:
        raise ValueError("anonymize requires an unsafe verdict")

    prompt_bytes = prompt.encode("utf-8")
    entities = sorted(verdict.entities, key=lambda e: e.start)
    for e in entities:
        if prompt_bytes[e.start:e.end] != e.text.encode("utf-8"):
            raise SpanMismatch(
                f"span [{e.start}, {e.end}) does not hold {e.text!r} in the prompt"
            )

    # pre-existing content: everything outside entity spans, with boundaries
    # marked so removal cannot fabricate new substrings
    segments = []
    cursor = 0
    for e in entities:
        segments.append(prompt_bytes[cursor:e.start].decode("utf-8"))
        cursor = e.end
    segments.append(prompt_bytes[cursor:].decode("utf-8"))
    remainder = "\x00".join(segments)

    entity_map = EntityMap(request_id=request_id)
    replacements: list[tuple[int, int, str]] = []
    taken_ciphertexts: list[str] = []

    for ordinal, entity in enumerate(entities, 1):
        profile = profiles.get(entity.category_code, DIGITS_PROFILE)
        ciphertext = None
        tweak = derive_tweak(request_id, entity.category_code, ordinal)
        for attempt in range(MAX_TWEAK_RETRIES):
            if attempt:
                tweak = derive_tweak(
                    request_id, entity.category_code, ordinal + attempt * _RETRY_STRIDE
                )
            try:
                candidate = encrypt_preserving(entity.text, profile, key, tweak)
            except FpeError:
                break
            if candidate == entity.text:
                continue
            if candidate in remainder:
                continue
            if any(candidate in t or t in candidate for t in taken_ciphertexts):
                continue
            ciphertext = candidate
            break

        fallback = ciphertext is None
        if fallback:
            ciphertext = _placeholder(entity.category_code, ordinal)
            bump = 0
            while ciphertext in remainder or any(
                ciphertext in t or t in ciphertext for t in taken_ciphertexts
            ):
                bump += 1
                ciphertext = _placeholder(entity.category_code, ordinal + bump * _RETRY_STRIDE)

        taken_ciphertexts.append(ciphertext)
        entity_map.records.append(
            EntityRecord(
                plaintext=entity.text,
                ciphertext=ciphertext,
                category_code=entity.category_code,
                tweak_hex=tweak.hex(),
                key_id=key.key_id,
                fallback=fallback,
            )
        )
        replacements.append((entity.start, entity.end, ciphertext))

    sanitized = prompt_bytes
    for start, end, ciphertext in sorted(replacements, reverse=True):
        sanitized = sanitized[:start] + ciphertext.encode("utf-8") + sanitized[end:]

    entity_map.validate()
    return sanitized.decode("utf-8"), entity_map


def restore(response: str, entity_map: EntityMap) -> str:
    """Replace every mapped ciphertext occurrence with its plaintext.

    Longest ciphertext first; a response without any mapped ciphertext is
    returned unchanged.
    """
    out = response
    for record in sorted(entity_map.records, key=lambda r: len(r.ciphertext), reverse=True):
        if record.ciphertext in out:
            out = out.replace(record.ciphertext, record.plaintext)
    return out


# -- optional encrypted-at-rest persistence -----------------------------------------


class MapStore:
    """Append-only JSONL store for entity maps, plaintext encrypted at rest."""

    def __init__(self, path: str, key: Ff3Key):
        self._path = path
        self._aead = AESGCM(hashlib.sha256(b"map-store:" + key.key_bytes).digest())
        self._lock = threading.Lock()

    def _seal(self, plaintext: str) -> str:
        nonce = os.urandom(12)
        sealed = self._aead.encrypt(nonce, plaintext.encode("utf-8"), None)
        return base64.b64encode(nonce + sealed).decode("ascii")

    def _open(self, token: str) -> str:
        raw = base64.b64decode(token)
        return self._aead.decrypt(raw[:12], raw[12:], None).decode("utf-8")

    def append(self, entity_map: EntityMap) -> None:
        line = {
            "request_id": entity_map.request_id,
            "created_at": entity_map.created_at,
            "records": [
                {
                    "plaintext_sealed": self._seal(r.plaintext),
                    "ciphertext": r.ciphertext,
                    "category_code": r.category_code,
                    "tweak": r.tweak_hex,
                    "key_id": r.key_id,
                    "fallback": r.fallback,
                }
                for r in entity_map.records
            ],
        }
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")

    def load(self, request_id: str) -> EntityMap | None:
        try:
            fh = open(self._path, "r", encoding="utf-8")
        except FileNotFoundError:
            return None
        found = None
        with fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                if data["request_id"] == request_id:
                    found = data
        if found is None:
            return None
        return EntityMap(
            request_id=found["request_id"],
            created_at=found["created_at"],
            records=[
                EntityRecord(
                    plaintext=self._open(r["plaintext_sealed"]),
                    ciphertext=r["ciphertext"],
                    category_code=r["category_code"],
                    tweak_hex=r["tweak"],
                    key_id=r["key_id"],
                    fallback=r["fallback"],
                )
                for r in found["records"]
            ],
        )
