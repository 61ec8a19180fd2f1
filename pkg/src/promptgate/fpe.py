"""Format-preserving encryption: FF3-1 core and format-skeleton machinery.

The FF3-1 cipher keeps ciphertexts inside the plaintext's alphabet and length.
On top of it, format profiles split an entity string into per-character-class
payloads (letters, digits, ...) that are encrypted as merged blocks and
re-injected at their original positions, so delimiters and mixed formats
survive encryption unchanged.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import (
    AlphabetViolation,
    DomainTooSmall,
    FormatTooShort,
    KeyMaterialError,
    LengthOutOfRange,
)

FF3_MIN_DOMAIN = 1_000_000
FF3_ROUNDS = 8
TWEAK_LEN = 7

DIGITS = "0123456789"
ASCII_LOWER = "abcdefghijklmnopqrstuvwxyz"
ASCII_UPPER = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
LETTERS = ASCII_LOWER + ASCII_UPPER
ALPHANUMERIC = DIGITS + ASCII_LOWER + ASCII_UPPER


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of symbols defining the numeral system of a payload."""

    symbols: str

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise AlphabetViolation("alphabet symbols must be distinct")
        if not 2 <= len(self.symbols) <= 65536:
            raise AlphabetViolation("radix must be in [2, 65536]")

    @property
    def radix(self) -> int:
        return len(self.symbols)

    @property
    def min_len(self) -> int:
        # integer arithmetic: float log would wobble at exact powers
        n, domain = 1, self.radix
        while domain < FF3_MIN_DOMAIN:
            n += 1
            domain *= self.radix
        return max(2, n)

    @property
    def max_len(self) -> int:
        return 2 * int(96 / math.log2(self.radix))

    def index_of(self, ch: str) -> int:
        i = self.symbols.find(ch)
        if i < 0:
            raise AlphabetViolation(f"symbol {ch!r} not in alphabet")
        return i


DIGIT_ALPHABET = Alphabet(DIGITS)
LETTER_ALPHABET = Alphabet(LETTERS)
ALPHANUMERIC_ALPHABET = Alphabet(ALPHANUMERIC)


@dataclass(frozen=True)
class Ff3Key:
    """AES key for FF3-1. Never reveals its bytes through repr or str."""

    key_bytes: bytes = field(repr=False)
    key_id: str = "default"

    def __post_init__(self):
        if len(self.key_bytes) not in (16, 24, 32):
            raise KeyMaterialError(
                f"key must be 16, 24, or 32 bytes, got {len(self.key_bytes)}"
            )

    def __repr__(self):
        return f"Ff3Key(key_id={self.key_id!r}, <{len(self.key_bytes) * 8} bits>)"

    __str__ = __repr__

    @classmethod
    def from_hex(cls, hex_str: str, key_id: str = "default") -> "Ff3Key":
        try:
            raw = bytes.fromhex(hex_str.strip())
        except ValueError as exc:
            raise KeyMaterialError(f"invalid hex key material: {exc}") from exc
        return cls(raw, key_id)

    @classmethod
    def from_env(cls, var: str, key_id: str | None = None) -> "Ff3Key":
        value = os.environ.get(var)
        if not value:
            raise KeyMaterialError(f"environment variable {var} is not set")
        return cls.from_hex(value, key_id or var)

    @classmethod
    def from_file(cls, path: str, key_id: str | None = None) -> "Ff3Key":
        try:
            with open(path, "r", encoding="ascii") as fh:
                value = fh.read()
        except OSError as exc:
            raise KeyMaterialError(f"cannot read key file {path}: {exc}") from exc
        return cls.from_hex(value, key_id or os.path.basename(path))


@dataclass(frozen=True)
class Tweak:
    """56-bit public diversifier for one FF3-1 encryption."""

    tweak_bytes: bytes

    def __post_init__(self):
        if len(self.tweak_bytes) != TWEAK_LEN:
            raise KeyMaterialError(f"tweak must be {TWEAK_LEN} bytes, got {len(self.tweak_bytes)}")

    @classmethod
    def from_hex(cls, hex_str: str) -> "Tweak":
        return cls(bytes.fromhex(hex_str.strip()))

    def hex(self) -> str:
        return self.tweak_bytes.hex()


# -- FF3-1 core ----------------------------------------------------------------
#
# Balanced 8-round Feistel over numeral strings, AES as the round function.
# The cipher operates on byte-reversed AES inputs/outputs and least-significant-
# first numeral order; the _rev calls below implement exactly that convention.


def _num(chars: Sequence[int], radix: int) -> int:
    # most-significant numeral first
    value = 0
    for c in chars:
        value = value * radix + c
    return value


def _str_m(value: int, m: int, radix: int) -> list[int]:
    out = [0] * m
    for i in range(m - 1, -1, -1):
        out[i] = value % radix
        value //= radix
    return out


def _split_tweak_ff3_1(tweak: bytes) -> tuple[bytes, bytes]:
    # 56-bit tweak -> two 32-bit halves, each padded with four zero bits
    tl = bytes((tweak[0], tweak[1], tweak[2], tweak[3] & 0xF0))
    tr = bytes((tweak[4], tweak[5], tweak[6], (tweak[3] & 0x0F) << 4))
    return tl, tr


def _feistel(
    key: bytes,
    tl: bytes,
    tr: bytes,
    numerals: list[int],
    radix: int,
    decrypt: bool,
) -> list[int]:
    n = len(numerals)
    u = (n + 1) // 2
    v = n - u
    a = numerals[:u]
    b = numerals[u:]

    cipher = Cipher(algorithms.AES(key[::-1]), modes.ECB()).encryptor()

    rounds = range(FF3_ROUNDS - 1, -1, -1) if decrypt else range(FF3_ROUNDS)
    for i in rounds:
        if i % 2 == 0:
            m, w = u, tr
        else:
            m, w = v, tl

        src = a if decrypt else b
        block = bytes((w[0], w[1], w[2], w[3] ^ i)) + _num(src[::-1], radix).to_bytes(
            12, "big"
        )
        s = cipher.update(block[::-1])[::-1]
        y = int.from_bytes(s, "big")

        if decrypt:
            c = (_num(b[::-1], radix) - y) % radix**m
            b = a
            a = _str_m(c, m, radix)[::-1]
        else:
            c = (_num(a[::-1], radix) + y) % radix**m
            a = b
            b = _str_m(c, m, radix)[::-1]

    return a + b


def _check_domain(text: str, alphabet: Alphabet) -> list[int]:
    n = len(text)
    if alphabet.radix**n < FF3_MIN_DOMAIN:
        raise DomainTooSmall(
            f"length {n} at radix {alphabet.radix} gives a domain below {FF3_MIN_DOMAIN}"
        )
    if n > alphabet.max_len:
        raise LengthOutOfRange(
            f"length {n} exceeds maximum {alphabet.max_len} for radix {alphabet.radix}"
        )
    return [alphabet.index_of(ch) for ch in text]


def ff3_encrypt(key: Ff3Key, tweak: Tweak, alphabet: Alphabet, plaintext: str) -> str:
    """Encrypt a numeral string, preserving its length and alphabet."""
    numerals = _check_domain(plaintext, alphabet)
    tl, tr = _split_tweak_ff3_1(tweak.tweak_bytes)
    out = _feistel(key.key_bytes, tl, tr, numerals, alphabet.radix, decrypt=False)
    return "".join(alphabet.symbols[c] for c in out)


def ff3_decrypt(key: Ff3Key, tweak: Tweak, alphabet: Alphabet, ciphertext: str) -> str:
    """Exact inverse of ff3_encrypt under the same key and tweak."""
    numerals = _check_domain(ciphertext, alphabet)
    tl, tr = _split_tweak_ff3_1(tweak.tweak_bytes)
    out = _feistel(key.key_bytes, tl, tr, numerals, alphabet.radix, decrypt=True)
    return "".join(alphabet.symbols[c] for c in out)


# -- format skeletons ------------------------------------------------------------


@dataclass(frozen=True)
class CharClass:
    """One encryptable character class inside a format profile."""

    name: str
    contains: Callable[[str], bool]
    alphabet: Alphabet


@dataclass(frozen=True)
class FormatProfile:
    """Ordered character classes; characters matching none pass through."""

    profile_id: str
    classes: tuple[CharClass, ...]

    def class_index(self, ch: str) -> int | None:
        for i, cls in enumerate(self.classes):
            if cls.contains(ch):
                return i
        return None


@dataclass
class FormatSkeleton:
    """Decomposition of a string into class payloads and passthrough positions.

    positions[i] lists, in source order, the indices of the characters that
    belong to class i; payloads[i] holds those characters concatenated.
    """

    length: int
    payloads: list[str]
    positions: list[list[int]]
    passthrough: list[tuple[int, str]]

    def reassemble(self, payloads: list[str]) -> str:
        if [len(p) for p in payloads] != [len(p) for p in self.payloads]:
            raise ValueError("payload lengths do not match skeleton")
        out: list[str] = [""] * self.length
        for pos, ch in self.passthrough:
            out[pos] = ch
        for payload, positions in zip(payloads, self.positions):
            for ch, pos in zip(payload, positions):
                out[pos] = ch
        return "".join(out)


def extract_skeleton(entity: str, profile: FormatProfile) -> FormatSkeleton:
    """Split an entity into per-class payloads plus passthrough characters."""
    payloads = [[] for _ in profile.classes]
    positions: list[list[int]] = [[] for _ in profile.classes]
    passthrough: list[tuple[int, str]] = []
    for pos, ch in enumerate(entity):
        idx = profile.class_index(ch)
        if idx is None:
            passthrough.append((pos, ch))
        else:
            payloads[idx].append(ch)
            positions[idx].append(pos)
    return FormatSkeleton(
        length=len(entity),
        payloads=["".join(p) for p in payloads],
        positions=positions,
        passthrough=passthrough,
    )


def _transform_preserving(
    entity: str, profile: FormatProfile, key: Ff3Key, tweak: Tweak, decrypt: bool
) -> str:
    skeleton = extract_skeleton(entity, profile)
    new_payloads: list[str] = []
    for cls, payload in zip(profile.classes, skeleton.payloads):
        if not payload:
            new_payloads.append(payload)
            continue
        if cls.alphabet.radix ** len(payload) < FF3_MIN_DOMAIN:
            raise FormatTooShort(
                f"{cls.name} payload of length {len(payload)} is below the "
                f"minimum FF3-1 domain at radix {cls.alphabet.radix}"
            )
        fn = ff3_decrypt if decrypt else ff3_encrypt
        new_payloads.append(fn(key, tweak, cls.alphabet, payload))
    return skeleton.reassemble(new_payloads)


def encrypt_preserving(
    entity: str, profile: FormatProfile, key: Ff3Key, tweak: Tweak
) -> str:
    """Encrypt an entity in place: class payloads change, everything else stays."""
    return _transform_preserving(entity, profile, key, tweak, decrypt=False)


def decrypt_preserving(
    ciphertext: str, profile: FormatProfile, key: Ff3Key, tweak: Tweak
) -> str:
    """Exact inverse of encrypt_preserving under the same profile, key, tweak."""
    return _transform_preserving(ciphertext, profile, key, tweak, decrypt=True)


# -- built-in profiles ------------------------------------------------------------

_LETTER_CLASS = CharClass("letters", str.isalpha, LETTER_ALPHABET)
_DIGIT_CLASS = CharClass("digits", str.isdigit, DIGIT_ALPHABET)
_ALNUM_CLASS = CharClass("alphanumeric", str.isalnum, ALPHANUMERIC_ALPHABET)


def _ascii_only(pred: Callable[[str], bool]) -> Callable[[str], bool]:
    return lambda ch: ch.isascii() and pred(ch)


EMAIL_PROFILE = FormatProfile(
    "email",
    (
        CharClass("letters", _ascii_only(str.isalpha), LETTER_ALPHABET),
        CharClass("digits", _ascii_only(str.isdigit), DIGIT_ALPHABET),
    ),
)
ALNUM_PROFILE = FormatProfile(
    "alnum", (CharClass("alphanumeric", _ascii_only(str.isalnum), ALPHANUMERIC_ALPHABET),)
)
DIGITS_PROFILE = FormatProfile(
    "digits", (CharClass("digits", _ascii_only(str.isdigit), DIGIT_ALPHABET),)
)

BUILTIN_PROFILES: dict[str, FormatProfile] = {
    "email": EMAIL_PROFILE,
    "alnum": ALNUM_PROFILE,
    "digits": DIGITS_PROFILE,
}


def profile_by_id(profile_id: str) -> FormatProfile:
    try:
        return BUILTIN_PROFILES[profile_id]
    except KeyError:
        raise KeyMaterialError(f"unknown format profile {profile_id!r}") from None
