"""Secret keys, keyed tag generation, and tagged-signal construction.

The tag function is a keyed PRF: a SHAKE-256 expansion of (key, serialized
message) to 2L bits, mapped pairwise onto unit-modulus QPSK symbols. That
gives exact per-symbol energy, determinism, and avalanche behavior, which is
all the detection analysis relies on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomStream, draw_complex_gaussian

# Gray-ordered QPSK points on the unit circle
QPSK_POINTS = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))


@dataclass(frozen=True)
class SecretKey:
    key_id: int
    secret: bytes

    def __post_init__(self):
        if len(self.secret) != 32:
            raise ValueError("keys are 32 bytes")


@dataclass
class MessageBlock:
    symbols: np.ndarray     # (L,) complex, unit average energy

    @property
    def L(self):
        return self.symbols.shape[0]


@dataclass
class TagBlock:
    symbols: np.ndarray     # (L,) complex, |t_l| = 1
    source_key_id: int

    @property
    def L(self):
        return self.symbols.shape[0]


@dataclass
class TaggedSignal:
    symbols: np.ndarray     # (L,) complex
    rho_s: float
    rho_t: float
    message: MessageBlock = None
    tag: TagBlock = None


def generate_keys(K: int, stream: RandomStream):
    """K user keys plus one attacker key, independent 32-byte secrets."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = stream.generator
    return [SecretKey(key_id=i, secret=rng.bytes(32)) for i in range(K + 1)]


def generate_message(L: int, stream: RandomStream,
                     constellation: str = "qpsk") -> MessageBlock:
    """L i.i.d. unit-energy symbols; QPSK by default, CN(0,1) optionally."""
    if L < 1:
        raise ValueError("L must be >= 1")
    rng = stream.generator
    if constellation == "qpsk":
        symbols = QPSK_POINTS[rng.integers(0, 4, size=L)]
    elif constellation == "gaussian":
        symbols = draw_complex_gaussian(rng, L, 1.0)
    else:
        raise ValueError(f"unknown constellation '{constellation}'")
    return MessageBlock(symbols=symbols)


def _serialize(message: MessageBlock) -> bytes:
    """Canonical byte form of a message for hashing.

    QPSK symbols reduce to their constellation indices so that bitwise
    identical symbol choices hash identically; anything else falls back to
    the raw IEEE-754 layout.
    """
    sym = message.symbols
    idx = np.argmin(np.abs(sym[:, None] - QPSK_POINTS[None, :]), axis=1)
    if np.allclose(QPSK_POINTS[idx], sym, atol=1e-12):
        return idx.astype(np.uint8).tobytes()
    return np.ascontiguousarray(sym, dtype=complex).tobytes()


def generate_tag(message: MessageBlock, key: SecretKey) -> TagBlock:
    """Deterministic keyed tag: SHAKE-256(key || message) -> 2L bits -> QPSK."""
    L = message.L
    nbytes = (2 * L + 7) // 8
    digest = hashlib.shake_256(key.secret + _serialize(message)).digest(nbytes)
    bits = np.unpackbits(np.frombuffer(digest, dtype=np.uint8))[:2 * L]
    idx = bits[0::2] * 2 + bits[1::2]
    return TagBlock(symbols=QPSK_POINTS[idx], source_key_id=key.key_id)


def build_tagged_signal(message: MessageBlock, tag: TagBlock,
                        rho_s: float, rho_t: float) -> TaggedSignal:
    """x = rho_s s + rho_t t; rho_s = 1, rho_t = 0 is the untagged case."""
    if abs(rho_s ** 2 + rho_t ** 2 - 1.0) > 1e-12:
        raise ValueError("power split must satisfy rho_s^2 + rho_t^2 = 1")
    tag_symbols = tag.symbols if rho_t != 0 else 0.0
    x = rho_s * message.symbols + rho_t * tag_symbols
    return TaggedSignal(symbols=x, rho_s=rho_s, rho_t=rho_t,
                        message=message, tag=tag if rho_t != 0 else None)


def build_untagged_signal(message: MessageBlock) -> TaggedSignal:
    """Message-only transmission (the H0 behavior)."""
    return TaggedSignal(symbols=message.symbols.copy(), rho_s=1.0, rho_t=0.0,
                        message=message, tag=None)


def build_eve_signal(L: int, eve_key: SecretKey, rho_s: float, rho_t: float,
                     stream: RandomStream,
                     constellation: str = "qpsk") -> TaggedSignal:
    """Attacker block: her own message, tagged under her own random key."""
    message = generate_message(L, stream, constellation)
    tag = generate_tag(message, eve_key)
    return build_tagged_signal(message, tag, rho_s, rho_t)
