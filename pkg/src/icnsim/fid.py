"""Fixed-width Bloom-filter link and forwarding identifiers.

Every identifier in a deployment is a bit vector of the same width ``m``
(a multiple of 8).  A link identifier (LID) has exactly ``k`` set bits; a
forwarding identifier (FID) is the bitwise OR of the LIDs along a path.
A packet carrying FID ``f`` is forwarded over a link with LID ``l`` when
``f & l == l``, which admits false positives but never false negatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from random import Random
from typing import Iterable, Optional, Set


class FidError(Exception):
    """Base error for identifier operations."""


class WidthMismatch(FidError):
    """Operands do not share the same bit width."""


class Exhausted(FidError):
    """No unused LID could be drawn within the retry budget."""


@dataclass(frozen=True)
class BitVector:
    """Immutable bit string of fixed width.

    Bits are numbered MSB-first: bit 0 is the most significant bit of the
    first serialized byte, so ``BitVector.from_bits(8, [0])`` encodes to
    ``b'\\x80'``.
    """

    width: int
    value: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.width % 8 != 0:
            raise ValueError(f"width must be a positive multiple of 8, got {self.width}")
        if self.value < 0 or self.value >> self.width:
            raise ValueError("value does not fit in width")

    @classmethod
    def zero(cls, width: int) -> "BitVector":
        return cls(width, 0)

    @classmethod
    def from_bits(cls, width: int, positions: Iterable[int]) -> "BitVector":
        value = 0
        for pos in positions:
            if not 0 <= pos < width:
                raise ValueError(f"bit position {pos} out of range for width {width}")
            value |= 1 << (width - 1 - pos)
        return cls(width, value)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitVector":
        if not data:
            raise ValueError("empty byte string")
        return cls(len(data) * 8, int.from_bytes(data, "big"))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(self.width // 8, "big")

    def popcount(self) -> int:
        return self.value.bit_count()

    def bit_positions(self) -> list[int]:
        return [i for i in range(self.width) if self.value >> (self.width - 1 - i) & 1]

    def is_zero(self) -> bool:
        return self.value == 0

    def __or__(self, other: "BitVector") -> "BitVector":
        if self.width != other.width:
            raise WidthMismatch(f"{self.width} != {other.width}")
        return BitVector(self.width, self.value | other.value)

    def __and__(self, other: "BitVector") -> "BitVector":
        if self.width != other.width:
            raise WidthMismatch(f"{self.width} != {other.width}")
        return BitVector(self.width, self.value & other.value)

    def __str__(self) -> str:
        return self.to_bytes().hex()


# LIDs and FIDs are plain bit vectors; the distinction is semantic.
LinkId = BitVector
Fid = BitVector


@dataclass(frozen=True)
class FidParams:
    """Deployment-wide identifier parameters."""

    m: int = 256
    k: int = 5
    max_gen_retries: int = 64

    def __post_init__(self) -> None:
        if self.m % 8 != 0:
            raise ValueError("m must be a multiple of 8")
        if not 0 < self.k < self.m:
            raise ValueError("k must satisfy 0 < k < m")
        if self.max_gen_retries < 1:
            raise ValueError("max_gen_retries must be positive")


def new_lid(rng: Random, registry: Set[LinkId], params: FidParams) -> LinkId:
    """Draw a fresh LID with exactly ``k`` set bits, unique within ``registry``.

    The candidate is added to the registry before returning.  Raises
    :class:`Exhausted` after ``max_gen_retries`` colliding draws, which the
    topology manager treats as resource exhaustion.
    """
    for _ in range(params.max_gen_retries):
        positions = rng.sample(range(params.m), params.k)
        candidate = BitVector.from_bits(params.m, positions)
        if candidate not in registry:
            registry.add(candidate)
            return candidate
    raise Exhausted(f"no unused LID found in {params.max_gen_retries} draws")


def fid_or(lids: Iterable[LinkId], width: Optional[int] = None) -> Fid:
    """OR a sequence of LIDs into a path FID.

    An empty sequence yields the all-zero vector, in which case ``width``
    must be given.
    """
    acc: Optional[BitVector] = None
    for lid in lids:
        acc = lid if acc is None else acc | lid
    if acc is None:
        if width is None:
            raise ValueError("width required for empty OR")
        return BitVector.zero(width)
    return acc


def fid_matches(fid: Fid, lid: LinkId) -> bool:
    """Bitmask match used by switch flow rules: ``fid & lid == lid``."""
    if fid.width != lid.width:
        raise WidthMismatch(f"{fid.width} != {lid.width}")
    return fid.value & lid.value == lid.value


def theoretical_fpr(m: int, k: int, n: int) -> float:
    """Standard Bloom-filter false-positive estimate for a FID of n links.

    Returns (1 - (1 - 1/m)^(k*n))^k, the probability that a random LID
    not OR-ed into the FID nevertheless matches it.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    return (1.0 - math.pow(1.0 - 1.0 / m, k * n)) ** k
