"""9-bit kernel occupancy masks and pattern sets.

Bit ``i`` of a mask covers kernel position ``i`` in row-major order, so
``row = i // 3`` and ``col = i % 3``. When a mask is written out as a bit
string, bit 8 comes first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

KERNEL_SIZE = 9
DENSE_MASK = (1 << KERNEL_SIZE) - 1

# popcount of every 9-bit value
POPCOUNT = np.array([bin(m).count("1") for m in range(1 << KERNEL_SIZE)], dtype=np.uint8)


def binomial(k: int, n: int) -> int:
    """Exact binomial coefficient C(k, n) for 0 <= n <= k <= 16."""
    if not (0 <= k <= 16):
        raise DomainError(f"binomial: k={k} outside [0, 16]")
    if not (0 <= n <= k):
        raise DomainError(f"binomial: need 0 <= n <= k, got k={k}, n={n}")
    return math.comb(k, n)


def popcount(mask: int) -> int:
    return int(POPCOUNT[mask & DENSE_MASK])


def position_to_rc(pos: int) -> tuple[int, int]:
    if not 0 <= pos < KERNEL_SIZE:
        raise DomainError(f"kernel position {pos} outside [0, 8]")
    return divmod(pos, 3)


def rc_to_position(row: int, col: int) -> int:
    if not (0 <= row < 3 and 0 <= col < 3):
        raise DomainError(f"kernel coordinate ({row}, {col}) outside 3x3")
    return row * 3 + col


def mask_positions(mask: int) -> list[int]:
    """Set bit positions of ``mask``, ascending."""
    return [i for i in range(KERNEL_SIZE) if mask >> i & 1]


def mask_from_positions(positions) -> int:
    mask = 0
    for p in positions:
        if not 0 <= p < KERNEL_SIZE:
            raise DomainError(f"kernel position {p} outside [0, 8]")
        mask |= 1 << p
    return mask


def mask_to_bits(mask: int) -> np.ndarray:
    """Mask as a length-9 0/1 vector indexed by kernel position."""
    return np.array([(mask >> i) & 1 for i in range(KERNEL_SIZE)], dtype=np.uint8)


def bits_to_mask(bits) -> int:
    bits = np.asarray(bits).reshape(-1)
    if bits.size != KERNEL_SIZE:
        raise DomainError(f"expected 9 mask bits, got {bits.size}")
    return int(sum(int(b != 0) << i for i, b in enumerate(bits)))


def mask_to_str(mask: int) -> str:
    """Binary string, bit 8 first (e.g. ``'000000011'`` for positions {0, 1})."""
    return format(mask, "09b")


def mask_from_str(text: str) -> int:
    text = text.strip()
    if len(text) != KERNEL_SIZE or set(text) - {"0", "1"}:
        raise DomainError(f"not a 9-bit mask string: {text!r}")
    return int(text, 2)


def support_mask(values) -> int:
    """Mask of the non-zero entries of a 9-value kernel."""
    values = np.asarray(values).reshape(-1)
    if values.size != KERNEL_SIZE:
        raise DomainError(f"kernel must have 9 values, got {values.size}")
    return bits_to_mask(values != 0)


def support_masks(kernels: np.ndarray) -> np.ndarray:
    """Vectorised :func:`support_mask` over an ``(..., 9)`` array."""
    nz = (np.asarray(kernels) != 0).astype(np.int64)
    return (nz << np.arange(KERNEL_SIZE)).sum(axis=-1)


def code_width_for(count: int) -> int:
    """Bits needed to index ``count`` patterns; never less than 1."""
    if count < 1:
        raise DomainError("pattern set must not be empty")
    return max(1, (count - 1).bit_length())


@dataclass(frozen=True)
class PatternSet:
    """An ordered, duplicate-free collection of masks sharing one popcount.

    A pattern's SPM code is its index in ``patterns``, which is always sorted
    ascending by mask value.
    """

    n: int
    patterns: tuple[int, ...]

    def __post_init__(self):
        pats = tuple(int(p) for p in self.patterns)
        if not pats:
            raise DomainError("pattern set must not be empty")
        if not 1 <= self.n <= KERNEL_SIZE:
            raise DomainError(f"non-zero count n={self.n} outside [1, 9]")
        if any(not 0 <= p <= DENSE_MASK for p in pats):
            raise DomainError("pattern mask outside [0, 511]")
        if len(set(pats)) != len(pats):
            raise DomainError("duplicate masks in pattern set")
        bad = [p for p in pats if popcount(p) != self.n]
        if bad:
            raise DomainError(f"masks {[mask_to_str(b) for b in bad]} do not have popcount {self.n}")
        object.__setattr__(self, "patterns", tuple(sorted(pats)))

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def __contains__(self, mask):
        return mask in self._index

    @property
    def code_width(self) -> int:
        return code_width_for(len(self.patterns))

    @property
    def _index(self) -> dict[int, int]:
        return _index_of(self.patterns)

    def code_of(self, mask: int) -> int:
        try:
            return self._index[int(mask)]
        except KeyError:
            raise DomainError(f"mask {mask_to_str(int(mask))} not in pattern set") from None

    def mask_of(self, code: int) -> int:
        if not 0 <= code < len(self.patterns):
            raise DomainError(f"SPM code {code} outside [0, {len(self.patterns)})")
        return self.patterns[code]

    def as_array(self) -> np.ndarray:
        return np.array(self.patterns, dtype=np.int64)


@lru_cache(maxsize=None)
def _index_of(patterns: tuple[int, ...]) -> dict[int, int]:
    return {p: i for i, p in enumerate(patterns)}


@lru_cache(maxsize=None)
def full_pattern_set(n: int) -> PatternSet:
    """Every 9-bit mask with exactly ``n`` set bits."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= KERNEL_SIZE:
        raise DomainError(f"non-zero count n={n} outside [1, 9]")
    return PatternSet(int(n), tuple(m for m in range(DENSE_MASK + 1) if POPCOUNT[m] == n))
