"""Linear algebra over GF(2) with vectors stored as Python ints.

Bit ``i`` of an int is coordinate ``i`` of the vector. Python ints are
arbitrary precision, so widths of a few hundred bits cost nothing extra.
"""

from __future__ import annotations

from typing import Iterable, Sequence


def parity(v: int) -> int:
    return v.bit_count() & 1


def dot(a: int, b: int) -> int:
    """Standard GF(2) inner product."""
    return (a & b).bit_count() & 1


class Echelon:
    """Incremental echelon basis that remembers how each row was built.

    Each stored row carries a ``combo`` bitmask naming the inserted vectors
    whose sum it equals, so membership tests also return coordinates.
    """

    __slots__ = ("_rows", "size")

    def __init__(self, vectors: Iterable[int] = ()):
        self._rows: dict[int, tuple[int, int]] = {}
        self.size = 0
        for v in vectors:
            self.add(v)

    @property
    def rank(self) -> int:
        return len(self._rows)

    def reduce(self, v: int) -> tuple[int, int]:
        """Return ``(remainder, combo)``; remainder is 0 iff ``v`` is in the span."""
        combo = 0
        rows = self._rows
        while v:
            top = v.bit_length() - 1
            hit = rows.get(top)
            if hit is None:
                break
            v ^= hit[0]
            combo ^= hit[1]
        return v, combo

    def add(self, v: int) -> bool:
        """Insert ``v``; returns False when it was already in the span."""
        label = 1 << self.size
        self.size += 1
        rem, combo = self.reduce(v)
        if rem == 0:
            return False
        self._rows[rem.bit_length() - 1] = (rem, combo ^ label)
        return True

    def contains(self, v: int) -> bool:
        return self.reduce(v)[0] == 0

    def coordinates(self, v: int) -> int | None:
        """Combination of inserted vectors summing to ``v`` or None."""
        rem, combo = self.reduce(v)
        return combo if rem == 0 else None


def rank(vectors: Iterable[int]) -> int:
    return Echelon(vectors).rank


def independent_subset(vectors: Iterable[int]) -> list[int]:
    """Greedy maximal independent subset, preserving order."""
    ech = Echelon()
    out = []
    for v in vectors:
        if ech.add(v):
            out.append(v)
    return out


def _rref(rows: Sequence[int], rhs: Sequence[int] | None = None):
    rows = list(rows)
    rhs = [0] * len(rows) if rhs is None else list(rhs)
    pivots: list[int] = []
    r = 0
    for i in range(len(rows)):
        # pick an unprocessed row with the lowest remaining bit as pivot
        best = None
        for j in range(r, len(rows)):
            if rows[j]:
                low = (rows[j] & -rows[j]).bit_length() - 1
                if best is None or low < best[0]:
                    best = (low, j)
        if best is None:
            break
        col, j = best
        rows[r], rows[j] = rows[j], rows[r]
        rhs[r], rhs[j] = rhs[j], rhs[r]
        bit = 1 << col
        for k in range(len(rows)):
            if k != r and rows[k] & bit:
                rows[k] ^= rows[r]
                rhs[k] ^= rhs[r]
        pivots.append(col)
        r += 1
    return rows, rhs, pivots


def nullspace(rows: Sequence[int], width: int) -> list[int]:
    """Basis of ``{v : dot(row, v) = 0 for every row}`` inside ``width`` bits."""
    red, _, pivots = _rref(rows)
    pivset = set(pivots)
    out = []
    for f in range(width):
        if f in pivset:
            continue
        v = 1 << f
        for i, p in enumerate(pivots):
            if red[i] >> f & 1:
                v |= 1 << p
        out.append(v)
    return out


def solve(rows: Sequence[int], rhs: Sequence[int]) -> int | None:
    """One solution of ``dot(rows[i], v) = rhs[i]`` or None if inconsistent."""
    red, b, pivots = _rref(rows, rhs)
    for i in range(len(pivots), len(red)):
        if b[i]:
            return None
    v = 0
    for i, p in enumerate(pivots):
        if b[i]:
            v |= 1 << p
    return v


def invert(matrix: Sequence[int], size: int) -> list[int] | None:
    """Inverse of a square matrix given as row bitmasks, or None if singular."""
    out = []
    for j in range(size):
        rhs = [(1 if i == j else 0) for i in range(size)]
        col = solve(matrix, rhs)
        if col is None:
            return None
        out.append(col)
    # ``out[j]`` is column j of the inverse; transpose back to rows
    return [sum(((out[j] >> i) & 1) << j for j in range(size)) for i in range(size)]
