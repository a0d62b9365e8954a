"""Stabilizer coverings: the trivial cover and the mutually-unbiased cover."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import CapExceeded, CoverageError
from .pauli import PauliGroup, PauliString, StabilizerGroup, commutant, parse_paulis, symplectic_form

MUB_CAP = 16


@dataclass(frozen=True)
class StabilizerCovering:
    """Ordered list of stabilizer groups whose union contains a target set."""

    groups: tuple[StabilizerGroup, ...]
    n: int

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def covers(self, p: PauliString) -> bool:
        return any(p in g for g in self.groups)

    def verify(self, targets: Iterable[PauliString]) -> None:
        missing = [p for p in targets if not self.covers(p)]
        if missing:
            raise CoverageError(f"{len(missing)} Paulis are not covered, e.g. {missing[0]}")


def cover_trivial(targets: Sequence[PauliString | str]) -> StabilizerCovering:
    """One cyclic group per distinct non-identity target, in input order.

    ``{I}`` gives an empty covering.
    """
    xs = parse_paulis(targets)
    if not xs:
        raise ValueError("empty target set")
    n = xs[0].n
    seen = set()
    groups = []
    for p in xs:
        if p.is_identity() or p in seen:
            continue
        seen.add(p)
        groups.append(StabilizerGroup([p], n=n))
    return StabilizerCovering(tuple(groups), n)


def symplectic_reduce(vectors: Sequence[PauliString]) -> tuple[list[tuple[PauliString, PauliString]], list[PauliString]]:
    """Split a spanning set into hyperbolic pairs and a radical basis.

    Returns ``(pairs, radical)`` with ``<p_i, q_j> = delta_ij``, all other
    pairings zero, and ``radical`` spanning ``span ∩ commutant(span)``.
    """
    rest = [v for v in PauliGroup.spanned_by(vectors).basis] if vectors else []
    pairs = []
    radical = []
    while rest:
        v = rest.pop(0)
        j = next((i for i, w in enumerate(rest) if symplectic_form(v, w)), None)
        if j is None:
            radical.append(v)
            continue
        w = rest.pop(j)
        nxt = []
        for u in rest:
            if symplectic_form(u, w):
                u = u * v
            if symplectic_form(u, v):
                u = u * w
            nxt.append(u)
        rest = nxt
        pairs.append((v, w))
    return pairs, radical


class GF2k:
    """Arithmetic in GF(2**k) with a fixed irreducible modulus."""

    def __init__(self, k: int):
        self.k = k
        self.modulus = _irreducible(k)

    def mul(self, a: int, b: int) -> int:
        out = 0
        k, mod = self.k, self.modulus
        while b:
            if b & 1:
                out ^= a
            b >>= 1
            a <<= 1
            if a >> k & 1:
                a ^= mod
        return out

    def trace(self, a: int) -> int:
        t, y = 0, a
        for _ in range(self.k):
            t ^= y
            y = self.mul(y, y)
        # trace lands in the prime field
        return t & 1

    def power_x(self, e: int) -> int:
        out, base = 1, 2 if self.k > 1 else 1
        for _ in range(e):
            out = self.mul(out, base)
        return out


def _poly_mod(a: int, b: int) -> int:
    db = b.bit_length()
    while a.bit_length() >= db:
        a ^= b << (a.bit_length() - db)
    return a


@lru_cache(maxsize=None)
def _irreducible(k: int) -> int:
    if k == 1:
        return 0b11
    for cand in range((1 << k) | 1, 1 << (k + 1), 2):
        if all(_poly_mod(cand, d) for d in range(2, 1 << (k // 2 + 1))):
            return cand
    raise RuntimeError("no irreducible polynomial found")  # pragma: no cover


def hankel_matrices(k: int) -> list[list[int]]:
    """Symmetric matrices ``M_alpha[i][j] = Tr(alpha x**(i+j))`` as row masks."""
    field = GF2k(k)
    powers = [field.power_x(e) for e in range(2 * k - 1)]
    out = []
    for alpha in range(1 << k):
        h = [field.trace(field.mul(alpha, pw)) for pw in powers]
        out.append([sum(h[i + j] << j for j in range(k)) for i in range(k)])
    return out


def cover_mub(targets: Sequence[PauliString | str]) -> StabilizerCovering:
    """Cover ``targets`` by ``2**k + 1`` stabilizer groups.

    ``k`` is half the rank of ``span(targets)`` modulo its radical. Each
    group is a Lagrangian of the symplectic part plus the radical.
    """
    xs = parse_paulis(targets)
    if not xs:
        raise ValueError("empty target set")
    n = xs[0].n
    pairs, radical = symplectic_reduce(xs)
    k = len(pairs)
    if k > MUB_CAP:
        raise CapExceeded(f"cover needs 2**{k}+1 groups; cap is k <= {MUB_CAP}")
    if k == 0:
        return StabilizerCovering((StabilizerGroup(radical, n=n),), n)
    ps = [p for p, _ in pairs]
    qs = [q for _, q in pairs]
    groups = []
    for mat in hankel_matrices(k):
        gens = []
        for i in range(k):
            g = ps[i]
            for j in range(k):
                # column i of a symmetric matrix equals row i
                if mat[i] >> j & 1:
                    g = g * qs[j]
            gens.append(g)
        groups.append(StabilizerGroup(gens + radical, n=n))
    groups.append(StabilizerGroup(qs + radical, n=n))
    return StabilizerCovering(tuple(groups), n)


def radical(targets: Sequence[PauliString]) -> PauliGroup:
    span = PauliGroup.spanned_by(targets)
    return span.intersection(commutant(span))
