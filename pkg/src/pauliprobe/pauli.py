"""Binary-symplectic Paulis, Pauli groups and Walsh-Hadamard transforms.

A Pauli on ``n`` qubits is a pair of ``n``-bit masks ``(x, z)``; qubit ``j``
is bit ``j`` and is written as the ``j``-th character of the label, so
``"XZI"`` has ``x = 0b001`` and ``z = 0b010``. Phases are dropped: the
product of two Paulis is the XOR of their masks.

Dense vectors over all ``4**n`` Paulis use lexicographic label order with
``I < X < Y < Z``, so for one qubit the order is ``(I, X, Y, Z)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import gf2
from .errors import CapExceeded, DimensionMismatch

ENUMERATION_CAP = 20

_CHARS = "IXYZ"
# (x, z) -> lexicographic code
_CODE = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
_BITS = [(0, 0), (1, 0), (1, 1), (0, 1)]


@dataclass(frozen=True, slots=True)
class PauliString:
    """Phase-free Pauli operator in binary symplectic form."""

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("qubit count must be non-negative")
        lim = 1 << self.n
        if not (0 <= self.x < lim and 0 <= self.z < lim):
            raise ValueError(f"masks do not fit in {self.n} qubits")

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        if not label:
            raise ValueError("empty Pauli label")
        x = z = 0
        for j, ch in enumerate(label.upper()):
            try:
                bx, bz = _BITS[_CHARS.index(ch)]
            except ValueError:
                raise ValueError(f"bad Pauli character {ch!r} in {label!r}") from None
            x |= bx << j
            z |= bz << j
        return cls(len(label), x, z)

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(n, 0, 0)

    @classmethod
    def single(cls, n: int, qubit: int, kind: str) -> PauliString:
        bx, bz = _BITS[_CHARS.index(kind.upper())]
        return cls(n, bx << qubit, bz << qubit)

    @classmethod
    def from_packed(cls, n: int, v: int) -> PauliString:
        mask = (1 << n) - 1
        return cls(n, v & mask, v >> n)

    @classmethod
    def from_index(cls, n: int, index: int) -> PauliString:
        """Inverse of :attr:`index` (lexicographic dense position)."""
        x = z = 0
        for j in range(n - 1, -1, -1):
            index, c = divmod(index, 4)
            bx, bz = _BITS[c]
            x |= bx << j
            z |= bz << j
        return cls(n, x, z)

    @property
    def packed(self) -> int:
        return self.x | (self.z << self.n)

    @property
    def label(self) -> str:
        return "".join(self.char(j) for j in range(self.n))

    def char(self, qubit: int) -> str:
        return _CHARS[_CODE[(self.x >> qubit & 1, self.z >> qubit & 1)]]

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"

    @property
    def index(self) -> int:
        idx = 0
        for j in range(self.n):
            idx = 4 * idx + _CODE[(self.x >> j & 1, self.z >> j & 1)]
        return idx

    def __lt__(self, other: PauliString) -> bool:
        return (self.n, self.index) < (other.n, other.index)

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def support(self) -> tuple[int, ...]:
        s = self.x | self.z
        return tuple(j for j in range(self.n) if s >> j & 1)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def __mul__(self, other: PauliString) -> PauliString:
        _check_n(self, other)
        return PauliString(self.n, self.x ^ other.x, self.z ^ other.z)

    __add__ = __mul__

    def commutes(self, other: PauliString) -> bool:
        return symplectic_form(self, other) == 0

    def restrict(self, qubits: Sequence[int]) -> PauliString:
        """Local Pauli on ``qubits`` (in the given order)."""
        x = z = 0
        for k, q in enumerate(qubits):
            x |= (self.x >> q & 1) << k
            z |= (self.z >> q & 1) << k
        return PauliString(len(qubits), x, z)

    def embed(self, n: int, qubits: Sequence[int]) -> PauliString:
        """Place this local Pauli on ``qubits`` of an ``n``-qubit register."""
        if len(qubits) != self.n:
            raise DimensionMismatch("qubit list length differs from Pauli size")
        x = z = 0
        for k, q in enumerate(qubits):
            x |= (self.x >> k & 1) << q
            z |= (self.z >> k & 1) << q
        return PauliString(n, x, z)


def _check_n(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise DimensionMismatch(f"Paulis act on {a.n} and {b.n} qubits")


def symplectic_form(a: PauliString, b: PauliString) -> int:
    """0 if ``a`` and ``b`` commute, 1 if they anticommute."""
    _check_n(a, b)
    return ((a.x & b.z).bit_count() + (a.z & b.x).bit_count()) & 1


def pauli_product(a: PauliString, b: PauliString) -> PauliString:
    return a * b


def phase_exponent(a: PauliString, b: PauliString) -> int:
    """``e`` with ``P_a P_b = i**e P_{a+b}`` for ``P_a = i**(a_x.a_z) X^a_x Z^a_z``."""
    _check_n(a, b)
    cx, cz = a.x ^ b.x, a.z ^ b.z
    e = (a.x & a.z).bit_count() + (b.x & b.z).bit_count()
    e += 2 * (a.z & b.x).bit_count() - (cx & cz).bit_count()
    return e % 4


def parse_paulis(labels: Iterable[str | PauliString]) -> list[PauliString]:
    out = [p if isinstance(p, PauliString) else PauliString.from_label(p) for p in labels]
    if out and any(p.n != out[0].n for p in out):
        raise DimensionMismatch("Paulis of different sizes")
    return out


def all_paulis(n: int) -> list[PauliString]:
    if 2 * n > ENUMERATION_CAP:
        raise CapExceeded(f"enumerating 4**{n} Paulis exceeds the cap")
    return [PauliString.from_index(n, i) for i in range(4**n)]


def local_paulis(n: int, qubits: Sequence[int]) -> list[PauliString]:
    """All Paulis supported on ``qubits`` in local lexicographic order."""
    return [p.embed(n, qubits) for p in all_paulis(len(qubits))]


def gray_sequence(r: int) -> Iterator[tuple[int, int]]:
    """Yield ``(coefficients, flipped_bit)`` along a Gray code from 0."""
    g = 0
    yield 0, -1
    for i in range(1, 1 << r):
        bit = (i & -i).bit_length() - 1
        g ^= 1 << bit
        yield g, bit


class PauliGroup:
    """Subgroup of the phase-free Pauli group given by independent generators."""

    def __init__(self, generators: Iterable[PauliString | str], n: int | None = None):
        gens = parse_paulis(generators)
        if n is None:
            if not gens:
                raise ValueError("need n for the trivial group")
            n = gens[0].n
        if gens and gens[0].n != n:
            raise DimensionMismatch("generator size differs from n")
        self.n = n
        self._ech = gf2.Echelon()
        basis = []
        for g in gens:
            if g.is_identity():
                continue
            if self._ech.add(g.packed):
                basis.append(g)
            else:
                raise ValueError(f"generator {g} is dependent on the others")
        self.basis: tuple[PauliString, ...] = tuple(basis)

    @classmethod
    def spanned_by(cls, elements: Iterable[PauliString], n: int | None = None) -> PauliGroup:
        """Group generated by ``elements`` with a greedy independent basis."""
        elems = parse_paulis(elements)
        ech = gf2.Echelon()
        basis = [p for p in elems if ech.add(p.packed)]
        if n is None and elems:
            n = elems[0].n
        return cls(basis, n=n)

    @classmethod
    def full(cls, n: int, qubits: Sequence[int] | None = None) -> PauliGroup:
        """Local Pauli group on ``qubits`` with basis ``X_q, Z_q`` per qubit."""
        qubits = range(n) if qubits is None else qubits
        gens = []
        for q in qubits:
            gens += [PauliString.single(n, q, "X"), PauliString.single(n, q, "Z")]
        return cls(gens, n=n)

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def order(self) -> int:
        return 1 << self.rank

    def __len__(self) -> int:
        return self.order

    def __repr__(self) -> str:
        return f"{type(self).__name__}([{', '.join(map(str, self.basis))}])"

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliGroup) and self.n == other.n and self.basis == other.basis

    def __hash__(self) -> int:
        return hash((self.n, self.basis))

    def key(self) -> tuple[int, ...]:
        return tuple(g.packed for g in self.basis)

    def same_span(self, other: PauliGroup) -> bool:
        return self.rank == other.rank and all(g in self for g in other.basis)

    def __contains__(self, p: PauliString) -> bool:
        return p.n == self.n and self._ech.contains(p.packed)

    def coordinates(self, p: PauliString) -> int | None:
        """Coefficient mask ``beta`` with ``p = sum beta_j g_j``, or None."""
        if p.n != self.n:
            raise DimensionMismatch("Pauli size differs from group")
        return self._ech.coordinates(p.packed)

    def element(self, beta: int) -> PauliString:
        x = z = 0
        j = 0
        while beta:
            if beta & 1:
                x ^= self.basis[j].x
                z ^= self.basis[j].z
            beta >>= 1
            j += 1
        return PauliString(self.n, x, z)

    def elements(self) -> list[PauliString]:
        """All elements, identity first, following a Gray code over the basis."""
        return enumerate_group(self)

    def element_coefficients(self) -> list[int]:
        """Coefficient masks matching :meth:`elements` order."""
        _enum_guard(self.rank)
        return [g for g, _ in gray_sequence(self.rank)]

    @cached_property
    def gram(self) -> list[int]:
        """Symplectic Gram matrix of the basis, rows as bitmasks."""
        b = self.basis
        return [sum(symplectic_form(b[i], b[j]) << j for j in range(len(b))) for i in range(len(b))]

    def is_isotropic(self) -> bool:
        return not any(self.gram)

    @cached_property
    def destabilizers(self) -> tuple[PauliString, ...]:
        """Paulis ``d_j`` with ``<g_i, d_j> = delta_ij``.

        When the Gram matrix is invertible the ``d_j`` are taken inside the
        group itself, so local groups get local destabilizers.
        """
        r = self.rank
        inv = gf2.invert(self.gram, r) if r else []
        if inv is not None:
            return tuple(self.element(inv[j]) for j in range(r))
        rows = [_swap(g) for g in self.basis]
        out = []
        for j in range(r):
            v = gf2.solve(rows, [int(i == j) for i in range(r)])
            out.append(PauliString.from_packed(self.n, v))
        return tuple(out)

    def syndrome(self, p: PauliString) -> int:
        """Bit ``j`` is ``<g_j, p>``."""
        s = 0
        for j, g in enumerate(self.basis):
            s |= symplectic_form(g, p) << j
        return s

    def project(self, p: PauliString) -> PauliString:
        """Element of the group acting on syndromes like ``p`` does."""
        beta = 0
        for j, d in enumerate(self.destabilizers):
            beta |= symplectic_form(p, d) << j
        return self.element(beta)

    def representative(self, s: int) -> PauliString:
        """Pauli with syndrome ``s`` built from destabilizers."""
        x = z = 0
        for j, d in enumerate(self.destabilizers):
            if s >> j & 1:
                x ^= d.x
                z ^= d.z
        return PauliString(self.n, x, z)

    def sign(self, beta: int) -> int:
        """``chi`` with ``prod_j P_{g_j}^{beta_j} = chi * P_h`` (commuting bases only)."""
        acc = PauliString.identity(self.n)
        e = 0
        for j, g in enumerate(self.basis):
            if beta >> j & 1:
                e = (e + phase_exponent(acc, g)) % 4
                acc = acc * g
        if e % 2:
            raise ValueError("sign is only real for commuting generators")
        return 1 if e == 0 else -1

    def intersection(self, other: PauliGroup) -> PauliGroup:
        """Intersection of two subgroups."""
        if other.n != self.n:
            raise DimensionMismatch("groups on different registers")
        # beta.self + gamma.other = 0  <=>  beta.self in other
        vecs = [g.packed for g in self.basis] + [h.packed for h in other.basis]
        r = self.rank
        width = 2 * self.n
        # columns are vectors: solve for coefficient masks in the nullspace
        rows = [sum((vecs[c] >> bit & 1) << c for c in range(len(vecs))) for bit in range(width)]
        sols = gf2.nullspace(rows, len(vecs))
        elems = [self.element(s & ((1 << r) - 1)) for s in sols]
        return PauliGroup.spanned_by(elems, n=self.n) if elems else PauliGroup([], n=self.n)


def _swap(p: PauliString) -> int:
    return p.z | (p.x << p.n)


def _enum_guard(r: int) -> None:
    if r > ENUMERATION_CAP:
        raise CapExceeded(f"group of rank {r} exceeds the enumeration cap {ENUMERATION_CAP}")


class StabilizerGroup(PauliGroup):
    """Pauli group whose generators pairwise commute."""

    def __init__(self, generators: Iterable[PauliString | str], n: int | None = None):
        super().__init__(generators, n=n)
        if not self.is_isotropic():
            raise ValueError("stabilizer generators must pairwise commute")


def enumerate_group(g: PauliGroup) -> list[PauliString]:
    _enum_guard(g.rank)
    out = []
    x = z = 0
    for _, bit in gray_sequence(g.rank):
        if bit >= 0:
            x ^= g.basis[bit].x
            z ^= g.basis[bit].z
        out.append(PauliString(g.n, x, z))
    return out


def commutant(group_or_set: PauliGroup | Iterable[PauliString], n: int | None = None) -> PauliGroup:
    """Group of all Paulis commuting with every element of the argument."""
    if isinstance(group_or_set, PauliGroup):
        gens, n = list(group_or_set.basis), group_or_set.n
    else:
        gens = parse_paulis(group_or_set)
        n = gens[0].n if gens else n
        if n is None:
            raise ValueError("need n for an empty set")
    sols = gf2.nullspace([_swap(g) for g in gens], 2 * n)
    return PauliGroup([PauliString.from_packed(n, v) for v in sols], n=n)


def syndrome(g: PauliGroup, a: PauliString) -> int:
    return g.syndrome(a)


def pauli_bits(paulis: Sequence[PauliString], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unpacked ``(x, z)`` bit arrays of shape ``(len(paulis), n)``."""
    xs = np.zeros((len(paulis), n), dtype=np.uint8)
    zs = np.zeros((len(paulis), n), dtype=np.uint8)
    for i, p in enumerate(paulis):
        if p.n != n:
            raise DimensionMismatch("Pauli size differs")
        xs[i] = _unpack(p.x, n)
        zs[i] = _unpack(p.z, n)
    return xs, zs


def _unpack(v: int, n: int) -> np.ndarray:
    raw = np.frombuffer(v.to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n]


def sign_matrix(a: Sequence[PauliString], b: Sequence[PauliString]) -> np.ndarray:
    """Matrix of ``(-1)**<a_i, b_j>`` as float64."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    n = a[0].n
    ax, az = pauli_bits(a, n)
    bx, bz = pauli_bits(b, n)
    form = (ax.astype(np.int64) @ bz.T.astype(np.int64) + az.astype(np.int64) @ bx.T.astype(np.int64)) & 1
    return 1.0 - 2.0 * form


def fwht(v: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0 (length ``2**r``)."""
    h = np.array(v, dtype=np.result_type(v, np.float64), copy=True)
    size = h.shape[0]
    if size & (size - 1):
        raise ValueError("length must be a power of two")
    rest = h.shape[1:]
    step = 1
    while step < size:
        h = h.reshape((size // (2 * step), 2, step) + rest)
        a = h[:, 0].copy()
        h[:, 0] += h[:, 1]
        h[:, 1] = a - h[:, 1]
        h = h.reshape((size,) + rest)
        step *= 2
    return h


def _matvec_gf2(rows: list[int], beta: np.ndarray) -> np.ndarray:
    out = np.zeros_like(beta)
    for i, row in enumerate(rows):
        bits = np.bitwise_count(beta & np.int64(row)) & 1
        out |= bits.astype(beta.dtype) << i
    return out


def wh_apply(a: Sequence[PauliString], b: Sequence[PauliString], v: np.ndarray) -> np.ndarray:
    """Apply ``W_{A,B}[i, j] = (-1)**<a_i, b_j>`` to ``v``.

    When ``A`` and ``B`` list the same group the transform runs in
    ``O(|G| log |G|)`` through the symplectic Gram matrix; otherwise the
    sign matrix is formed explicitly.
    """
    a = parse_paulis(a)
    b = parse_paulis(b)
    v = np.asarray(v)
    if v.shape[0] != len(b):
        raise DimensionMismatch("vector length differs from |B|")
    fast = _fast_plan(a, b)
    if fast is None:
        return sign_matrix(a, b) @ v
    coeff_b, coeff_a, gram = fast
    dense = np.zeros((len(b),) + v.shape[1:], dtype=np.result_type(v, np.float64))
    dense[coeff_b] = v
    h = fwht(dense)
    return h[_matvec_gf2(gram, coeff_a)]


def _fast_plan(a, b):
    if len(a) != len(b) or len(b) & (len(b) - 1) or len(b) < 2:
        return None
    grp = PauliGroup.spanned_by(b)
    if grp.order != len(b):
        return None
    cb = [grp.coordinates(p) for p in b]
    ca = [grp.coordinates(p) for p in a]
    if any(c is None for c in ca) or len(set(cb)) != len(b):
        return None
    return np.array(cb, dtype=np.int64), np.array(ca, dtype=np.int64), grp.gram
