"""Pauli channels, eigenvalues, marginals and simplex projection.

Three representations share one interface:

* :class:`DenseChannel` stores all ``4**n`` error rates.
* :class:`SparseChannel` stores the rates of a few Paulis.
* :class:`FactoredChannel` composes independent local channels; the total
  error is the product of one draw from each factor, so eigenvalues
  multiply even when factor supports overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CapExceeded, DimensionMismatch
from .pauli import (
    PauliGroup,
    PauliString,
    all_paulis,
    fwht,
    parse_paulis,
    sign_matrix,
)

DENSE_CAP = 13
PROB_TOL = 1e-9

# single-qubit sign table (-1)**<a, b> in (I, X, Y, Z) order
W1 = np.array([[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]], dtype=float)


def local_wht(table: np.ndarray) -> np.ndarray:
    """Apply ``W1`` on every qubit axis of a lexicographic ``4**k`` table."""
    t = np.asarray(table, dtype=float)
    k = _log4(t.shape[0])
    t = t.reshape((4,) * k + t.shape[1:])
    for ax in range(k):
        t = np.moveaxis(np.tensordot(W1, t, axes=([1], [ax])), 0, ax)
    return t.reshape((4**k,) + t.shape[k:])


def _log4(size: int) -> int:
    k = (size.bit_length() - 1) // 2
    if 4**k != size:
        raise DimensionMismatch(f"length {size} is not a power of 4")
    return k


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort based)."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _check_distribution(probs: np.ndarray, signed: bool) -> None:
    if not np.all(np.isfinite(probs)):
        raise ValueError("rates must be finite")
    if abs(probs.sum() - 1.0) > 1e-8:
        raise ValueError(f"rates sum to {probs.sum():.12g}, not 1")
    if not signed and probs.min() < -PROB_TOL:
        raise ValueError("rates must be non-negative")


@dataclass(frozen=True, eq=False)
class LocalTable:
    """Error distribution over the Paulis supported on ``qubits``."""

    qubits: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (4 ** len(self.qubits),):
            raise DimensionMismatch("local table length must be 4**len(qubits)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("repeated qubit in factor")
        object.__setattr__(self, "probs", probs)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return local_wht(self.probs)


@dataclass(frozen=True, eq=False)
class SparseComponent:
    """Error distribution over an explicit list of Paulis."""

    paulis: tuple[PauliString, ...]
    probs: np.ndarray


@dataclass(frozen=True)
class EigenvalueVector:
    """Eigenvalues ``f_a`` on an explicit list of Paulis."""

    support: tuple[PauliString, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(parse_paulis(self.support)))
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.support),):
            raise DimensionMismatch("one eigenvalue per support Pauli")
        object.__setattr__(self, "values", vals)

    def as_dict(self) -> dict[PauliString, float]:
        return dict(zip(self.support, self.values.tolist()))


class PauliChannel:
    """Common interface of the channel representations."""

    n: int

    def eigenvalues(self, paulis: Sequence[PauliString]) -> np.ndarray:
        raise NotImplementedError

    def eigenvalue(self, p: PauliString | str) -> float:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return float(self.eigenvalues([p])[0])

    def rate(self, p: PauliString | str) -> float:
        raise NotImplementedError

    def components(self) -> list[LocalTable | SparseComponent]:
        raise NotImplementedError

    def identity_rate(self) -> float:
        return self.rate(PauliString.identity(self.n))

    def dense_rates(self) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> DenseChannel:
        return DenseChannel(self.n, self.dense_rates())

    def _check(self, paulis):
        for p in paulis:
            if p.n != self.n:
                raise DimensionMismatch(f"Pauli on {p.n} qubits for a {self.n}-qubit channel")


def _dense_guard(n: int) -> None:
    if n > DENSE_CAP:
        raise CapExceeded(f"dense path refused for n={n} > {DENSE_CAP}")


class DenseChannel(PauliChannel):
    """Rates for all ``4**n`` Paulis in lexicographic order."""

    def __init__(self, n: int, probs: Sequence[float] | np.ndarray, *, signed: bool = False):
        _dense_guard(n)
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (4**n,):
            raise DimensionMismatch(f"expected {4**n} rates, got {probs.shape}")
        _check_distribution(probs, signed)
        self.n = n
        self.probs = probs
        self.signed = signed

    @cached_property
    def _eigs(self) -> np.ndarray:
        return local_wht(self.probs)

    def eigenvalues(self, paulis):
        paulis = parse_paulis(paulis)
        self._check(paulis)
        return self._eigs[[p.index for p in paulis]]

    def all_eigenvalues(self) -> np.ndarray:
        return self._eigs.copy()

    def rate(self, p):
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return float(self.probs[p.index])

    def components(self):
        return [LocalTable(tuple(range(self.n)), self.probs)]

    def dense_rates(self):
        return self.probs.copy()


class SparseChannel(PauliChannel):
    """Rates on a small explicit support; all other Paulis have rate zero."""

    def __init__(self, n: int, rates: Mapping[PauliString | str, float]):
        paulis = parse_paulis(rates.keys())
        merged: dict[PauliString, float] = {}
        for p, r in zip(paulis, rates.values()):
            if p.n != n:
                raise DimensionMismatch("rate key size differs from n")
            merged[p] = merged.get(p, 0.0) + float(r)
        probs = np.array(list(merged.values()), dtype=float)
        _check_distribution(probs, signed=False)
        self.n = n
        self.support = tuple(merged)
        self.probs = probs
        self._lookup = merged

    def eigenvalues(self, paulis):
        paulis = parse_paulis(paulis)
        self._check(paulis)
        return sign_matrix(paulis, list(self.support)) @ self.probs

    def rate(self, p):
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return self._lookup.get(p, 0.0)

    def components(self):
        return [SparseComponent(self.support, self.probs)]

    def dense_rates(self):
        _dense_guard(self.n)
        out = np.zeros(4**self.n)
        for p, r in self._lookup.items():
            out[p.index] += r
        return out


class FactoredChannel(PauliChannel):
    """Composition of independent local Pauli channels."""

    def __init__(self, n: int, factors: Iterable[LocalTable]):
        self.n = n
        self.factors = tuple(factors)
        for f in self.factors:
            if any(q < 0 or q >= n for q in f.qubits):
                raise DimensionMismatch("factor qubit outside the register")
            _check_distribution(f.probs, signed=False)

    @property
    def disjoint(self) -> bool:
        seen: set[int] = set()
        for f in self.factors:
            if seen & set(f.qubits):
                return False
            seen |= set(f.qubits)
        return True

    def eigenvalues(self, paulis):
        paulis = parse_paulis(paulis)
        self._check(paulis)
        out = np.ones(len(paulis))
        for f in self.factors:
            idx = [p.restrict(f.qubits).index for p in paulis]
            out *= f.eigenvalues[idx]
        return out

    def rate(self, p):
        if isinstance(p, str):
            p = PauliString.from_label(p)
        if self.disjoint:
            r = 1.0
            covered = 0
            for f in self.factors:
                r *= f.probs[p.restrict(f.qubits).index]
                for q in f.qubits:
                    covered |= 1 << q
            return r if not ((p.x | p.z) & ~covered) else 0.0
        return self._contract_rate(p)

    def identity_rate(self):
        if self.disjoint:
            return float(np.prod([f.probs[0] for f in self.factors]))
        return self._contract_rate(PauliString.identity(self.n))

    def _contract_rate(self, p: PauliString) -> float:
        """``4**-n sum_b (-1)**<p, b> prod_k f_k(b)`` by variable elimination.

        Cost is exponential only in the widest intermediate scope, so chains
        and other thin factor layouts stay polynomial in ``n``.
        """
        tables = [(tuple(f.qubits), f.eigenvalues.reshape((4,) * len(f.qubits))) for f in self.factors]
        tables += [((q,), W1["IXYZ".index(p.char(q))] / 4.0) for q in range(self.n)]
        remaining = set(range(self.n))
        while remaining:
            q = min(remaining, key=lambda v: (len(set().union(*(s for s, _ in tables if v in s))), v))
            involved = [(s, t) for s, t in tables if q in s]
            tables = [(s, t) for s, t in tables if q not in s]
            scope = sorted(set().union(*(s for s, _ in involved)))
            if len(scope) > DENSE_CAP:
                raise CapExceeded(f"elimination scope {len(scope)} exceeds {DENSE_CAP}")
            letter = {v: chr(97 + i) for i, v in enumerate(scope)}
            out = tuple(v for v in scope if v != q)
            expr = ",".join("".join(letter[v] for v in s) for s, _ in involved) + "->" + "".join(letter[v] for v in out)
            tables.append((out, np.einsum(expr, *(t for _, t in involved))))
            remaining.discard(q)
        return float(np.prod([t for _, t in tables]))

    def components(self):
        return list(self.factors)

    def dense_rates(self):
        _dense_guard(self.n)
        f = np.ones(4**self.n)
        for fac in self.factors:
            f *= _expand_local(fac.eigenvalues, fac.qubits, self.n)
        return local_wht(f) / 4**self.n


def _expand_local(table: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Broadcast a local lexicographic table to all ``4**n`` Paulis."""
    k = len(qubits)
    t = np.asarray(table).reshape((4,) * k)
    order = np.argsort(qubits)
    t = np.transpose(t, order)
    shape = [1] * n
    for q in sorted(qubits):
        shape[q] = 4
    return np.broadcast_to(t.reshape(shape), (4,) * n).reshape(-1)


def depolarizing(n: int, p: float, qubits: Sequence[int] | None = None) -> FactoredChannel:
    """Independent single-qubit depolarizing noise with total error ``p`` per qubit."""
    qubits = range(n) if qubits is None else qubits
    table = np.array([1 - p, p / 3, p / 3, p / 3])
    return FactoredChannel(n, [LocalTable((q,), table) for q in qubits])


def local_rates(qubits: Sequence[int], rates: Mapping[str, float]) -> LocalTable:
    """Local table from a ``{label: rate}`` map; the identity takes the rest."""
    k = len(qubits)
    probs = np.zeros(4**k)
    for label, r in rates.items():
        p = PauliString.from_label(label)
        if p.n != k:
            raise DimensionMismatch("local label length differs from factor size")
        probs[p.index] += r
    probs[0] += 1.0 - probs.sum()
    return LocalTable(tuple(qubits), probs)


def p_to_f(ch: PauliChannel, paulis: Sequence[PauliString] | None = None) -> EigenvalueVector:
    """Eigenvalues of ``ch`` on ``paulis`` (all Paulis when omitted)."""
    if paulis is None:
        _dense_guard(ch.n)
        paulis = all_paulis(ch.n)
        if isinstance(ch, DenseChannel):
            return EigenvalueVector(tuple(paulis), ch.all_eigenvalues())
    paulis = parse_paulis(paulis)
    return EigenvalueVector(tuple(paulis), ch.eigenvalues(paulis))


@dataclass(frozen=True)
class MarginalDistribution:
    """Distribution over the syndromes of ``group``.

    Entry ``s`` is the total rate of Paulis ``a`` with ``<g_j, a> = s_j``.
    """

    group: PauliGroup
    probs: np.ndarray
    raw: np.ndarray | None = field(default=None, compare=False)

    def rate(self, p: PauliString | str) -> float:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return float(self.probs[self.group.syndrome(p)])

    def representatives(self) -> list[PauliString]:
        return [self.group.representative(s) for s in range(len(self.probs))]

    def as_dict(self) -> dict[PauliString, float]:
        return dict(zip(self.representatives(), self.probs.tolist()))

    def local_table(self, qubits: Sequence[int]) -> np.ndarray:
        """Lexicographic table over local Paulis on ``qubits`` (full local groups)."""
        n = self.group.n
        local = all_paulis(len(qubits))
        return np.array([self.probs[self.group.syndrome(p.embed(n, qubits))] for p in local])


def _coefficient_vector(group: PauliGroup, support: Sequence[PauliString], values: np.ndarray) -> np.ndarray:
    if len(support) != group.order:
        raise ValueError("support is not the full group")
    vec = np.full(group.order, np.nan)
    for p, v in zip(support, values):
        beta = group.coordinates(p)
        if beta is None:
            raise ValueError(f"{p} is outside the group")
        vec[beta] = v
    if np.isnan(vec).any():
        raise ValueError("support repeats an element")
    return vec


def f_to_p_projected(ev: EigenvalueVector, group: PauliGroup | None = None) -> MarginalDistribution:
    """Invert eigenvalues on a group and project onto the simplex."""
    if group is None:
        group = PauliGroup.spanned_by(ev.support)
    vec = _coefficient_vector(group, ev.support, ev.values)
    raw = fwht(vec) / group.order
    return MarginalDistribution(group, project_simplex(raw), raw)


def marginal_channel(ch: PauliChannel, group: PauliGroup, method: str = "auto") -> MarginalDistribution:
    """Exact coarse-graining of ``ch`` onto the syndromes of ``group``."""
    if group.n != ch.n:
        raise DimensionMismatch("group and channel sizes differ")
    if method == "direct":
        out = np.zeros(group.order)
        rates = ch.dense_rates()
        for i, p in enumerate(all_paulis(ch.n)):
            out[group.syndrome(p)] += rates[i]
        return MarginalDistribution(group, out, out)
    elems = group.elements()
    coeffs = group.element_coefficients()
    f = np.empty(group.order)
    f[coeffs] = ch.eigenvalues(elems)
    raw = fwht(f) / group.order
    return MarginalDistribution(group, np.clip(raw, 0.0, None), raw)


def spectral_gap(f: EigenvalueVector, x: Sequence[PauliString] | None = None) -> float:
    """``1 - max |f_a|`` over non-identity ``a`` in ``x`` (default: the support)."""
    lookup = f.as_dict()
    xs = f.support if x is None else parse_paulis(x)
    vals = [abs(lookup[p]) for p in xs if not p.is_identity()]
    if not vals:
        raise ValueError("no non-identity Paulis to take the gap over")
    return float(min(1.0, max(0.0, 1.0 - max(vals))))


def diamond_and_infidelity(ch: PauliChannel) -> tuple[float, float]:
    """Diamond distance to the identity and average infidelity."""
    diamond = 1.0 - ch.identity_rate()
    d = 2.0**ch.n
    return diamond, diamond / (1.0 + 1.0 / d)


@dataclass(frozen=True)
class AssumptionReport:
    c: float
    f_min: float
    a_min: float | None
    p0: float
    weak: bool
    stable: bool | None
    sufficient: bool
    exact: bool

    @property
    def ok(self) -> bool:
        return self.weak and self.stable is not False


def min_eigenvalue(ch: PauliChannel) -> tuple[float, bool]:
    """Smallest eigenvalue, or a lower bound flagged by ``exact=False``."""
    if ch.n <= 8:
        return float(p_to_f(ch).values.min()), True
    if isinstance(ch, FactoredChannel):
        mins = [float(f.eigenvalues.min()) for f in ch.factors]
        if min(mins) >= 0:
            return float(np.prod(mins)), ch.disjoint
    return 2.0 * ch.identity_rate() - 1.0, False


def check_assumptions(ch: PauliChannel, spam_A: np.ndarray | Sequence[float] | None = None, c: float = 0.5) -> AssumptionReport:
    """Check ``c``-weak noise (all ``f`` in ``[1-c, 1]``) and ``c``-stable SPAM."""
    f_min, exact = min_eigenvalue(ch)
    p0 = ch.identity_rate()
    a_min = None if spam_A is None or len(spam_A) == 0 else float(np.min(spam_A))
    return AssumptionReport(
        c=c,
        f_min=f_min,
        a_min=a_min,
        p0=p0,
        weak=f_min >= 1 - c - 1e-12,
        stable=None if a_min is None else a_min >= 1 - c - 1e-12,
        sufficient=p0 >= 1 - c / 2,
        exact=exact,
    )
