"""Gibbs random fields over Pauli alphabets and their canonical estimators.

Variables are qubits and each variable takes one of the four single-qubit
Paulis, coded ``I=0, X=1, Y=2, Z=3``. A joint table over qubits ``q_0 < q_1 <
...`` has one axis per qubit in that order, so its flattened index is the
lexicographic Pauli index used everywhere else in the package.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CapExceeded, PauliProbeError
from .estimators import DEFAULT_KAPPA, estimate_subset, reconstruct_groups, sample_budget_group
from .pauli import PauliGroup, PauliString
from .simulator import M_CAP, Sampler

PROB_FLOOR = 1e-12
NU_BAR_CAP = 6
DENSE_FIELD_CAP = 10
ELIMINATION_CAP = 8

Subset = tuple[int, ...]


class ClampWarning(RuntimeWarning):
    """A conditional probability was raised to the floor before taking logs."""


class MissingMarginal(PauliProbeError, KeyError):
    """No closure marginal was supplied for a factor."""


def _subset(s) -> Subset:
    return tuple(sorted(set(int(v) for v in s)))


@dataclass(frozen=True)
class FactorGraph:
    """Variables ``0..n-1`` and the factors (variable subsets) coupling them."""

    n: int
    factors: tuple[Subset, ...]

    def __post_init__(self):
        facs = tuple(_subset(c) for c in self.factors)
        if any(not c for c in facs):
            raise ValueError("empty factor")
        if any(v < 0 or v >= self.n for c in facs for v in c):
            raise ValueError("factor variable outside 0..n-1")
        seen = set().union(*facs) if facs else set()
        if len(seen) != self.n:
            raise ValueError("every variable must appear in some factor")
        object.__setattr__(self, "factors", facs)

    @classmethod
    def chain(cls, n: int, width: int = 2) -> FactorGraph:
        """Sliding windows ``{j, ..., j+width-1}`` along a line."""
        if n <= width:
            return cls(n, (tuple(range(n)),))
        return cls(n, tuple(tuple(range(j, j + width)) for j in range(n - width + 1)))

    @classmethod
    def random(cls, n: int, n_factors: int, nu: int, rng: np.random.Generator) -> FactorGraph:
        """Random factors of size ``<= nu`` patched so every variable is covered."""
        facs = [tuple(rng.choice(n, size=rng.integers(1, min(nu, n) + 1), replace=False)) for _ in range(n_factors)]
        missing = set(range(n)) - set().union(*map(set, facs))
        facs += [(v,) for v in sorted(missing)]
        return cls(n, tuple(facs))

    @property
    def N(self) -> int:
        return len(self.factors)

    @property
    def nu(self) -> int:
        return max(len(c) for c in self.factors)

    @property
    def nu_bar(self) -> int:
        return max(len(c) for c in self.closures())

    def blanket(self, s) -> Subset:
        s = set(s)
        out = set()
        for c in self.factors:
            if s.intersection(c):
                out.update(c)
        return _subset(out - s)

    def closure(self, s) -> Subset:
        return _subset(set(s) | set(self.blanket(s)))

    def closures(self) -> list[Subset]:
        """Closure of every factor, in factor order."""
        return [self.closure(c) for c in self.factors]

    def unique_closures(self) -> list[Subset]:
        return list(dict.fromkeys(self.closures()))

    def augmented(self) -> list[tuple[Subset, int]]:
        """Nonempty subsets of factors, deduplicated, each with its first parent."""
        out: dict[Subset, int] = {}
        for k, c in enumerate(self.factors):
            for size in range(1, len(c) + 1):
                for s in itertools.combinations(c, size):
                    out.setdefault(s, k)
        return list(out.items())

    def as_dict(self) -> dict:
        return {"n": self.n, "factors": [list(c) for c in self.factors]}


def markov_blanket(graph: FactorGraph, s) -> Subset:
    return graph.blanket(s)


def _expand(table: np.ndarray, vars_: Subset, target: Subset) -> np.ndarray:
    """Reshape a table over ``vars_`` so it broadcasts against ``target`` axes."""
    shape = [4 if v in vars_ else 1 for v in target]
    return np.asarray(table).reshape(shape)


def _codes(paulis: Sequence[PauliString], n: int) -> np.ndarray:
    """Single-qubit codes as an ``(len, n)`` array."""
    out = np.zeros((len(paulis), n), dtype=np.int64)
    for i, p in enumerate(paulis):
        for j in range(n):
            bx, bz = p.x >> j & 1, p.z >> j & 1
            out[i, j] = (bx ^ bz) + 2 * bz
    return out


def _dense_log(n: int, terms: Sequence[tuple[Subset, np.ndarray]]) -> np.ndarray:
    if n > DENSE_FIELD_CAP:
        raise CapExceeded(f"dense field enumeration limited to n <= {DENSE_FIELD_CAP}")
    allv = tuple(range(n))
    out = np.zeros((4,) * n)
    for vars_, log_t in terms:
        out = out + _expand(log_t, vars_, allv)
    return out


def _normalize_log(log_p: np.ndarray) -> np.ndarray:
    mx = log_p.max()
    p = np.exp(log_p - mx)
    return p / p.sum()


def marginal_table(joint: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Marginal of a dense ``(4,)*n`` table on sorted ``qubits``."""
    qubits = _subset(qubits)
    rest = tuple(v for v in range(joint.ndim) if v not in qubits)
    return joint.sum(axis=rest) if rest else joint.copy()


@dataclass
class GibbsField:
    """``p(x) ∝ prod_k phi_k(x_{C_k})`` with strictly positive potentials."""

    graph: FactorGraph
    potentials: list[np.ndarray]
    log_partition: float | None = None

    def __post_init__(self):
        if len(self.potentials) != self.graph.N:
            raise ValueError("one potential table per factor")
        pots = []
        for c, phi in zip(self.graph.factors, self.potentials):
            phi = np.asarray(phi, dtype=float).reshape((4,) * len(c))
            if not np.all(phi > 0):
                raise ValueError("potentials must be strictly positive")
            pots.append(phi)
        self.potentials = pots

    @classmethod
    def random(cls, graph: FactorGraph, rng: np.random.Generator, scale: float = 1.0, bias: float = 0.0) -> GibbsField:
        """Log-normal potentials; ``bias`` is added to the log of the all-identity entry."""
        pots = []
        for c in graph.factors:
            log_phi = rng.normal(scale=scale, size=(4,) * len(c))
            log_phi[(0,) * len(c)] += bias
            pots.append(np.exp(log_phi))
        return cls(graph, pots)

    @property
    def n(self) -> int:
        return self.graph.n

    def _terms(self):
        return [(c, np.log(phi)) for c, phi in zip(self.graph.factors, self.potentials)]

    def log_unnormalized(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(codes)
        out = np.zeros(len(codes))
        for c, log_phi in self._terms():
            out += log_phi[tuple(codes[:, list(c)].T)]
        return out

    def dense(self) -> np.ndarray:
        """Normalized ``(4,)*n`` joint table (small ``n`` only)."""
        log_p = _dense_log(self.n, self._terms())
        mx = log_p.max()
        self.log_partition = float(mx + np.log(np.exp(log_p - mx).sum()))
        return _normalize_log(log_p)

    def to_channel(self):
        from .channel import DenseChannel

        return DenseChannel(self.n, self.dense().reshape(-1))

    def sample(self, shots: int, rng: np.random.Generator) -> np.ndarray:
        """Exact samples as an ``(shots, n)`` code array.

        Uses bucket elimination from the last variable down, then samples
        forward. Chains and trees stay small; dense-like graphs hit the cap.
        """
        buckets = _eliminate(self.n, self._terms())
        out = np.zeros((shots, self.n), dtype=np.int64)
        for v in range(self.n):
            vars_, log_t = buckets[v]
            logits = np.empty((shots, 4))
            for k in range(4):
                idx = tuple(out[:, u] if u != v else np.full(shots, k) for u in vars_)
                logits[:, k] = log_t[idx]
            probs = np.exp(logits - logits.max(axis=1, keepdims=True))
            cdf = np.cumsum(probs, axis=1)
            u = rng.random(shots) * cdf[:, -1]
            out[:, v] = (u[:, None] >= cdf).sum(axis=1).clip(max=3)
        return out


def chain_field(n: int, pair: np.ndarray) -> GibbsField:
    """Stationary Markov chain whose neighbouring pairs follow ``pair``.

    ``pair`` is a ``4 x 4`` joint table with equal row and column marginals
    ``m``; the field is ``pair(x_0, x_1) prod_j pair(x_j, x_{j+1}) / m(x_j)``
    and is normalized by construction.
    """
    pair = np.asarray(pair, float).reshape(4, 4)
    m = pair.sum(axis=1)
    if not np.allclose(m, pair.sum(axis=0), atol=1e-12):
        raise ValueError("pair table needs equal row and column marginals")
    if n < 2:
        raise ValueError("a chain needs at least two variables")
    pots = [pair] + [pair / m[:, None] for _ in range(n - 2)]
    return GibbsField(FactorGraph.chain(n), pots, log_partition=0.0)


def _eliminate(n: int, terms) -> list[tuple[Subset, np.ndarray]]:
    factors = [(tuple(c), np.asarray(t, float)) for c, t in terms]
    buckets: list = [None] * n
    for v in range(n - 1, -1, -1):
        mine = [f for f in factors if v in f[0]]
        factors = [f for f in factors if v not in f[0]]
        union = _subset(set().union(*[set(f[0]) for f in mine]) | {v})
        if len(union) > ELIMINATION_CAP:
            raise CapExceeded("elimination table too large; sample densely instead")
        table = np.zeros((4,) * len(union))
        for c, t in mine:
            table = table + _expand(t, c, union)
        buckets[v] = (union, table)
        axis = union.index(v)
        mx = table.max(axis=axis, keepdims=True)
        msg = np.log(np.exp(table - mx).sum(axis=axis)) + np.squeeze(mx, axis=axis)
        rest = tuple(u for u in union if u != v)
        if rest:
            factors.append((rest, msg))
    return buckets


@dataclass
class CanonicalEstimate:
    """Canonical factor potentials ``log phi`` over the augmented factors."""

    graph: FactorGraph
    log_phi: dict[Subset, np.ndarray]
    parents: dict[Subset, int]
    joint: dict[Subset, np.ndarray] = field(repr=False, default_factory=dict)
    blanket_zero: dict[Subset, float] = field(repr=False, default_factory=dict)
    clamped: int = 0
    p0_hat: float | None = None
    closure_tables: dict[Subset, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def augmented_factors(self) -> list[Subset]:
        return list(self.log_phi)

    def conditional(self, s: Subset) -> np.ndarray:
        """Clamped ``p(x_s | 0_{blanket(s)})`` used to build ``log phi``."""
        return np.maximum(self.joint[s] / max(self.blanket_zero[s], PROB_FLOOR), PROB_FLOOR)

    def terms(self):
        return list(self.log_phi.items())

    def log_unnormalized(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(codes)
        out = np.zeros(len(codes))
        for s, t in self.log_phi.items():
            out += t[tuple(codes[:, list(s)].T)]
        return out

    def dense_log(self) -> np.ndarray:
        return _dense_log(self.graph.n, self.terms())

    def dense(self) -> np.ndarray:
        """Normalized estimate by explicit enumeration (small ``n`` only)."""
        return _normalize_log(self.dense_log())

    def to_field(self) -> GibbsField:
        g = FactorGraph(self.graph.n, tuple(self.log_phi))
        return GibbsField(g, [np.exp(t) for t in self.log_phi.values()])

    def as_dict(self) -> dict:
        return {
            "log_phi": {",".join(map(str, s)): t.reshape(-1).tolist() for s, t in self.log_phi.items()},
            "p0_hat": self.p0_hat,
        }


def evaluate_unnormalized(est: CanonicalEstimate, x: PauliString) -> float:
    """``sum_j log phi_j(x_{C*_j})``; add ``log p0_hat`` to get ``log q(x)``."""
    return float(est.log_unnormalized(_codes([x], est.graph.n))[0])


def _mobius(table: np.ndarray) -> np.ndarray:
    """Alternating sum over subsets of axes with the complement pinned to 0."""
    out = table.copy()
    for axis in range(out.ndim):
        out = out - out.take([0], axis=axis)
    return out


def canonical_potentials(marginals: Mapping[Subset, np.ndarray], graph: FactorGraph, floor: float = PROB_FLOOR) -> CanonicalEstimate:
    """Canonical potentials from closure marginals keyed by sorted closure tuple.

    ``log phi_{C*}(x) = sum_{S ⊆ C*} (-1)^{|C*|-|S|} log p(x_S, 0_{C*-S} | 0_{∂C*})``,
    with every probability read off the closure table of the first parent.
    """
    tables = {_subset(k): np.asarray(v, float) for k, v in marginals.items()}
    log_phi: dict[Subset, np.ndarray] = {}
    parents: dict[Subset, int] = {}
    joints: dict[Subset, np.ndarray] = {}
    zeros: dict[Subset, float] = {}
    clamped = 0
    for s, k in graph.augmented():
        cl = graph.closure(graph.factors[k])
        if cl not in tables:
            raise MissingMarginal(f"no marginal for closure {cl} of factor {graph.factors[k]}")
        table = tables[cl].reshape((4,) * len(cl))
        bl = graph.blanket(s)
        keep = _subset(set(s) | set(bl))
        sub = marginal_table(table, [cl.index(v) for v in keep])
        # pin the blanket to the identity
        idx = tuple(0 if v in bl else slice(None) for v in keep)
        joint = sub[idx]
        pb = float(joint.sum())
        cond = joint / max(pb, floor)
        low = int(np.count_nonzero(cond < floor) + (pb < floor))
        if low:
            clamped += low
            warnings.warn(f"{low} probabilities clamped to {floor} for subfactor {s}", ClampWarning, stacklevel=2)
        log_phi[s] = _mobius(np.log(np.maximum(cond, floor)))
        parents[s] = k
        joints[s] = joint
        zeros[s] = pb
    return CanonicalEstimate(graph, log_phi, parents, joints, zeros, clamped, closure_tables=tables)


def exact_closure_marginals(joint: np.ndarray, graph: FactorGraph) -> dict[Subset, np.ndarray]:
    return {c: marginal_table(joint, c) for c in graph.unique_closures()}


def independent_set_schedule(graph: FactorGraph) -> list[list[Subset]]:
    """Greedy colouring of distinct closures; closures sharing a colour are disjoint."""
    closures = graph.unique_closures()
    colours: list[list[Subset]] = []
    used: list[set[int]] = []
    for c in closures:
        for batch, occ in zip(colours, used):
            if not occ.intersection(c):
                batch.append(c)
                occ.update(c)
                break
        else:
            colours.append([c])
            used.append(set(c))
    return colours


@dataclass
class BoundDiagnostics:
    """Error-bound quantities for a canonical estimate.

    ``source`` is ``"exact"`` when the true distribution was supplied and
    ``"plug-in"`` when only estimates were available.
    """

    G_geo: float
    eps1: float
    eps2: float
    gamma: float
    r_star: float
    bound_value: float
    N: int
    nu: int
    source: str
    l1: float | None = None
    factor_bound: float | None = None
    sqrt_n_bound: float | None = None

    @property
    def checks(self) -> dict[str, bool]:
        out = {"eps2_le_4nu_eps1": self.eps2 <= 4**self.nu * self.eps1 + 1e-15}
        if self.l1 is not None:
            tol = 1e-12
            out["second_norm_bound"] = self.l1 <= self.bound_value + tol
            out["factor_bound"] = self.l1 <= self.factor_bound + tol
            out["sqrt_n_bound"] = self.l1 <= self.sqrt_n_bound + tol
        return out

    def as_dict(self) -> dict:
        keys = ("G_geo", "eps1", "eps2", "gamma", "r_star", "bound_value", "N", "nu", "source", "l1", "factor_bound", "sqrt_n_bound")
        out = {k: getattr(self, k) for k in keys}
        out["checks"] = self.checks
        return out


def _second_bound(N: int, nu: int, gamma: float, g: float, eps1: float, eps2: float) -> float:
    if eps1 + eps2 == 0:
        return 0.0
    return N * 3**nu / (gamma * g) * (eps1 + eps2) if gamma * g > 0 else math.inf


def bound_diagnostics(p: np.ndarray, est: CanonicalEstimate, q: np.ndarray | None = None) -> BoundDiagnostics:
    """All error-bound quantities against the exact distribution ``p``.

    ``p`` is a dense ``(4,)*n`` table. ``q`` defaults to the dense
    normalization of ``est``. Both inequality checks are evaluated.
    """
    graph = est.graph
    if graph.n > DENSE_FIELD_CAP:
        raise CapExceeded(f"exact diagnostics limited to n <= {DENSE_FIELD_CAP}")
    p = np.asarray(p, float).reshape((4,) * graph.n)
    q = est.dense() if q is None else np.asarray(q, float).reshape((4,) * graph.n)
    exact = canonical_potentials(exact_closure_marginals(p, graph), graph)
    g_geo, eps1, eps2, gamma = math.inf, 0.0, 0.0, math.inf
    for s in est.log_phi:
        g_geo = min(g_geo, float(np.sqrt(exact.conditional(s) * est.conditional(s)).min()))
        eps1 = max(eps1, float(np.abs(exact.joint[s] - est.joint[s]).max()))
        eps2 = max(eps2, abs(exact.blanket_zero[s] - est.blanket_zero[s]))
        gamma = min(gamma, exact.blanket_zero[s])
    r_star = max(_r_inf(marginal_table(p, c)) for c in graph.unique_closures())
    factor_bound = sum(float(np.abs(exact.log_phi[s] - est.log_phi[s]).max()) for s in est.log_phi)
    sqrt_terms = []
    for u in range(graph.n):
        ub = graph.closure([u])
        pu, qu = marginal_table(p, ub), marginal_table(q, ub)
        sqrt_terms.append(float(np.sqrt(((pu - qu) ** 2).sum()) / np.sqrt(qu.min())))
    return BoundDiagnostics(
        G_geo=g_geo,
        eps1=eps1,
        eps2=eps2,
        gamma=gamma,
        r_star=r_star,
        bound_value=_second_bound(graph.N, graph.nu, gamma, g_geo, eps1, eps2),
        N=graph.N,
        nu=graph.nu,
        source="exact",
        l1=float(np.abs(p - q).sum()),
        factor_bound=factor_bound,
        sqrt_n_bound=math.sqrt(graph.n) * max(sqrt_terms),
    )


def _r_inf(table: np.ndarray) -> float:
    """``|| delta_I - p ||_inf`` for a local joint table."""
    flat = np.asarray(table).reshape(-1)
    return float(max(1.0 - flat[0], flat[1:].max(initial=0.0)))


def plug_in_diagnostics(est: CanonicalEstimate, epsilon: float, r_inf: float) -> BoundDiagnostics:
    """Diagnostics from estimates alone, with ``eps1 = eps2 = epsilon * r_inf``."""
    graph = est.graph
    g_geo = min(float(est.conditional(s).min()) for s in est.log_phi)
    gamma = min(est.blanket_zero[s] for s in est.log_phi)
    r_star = max(_r_inf(est.closure_tables[c]) for c in graph.unique_closures())
    eps = min(1.0, epsilon * r_inf)
    return BoundDiagnostics(
        G_geo=g_geo,
        eps1=eps,
        eps2=eps,
        gamma=gamma,
        r_star=r_star,
        bound_value=_second_bound(graph.N, graph.nu, gamma, g_geo, eps, eps),
        N=graph.N,
        nu=graph.nu,
        source="plug-in",
    )


@dataclass
class PipelineResult:
    estimate: CanonicalEstimate
    diagnostics: BoundDiagnostics
    schedule: list[list[Subset]]
    marginals: dict[Subset, np.ndarray]
    measurements: int
    t: int


def canonical_estimator_pipeline(
    graph: FactorGraph,
    epsilon: float,
    delta: float,
    sampler: Sampler,
    *,
    truth: np.ndarray | None = None,
    batched: bool = True,
    estimate_p0: bool = False,
    workers: int = 1,
    t: int | None = None,
    rescale: bool = True,
    kappa_size: int = DEFAULT_KAPPA,
    nu_bar_cap: int = NU_BAR_CAP,
    m_cap: int = M_CAP,
) -> PipelineResult:
    """Estimate every closure marginal, then build the canonical estimator.

    Closures in one batch are disjoint and share the same measurements.
    With ``batched=False`` each closure is measured on its own. With
    ``rescale`` each marginal is estimated to precision ``epsilon / N`` so the
    global error scales with ``epsilon`` rather than ``N * epsilon``.
    """
    if graph.n != sampler.n:
        raise ValueError("graph and sampler sizes differ")
    if graph.nu_bar > nu_bar_cap:
        raise CapExceeded(f"closure size {graph.nu_bar} exceeds cap {nu_bar_cap}")
    schedule = independent_set_schedule(graph) if batched else [[c] for c in graph.unique_closures()]
    local_eps = epsilon / graph.N if rescale else epsilon
    t = t or sample_budget_group(local_eps, delta, 4**graph.nu_bar - 1, kappa_size).t
    start = sampler.measurements
    tables: dict[Subset, np.ndarray] = {}
    r_inf = 0.0
    for b, batch in enumerate(schedule):
        groups = [PauliGroup.full(graph.n, c) for c in batch]
        recs = reconstruct_groups(groups, sampler, t, workers=workers, m_cap=m_cap, stream=(4, b))
        for c, rec in zip(batch, recs):
            tables[c] = rec.marginal.local_table(c).reshape((4,) * len(c))
            r_inf = max(r_inf, rec.r_inf)
    est = canonical_potentials(tables, graph)
    if estimate_p0:
        ident = PauliString.identity(graph.n)
        sub = estimate_subset([ident], epsilon, delta, sampler, kappa_size=kappa_size, workers=workers, m_cap=m_cap, stream=(5,))
        est.p0_hat = sub.p_hat[ident]
    if truth is not None:
        diag = bound_diagnostics(truth, est)
    else:
        diag = plug_in_diagnostics(est, local_eps, r_inf)
    return PipelineResult(est, diag, schedule, tables, sampler.measurements - start, t)
