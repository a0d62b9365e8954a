"""Ratio-based eigenvalue estimation and the reconstructions built on it."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import EigenvalueVector, MarginalDistribution, f_to_p_projected
from .covering import StabilizerCovering, cover_mub, cover_trivial
from .errors import CapExceeded, CoverageError, DimensionMismatch
from .pauli import PauliGroup, PauliString, StabilizerGroup, parse_paulis, sign_matrix
from .simulator import M_CAP, Sampler

R_FLOOR = 1e-9
DEFAULT_KAPPA = 12


@dataclass(frozen=True)
class SampleBudget:
    """Shots per round and the round count they imply."""

    t: int
    kappa: int
    rounds: int | None = None
    total_measurements: int | None = None

    def as_dict(self) -> dict:
        return {"t": self.t, "kappa": self.kappa, "rounds": self.rounds, "total_measurements": self.total_measurements}


def _ceil(x: float) -> int:
    # absorb log() rounding so exact integers are not bumped up
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def sample_budget_group(epsilon: float, delta: float, x_size: int, kappa_size: int, n_groups: int | None = None) -> SampleBudget:
    """Shots per round so every ``r_x`` is within relative ``epsilon`` w.p. ``1 - delta``."""
    _check_eps_delta(epsilon, delta)
    t = _ceil(2.0 / epsilon**2 * math.log(2.0 * x_size * kappa_size / delta))
    rounds = None if n_groups is None else kappa_size * n_groups
    return SampleBudget(t, kappa_size, rounds, None if rounds is None else rounds * t)


def sample_budget_sparse(epsilon: float, delta: float, e_size: int, kappa_size: int) -> tuple[int, int]:
    """``(probe count, shots per round)`` for estimating ``e_size`` rates to ``epsilon`` times the gap."""
    _check_eps_delta(epsilon, delta)
    probes = _ceil(math.log(4.0 * e_size / delta) / epsilon**2)
    t = _ceil(math.log(4.0 * probes * kappa_size / delta) / epsilon**2)
    return probes, t


def _check_eps_delta(epsilon: float, delta: float) -> None:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


@dataclass
class RatioResult:
    r_hat: dict[PauliString, float]
    m_used: dict[PauliString, int]
    flags: dict[PauliString, str]
    group_of: dict[PauliString, int]
    group_kappa: list[tuple[int, ...]]
    t: int
    curve: list[dict] = field(default_factory=list)

    @property
    def kappa(self) -> tuple[int, ...]:
        """Sequence lengths used by any group, including the ``m = 0`` reference."""
        return tuple(sorted({m for ks in self.group_kappa for m in ks}))

    @property
    def decay_lengths(self) -> tuple[int, ...]:
        return tuple(m for m in self.kappa if m > 0)

    @property
    def rounds(self) -> int:
        return sum(len(k) for k in self.group_kappa)

    @property
    def measurements(self) -> int:
        return self.rounds * self.t

    @property
    def budget(self) -> SampleBudget:
        return SampleBudget(self.t, len(self.kappa), self.rounds, self.measurements)

    def f_hat(self, p: PauliString) -> float:
        return 1.0 - self.r_hat[p]


def _assign(cover: StabilizerCovering, targets: Sequence[PauliString]) -> list[list[PauliString]]:
    """Targets handled by each group: first group containing them, identity excluded."""
    pending = list(dict.fromkeys(p for p in targets if not p.is_identity()))
    out = []
    for g in cover.groups:
        mine = [p for p in pending if p in g]
        taken = set(mine)
        pending = [p for p in pending if p not in taken]
        out.append(mine)
    if pending:
        raise CoverageError(f"{len(pending)} targets not covered, e.g. {pending[0]}")
    return out


def _measure(group, xs, t, sampler, stream, m, kappa, curve):
    vals = sampler.estimate(group, xs, m, t, stream + (m,))
    kappa.append(m)
    curve.extend({"pauli": str(x), "m": m, "v_hat": float(v), "t": t} for x, v in zip(xs, vals))
    return vals


def _ratio_one(group, xs, t, sampler, m_cap, r_floor, stream):
    r_hat, m_used, flags = {}, {}, {}
    curve = []
    kappa = []

    def measure(m):
        return _measure(group, xs, t, sampler, stream, m, kappa, curve)

    if xs:
        v = measure(0)
        m = 1
        while len(r_hat) < len(xs):
            if m > m_cap:
                for x in xs:
                    if x not in r_hat:
                        r_hat[x], m_used[x], flags[x] = r_floor, m_cap, "m_capped"
                break
            w = measure(m)
            for i, x in enumerate(xs):
                if x in r_hat:
                    continue
                vi, wi = v[i], w[i]
                if vi > 0 and wi > 0 and wi <= vi / 3:
                    ratio = wi / vi
                    assert 0 < ratio <= 1 / 3 + 1e-12
                    r_hat[x], m_used[x], flags[x] = 1.0 - ratio ** (1.0 / m), m, "converged"
                elif wi <= 0 or vi <= 0:
                    r_hat[x], m_used[x], flags[x] = 1.0, m, "clipped_negative"
            m *= 2
    return r_hat, m_used, flags, kappa, curve


def ratio(
    cover: StabilizerCovering,
    targets: Sequence[PauliString | str],
    t: int,
    sampler: Sampler,
    *,
    m_cap: int = M_CAP,
    r_floor: float = R_FLOOR,
    workers: int = 1,
    lockstep: bool = False,
    stream: tuple[int, ...] = (),
) -> RatioResult:
    """Estimate ``r_x = 1 - f_x`` for every target from doubling-length decays.

    Each group measures its targets at ``m = 0`` and then ``m = 1, 2, 4, ...``;
    target ``x`` is fixed at the first ``m`` with ``0 < w <= v / 3``. With
    ``lockstep`` every group is run up to the largest ``m`` any group needed,
    which changes the cost but not the estimates. The identity gets
    ``r = 0``; groups with no unassigned targets are not run.
    """
    xs = parse_paulis(targets)
    if t < 1:
        raise ValueError("t must be positive")
    if any(p.n != cover.n for p in xs):
        raise DimensionMismatch("targets and cover act on different registers")
    if m_cap > M_CAP:
        raise CapExceeded(f"m_cap above {M_CAP}")
    plan = _assign(cover, xs)

    def run(i):
        return _ratio_one(cover.groups[i], plan[i], t, sampler, m_cap, r_floor, stream + (i,))

    idx = list(range(len(cover.groups)))
    results = _map(run, idx, workers)
    if lockstep:
        top = max((max(res[3]) for res in results if res[3]), default=0)

        def pad(i):
            # extra rounds whose data is not used by the estimates
            kappa, curve = results[i][3], results[i][4]
            if kappa:
                m = 2 * kappa[-1] if kappa[-1] else 1
                while m <= top:
                    _measure(cover.groups[i], plan[i], t, sampler, stream + (i,), m, kappa, curve)
                    m *= 2

        _map(pad, idx, workers)

    out = RatioResult({}, {}, {}, {}, [], t)
    for i, (r_hat, m_used, flags, kappa, curve) in enumerate(results):
        for x in plan[i]:
            out.r_hat[x] = r_hat[x]
            out.m_used[x] = m_used[x]
            out.flags[x] = flags[x]
            out.group_of[x] = i
        out.group_kappa.append(tuple(kappa))
        out.curve.extend(dict(row, group_id=i) for row in curve)
    for x in xs:
        if x.is_identity():
            out.r_hat[x], out.m_used[x], out.flags[x] = 0.0, 0, "identity"
    return out


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class GroupReconstruction:
    group: PauliGroup
    marginal: MarginalDistribution
    f_hat: EigenvalueVector
    ratio: RatioResult

    @property
    def r_inf(self) -> float:
        return float(np.max(1.0 - self.f_hat.values[1:])) if len(self.f_hat.values) > 1 else 0.0


def _group_t(group: PauliGroup, t, epsilon, delta, kappa_size):
    if t is not None:
        return int(t)
    if epsilon is None or delta is None:
        raise ValueError("give t or both epsilon and delta")
    return sample_budget_group(epsilon, delta, group.order - 1, kappa_size).t


def reconstruct_group(
    group: PauliGroup,
    sampler: Sampler,
    t: int | None = None,
    *,
    epsilon: float | None = None,
    delta: float | None = None,
    kappa_size: int = DEFAULT_KAPPA,
    workers: int = 1,
    lockstep: bool = True,
    m_cap: int = M_CAP,
    stream: tuple[int, ...] = (),
) -> GroupReconstruction:
    """Marginal error distribution on the syndromes of ``group``."""
    t = _group_t(group, t, epsilon, delta, kappa_size)
    elems = group.elements()
    cover = cover_mub(list(group.basis)) if group.rank else StabilizerCovering((StabilizerGroup([], n=group.n),), group.n)
    res = ratio(cover, elems[1:], t, sampler, m_cap=m_cap, workers=workers, lockstep=lockstep, stream=stream)
    f = np.array([1.0] + [res.f_hat(p) for p in elems[1:]])
    ev = EigenvalueVector(tuple(elems), f)
    return GroupReconstruction(group, f_to_p_projected(ev, group), ev, res)


def combined_cover(groups: Sequence[PauliGroup]) -> StabilizerCovering:
    """Cover of the union of groups on disjoint qubits by tensoring their covers."""
    if not groups:
        raise ValueError("no groups")
    n = groups[0].n
    used = 0
    covers = []
    for g in groups:
        sup = 0
        for b in g.basis:
            sup |= b.x | b.z
        if sup & used:
            raise ValueError("batched groups must act on disjoint qubits")
        used |= sup
        covers.append(cover_mub(list(g.basis)).groups)
    out = []
    for j in range(max(len(c) for c in covers)):
        gens = []
        for c in covers:
            gens += list(c[min(j, len(c) - 1)].basis)
        out.append(StabilizerGroup(gens, n=n))
    return StabilizerCovering(tuple(out), n)


def reconstruct_groups(
    groups: Sequence[PauliGroup],
    sampler: Sampler,
    t: int,
    *,
    workers: int = 1,
    lockstep: bool = True,
    m_cap: int = M_CAP,
    stream: tuple[int, ...] = (),
) -> list[GroupReconstruction]:
    """Reconstruct several groups on disjoint qubits from shared measurements."""
    cover = combined_cover(groups)
    per = [g.elements() for g in groups]
    targets = [p for elems in per for p in elems[1:]]
    res = ratio(cover, targets, t, sampler, m_cap=m_cap, workers=workers, lockstep=lockstep, stream=stream)
    out = []
    for g, elems in zip(groups, per):
        f = np.array([1.0] + [res.f_hat(p) for p in elems[1:]])
        ev = EigenvalueVector(tuple(elems), f)
        out.append(GroupReconstruction(g, f_to_p_projected(ev, g), ev, res))
    return out


def random_paulis(n: int, count: int, rng: np.random.Generator) -> list[PauliString]:
    """``count`` distinct uniformly random Paulis, or all of them if ``count >= 4**n``."""
    if 2 * n <= 20:
        total = 4**n
        if count >= total:
            return [PauliString.from_index(n, i) for i in range(total)]
        return [PauliString.from_index(n, int(i)) for i in rng.choice(total, size=count, replace=False)]
    nbytes = (n + 7) // 8
    mask = (1 << n) - 1
    out: dict[PauliString, None] = {}
    while len(out) < count:
        raw = rng.integers(0, 256, size=(count - len(out), 2, nbytes), dtype=np.uint8)
        for r in raw:
            x = int.from_bytes(r[0].tobytes(), "little") & mask
            z = int.from_bytes(r[1].tobytes(), "little") & mask
            out.setdefault(PauliString(n, x, z))
    return list(out)


def probe_average(targets: Sequence[PauliString], probes: Sequence[PauliString], r_hat: dict[PauliString, float]) -> np.ndarray:
    """``p_a = 1[a = I] - mean_b (-1)**<a, b> r_b`` over the probe multiset."""
    r = np.array([r_hat[b] for b in probes])
    signs = sign_matrix(list(targets), list(probes))
    ident = np.array([1.0 if a.is_identity() else 0.0 for a in targets])
    return ident - signs @ r / len(probes)


@dataclass
class SubsetEstimate:
    p_hat: dict[PauliString, float]
    probes: list[PauliString]
    ratio: RatioResult
    t: int

    @property
    def measurements(self) -> int:
        return self.ratio.measurements


def _probe_rng(seed: int, stream: tuple[int, ...]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1 << 30,) + tuple(stream)))


def estimate_subset(
    targets: Sequence[PauliString | str],
    epsilon: float,
    delta: float,
    sampler: Sampler,
    *,
    kappa_size: int = DEFAULT_KAPPA,
    probes: int | None = None,
    t: int | None = None,
    workers: int = 1,
    m_cap: int = M_CAP,
    seed: int | None = None,
    stream: tuple[int, ...] = (),
) -> SubsetEstimate:
    """Estimate the rates of a small set of Paulis from random probe eigenvalues."""
    es = parse_paulis(targets)
    if not es:
        raise ValueError("empty target set")
    n = es[0].n
    k, tt = sample_budget_sparse(epsilon, delta, len(es), kappa_size)
    k = probes or k
    tt = t or tt
    rng = _probe_rng(sampler.seed if seed is None else seed, stream)
    xs = random_paulis(n, k, rng)
    res = ratio(cover_trivial(xs), xs, tt, sampler, m_cap=m_cap, workers=workers, stream=stream)
    p = probe_average(es, xs, res.r_hat)
    return SubsetEstimate(dict(zip(es, p.tolist())), xs, res, tt)


def select_top_s(p_hat: dict[PauliString, float], s: int) -> list[PauliString]:
    """``s`` largest estimates; ties broken by lexicographic Pauli order."""
    return sorted(p_hat, key=lambda p: (-p_hat[p], p.index))[:s]


def _support_mask(paulis: Sequence[PauliString]) -> tuple[int, ...]:
    s = 0
    for p in paulis:
        s |= p.x | p.z
    return tuple(j for j in range(paulis[0].n) if s >> j & 1)


@dataclass
class TreeLevel:
    sets: list[list[PauliString]]
    estimates: list[dict[PauliString, float]]
    probes: int
    measurements: int


@dataclass
class TreeResult:
    p_hat: dict[PauliString, float]
    selected: list[PauliString]
    levels: list[TreeLevel]
    measurements: int


def tree_reconstruction(
    n: int,
    u: int,
    s: int,
    t: int,
    sampler: Sampler,
    *,
    workers: int = 1,
    m_cap: int = M_CAP,
    seed: int | None = None,
) -> TreeResult:
    """Find and estimate the dominant Pauli errors by merging local candidates.

    Level 0 starts from the four Paulis on each qubit. At every level each
    candidate set is estimated from ``u`` probes on its support, the ``s``
    largest are kept and neighbouring sets are merged by tensor product.
    """
    if u < 1 or s < 1:
        raise ValueError("u and s must be positive")
    if s > u:
        raise ValueError("s must not exceed u")
    sets = [[PauliString.single(n, j, c) for c in "IXYZ"] for j in range(n)]
    levels = []
    rng = _probe_rng(sampler.seed if seed is None else seed, (2,))
    depth = max(1, math.ceil(math.log2(n))) if n > 1 else 0
    for level in range(depth + 1):
        probe_sets = []
        for e in sets:
            supp = _support_mask(e)
            probe_sets.append([p.embed(n, supp) for p in random_paulis(len(supp), u, rng)])
        union = list(dict.fromkeys(p for ps in probe_sets for p in ps))
        before = sampler.measurements
        res = ratio(cover_trivial(union), union, t, sampler, m_cap=m_cap, workers=workers, stream=(3, level))
        est = []
        for e, ps in zip(sets, probe_sets):
            est.append(dict(zip(e, probe_average(e, ps, res.r_hat).tolist())))
        levels.append(TreeLevel(sets, est, len(union), sampler.measurements - before))
        if len(sets) == 1:
            break
        chosen = [select_top_s(d, s) for d in est]
        merged = []
        for i in range(0, len(chosen), 2):
            if i + 1 == len(chosen):
                merged.append(chosen[i])
                continue
            prod = [a * b for a in chosen[i] for b in chosen[i + 1]]
            if len(prod) > u * u:
                raise CapExceeded("merged candidate set exceeds u**2")
            merged.append(prod)
        sets = merged
    final = levels[-1].estimates[0]
    return TreeResult(final, select_top_s(final, s), levels, sum(lv.measurements for lv in levels))
