"""Pauli-frame simulation of cycle benchmarking and its exact likelihood.

One shot of ``RunCB(G, H, m)`` prepares the stabilizer state of ``G``,
applies ``m + 1`` random Paulis each followed by the gate noise, and measures
``H``. Random Paulis cancel in the frame, so only the accumulated error
``E = e_prep + e_0 + ... + e_m + e_meas`` matters. The recorded outcome is
``syndrome(H, E)`` plus a uniformly random part for the directions of ``H``
that the prepared state does not fix.

Generator signs: the state of ``G`` is the joint +1 eigenspace of the
generator matrices and outcome bit ``j`` of ``H`` is the eigenvalue of its
``j``-th generator matrix. For ``h`` in both groups this gives the ideal
coefficient ``chi_G(h) chi_H(h)``, which is 1 whenever ``G = H``.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import gf2
from .channel import LocalTable, PauliChannel, SparseComponent, local_wht
from .errors import CapExceeded, DimensionMismatch
from .pauli import (
    ENUMERATION_CAP,
    PauliGroup,
    PauliString,
    all_paulis,
    fwht,
    parse_paulis,
    pauli_bits,
    symplectic_form,
)

CHUNK = 8192
M_CAP = 2**20


@dataclass(frozen=True)
class NoiseModel:
    """Gate noise plus optional Pauli state-preparation and measurement noise."""

    gate: PauliChannel
    prep: PauliChannel | None = None
    meas: PauliChannel | None = None

    def __post_init__(self):
        for ch in (self.prep, self.meas):
            if ch is not None and ch.n != self.gate.n:
                raise DimensionMismatch("SPAM channel size differs from gate channel")

    @property
    def n(self) -> int:
        return self.gate.n


def _words(r: int) -> int:
    return max(1, (r + 63) // 64)


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack the last axis of a 0/1 array into little-endian uint64 words."""
    r = bits.shape[-1]
    w = _words(r)
    pad = np.zeros(bits.shape[:-1] + (64 * w,), dtype=np.uint8)
    pad[..., :r] = bits
    packed = np.packbits(pad, axis=-1, bitorder="little")
    return packed.view("<u8").astype(np.uint64)


def _int_to_words(v: int, w: int) -> np.ndarray:
    return np.array([(v >> (64 * i)) & ((1 << 64) - 1) for i in range(w)], dtype=np.uint64)


def words_to_int(words: np.ndarray) -> int:
    return sum(int(x) << (64 * i) for i, x in enumerate(words))


_LOCAL_BITS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _local_bits(k: int) -> tuple[np.ndarray, np.ndarray]:
    if k not in _LOCAL_BITS:
        _LOCAL_BITS[k] = pauli_bits(all_paulis(k), k)
    return _LOCAL_BITS[k]


class _Cache:
    def __init__(self, size: int = 256):
        self._d: OrderedDict = OrderedDict()
        self._size = size
        self._lock = threading.Lock()

    def get(self, key, build):
        with self._lock:
            if key in self._d:
                self._d.move_to_end(key)
                return self._d[key]
        val = build()
        with self._lock:
            self._d[key] = val
            while len(self._d) > self._size:
                self._d.popitem(last=False)
        return val


def _syndrome_table(comp, gx: np.ndarray, gz: np.ndarray) -> np.ndarray:
    """Packed syndromes of every outcome of one error component."""
    if isinstance(comp, LocalTable):
        q = list(comp.qubits)
        ex, ez = _local_bits(len(q))
        ax, az = gx[:, q], gz[:, q]
    else:
        ex, ez = pauli_bits(list(comp.paulis), gx.shape[1])
        ax, az = gx, gz
    bits = (ex.astype(np.int64) @ az.T.astype(np.int64) + ez.astype(np.int64) @ ax.T.astype(np.int64)) & 1
    return _pack_bits(bits.astype(np.uint8))


def _stack_tables(stack: _Stack, gx: np.ndarray, gz: np.ndarray) -> np.ndarray:
    """Syndrome tables ``(C, K, W)`` for a stack of components."""
    if stack.sparse:
        return _syndrome_table(stack.comps[0], gx, gz)[None]
    q = np.array([c.qubits for c in stack.comps])  # (C, k)
    ex, ez = _local_bits(q.shape[1])
    ax = gx[:, q].astype(np.int64)  # (r, C, k)
    az = gz[:, q].astype(np.int64)
    bits = (np.einsum("Kk,rCk->CKr", ex.astype(np.int64), az) + np.einsum("Kk,rCk->CKr", ez.astype(np.int64), ax)) & 1
    return _pack_bits(bits.astype(np.uint8))


def convolve_local(table: LocalTable, times: int) -> np.ndarray:
    """Distribution of the product of ``times`` independent draws."""
    return _convolve(table.probs[None], table.eigenvalues[None], times)[0]


def _convolve(probs: np.ndarray, eigs: np.ndarray, times: int) -> np.ndarray:
    if times == 1:
        return probs
    p = local_wht((eigs**times).T).T / probs.shape[1]
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=1, keepdims=True)


@dataclass(eq=False)
class _Stack:
    """Components of equal size stacked for vectorized draws."""

    comps: list
    probs: np.ndarray  # (C, K)
    sparse: bool

    @cached_property
    def eigs(self) -> np.ndarray:
        return np.stack([c.eigenvalues for c in self.comps])


def _stacks(components) -> list[_Stack]:
    by_size: dict[int, list] = {}
    out = []
    for comp in components:
        if isinstance(comp, SparseComponent):
            out.append(_Stack([comp], np.asarray(comp.probs)[None], True))
        else:
            by_size.setdefault(len(comp.probs), []).append(comp)
    for size in sorted(by_size):
        comps = by_size[size]
        out.append(_Stack(comps, np.stack([c.probs for c in comps]), False))
    return out


@dataclass
class _Block:
    cdf: np.ndarray  # (C, K)
    tables: np.ndarray  # (C, K, W)
    reps: int


@dataclass
class _Plan:
    blocks: list[_Block]
    offset: np.ndarray  # (W,)
    free: np.ndarray  # (a, W) uniformly random directions
    r: int


def _ideal_part(g: PauliGroup, h: PauliGroup, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Offset and free directions of the noiseless outcome distribution."""
    r = h.rank
    if g.basis == h.basis:
        return np.zeros(w, dtype=np.uint64), np.zeros((0, w), dtype=np.uint64)
    k = g.intersection(h)
    rows, rhs = [], []
    for kk in k.basis:
        beta_h = h.coordinates(kk)
        rows.append(beta_h)
        rhs.append(int(g.sign(g.coordinates(kk)) * h.sign(beta_h) == -1))
    u0 = gf2.solve(rows, rhs) if rows else 0
    free = gf2.nullspace(rows, r) if rows else [1 << j for j in range(r)]
    free_w = np.array([_int_to_words(v, w) for v in free], dtype=np.uint64).reshape(len(free), w)
    return _int_to_words(u0, w), free_w


class Simulator:
    """Pauli-frame simulator for one noise model with cached lookup tables."""

    def __init__(self, model: NoiseModel, method: str = "convolved"):
        if method not in ("convolved", "explicit"):
            raise ValueError(f"unknown method {method!r}")
        self.model = model
        self.method = method
        self._gate = _stacks(model.gate.components())
        self._spam = [st for ch in (model.prep, model.meas) if ch is not None for st in _stacks(ch.components())]
        self._tables = _Cache(128)
        self._cdfs = _Cache(64)
        self._ideal = _Cache(128)

    def _gate_cdfs(self, times: int) -> list[np.ndarray]:
        def build():
            out = []
            for st in self._gate:
                if st.sparse or self.method == "explicit":
                    out.append(np.cumsum(st.probs, axis=1))
                else:
                    out.append(np.cumsum(_convolve(st.probs, st.eigs, times), axis=1))
            return out

        return self._cdfs.get(times, build)

    def plan(self, g: PauliGroup, h: PauliGroup, m: int) -> _Plan:
        if g.n != self.model.n or h.n != self.model.n:
            raise DimensionMismatch("group size differs from noise model")
        if m < 0:
            raise ValueError("sequence length must be non-negative")
        if m > M_CAP:
            raise CapExceeded(f"m={m} exceeds {M_CAP}")

        def tables():
            gx, gz = pauli_bits(list(h.basis), self.model.n)
            return [_stack_tables(st, gx, gz) for st in self._gate + self._spam]

        tabs = self._tables.get(h.key(), tables)
        cdfs = self._gate_cdfs(m + 1)
        blocks = []
        spam_cdfs = [np.cumsum(st.probs, axis=1) for st in self._spam]
        reps = [m + 1 if (st.sparse or self.method == "explicit") else 1 for st in self._gate]
        for cdf, tab, rr in zip(cdfs + spam_cdfs, tabs, reps + [1] * len(self._spam)):
            # components commuting with all of H never change the outcome
            live = tab.any(axis=(1, 2))
            if live.all():
                blocks.append(_Block(cdf, tab, rr))
            elif live.any():
                blocks.append(_Block(cdf[live], tab[live], rr))
        w = _words(h.rank)
        offset, free = self._ideal.get((g.key(), h.key()), lambda: _ideal_part(g, h, w))
        return _Plan(blocks, offset, free, h.rank)


def build_plan(g: PauliGroup, h: PauliGroup, m: int, model: NoiseModel, method: str = "convolved") -> _Plan:
    return Simulator(model, method).plan(g, h, m)


def _draw(block: _Block, shots: int, rng: np.random.Generator) -> np.ndarray:
    c, k = block.cdf.shape
    w = block.tables.shape[2]
    acc = np.zeros((shots, w), dtype=np.uint64)
    cols = np.arange(c)
    for _ in range(block.reps):
        u = rng.random((shots, c))
        if k <= 64:
            idx = (u[:, :, None] >= block.cdf[None, :, :-1]).sum(axis=2)
        else:
            idx = np.empty((shots, c), dtype=np.int64)
            for j in range(c):
                idx[:, j] = np.searchsorted(block.cdf[j], u[:, j], side="right")
            np.minimum(idx, k - 1, out=idx)
        picked = block.tables[cols, idx]
        acc ^= picked[:, 0] if c == 1 else np.bitwise_xor.reduce(picked, axis=1)
    return acc


def sample_plan(plan: _Plan, shots: int, rng: np.random.Generator) -> np.ndarray:
    w = plan.offset.shape[0]
    out = np.broadcast_to(plan.offset, (shots, w)).copy()
    for block in plan.blocks:
        out ^= _draw(block, shots, rng)
    if len(plan.free):
        coins = rng.integers(0, 2, size=(shots, len(plan.free)), dtype=np.uint8).astype(bool)
        for j, vec in enumerate(plan.free):
            out[coins[:, j]] ^= vec
    return out


def sample_cb(g, h, m: int, model: NoiseModel, shots: int, rng: np.random.Generator, method: str = "convolved") -> np.ndarray:
    """Packed outcomes of ``shots`` runs, shape ``(shots, words)``."""
    return sample_plan(build_plan(g, h, m, model, method), shots, rng)


def run_cb(g, h, m: int, model: NoiseModel, rng: np.random.Generator, method: str = "convolved") -> int:
    """One run; the outcome is an integer whose bit ``j`` belongs to ``h``'s generator ``j``."""
    return words_to_int(sample_cb(g, h, m, model, 1, rng, method)[0])


@dataclass(frozen=True)
class CbHistogram:
    outcomes: np.ndarray  # (U, W) packed syndromes
    counts: np.ndarray
    r: int

    @classmethod
    def from_samples(cls, samples: np.ndarray, r: int) -> CbHistogram:
        if samples.shape[1] == 1:
            vals, counts = np.unique(samples[:, 0], return_counts=True)
            return cls(vals[:, None], counts, r)
        vals, counts = np.unique(samples, axis=0, return_counts=True)
        return cls(vals, counts, r)

    @property
    def shots(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {words_to_int(o): int(c) for o, c in zip(self.outcomes, self.counts)}

    def labels(self) -> dict[str, int]:
        """Outcome strings with character ``j`` for generator ``j``."""
        out = {}
        for s, c in sorted(self.as_dict().items()):
            out["".join(str(s >> j & 1) for j in range(self.r))] = c
        return out

    def dense(self) -> np.ndarray:
        if self.r > ENUMERATION_CAP:
            raise CapExceeded("too many outcomes for a dense histogram")
        out = np.zeros(1 << self.r, dtype=np.int64)
        for s, c in self.as_dict().items():
            out[s] += c
        return out


def _coefficient_elements(h: PauliGroup) -> list[PauliString]:
    if h.rank > ENUMERATION_CAP:
        raise CapExceeded("group too large for the exact likelihood")
    return [h.element(b) for b in range(h.order)]


def spam_coefficients(g: PauliGroup, h: PauliGroup, model: NoiseModel) -> np.ndarray:
    """``A_h`` for every ``h`` in ``H`` indexed by coefficient mask (Pauli SPAM)."""
    elems = _coefficient_elements(h)
    out = np.zeros(len(elems))
    for beta, e in enumerate(elems):
        gb = g.coordinates(e)
        if gb is not None:
            out[beta] = g.sign(gb) * h.sign(beta)
    for ch in (model.prep, model.gate, model.meas):
        if ch is not None:
            out *= ch.eigenvalues(elems)
    return out


def exact_likelihood(
    g: PauliGroup,
    h: PauliGroup,
    m: int,
    model: NoiseModel,
    spam: np.ndarray | None = None,
    eigenvalues: np.ndarray | None = None,
) -> np.ndarray:
    """Outcome distribution of ``RunCB(G, H, m)``, indexed like :func:`run_cb`.

    ``spam`` and ``eigenvalues`` override ``A_h`` and ``f_h`` (coefficient
    order), e.g. to plug in coefficients computed from dense matrices.
    """
    elems = _coefficient_elements(h)
    f = model.gate.eigenvalues(elems) if eigenvalues is None else np.asarray(eigenvalues, float)
    a = spam_coefficients(g, h, model) if spam is None else np.asarray(spam, float)
    return fwht(f**m * a) / h.order


def _projection_masks(g: PauliGroup, xs: Sequence[PauliString]) -> list[int]:
    out = []
    for x in xs:
        beta = g.coordinates(x)
        if beta is None:
            beta = sum(symplectic_form(x, d) << j for j, d in enumerate(g.destabilizers))
        out.append(beta)
    return out


def projection_masks(g: PauliGroup, xs: Sequence[PauliString]) -> np.ndarray:
    """Packed masks ``beta`` with ``(-1)**<x, z> = (-1)**(beta . s)``."""
    w = _words(g.rank)
    return np.array([_int_to_words(b, w) for b in _projection_masks(g, xs)], dtype=np.uint64).reshape(len(xs), w)


def v_from_histogram(hist: CbHistogram, masks: np.ndarray) -> np.ndarray:
    par = np.bitwise_count(hist.outcomes[None, :, :] & masks[:, None, :]).sum(axis=2) & 1
    signs = 1.0 - 2.0 * par
    return signs @ hist.counts / hist.shots


def estimator_v(xs, g: PauliGroup, t: int, m: int, model: NoiseModel, rng: np.random.Generator, method: str = "convolved") -> np.ndarray:
    """Empirical mean of ``(-1)**<x, z>`` over ``t`` runs of ``RunCB(G, G, m)``."""
    xs = parse_paulis(xs)
    hist = CbHistogram.from_samples(sample_cb(g, g, m, model, t, rng, method), g.rank)
    return v_from_histogram(hist, projection_masks(g, xs))


def _projected_means(g: PauliGroup, masks: list[int], m: int, model: NoiseModel) -> np.ndarray:
    uniq = sorted(set(masks))
    elems = [g.element(b) for b in uniq]
    a = np.ones(len(elems))
    for ch in (model.prep, model.gate, model.meas):
        if ch is not None:
            a *= ch.eigenvalues(elems)
    vals = model.gate.eigenvalues(elems) ** m * a
    lookup = dict(zip(uniq, vals))
    return np.array([lookup[b] for b in masks])


def predict_v_moments(xs, g: PauliGroup, m: int, model: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Mean and second moment of the single-shot estimator ``(-1)**<x, z>``."""
    xs = parse_paulis(xs)
    masks = _projection_masks(g, xs)
    mean = _projected_means(g, masks, m, model)
    pair = [a ^ b for a in masks for b in masks]
    second = _projected_means(g, pair, m, model).reshape(len(xs), len(xs))
    return mean, second


class Sampler:
    """Source of ``V`` estimates with measurement accounting.

    ``estimate(group, xs, m, t, stream)`` returns the estimate of ``V`` for
    each ``x`` from ``t`` runs of ``RunCB(group, group, m)``. ``stream`` is a
    tuple of non-negative ints naming the random stream, so results do not
    depend on evaluation order or thread count.
    """

    def __init__(self, model: NoiseModel, seed: int = 0, record: bool = False):
        self.model = model
        self.seed = int(seed)
        self.record = record
        self.records: list[dict] = []
        self.measurements = 0
        self.rounds = 0
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.model.n

    def _count(self, t: int) -> None:
        with self._lock:
            self.measurements += t
            self.rounds += 1

    def _rng(self, stream: tuple[int, ...], chunk: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(s) for s in stream) + (chunk,))
        return np.random.Generator(np.random.Philox(ss))

    def estimate(self, group: PauliGroup, xs: Sequence[PauliString], m: int, t: int, stream: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError

    def reset(self) -> None:
        self.measurements = 0
        self.rounds = 0
        self.records = []

    def sorted_records(self) -> list[dict]:
        return sorted(self.records, key=lambda r: (r["stream"], r["m"]))


class ShotSampler(Sampler):
    """Monte Carlo shots from the Pauli-frame simulator."""

    def __init__(self, model: NoiseModel, seed: int = 0, record: bool = False, method: str = "convolved"):
        super().__init__(model, seed, record)
        self.sim = Simulator(model, method)

    def histogram(self, g: PauliGroup, h: PauliGroup, m: int, t: int, stream: tuple[int, ...]) -> CbHistogram:
        plan = self.sim.plan(g, h, m)
        parts = []
        for chunk, start in enumerate(range(0, t, CHUNK)):
            parts.append(sample_plan(plan, min(CHUNK, t - start), self._rng(stream, chunk)))
        hist = CbHistogram.from_samples(np.concatenate(parts), h.rank)
        self._count(t)
        if self.record:
            rec = {
                "stream": list(stream),
                "prepare": [str(p) for p in g.basis],
                "measure": [str(p) for p in h.basis],
                "m": m,
                "t": t,
                "histogram": hist.labels(),
            }
            with self._lock:
                self.records.append(rec)
        return hist

    def estimate(self, group, xs, m, t, stream):
        hist = self.histogram(group, group, m, t, stream)
        return v_from_histogram(hist, projection_masks(group, xs))


class LikelihoodSampler(Sampler):
    """Multinomial draws from the exact outcome distribution."""

    def estimate(self, group, xs, m, t, stream):
        probs = np.clip(exact_likelihood(group, group, m, self.model), 0.0, None)
        counts = self._rng(stream, 0).multinomial(t, probs / probs.sum())
        self._count(t)
        nz = np.nonzero(counts)[0]
        hist = CbHistogram(nz.astype(np.uint64)[:, None], counts[nz], group.rank)
        return v_from_histogram(hist, projection_masks(group, xs))


class ExactSampler(Sampler):
    """Infinite-shot limit: returns the mean of the estimator exactly."""

    def estimate(self, group, xs, m, t, stream):
        self._count(t)
        xs = parse_paulis(xs)
        return _projected_means(group, _projection_masks(group, xs), m, self.model) if xs else np.zeros(0)
