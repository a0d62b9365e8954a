"""Dense-matrix reference implementations for small registers.

Everything here works with explicit ``2**n x 2**n`` matrices and is meant as
an independent check of the symplectic code paths. Use ``n <= 4``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

from .channel import DenseChannel, PauliChannel
from .errors import CapExceeded, DimensionMismatch
from .pauli import PauliGroup, PauliString, all_paulis

ORACLE_CAP = 4
SEQUENCE_CAP = 4**8

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _guard(n: int) -> None:
    if n > ORACLE_CAP:
        raise CapExceeded(f"dense oracle limited to n <= {ORACLE_CAP}")


def pauli_matrix(p: PauliString | str) -> np.ndarray:
    """Hermitian matrix ``i**(x.z) X^x Z^z``; qubit 0 is the leftmost tensor factor."""
    if isinstance(p, str):
        p = PauliString.from_label(p)
    _guard(p.n)
    mats = []
    for j in range(p.n):
        bx, bz = p.x >> j & 1, p.z >> j & 1
        m = (_X if bx else _I2) @ (_Z if bz else _I2)
        mats.append(m * (1j if bx and bz else 1))
    return reduce(np.kron, mats, np.eye(1, dtype=complex))


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> tuple[np.ndarray, ...]:
    return tuple(pauli_matrix(p) for p in all_paulis(n))


@dataclass
class KrausPair:
    """Map ``rho -> sum_k A_k rho B_k^dagger``; completely positive when ``A = B``."""

    left: list[np.ndarray]
    right: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.left = [np.asarray(a, dtype=complex) for a in self.left]
        self.right = [np.asarray(b, dtype=complex) for b in self.right] or list(self.left)
        if not self.left or len(self.left) != len(self.right):
            raise DimensionMismatch("left and right operator lists differ in length")
        d = self.left[0].shape[0]
        if d & (d - 1) or any(op.shape != (d, d) for op in self.left + self.right):
            raise DimensionMismatch("Kraus operators must be square with a power-of-two size")

    def is_trace_preserving(self, tol: float = 1e-10) -> bool:
        total = sum(b.conj().T @ a for a, b in zip(self.left, self.right))
        return bool(np.allclose(total, np.eye(self.dim), atol=tol))

    @property
    def dim(self) -> int:
        return self.left[0].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(a @ rho @ b.conj().T for a, b in zip(self.left, self.right))

    def adjoint(self, e: np.ndarray) -> np.ndarray:
        return sum(b.conj().T @ e @ a for a, b in zip(self.left, self.right))

    def superoperator(self) -> np.ndarray:
        """Matrix acting on column-stacked vectors."""
        return sum(np.kron(b.conj(), a) for a, b in zip(self.left, self.right))


def pauli_kraus(ch: PauliChannel) -> KrausPair:
    rates = ch.dense_rates()
    basis = pauli_basis(ch.n)
    ops = [np.sqrt(max(r, 0.0)) * basis[i] for i, r in enumerate(rates) if r > 0]
    return KrausPair(ops)


def _as_kraus(op, n: int) -> KrausPair | None:
    if op is None:
        return None
    if isinstance(op, KrausPair):
        return op
    if isinstance(op, PauliChannel):
        return pauli_kraus(op)
    raise TypeError(f"unsupported map {type(op).__name__}")


def pauli_twirl(kraus: KrausPair) -> DenseChannel:
    """Pauli-twirled rates ``p_a = sum_k l_{k,a} conj(r_{k,a})`` (possibly signed)."""
    d = kraus.dim
    n = d.bit_length() - 1
    _guard(n)
    basis = pauli_basis(n)
    rates = np.zeros(len(basis))
    for a_op, b_op in zip(kraus.left, kraus.right):
        la = np.array([np.trace(p @ a_op) for p in basis]) / d
        rb = np.array([np.trace(p @ b_op) for p in basis]) / d
        rates += (la * rb.conj()).real
    return DenseChannel(n, rates, signed=True)


def pauli_transfer_matrix(kraus: KrausPair) -> np.ndarray:
    """``R[a, b] = Tr(P_a L(P_b)) / d`` in lexicographic Pauli order."""
    d = kraus.dim
    basis = pauli_basis(d.bit_length() - 1)
    return np.array([[np.trace(pa @ kraus.apply(pb)).real / d for pb in basis] for pa in basis])


def dense_eigenvalues(kraus: KrausPair, paulis: Sequence[PauliString]) -> np.ndarray:
    d = kraus.dim
    return np.array([np.trace(pauli_matrix(h) @ kraus.apply(pauli_matrix(h))).real / d for h in paulis])


def stabilizer_projector(group: PauliGroup, signs: int = 0) -> np.ndarray:
    """``prod_j (I + (-1)**s_j P_{g_j}) / 2`` for the generator matrices."""
    _guard(group.n)
    d = 2**group.n
    out = np.eye(d, dtype=complex)
    for j, g in enumerate(group.basis):
        sgn = -1 if signs >> j & 1 else 1
        out = out @ (np.eye(d) + sgn * pauli_matrix(g)) / 2
    return out


def stabilizer_state(group: PauliGroup, signs: int = 0) -> np.ndarray:
    proj = stabilizer_projector(group, signs)
    return proj / np.trace(proj).real


def _noisy_state(g: PauliGroup, prep: KrausPair | None) -> np.ndarray:
    rho = stabilizer_state(g)
    return prep.apply(rho) if prep is not None else rho


def _noisy_effects(h: PauliGroup, meas: KrausPair | None) -> list[np.ndarray]:
    effects = [stabilizer_projector(h, s) for s in range(h.order)]
    return [meas.adjoint(e) for e in effects] if meas is not None else effects


def brute_force_cb_distribution(g: PauliGroup, h: PauliGroup, m: int, gate, prep=None, meas=None) -> np.ndarray:
    """Exact outcome distribution of ``RunCB(G, H, m)`` from dense matrices.

    All ``4**(n(m+1))`` Pauli sequences are enumerated explicitly, one dense
    state per sequence, when that count is at most ``SEQUENCE_CAP``. Larger
    cases fall back to :func:`brute_force_cb_dp`. ``gate``, ``prep`` and
    ``meas`` are :class:`KrausPair` or Pauli channels.
    """
    _guard(g.n)
    if 4 ** (g.n * (m + 1)) > SEQUENCE_CAP:
        return brute_force_cb_dp(g, h, m, gate, prep, meas)
    n = g.n
    gate_k = _as_kraus(gate, n)
    mats = np.array(pauli_basis(n))
    syn = np.array([h.syndrome(p) for p in all_paulis(n)])
    a_ops = np.array(gate_k.left)
    b_ops = np.array(gate_k.right).conj()
    states = _noisy_state(g, _as_kraus(prep, n))[None]
    acc = np.zeros(1, dtype=np.int64)
    for _ in range(m + 1):
        after = np.einsum("kij,sjl,kml->sim", a_ops, states, b_ops)
        states = np.einsum("pij,sjk,plk->spil", mats, after, mats.conj()).reshape(-1, *after.shape[1:])
        acc = (acc[:, None] ^ syn[None, :]).reshape(-1)
    effects = np.array(_noisy_effects(h, _as_kraus(meas, n)))
    # tr(E_b rho_s) for every sequence s and outcome b
    probs = np.einsum("bij,sji->sb", effects, states).real / len(syn) ** (m + 1)
    out = np.zeros(h.order)
    for b in range(h.order):
        np.add.at(out, b ^ acc, probs[:, b])
    return out


def brute_force_cb_dp(g: PauliGroup, h: PauliGroup, m: int, gate, prep=None, meas=None) -> np.ndarray:
    """Same distribution, summing sequences by linearity per accumulated syndrome."""
    n = g.n
    _guard(n)
    gate_k = _as_kraus(gate, n)
    prep_k = _as_kraus(prep, n)
    meas_k = _as_kraus(meas, n)
    paulis = all_paulis(n)
    mats = pauli_basis(n)
    syn = [h.syndrome(p) for p in paulis]
    r = h.order
    states = np.zeros((r,) + (2**n, 2**n), dtype=complex)
    states[0] = _noisy_state(g, prep_k)
    for _ in range(m + 1):
        nxt = np.zeros_like(states)
        for c in range(r):
            if not np.any(states[c]):
                continue
            after = gate_k.apply(states[c])
            for s, pm in zip(syn, mats):
                nxt[c ^ s] += pm @ after @ pm
        states = nxt / len(paulis)
    effects = _noisy_effects(h, meas_k)
    out = np.zeros(r)
    for c in range(r):
        for b, e in enumerate(effects):
            out[b ^ c] += np.trace(e @ states[c]).real
    return out


def brute_force_cb_sequences(g: PauliGroup, h: PauliGroup, m: int, gate, prep=None, meas=None) -> np.ndarray:
    """Same distribution by literal enumeration of all ``4**(n(m+1))`` sequences."""
    n = g.n
    if 4 ** (n * (m + 1)) > 4**8:
        raise CapExceeded("too many sequences to enumerate")
    gate_k = _as_kraus(gate, n)
    paulis = all_paulis(n)
    mats = pauli_basis(n)
    effects = _noisy_effects(h, _as_kraus(meas, n))
    rho0 = _noisy_state(g, _as_kraus(prep, n))
    out = np.zeros(h.order)
    weight = 1.0 / len(paulis) ** (m + 1)

    def walk(rho, depth, acc):
        if depth == m + 1:
            s = h.syndrome(acc)
            for b, e in enumerate(effects):
                out[b ^ s] += weight * np.trace(e @ rho).real
            return
        after = gate_k.apply(rho)
        for p, pm in zip(paulis, mats):
            walk(pm @ after @ pm, depth + 1, acc * p)

    walk(rho0, 0, PauliString.identity(n))
    return out


def dense_spam_coefficients(g: PauliGroup, h: PauliGroup, gate, prep=None, meas=None) -> np.ndarray:
    """``A_h`` for every coefficient mask of ``H`` from dense matrices."""
    n = g.n
    d = 2**n
    gate_k = _as_kraus(gate, n)
    effects = _noisy_effects(h, _as_kraus(meas, n))
    state = gate_k.apply(_noisy_state(g, _as_kraus(prep, n)))
    out = np.zeros(h.order)
    for beta in range(h.order):
        pm = pauli_matrix(h.element(beta))
        right = np.trace(pm @ state)
        left = np.array([np.trace(e @ pm) for e in effects])
        signs = np.array([1 - 2 * ((beta & b).bit_count() & 1) for b in range(h.order)])
        out[beta] = (np.sum(signs * left) * right).real / d
    return out


def exact_norms(p: np.ndarray, q: np.ndarray) -> dict[str, float]:
    """Vector norms of ``p - q``; ``diamond`` is the Pauli-channel value ``l1 / 2``."""
    if np.size(p) > 4**10:
        raise CapExceeded("exact norms limited to 4**10 entries")
    diff = np.asarray(p, float) - np.asarray(q, float)
    return {
        "l1": float(np.abs(diff).sum()),
        "l2": float(np.sqrt((diff**2).sum())),
        "linf": float(np.abs(diff).max()),
        "diamond": float(np.abs(diff).sum() / 2),
    }


def random_unitary_kraus(n: int, rng: np.random.Generator, strength: float = 0.1) -> KrausPair:
    """Near-identity coherent error ``exp(i strength H)`` with random Hermitian ``H``."""
    d = 2**n
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    herm = (a + a.conj().T) / 2
    w, v = np.linalg.eigh(herm)
    return KrausPair([v @ np.diag(np.exp(1j * strength * w)) @ v.conj().T])


def amplitude_damping(n: int, gamma: float) -> KrausPair:
    """Independent amplitude damping on every qubit."""
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    ops = [np.eye(1, dtype=complex)]
    for _ in range(n):
        ops = [np.kron(o, k) for o in ops for k in (k0, k1)]
    return KrausPair(ops)


def compose(first: KrausPair, second: KrausPair) -> KrausPair:
    """Kraus form of ``second`` after ``first`` (CP maps only)."""
    return KrausPair([b @ a for a in first.left for b in second.left])
