"""Regenerate ``tests/golden/oracle_values.json`` from the dense-matrix oracle.

Every value here comes from explicit matrices or plain arithmetic, never from
the fast symplectic or Walsh-Hadamard code paths that the tests exercise.

    python3 scripts/make_golden.py
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import numpy as np

from pauliprobe.channel import DenseChannel, FactoredChannel, depolarizing, local_rates
from pauliprobe.oracle import (
    KrausPair,
    brute_force_cb_distribution,
    dense_eigenvalues,
    dense_spam_coefficients,
    pauli_kraus,
    pauli_matrix,
    pauli_transfer_matrix,
    pauli_twirl,
)
from pauliprobe.pauli import PauliGroup, PauliString, all_paulis

OUT = Path(__file__).resolve().parent.parent / "tests" / "golden" / "oracle_values.json"


def commutes(a: str, b: str) -> bool:
    ma, mb = pauli_matrix(a), pauli_matrix(b)
    return bool(np.allclose(ma @ mb, mb @ ma))


def labels(n: int) -> list[str]:
    return [p.label for p in all_paulis(n)]


def sign_table(n: int) -> np.ndarray:
    ls = labels(n)
    return np.array([[1.0 if commutes(a, b) else -1.0 for b in ls] for a in ls])


def span_labels(gens: list[str]) -> list[str]:
    """Explicit span by multiplying matrices and matching them up to phase."""
    n = len(gens[0])
    basis = {lab: pauli_matrix(lab) for lab in labels(n)}
    found = set()
    for bits in itertools.product((0, 1), repeat=len(gens)):
        m = np.eye(2**n, dtype=complex)
        for b, g in zip(bits, gens):
            if b:
                m = m @ pauli_matrix(g)
        for lab, pm in basis.items():
            if abs(abs(np.trace(pm.conj().T @ m)) - 2**n) < 1e-9:
                found.add(lab)
    return sorted(found, key=labels(n).index)


def algebra() -> dict:
    ls2 = labels(2)
    return {
        "commute_n2": {f"{a},{b}": commutes(a, b) for a in ls2 for b in ls2},
        "form_XZ_ZX": 0 if commutes("XZ", "ZX") else 1,
        "span_XX_ZZ": span_labels(["XX", "ZZ"]),
        "commutant_Z": [lab for lab in labels(1) if commutes(lab, "Z")],
        "syndrome_ZZ_XX_on_XI": [0 if commutes(g, "XI") else 1 for g in ("ZZ", "XX")],
    }


def transforms() -> dict:
    s1 = sign_table(1)
    zflip = np.array([0.9, 0.0, 0.0, 0.1])
    f = np.array([1.0, 0.8, 0.8, 1.0])
    return {
        "wh_zflip": (s1 @ zflip).tolist(),
        "inverse_zflip": (np.linalg.solve(s1, f)).tolist(),
        "sign_table_n2": sign_table(2).tolist(),
    }


def channels() -> dict:
    dep = pauli_kraus(DenseChannel(1, [0.97, 0.01, 0.01, 0.01]))
    f_x = pauli_transfer_matrix(dep)[1, 1]
    q = 0.1
    cells = {}
    for name, single in (("zflip", [1 - q, 0, 0, q]), ("xflip", [1 - q, q, 0, 0])):
        prod = np.kron(single, single)
        # cells of <ZI, IZ>: bit j set when the Pauli anticommutes with generator j
        out = [0.0] * 4
        for lab, r in zip(labels(2), prod):
            s = sum((0 if commutes(g, lab) else 1) << j for j, g in enumerate(("ZI", "IZ")))
            out[s] += r
        cells[name] = out
    chain = FactoredChannel(
        4,
        [local_rates((0, 1), {"ZZ": 0.02, "XI": 0.01}), local_rates((1, 2), {"ZZ": 0.03}), local_rates((2, 3), {"YX": 0.01})]
        + list(depolarizing(4, 0.01).factors),
    )
    # compose the embedded factors as dense transfer matrices, then invert f -> p
    code = {c: i for i, c in enumerate("IXYZ")}
    ptm = np.eye(4**4)
    for f in chain.factors:
        ops = []
        for lab in labels(4):
            if any(lab[q] != "I" for q in range(4) if q not in f.qubits):
                continue
            local = 0
            for q in f.qubits:
                local = 4 * local + code[lab[q]]
            if f.probs[local] > 0:
                ops.append(math.sqrt(f.probs[local]) * pauli_matrix(lab))
        ptm = pauli_transfer_matrix(KrausPair(ops)) @ ptm
    dense = np.linalg.solve(sign_table(4), np.diag(ptm)).reshape((4,) * 4)
    block = dense.sum(axis=(0, 3)).ravel()
    return {
        "depol_fX": float(f_x),
        "pair_cells": cells,
        "chain_block_12": block.tolist(),
        "chain_identity_rate": float(dense.ravel()[0]),
        "chain_dense_sum": float(dense.sum()),
    }


def _brute(g, h, m, gate, prep=None, meas=None) -> list[float]:
    return brute_force_cb_distribution(g, h, m, gate, prep, meas).tolist()


def likelihoods() -> dict:
    gz = PauliGroup(["Z"])
    xflip = DenseChannel(1, [0.9, 0.1, 0.0, 0.0])
    out = {
        "xflip_m0": _brute(gz, gz, 0, xflip),
        "xflip_m2": _brute(gz, gz, 2, xflip),
        "spam_prep_xflip_AZ": dense_spam_coefficients(gz, gz, pauli_kraus(DenseChannel(1, [1, 0, 0, 0])), prep=xflip).tolist(),
    }
    rng = np.random.default_rng(7)
    cases = []
    for i in range(6):
        n = 1 + i % 2
        m = i % 4
        probs = rng.dirichlet(np.ones(4**n)) * 0.2
        probs[0] += 0.8
        gate = DenseChannel(n, probs)
        g = PauliGroup(["Z" * n] if n == 1 else ["ZI", "IZ"]) if i % 3 else PauliGroup(["X" * n])
        h = g if i % 2 == 0 else PauliGroup(["Z" * n])
        cases.append(
            {
                "n": n,
                "m": m,
                "probs": probs.tolist(),
                "g": [str(p) for p in g.basis],
                "h": [str(p) for p in h.basis],
                "dist": _brute(g, h, m, gate),
            }
        )
    out["random_cases"] = cases
    return out


def twirls() -> dict:
    out = {}
    for theta in (0.3, 1.1):
        u = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * pauli_matrix("X")
        # independent cross-check: average P U P over the Paulis
        kraus = KrausPair([u])
        avg = sum(pm @ u @ pm.conj().T for pm in (pauli_matrix(lab) for lab in labels(1))) / 4
        out[f"rotation_{theta}"] = {
            "rates": pauli_twirl(kraus).dense_rates().tolist(),
            "expected": [math.cos(theta / 2) ** 2, math.sin(theta / 2) ** 2, 0.0, 0.0],
            "avg_identity_overlap": float(abs(np.trace(avg)) ** 2 / 4),
        }
    return out


def arithmetic() -> dict:
    return {
        "budget_group_1696": math.ceil(200 * math.log(4800)),
        "budget_group_4": round(2 * math.log(math.e**2)),
        "subset_probes_618": math.ceil(100 * math.log(480)),
        "ratio_example": {"m": 16, "r": 1 - (0.9**16) ** (1 / 16)},
        "loglemma": {"lhs": abs(math.log(0.9)), "rhs": 0.1 / math.sqrt(0.9)},
        "diamond_097": {"diamond": 0.03, "r_avg": 0.03 / 1.5},
        "eigs_random_unitary": dense_eigenvalues(
            KrausPair([np.diag([1, np.exp(0.2j)])]), [PauliString.from_label(lab) for lab in labels(1)]
        ).tolist(),
    }


def main() -> None:
    data = {
        "algebra": algebra(),
        "transforms": transforms(),
        "channels": channels(),
        "likelihoods": likelihoods(),
        "twirls": twirls(),
        "arithmetic": arithmetic(),
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
