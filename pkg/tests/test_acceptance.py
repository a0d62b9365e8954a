"""Acceptance criteria, one test per criterion.

Each test records ``(passed, detail)`` in ``conftest.ACCEPTANCE``; the
terminal summary prints one line per criterion. Statistical criteria use
the shot-level simulator and fixed seeds.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from pauliprobe.channel import DenseChannel, FactoredChannel, depolarizing, local_rates, marginal_channel
from pauliprobe.covering import cover_mub, symplectic_reduce
from pauliprobe.estimators import (
    DEFAULT_KAPPA,
    estimate_subset,
    ratio,
    reconstruct_group,
    sample_budget_group,
    sample_budget_sparse,
    tree_reconstruction,
)
from pauliprobe.factor_field import (
    FactorGraph,
    GibbsField,
    bound_diagnostics,
    canonical_estimator_pipeline,
    canonical_potentials,
    chain_field,
    exact_closure_marginals,
)
from pauliprobe.oracle import (
    amplitude_damping,
    brute_force_cb_distribution,
    compose,
    dense_eigenvalues,
    dense_spam_coefficients,
    pauli_kraus,
    random_unitary_kraus,
)
from pauliprobe.pauli import PauliGroup, PauliString, all_paulis, commutant, sign_matrix, wh_apply
from pauliprobe.simulator import NoiseModel, ShotSampler, exact_likelihood, sample_cb

pytestmark = pytest.mark.acceptance
stats = pytest.importorskip("scipy.stats")

EPS, DELTA = 0.1, 0.05
DEPOL4 = depolarizing(4, 0.01)
PAIR = PauliGroup.full(4, [0, 1])
WEIGHT1_10 = [PauliString.single(10, j, c) for j in range(10) for c in "XYZ"]
PLANTED = "XYZZ"


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    assert ok, detail


def random_channel(n, rng, noise):
    p = rng.dirichlet(np.ones(4**n)) * noise
    p[0] += 1 - noise
    return DenseChannel(n, p)


def random_stabilizer(n, rng):
    """Random isotropic group: a random subgroup of a random MUB group."""
    groups = cover_mub(all_paulis(n)).groups
    elems = groups[rng.integers(len(groups))].elements()[1:]
    rank = int(rng.integers(1, n + 1))
    gens = []
    for i in rng.permutation(len(elems)):
        if PauliGroup.spanned_by(gens + [elems[i]], n=n).rank > len(gens):
            gens.append(elems[i])
        if len(gens) == rank:
            break
    return PauliGroup(gens)


def max_weight1_eigenvalue(ch, n):
    return max(ch.eigenvalue(PauliString.single(n, j, c)) for j in range(n) for c in "XYZ")


def planted_channel(n):
    qs = tuple(range(4))
    return FactoredChannel(n, list(depolarizing(n, 0.005).factors) + [local_rates(qs, {PLANTED: 0.02})])


# criterion runners shared with the determinism check


def run_ratio(seed, workers=1):
    xs = all_paulis(4)[1:]
    t = sample_budget_group(EPS, DELTA, len(xs), DEFAULT_KAPPA).t
    return ratio(cover_mub(xs), xs, t, ShotSampler(NoiseModel(DEPOL4), seed=seed), workers=workers)


def run_group(seed, workers=1):
    s = ShotSampler(NoiseModel(DEPOL4), seed=seed)
    return reconstruct_group(PAIR, s, epsilon=EPS, delta=DELTA, workers=workers), s


def run_subset(seed, workers=1):
    s = ShotSampler(NoiseModel(depolarizing(10, 0.01)), seed=seed)
    return estimate_subset(WEIGHT1_10, 0.1, 0.1, s, workers=workers)


def run_tree(n, seed, u=128, t=1000, workers=1):
    s = ShotSampler(NoiseModel(planted_channel(n)), seed=seed)
    return tree_reconstruction(n, u, 4, t, s, workers=workers), s


def zz_chain(n):
    """Correlated ``ZZ`` noise (1%) on neighbours plus 0.5% local depolarizing."""
    return FactoredChannel(n, [local_rates((j, j + 1), {"ZZ": 0.01}) for j in range(n - 1)] + list(depolarizing(n, 0.005).factors))


def chain_truth():
    """Markov chain whose neighbouring pairs follow the two-qubit ``zz_chain``."""
    return chain_field(8, zz_chain(2).dense_rates().reshape(4, 4))


def run_pipeline(field, seed, workers=1):
    s = ShotSampler(NoiseModel(field.to_channel()), seed=seed)
    return canonical_estimator_pipeline(field.graph, EPS, DELTA, s, truth=field.dense(), workers=workers)


def fingerprint(obj):
    """Canonical bytes of a result for byte-level comparison."""

    def plain(v):
        if isinstance(v, dict):
            return {str(k): plain(x) for k, x in sorted(v.items(), key=lambda kv: str(kv[0]))}
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        if isinstance(v, np.ndarray):
            return v.tobytes().hex()
        if isinstance(v, (float, np.floating)):
            return float(v).hex()
        if isinstance(v, (int, np.integer, str, bool)) or v is None:
            return v if not isinstance(v, np.integer) else int(v)
        return str(v)

    return json.dumps(plain(obj), sort_keys=True).encode()


class TestAcceptance:
    def test_01_exact_algebra(self):
        start = time.perf_counter()
        rng = np.random.default_rng(1)
        # orthogonality of the symplectic characters, exhaustive
        for n in (1, 2, 3):
            ps = all_paulis(n)
            s = sign_matrix(ps, ps)
            assert np.array_equal(s @ s.T, 4**n * np.eye(4**n, dtype=s.dtype))
        # Walsh-Hadamard isometry on random subgroups
        iso = 0
        for _ in range(200):
            n = int(rng.integers(1, 5))
            gens = [PauliString.from_index(n, int(i)) for i in rng.integers(0, 4**n, size=rng.integers(1, 5))]
            g = PauliGroup.spanned_by(gens, n=n)
            elems = g.elements()
            reps = [g.representative(s) for s in range(g.order)]
            v = rng.normal(size=len(elems))
            w = wh_apply(reps, elems, v)
            assert np.isclose(w @ w, len(elems) * (v @ v))
            assert np.allclose(sign_matrix(elems, reps) @ w / len(elems), v)
            # double commutant
            assert commutant(commutant(g)).same_span(g)
            iso += 1
        # MUB covering size and coverage
        covers = 0
        for _ in range(100):
            n = int(rng.integers(1, 5))
            targets = [PauliString.from_index(n, int(i)) for i in rng.integers(0, 4**n, size=rng.integers(1, 7))]
            cov = cover_mub(targets)
            cov.verify(targets)
            pairs, _ = symplectic_reduce(targets)
            assert len(cov) == (2 ** len(pairs) + 1 if pairs else 1)
            assert all(g.is_isotropic() for g in cov)
            covers += 1
        for n in (1, 2, 3, 4):
            assert len(cover_mub(all_paulis(n))) == 2**n + 1
        elapsed = time.perf_counter() - start
        record("1 exact algebra", elapsed < 30, f"orthogonality n<=3, {iso} isometry/commutant groups, {covers} coverings in {elapsed:.1f}s")

    def test_02_likelihood_vs_brute_force(self):
        start = time.perf_counter()
        rng = np.random.default_rng(2)
        worst, cases = 0.0, 0
        for k in range(60):
            n = int(rng.integers(1, 3))
            m = int(rng.integers(0, 4))
            g, h = random_stabilizer(n, rng), random_stabilizer(n, rng)
            if k % 2:
                # non-Pauli noise enters through dense SPAM coefficients and eigenvalues
                gate = compose(random_unitary_kraus(n, rng, 0.3), amplitude_damping(n, float(rng.uniform(0, 0.1))))
                prep = pauli_kraus(random_channel(n, rng, 0.05))
                meas = random_unitary_kraus(n, rng, 0.1)
                brute = brute_force_cb_distribution(g, h, m, gate, prep, meas)
                elems = [h.element(b) for b in range(h.order)]
                exact = exact_likelihood(
                    g,
                    h,
                    m,
                    NoiseModel(depolarizing(n, 0.0)),
                    spam=dense_spam_coefficients(g, h, gate, prep, meas),
                    eigenvalues=dense_eigenvalues(gate, elems),
                )
            else:
                model = NoiseModel(random_channel(n, rng, 0.2), random_channel(n, rng, 0.05), random_channel(n, rng, 0.05))
                brute = brute_force_cb_distribution(g, h, m, model.gate, model.prep, model.meas)
                exact = exact_likelihood(g, h, m, model)
            worst = max(worst, float(np.abs(brute - exact).max()))
            cases += 1
        elapsed = time.perf_counter() - start
        record("2 likelihood equivalence", worst <= 1e-12 and elapsed < 300, f"{cases} models, max |diff| {worst:.1e}, {elapsed:.1f}s")

    def test_03_monte_carlo_fidelity(self):
        start = time.perf_counter()
        rng = np.random.default_rng(3)
        pvalues = []
        for k in range(20):
            n = 1 + k % 3
            m = (0, 1, 4, 16)[k % 4]
            g, h = random_stabilizer(n, rng), random_stabilizer(n, rng)
            model = NoiseModel(random_channel(n, rng, 0.1), random_channel(n, rng, 0.03), random_channel(n, rng, 0.03))
            probs = np.clip(exact_likelihood(g, h, m, model), 0, None)
            samples = sample_cb(g, h, m, model, 100_000, np.random.default_rng(1000 + k))[:, 0].astype(np.int64)
            counts = np.bincount(samples, minlength=len(probs))
            keep = probs > 0
            assert counts[~keep].sum() == 0
            if keep.sum() < 2:
                pvalues.append(1.0)
                continue
            pvalues.append(float(stats.chisquare(counts[keep], probs[keep] * len(samples)).pvalue))
        elapsed = time.perf_counter() - start
        ok = min(pvalues) > 1e-3 and elapsed < 120
        record("3 Monte Carlo fidelity", ok, f"20 scenarios, t=1e5, min p-value {min(pvalues):.3g}, {elapsed:.1f}s")

    def test_04_ratio_precision(self):
        start = time.perf_counter()
        xs = all_paulis(4)[1:]
        truth = {x: 1 - DEPOL4.eigenvalue(x) for x in xs}
        errs = {x: [] for x in xs if truth[x] >= 1e-3}
        kappa_ok, mmax_ok = True, True
        gap = 1 - max_weight1_eigenvalue(DEPOL4, 4)
        m_max = 0
        for rep in range(200):
            res = run_ratio(rep)
            for x in errs:
                errs[x].append(abs(res.r_hat[x] - truth[x]) / truth[x])
            lengths = res.decay_lengths
            m_max = max(m_max, max(lengths))
            kappa_ok &= len(lengths) <= math.log2(max(lengths)) + 1
            mmax_ok &= max(lengths) <= 64 / gap
        q95 = max(float(np.quantile(v, 0.95)) for v in errs.values())
        elapsed = time.perf_counter() - start
        ok = q95 <= 10 * EPS and kappa_ok and mmax_ok and elapsed < 600
        record("4 ratio precision", ok, f"worst 95th pct rel err {q95:.3f} (<= {10 * EPS}), m_max {m_max} (<= {64 / gap:.0f}), |kappa| ok {kappa_ok}, {elapsed:.0f}s")

    def test_05_group_reconstruction(self):
        start = time.perf_counter()
        truth = marginal_channel(DEPOL4, PAIR).probs
        r_g = max(1 - DEPOL4.eigenvalue(x) for x in PAIR.elements()[1:])
        hits, rounds_ok = 0, True
        worst = 0.0
        for rep in range(50):
            rec, sampler = run_group(rep)
            err = float(np.linalg.norm(rec.marginal.probs - truth))
            worst = max(worst, err)
            hits += err <= 10 * EPS * r_g
            rounds_ok &= rec.ratio.rounds == len(rec.ratio.kappa) * 5 == sampler.rounds
        elapsed = time.perf_counter() - start
        ok = hits >= 0.95 * 50 and rounds_ok and elapsed < 600
        record("5 group reconstruction", ok, f"{hits}/50 within 10*eps*r_G={10 * EPS * r_g:.4f} (worst {worst:.4f}), rounds=|kappa|*5 {rounds_ok}, {elapsed:.0f}s")

    def test_06_sparse_estimation(self):
        start = time.perf_counter()
        ch = depolarizing(10, 0.01)
        bound = 10 * 0.1 * (1 - ch.identity_rate())
        probes, t = sample_budget_sparse(0.1, 0.1, 30, DEFAULT_KAPPA)
        assert probes == math.ceil(100 * math.log(4 * 30 / 0.1))
        assert t == math.ceil(100 * math.log(4 * probes * DEFAULT_KAPPA / 0.1))
        hits, counts_ok, worst = 0, True, 0.0
        for rep in range(50):
            est = run_subset(rep)
            err = max(abs(est.p_hat[a] - ch.rate(a)) for a in WEIGHT1_10)
            worst = max(worst, err)
            hits += err <= bound
            counts_ok &= len(est.probes) == probes and est.t == t
        elapsed = time.perf_counter() - start
        ok = hits >= 0.95 * 50 and counts_ok and elapsed < 900
        record("6 sparse estimation", ok, f"{hits}/50 within {bound:.4f} (worst {worst:.4f}), |X|={probes}, t={t}, {elapsed:.0f}s")

    def test_07_tree_reconstruction(self):
        start = time.perf_counter()
        planted = PauliString.from_label(PLANTED)
        hits = 0
        for rep in range(50):
            res, _ = run_tree(4, rep)
            hits += planted in res.selected and abs(res.p_hat[planted] - 0.02) <= 0.005
        cs = {}
        for n in (4, 8, 16):
            res, sampler = run_tree(n, 0, u=16, t=200)
            gap = 1 - max_weight1_eigenvalue(planted_channel(n), n)
            cs[n] = sampler.measurements / (16 * 200 * n * math.log(1 / gap))
        mean = float(np.mean(list(cs.values())))
        stable = all(abs(c - mean) <= 0.2 * mean for c in cs.values())
        elapsed = time.perf_counter() - start
        detail = ", ".join(f"C(n={n})={c:.2f}" for n, c in cs.items())
        record("7 tree reconstruction", hits >= 0.8 * 50 and stable, f"planted error recovered {hits}/50; {detail}; {elapsed:.0f}s")

    def test_08_hammersley_clifford(self):
        start = time.perf_counter()
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 9))
            nu = int(rng.integers(1, 4))
            g = FactorGraph.random(n, n, nu, rng)
            field = GibbsField.random(g, rng)
            p = field.dense()
            q = canonical_potentials(exact_closure_marginals(p, g), g).dense()
            worst = max(worst, float(np.abs(p - q).sum()))
        elapsed = time.perf_counter() - start
        record("8 Hammersley-Clifford roundtrip", worst <= 1e-9 and elapsed < 300, f"100 fields, max l1 {worst:.1e}, {elapsed:.1f}s")

    def test_09_bound_suite(self):
        start = time.perf_counter()
        rng = np.random.default_rng(9)
        failures, count = [], 0
        for k in range(120):
            n = int(rng.integers(2, 9))
            g = FactorGraph.chain(n) if k % 2 else FactorGraph.random(n, n, int(rng.integers(1, 4)), rng)
            field = GibbsField.random(g, rng, scale=float(rng.uniform(0.2, 1.0)), bias=float(rng.uniform(0.0, 3.0)))
            p = field.dense()
            noise = float(rng.uniform(0.0, 0.1))
            tables = {}
            for c, t in exact_closure_marginals(p, g).items():
                t = t * np.exp(rng.normal(scale=noise, size=t.shape))
                tables[c] = t / t.sum()
            d = bound_diagnostics(p, canonical_potentials(tables, g))
            count += 1
            if not all(d.checks.values()):
                failures.append({k: v for k, v in d.checks.items() if not v})
        elapsed = time.perf_counter() - start
        record("9 bound suite", not failures and elapsed < 600, f"{count} instances, {len(failures)} with a violated inequality, {elapsed:.0f}s")

    def test_10_bounded_degree_end_to_end(self):
        start = time.perf_counter()
        field = chain_truth()
        hits, ratios = 0, []
        for rep in range(20):
            d = run_pipeline(field, rep).diagnostics
            ratios.append(d.l1 / (EPS * d.r_star))
            hits += d.l1 <= 20 * EPS * d.r_star
        speedups = {}
        for n in (16, 32):
            g = FactorGraph.chain(n)
            model = NoiseModel(zz_chain(n))
            a = canonical_estimator_pipeline(g, EPS, DELTA, ShotSampler(model, seed=0), t=200)
            b = canonical_estimator_pipeline(g, EPS, DELTA, ShotSampler(model, seed=0), t=200, batched=False)
            speedups[n] = b.measurements / a.measurements
        elapsed = time.perf_counter() - start
        ok = hits >= 0.9 * 20 and min(speedups.values()) >= 2 and elapsed < 1200
        detail = ", ".join(f"n={n} {s:.1f}x" for n, s in speedups.items())
        record("10 bounded-degree end to end", ok, f"{hits}/20 within 20*eps*r_star (l1/(eps r*) max {max(ratios):.2f}); batching {detail}; {elapsed:.0f}s")

    def test_11_scale_smoke(self, tmp_path):
        n = 100
        spec = {
            "n": n,
            "type": "factored",
            "depolarizing": 0.001,
            "factors": [{"qubits": [j, j + 1], "rates": {"ZZ": 0.001}} for j in range(n - 1)],
        }
        path = tmp_path / "ch100.json"
        path.write_text(json.dumps(spec))
        code = (
            "import resource, sys; from pauliprobe.cli import main; "
            f"rc = main(['run', '--mode', 'estimate-subset', '--channel', {str(path)!r}, '--targets', 'weight1', "
            f"'--epsilon', '0.1', '--delta', '0.1', '--out', {str(tmp_path / 'out')!r}]); "
            "print(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss, file=sys.stderr); sys.exit(rc)"
        )
        start = time.perf_counter()
        proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
        elapsed = time.perf_counter() - start
        rss_mb = int(proc.stderr.strip().splitlines()[-1]) / 1024 if proc.returncode == 0 else math.inf
        report = json.loads((tmp_path / "out" / "report.json").read_text()) if proc.returncode == 0 else {}
        ok = proc.returncode == 0 and len(report.get("p_hat", {})) == 3 * n and elapsed < 600 and rss_mb < 1024
        record("11 scale smoke test", ok, f"n=100, {len(report.get('p_hat', {}))} targets, {elapsed:.0f}s, peak RSS {rss_mb:.0f} MB")

    def test_12_determinism(self, tmp_path):
        rng = np.random.default_rng(12)
        g, h = random_stabilizer(2, rng), random_stabilizer(2, rng)
        model = NoiseModel(random_channel(2, rng, 0.1))
        same = {
            "3": ShotSampler(model, seed=5).histogram(g, h, 4, 100_000, (0,)).as_dict()
            == ShotSampler(model, seed=5).histogram(g, h, 4, 100_000, (0,)).as_dict(),
        }
        pairs = {
            "4": [fingerprint(run_ratio(7, workers=w).r_hat) for w in (1, 8)],
            "5": [fingerprint(run_group(7, workers=w)[0].marginal.probs) for w in (1, 8)],
            "6": [fingerprint(run_subset(7, workers=w).p_hat) for w in (1, 8)],
            "7": [fingerprint(run_tree(4, 7, workers=w)[0].p_hat) for w in (1, 8)],
            "10": [fingerprint(run_pipeline(chain_truth(), 7, workers=w).estimate.as_dict()) for w in (1, 8)],
        }
        same.update({k: a == b for k, (a, b) in pairs.items()})
        outs = []
        spec = tmp_path / "ch.json"
        spec.write_text(json.dumps({"n": 12, "type": "factored", "depolarizing": 0.01}))
        for w in (1, 8):
            out = tmp_path / f"w{w}"
            args = ["run", "--mode", "estimate-subset", "--channel", str(spec), "--targets", "weight1", "--workers", str(w), "--out", str(out)]
            subprocess.run([sys.executable, "-m", "pauliprobe.cli", *args], check=True, capture_output=True)
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same["11"] = outs[0] == outs[1]
        bad = [k for k, v in same.items() if not v]
        record("12 determinism", not bad, f"1 vs 8 workers identical for criteria {', '.join(same)}" + (f"; differs: {bad}" if bad else ""))
