import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pauliprobe.channel import (
    DenseChannel,
    EigenvalueVector,
    FactoredChannel,
    LocalTable,
    SparseChannel,
    check_assumptions,
    depolarizing,
    diamond_and_infidelity,
    f_to_p_projected,
    local_rates,
    marginal_channel,
    p_to_f,
    project_simplex,
    spectral_gap,
)
from pauliprobe.errors import CapExceeded, DimensionMismatch
from pauliprobe.pauli import PauliGroup, PauliString, all_paulis, sign_matrix

P = PauliString.from_label


def chain4():
    return FactoredChannel(
        4,
        [local_rates((0, 1), {"ZZ": 0.02, "XI": 0.01}), local_rates((1, 2), {"ZZ": 0.03}), local_rates((2, 3), {"YX": 0.01})]
        + list(depolarizing(4, 0.01).factors),
    )


def random_dense(n, rng, noise=0.2):
    p = rng.dirichlet(np.ones(4**n)) * noise
    p[0] += 1 - noise
    return DenseChannel(n, p)


class TestRepresentations:
    def test_identity_eigenvalues(self):
        for ch in (DenseChannel(2, np.eye(16)[0]), SparseChannel(2, {"II": 1.0}), depolarizing(2, 0.0)):
            assert np.allclose(p_to_f(ch).values, 1.0)

    def test_zflip(self, golden):
        ch = DenseChannel(1, [0.9, 0, 0, 0.1])
        assert np.allclose(p_to_f(ch).values, golden["transforms"]["wh_zflip"])

    def test_depolarizing_fx(self, golden):
        ch = DenseChannel(1, [0.97, 0.01, 0.01, 0.01])
        assert ch.eigenvalue("X") == pytest.approx(golden["channels"]["depol_fX"], abs=1e-12)

    def test_factored_matches_dense_oracle(self, golden):
        ch = chain4()
        block = ch.dense_rates().reshape((4,) * 4).sum(axis=(0, 3)).ravel()
        assert np.allclose(block, golden["channels"]["chain_block_12"], atol=1e-14)
        assert ch.identity_rate() == pytest.approx(golden["channels"]["chain_identity_rate"], abs=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_representations_agree(self, seed):
        rng = np.random.default_rng(seed)
        fac = FactoredChannel(3, [LocalTable((0, 2), rng.dirichlet(np.ones(16))), LocalTable((1,), rng.dirichlet(np.ones(4)))])
        dense = fac.to_dense()
        nz = {p: r for p, r in zip(all_paulis(3), dense.dense_rates()) if r > 0}
        sparse = SparseChannel(3, nz)
        ps = all_paulis(3)
        for ch in (dense, sparse):
            assert np.allclose(ch.eigenvalues(ps), fac.eigenvalues(ps))
        assert np.allclose(sign_matrix(ps, ps) @ dense.dense_rates(), fac.eigenvalues(ps))

    def test_overlapping_factors_compose(self):
        # two X-flips on the same qubit compose to an X-flip of rate 2q(1-q)
        q = 0.1
        ch = FactoredChannel(1, [LocalTable((0,), [1 - q, q, 0, 0])] * 2)
        assert ch.rate("X") == pytest.approx(2 * q * (1 - q))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_overlapping_rates_match_dense(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        factors = []
        for k in rng.integers(1, 4, size=n):
            k = min(int(k), n)
            qs = tuple(rng.choice(n, size=k, replace=False).tolist())
            factors.append(LocalTable(qs, rng.dirichlet(np.ones(4**k)) * 0.3 + np.eye(4**k)[0] * 0.7))
        ch = FactoredChannel(n, factors)
        dense = ch.dense_rates()
        for i in rng.integers(0, 4**n, size=10):
            assert ch.rate(PauliString.from_index(n, int(i))) == pytest.approx(dense[i], abs=1e-14)
        assert ch.identity_rate() == pytest.approx(dense[0], abs=1e-14)

    def test_overlapping_chain_beyond_dense_cap(self):
        n = 100
        ch = FactoredChannel(n, [local_rates((j, j + 1), {"ZZ": 0.01}) for j in range(n - 1)])
        # a ZZ chain flips each edge independently; identity needs every edge unflipped
        # or an even cover, and on a path only the empty cover composes to I
        assert ch.identity_rate() == pytest.approx(0.99 ** (n - 1))
        assert ch.rate(PauliString.single(n, 0, "Z") * PauliString.single(n, 1, "Z")) == pytest.approx(0.01 * 0.99 ** (n - 2))

    def test_validation(self):
        with pytest.raises(ValueError):
            DenseChannel(1, [0.5, 0.6, 0, 0])
        with pytest.raises(ValueError):
            DenseChannel(1, [1.1, -0.1, 0, 0])
        with pytest.raises(DimensionMismatch):
            DenseChannel(1, [1, 0, 0])
        with pytest.raises(DimensionMismatch):
            LocalTable((0, 1), [1, 0, 0, 0])
        with pytest.raises(DimensionMismatch):
            SparseChannel(2, {"X": 1.0})
        with pytest.raises(DimensionMismatch):
            DenseChannel(1, [1, 0, 0, 0]).eigenvalues([P("XX")])

    def test_dense_cap(self):
        with pytest.raises(CapExceeded):
            depolarizing(20, 0.01).dense_rates()

    def test_signed_allowed(self):
        ch = DenseChannel(1, [1.1, -0.1, 0, 0], signed=True)
        assert ch.rate("X") == pytest.approx(-0.1)


class TestInverse:
    def test_identity(self):
        ev = EigenvalueVector(tuple(all_paulis(1)), np.ones(4))
        assert np.allclose(f_to_p_projected(ev).probs, [1, 0, 0, 0])

    def test_zflip(self, golden):
        ev = EigenvalueVector(tuple(all_paulis(1)), [1, 0.8, 0.8, 1])
        m = f_to_p_projected(ev, PauliGroup.full(1))
        assert m.rate("I") == pytest.approx(golden["transforms"]["inverse_zflip"][0])
        assert m.rate("Z") == pytest.approx(golden["transforms"]["inverse_zflip"][3])
        assert m.rate("X") == pytest.approx(0.0, abs=1e-12)

    def test_projection_of_unphysical_estimate(self):
        ev = EigenvalueVector(tuple(all_paulis(1)), [1, 1.1, 1.1, 1])
        m = f_to_p_projected(ev, PauliGroup.full(1))
        assert m.probs.min() >= 0 and m.probs.sum() == pytest.approx(1.0)
        rng = np.random.default_rng(3)
        for q in rng.dirichlet(np.ones(4), size=200):
            assert np.linalg.norm(m.probs - m.raw) <= np.linalg.norm(q - m.raw) + 1e-12

    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=12))
    def test_simplex_projection_properties(self, v):
        v = np.array(v)
        out = project_simplex(v)
        assert out.min() >= 0
        assert out.sum() == pytest.approx(1.0)
        assert np.allclose(project_simplex(out), out)

    def test_simplex_against_optimizer(self):
        scipy_opt = pytest.importorskip("scipy.optimize")
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.normal(size=6)
            res = scipy_opt.minimize(
                lambda q: ((q - v) ** 2).sum(),
                np.full(6, 1 / 6),
                constraints=[{"type": "eq", "fun": lambda q: q.sum() - 1}],
                bounds=[(0, None)] * 6,
                method="SLSQP",
                options={"ftol": 1e-12},
            )
            assert np.allclose(project_simplex(v), res.x, atol=1e-5)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_roundtrip_on_full_group(self, n):
        ch = random_dense(n, np.random.default_rng(n))
        m = f_to_p_projected(p_to_f(ch), PauliGroup.full(n))
        for p in all_paulis(n):
            assert m.rate(p) == pytest.approx(ch.rate(p), abs=1e-12)


class TestMarginal:
    def test_trivial_group(self):
        m = marginal_channel(chain4(), PauliGroup([], n=4))
        assert m.probs.tolist() == [pytest.approx(1.0)]

    @pytest.mark.parametrize("name", ["zflip", "xflip"])
    def test_pair_cells(self, golden, name):
        single = [0.9, 0, 0, 0.1] if name == "zflip" else [0.9, 0.1, 0, 0]
        ch = FactoredChannel(2, [LocalTable((0,), single), LocalTable((1,), single)])
        m = marginal_channel(ch, PauliGroup(["ZI", "IZ"]))
        assert np.allclose(m.probs, golden["channels"]["pair_cells"][name], atol=1e-14)

    def test_local_block(self, golden):
        m = marginal_channel(chain4(), PauliGroup.full(4, [1, 2]))
        assert np.allclose(m.local_table([1, 2]), golden["channels"]["chain_block_12"], atol=1e-14)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_fast_matches_direct(self, seed):
        rng = np.random.default_rng(seed)
        ch = random_dense(3, rng)
        gens = [PauliString.from_index(3, int(i)) for i in rng.integers(1, 64, size=3)]
        g = PauliGroup.spanned_by(gens, n=3)
        fast = marginal_channel(ch, g)
        direct = marginal_channel(ch, g, method="direct")
        assert np.allclose(fast.raw, direct.probs, atol=1e-13)

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            marginal_channel(chain4(), PauliGroup(["Z"]))


class TestSummaries:
    def test_spectral_gap(self):
        assert spectral_gap(p_to_f(depolarizing(1, 0.0))) == 0.0
        ev = EigenvalueVector(tuple(all_paulis(1)), [1, 0.8, 0.8, 1])
        assert spectral_gap(ev, [P("X")]) == pytest.approx(0.2)
        assert spectral_gap(ev) == 0.0

    def test_diamond(self, golden):
        assert diamond_and_infidelity(depolarizing(2, 0.0)) == (0.0, 0.0)
        d, r = diamond_and_infidelity(DenseChannel(1, [0.97, 0.01, 0.01, 0.01]))
        assert d == pytest.approx(golden["arithmetic"]["diamond_097"]["diamond"])
        assert r == pytest.approx(golden["arithmetic"]["diamond_097"]["r_avg"])
        ch = chain4()
        assert diamond_and_infidelity(ch)[0] == pytest.approx(1 - golden["channels"]["chain_identity_rate"])

    def test_assumptions(self):
        ok = check_assumptions(depolarizing(2, 0.0), [1.0], c=0.5)
        assert ok.weak and ok.stable and ok.ok
        bad = check_assumptions(DenseChannel(1, [0.7, 0.3, 0, 0]), None, c=0.5)
        assert bad.f_min == pytest.approx(0.4)
        assert not bad.weak and not bad.ok
        suff = check_assumptions(DenseChannel(1, [0.8, 0.2, 0, 0]), None, c=0.5)
        assert suff.p0 == pytest.approx(0.8) and suff.sufficient

    def test_assumptions_unstable_spam(self):
        rep = check_assumptions(depolarizing(1, 0.0), [0.3], c=0.5)
        assert rep.stable is False and not rep.ok

    def test_large_factored_bound(self):
        rep = check_assumptions(depolarizing(50, 0.01), None)
        assert rep.exact and rep.weak
        assert rep.f_min == pytest.approx((1 - 4 * 0.01 / 3) ** 50)
        overlapping = FactoredChannel(12, [local_rates((j, j + 1), {"ZZ": 0.01}) for j in range(11)])
        assert not check_assumptions(overlapping, None).exact
