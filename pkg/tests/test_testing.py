import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bke.errors import InvalidInputError
from bke.kernels import SEKernelParams, gram, se_eval
from bke.learn import HyperPosterior
from bke.testing import MMDVariant, StatisticKind, hsic, mmd2, permutation_test, witness_band

P1 = SEKernelParams(1.0)


def mmd_expansion(x, y, p):
    """Double-sum expansion of the squared RKHS distance of two sample means."""
    kxx = sum(se_eval(a, b, p) for a in x for b in x) / len(x) ** 2
    kyy = sum(se_eval(a, b, p) for a in y for b in y) / len(y) ** 2
    kxy = sum(se_eval(a, b, p) for a in x for b in y) / (len(x) * len(y))
    return kxx + kyy - 2 * kxy


def hsic_loops(x, y, px, py):
    """V-statistic with the four index sums written out."""
    n = len(x)
    k = np.array([[se_eval(a, b, px) for b in x] for a in x])
    l = np.array([[se_eval(a, b, py) for b in y] for a in y])
    t1 = t2 = t3 = 0.0
    for i in range(n):
        for j in range(n):
            t1 += k[i, j] * l[i, j]
            for q in range(n):
                t3 += k[i, j] * l[i, q]
                for r in range(n):
                    t2 += k[i, j] * l[q, r]
    return t1 / n**2 + t2 / n**4 - 2 * t3 / n**3


class TestMMD:
    def test_identical(self):
        x = np.random.default_rng(0).normal(size=(20, 2))
        assert abs(mmd2(x, x, P1)) <= 1e-12

    def test_singletons(self):
        a, theta = 1.7, 0.8
        assert mmd2([[0.0]], [[a]], SEKernelParams(theta)) == pytest.approx(
            2 * (1 - math.exp(-(a**2) / (2 * theta**2))), rel=1e-14
        )

    def test_expansion_oracle(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(30, 2)), rng.normal(0.3, 1, size=(30, 2))
        assert mmd2(x, y, P1) == pytest.approx(mmd_expansion(x, y, P1), abs=1e-12)

    def test_unbiased_offdiagonal(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(7, 1)), rng.normal(size=(9, 1))
        kxx = sum(se_eval(a, b, P1) for i, a in enumerate(x) for j, b in enumerate(x) if i != j) / 42
        kyy = sum(se_eval(a, b, P1) for i, a in enumerate(y) for j, b in enumerate(y) if i != j) / 72
        kxy = sum(se_eval(a, b, P1) for a in x for b in y) / 63
        assert mmd2(x, y, P1, MMDVariant.UNBIASED) == pytest.approx(kxx + kyy - 2 * kxy, abs=1e-12)

    def test_unbiased_needs_two(self):
        with pytest.raises(InvalidInputError):
            mmd2([[0.0]], [[1.0], [2.0]], P1, "unbiased")

    def test_dim_mismatch(self):
        with pytest.raises(InvalidInputError):
            mmd2(np.zeros((3, 2)), np.zeros((3, 1)), P1)

    def test_bounds_random(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n, n2 = rng.integers(2, 15, size=2)
            x, y = rng.normal(size=(n, 2)), rng.normal(size=(n2, 2))
            p = SEKernelParams(rng.uniform(0.2, 3))
            assert mmd2(x, y, p) >= 0
            assert mmd2(x, y, p, "unbiased") >= -4 / min(n, n2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(10, 2)), rng.normal(size=(8, 2))
        for v in MMDVariant:
            assert mmd2(x[rng.permutation(10)], y[rng.permutation(8)], P1, v) == pytest.approx(
                mmd2(x, y, P1, v), abs=1e-12
            )


class TestHSIC:
    def test_constant_y(self):
        x = np.random.default_rng(0).normal(size=(12, 2))
        assert abs(hsic(x, np.ones((12, 1)), P1, P1)) <= 1e-12

    def test_self(self):
        x = np.random.default_rng(1).normal(size=(10, 1))
        H = np.eye(10) - 1 / 10
        K = gram(x, params=P1)
        assert hsic(x, x, P1, P1) == pytest.approx(np.sum((H @ K @ H) ** 2) / 100, abs=1e-12)

    def test_four_loop_oracle(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(6, 2)), rng.normal(size=(6, 1))
        px, py = SEKernelParams(0.9), SEKernelParams(1.4)
        assert hsic(x, y, px, py) == pytest.approx(hsic_loops(x, y, px, py), abs=1e-10)

    def test_unpaired(self):
        with pytest.raises(InvalidInputError):
            hsic(np.zeros((5, 1)), np.zeros((6, 1)), P1, P1)

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            hsic(np.zeros((3, 1)), np.zeros((3, 1)), P1, P1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_joint_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(9, 2)), rng.normal(size=(9, 1))
        p = rng.permutation(9)
        assert hsic(x[p], y[p], P1, P1) == pytest.approx(hsic(x, y, P1, P1), abs=1e-12)


class TestPermutation:
    def test_degenerate_null(self):
        x = np.random.default_rng(0).normal(size=(20, 1))
        res = permutation_test("mmd2", x, x, P1, n_permutations=200)
        assert res.statistic == pytest.approx(0.0, abs=1e-12)
        assert 0.5 <= res.p_value <= 1.0
        assert not res.reject

    def test_p_value_formula(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(15, 1)), rng.normal(0.5, 1, size=(15, 1))
        res = permutation_test("mmd2", x, y, P1, n_permutations=150, seed=4)
        # brute-force permutation statistics drawn from the same stream
        pooled = np.vstack([x, y])
        stats_ = []
        g = np.random.default_rng(4)
        for _ in range(150):
            idx = g.permutation(30)[:15]
            mask = np.zeros(30, bool)
            mask[idx] = True
            stats_.append(mmd2(pooled[mask], pooled[~mask], P1))
        expect = (1 + sum(s >= res.statistic - 1e-12 for s in stats_)) / 151
        assert res.p_value == pytest.approx(expect, abs=1e-15)
        assert res.reject == (res.p_value <= res.alpha)

    def test_hsic_p_value_formula(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(12, 1))
        y = x + 0.5 * rng.normal(size=(12, 1))
        res = permutation_test("hsic", x, y, P1, n_permutations=120, seed=7)
        g = np.random.default_rng(7)
        stats_ = []
        for _ in range(120):
            stats_.append(hsic(x, y[g.permutation(12)], P1, P1))
        expect = (1 + sum(s >= res.statistic - 1e-12 for s in stats_)) / 121
        assert res.p_value == pytest.approx(expect, abs=1e-15)
        assert res.kind == StatisticKind.HSIC.value

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=(20, 2)), rng.normal(size=(25, 2))
        assert permutation_test("mmd2", x, y, P1, seed=5).to_dict() == permutation_test("mmd2", x, y, P1, seed=5).to_dict()

    def test_detects_shift(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=(60, 1)), rng.normal(1.0, 1, size=(60, 1))
        assert permutation_test("mmd2", x, y, P1, n_permutations=200).reject
        assert permutation_test("hsic", x, 2 * x + 0.1 * y, P1, n_permutations=200).reject

    def test_unbiased_variant_runs(self):
        rng = np.random.default_rng(5)
        x, y = rng.normal(size=(10, 1)), rng.normal(size=(10, 1))
        res = permutation_test("mmd2", x, y, P1, n_permutations=100, variant="unbiased")
        assert res.statistic == pytest.approx(mmd2(x, y, P1, "unbiased"), abs=1e-12)

    @pytest.mark.parametrize("kw", [dict(n_permutations=50), dict(alpha=0.0), dict(alpha=1.0)])
    def test_invalid(self, kw):
        x = np.zeros((5, 1)) + np.arange(5.0)[:, None]
        with pytest.raises(InvalidInputError):
            permutation_test("mmd2", x, x, P1, **kw)

    def test_null_p_values_super_uniform(self):
        pv = []
        for seed in range(200):
            rng = np.random.default_rng(10_000 + seed)
            x, y = rng.normal(size=(25, 1)), rng.normal(size=(25, 1))
            pv.append(permutation_test("mmd2", x, y, P1, n_permutations=100, seed=seed).p_value)
        assert np.mean(np.array(pv) <= 0.05) <= 0.10


class TestWitnessBand:
    def test_symmetric_null(self):
        x = np.random.default_rng(0).normal(size=(40, 1))
        G = np.linspace(-3, 3, 31)[:, None]
        band = witness_band(x, x, G, SEKernelParams(0.7), level=0.8, n_draws=400)
        half = (band.upper - band.lower) / 2
        assert np.mean(np.abs(band.mean) <= 3 * half / 1.28) >= 0.95
        assert np.all(band.lower <= band.mean) and np.all(band.mean <= band.upper)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(20, 1)), rng.normal(size=(20, 1))
        G = np.linspace(-2, 2, 11)[:, None]
        a = witness_band(x, y, G, SEKernelParams(0.5), n_draws=50, seed=3)
        b = witness_band(x, y, G, SEKernelParams(0.5), n_draws=50, seed=3)
        np.testing.assert_array_equal(a.lower, b.lower)

    def test_hyper_posterior_input(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(20, 1)), rng.normal(size=(20, 1))
        G = np.linspace(-2, 2, 11)[:, None]
        hp = HyperPosterior(draws=np.array([[0.5, 1.0], [0.8, 0.5], [0.5, 1.0]]), acceptance_rate=0.5, warmup_discarded=0)
        band = witness_band(x, y, G, hp, n_draws=60)
        assert band.mean.shape == (11,)
        single = HyperPosterior(draws=np.array([[0.5, 1.0]]), acceptance_rate=0.0, warmup_discarded=0)
        a = witness_band(x, y, G, single, n_draws=60, seed=1)
        assert np.all(np.isfinite(a.lower))

    def test_wider_band_for_smaller_samples(self):
        G = np.linspace(-3, 3, 31)[:, None]
        ratios = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            big = rng.normal(size=(400, 1)), rng.normal(size=(400, 1))
            small = big[0][:50], big[1][:50]
            wb = witness_band(*big, G, SEKernelParams(0.5), n_draws=300, seed=seed)
            ws = witness_band(*small, G, SEKernelParams(0.5), n_draws=300, seed=seed)
            ratios.append(np.median((wb.upper - wb.lower) / (ws.upper - ws.lower)))
        assert np.all(np.array(ratios) <= 1.0)

    @pytest.mark.parametrize("kw", [dict(level=0.0), dict(level=1.0), dict(n_draws=0)])
    def test_invalid(self, kw):
        x = np.zeros((3, 1)) + np.arange(3.0)[:, None]
        with pytest.raises(InvalidInputError):
            witness_band(x, x, x, P1, **kw)

    def test_empty_posterior(self):
        x = np.arange(3.0)[:, None]
        with pytest.raises(InvalidInputError):
            witness_band(x, x, x, HyperPosterior(np.zeros((0, 2)), 0.0, 0))
