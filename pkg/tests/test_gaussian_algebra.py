import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmcost.gaussian_algebra import (
    EXP_ONLY,
    FULL_PDF,
    GaussianComponent,
    GaussianMixture,
    SampleBatch,
    build_gram_bundle,
    gauss_gram,
    gauss_inner,
    gauss_norm_const,
    mixture_inner,
    mixture_norm,
    scaled_sq_dist,
    _inner_with_weights,
)

from conftest import quad_inner_1d, quad_inner_2d


def random_mixture(rng, n_comp, dim=1, spread=2.0):
    comps = tuple(
        GaussianComponent(rng.uniform(-spread, spread, size=dim),
                          rng.uniform(0.2, 1.0))
        for _ in range(n_comp)
    )
    return GaussianMixture(rng.uniform(0.2, 1.0, size=n_comp), comps)


class TestGaussInner:
    def test_zero_distance_matching_halves(self):
        a = GaussianComponent([0.0], 0.5)
        assert gauss_inner(a, a) == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-12)

    def test_unit_distance(self):
        a = GaussianComponent([0.0], 0.5)
        b = GaussianComponent([1.0], 0.5)
        # N(1; 1) = standard normal pdf at 1
        expected = math.exp(-0.5) / math.sqrt(2 * math.pi)
        assert gauss_inner(a, b) == pytest.approx(expected, abs=1e-12)

    def test_matches_2d_quadrature(self, rng):
        a = GaussianComponent(rng.uniform(-1, 1, size=2), 0.3)
        b = GaussianComponent(rng.uniform(-1, 1, size=2), 0.7)
        oracle = quad_inner_2d(a.pdf, b.pdf)
        assert gauss_inner(a, b) == pytest.approx(oracle, abs=1e-6)

    def test_symmetry_exact(self, rng):
        for _ in range(20):
            a = GaussianComponent(rng.normal(size=3), rng.uniform(0.1, 2))
            b = GaussianComponent(rng.normal(size=3), rng.uniform(0.1, 2))
            assert gauss_inner(a, b) == gauss_inner(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gauss_inner(GaussianComponent([0.0], 1.0), GaussianComponent([0.0, 0.0], 1.0))


class TestMixtureInnerAndNorm:
    def test_single_component_reduces_to_gauss_inner(self):
        c = GaussianComponent([0.3, -0.2], 0.4)
        m = GaussianMixture([1.0], (c,))
        assert mixture_inner(m, m) == pytest.approx(gauss_inner(c, c), abs=1e-15)

    def test_symmetry(self, rng):
        p = random_mixture(rng, 3)
        q = random_mixture(rng, 3)
        assert mixture_inner(p, q) == pytest.approx(mixture_inner(q, p), abs=1e-15)

    def test_matches_quadrature_1d(self, rng):
        for _ in range(5):
            p = random_mixture(rng, 2)
            q = random_mixture(rng, 2)
            oracle = quad_inner_1d(p.pdf, q.pdf)
            assert mixture_inner(p, q) == pytest.approx(oracle, abs=1e-6)

    def test_norm_single_component(self):
        m = GaussianMixture([1.0], (GaussianComponent([0.0], 0.5),))
        assert mixture_norm(m) == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-12)

    def test_norm_coincident_two_component_merge(self):
        c = GaussianComponent([0.7], 0.5)
        single = GaussianMixture([1.0], (c,))
        double = GaussianMixture([0.5, 0.5], (c, c))
        assert mixture_norm(double) == pytest.approx(mixture_norm(single), abs=1e-14)

    def test_norm_matches_quadrature(self, rng):
        p = random_mixture(rng, 3)
        oracle = quad_inner_1d(p.pdf, p.pdf)
        assert mixture_norm(p) == pytest.approx(oracle, abs=1e-6)

    def test_bilinear_in_raw_weights(self, rng):
        p = random_mixture(rng, 3)
        q = random_mixture(rng, 2)
        wp = np.array([0.2, 0.5, 1.7])
        wq = np.array([2.0, 0.1])
        base = _inner_with_weights(p, q, wp, wq)
        assert _inner_with_weights(p, q, 3.0 * wp, wq) == pytest.approx(3 * base, rel=1e-12)
        assert _inner_with_weights(p, q, wp, 0.5 * wq) == pytest.approx(base / 2, rel=1e-12)

    def test_cauchy_schwarz(self, rng):
        for _ in range(200):
            p = random_mixture(rng, rng.integers(1, 4))
            q = random_mixture(rng, rng.integers(1, 4))
            lhs = mixture_inner(p, q) ** 2
            rhs = mixture_norm(p) * mixture_norm(q)
            assert lhs <= rhs + 1e-12

    def test_weights_normalized_on_construction(self):
        m = GaussianMixture([2.0, 6.0], (GaussianComponent([0.0], 1.0),
                                         GaussianComponent([1.0], 1.0)))
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert m.weights[1] == pytest.approx(0.75, abs=1e-12)

    def test_invalid_mixtures_rejected(self):
        c = GaussianComponent([0.0], 1.0)
        with pytest.raises(ValueError):
            GaussianMixture([-0.5, 1.5], (c, c))
        with pytest.raises(ValueError):
            GaussianMixture([1.0], ())
        with pytest.raises(ValueError):
            GaussianComponent([0.0], 0.0)


class TestScaledSqDist:
    def test_zero_diagonal(self, rng):
        x = rng.normal(size=(5, 3))
        assert np.all(np.diag(scaled_sq_dist(x, x)) == 0.0)

    def test_hand_value_1d(self):
        assert scaled_sq_dist(np.array([[0.0]]), np.array([[2.0]])) == pytest.approx(
            np.array([[4.0]])
        )

    def test_matches_triple_loop(self, rng):
        x = rng.normal(size=(6, 4))
        xp = rng.normal(size=(3, 4))
        got = scaled_sq_dist(x, xp)
        for n in range(6):
            for k in range(3):
                want = sum((x[n, j] - xp[k, j]) ** 2 for j in range(4)) / 4
                assert abs(got[n, k] - want) < 1e-12


class TestGaussGram:
    def test_exp_only_unit_diagonal(self, rng):
        x = rng.normal(size=(4, 2))
        g = gauss_gram(x, x, 0.5, EXP_ONLY)
        assert np.all(np.diag(g) == 1.0)

    def test_monotone_in_distance(self):
        x = np.array([[0.0]])
        xp = np.array([[0.5], [1.0], [2.0], [4.0]])
        g = gauss_gram(x, xp, 0.3, EXP_ONLY)[0]
        assert np.all(np.diff(g) < 0)

    def test_full_pdf_matches_gauss_inner_1d(self, rng):
        # 1D: the d_X scaling is a no-op, so a single-entry full_pdf Gram
        # equals the closed-form inner product of the implied components.
        x = np.array([[0.3]])
        xp = np.array([[-0.9]])
        va, vb = 0.4, 0.35
        g = gauss_gram(x, xp, va + vb, FULL_PDF)[0, 0]
        want = gauss_inner(GaussianComponent([0.3], va), GaussianComponent([-0.9], vb))
        assert g == pytest.approx(want, abs=1e-12)

    def test_rejects_bad_v_sum(self):
        with pytest.raises(ValueError):
            gauss_gram(np.zeros((1, 1)), np.zeros((1, 1)), 0.0)


class TestGramBundle:
    def test_identical_batches(self, rng):
        pts = rng.normal(size=(6, 2))
        batch = SampleBatch(pts, 0.05)
        bundle = build_gram_bundle(batch, batch)
        np.testing.assert_allclose(bundle.cross, bundle.cross.T, atol=1e-12)
        np.testing.assert_allclose(bundle.cross, bundle.auto_rows, atol=1e-12)

    def test_hand_entries_1d(self):
        data = SampleBatch(np.array([[0.0], [1.0]]), 0.25)
        model = SampleBatch(np.array([[0.5], [2.0]]), 0.25)
        bundle = build_gram_bundle(data, model)
        # v_sum = 0.5; entry = exp(-dist^2 / (2 * 0.5)) = exp(-dist^2)
        want = np.exp(-np.array([[0.25, 4.0], [0.25, 1.0]]))
        np.testing.assert_allclose(bundle.cross, want, atol=1e-12)
        # auto v_sum = 2 * 0.25 = 0.5, so entries are exp(-dist^2) as well
        np.testing.assert_allclose(
            bundle.auto_rows, np.exp(-np.array([[0.0, 1.0], [1.0, 0.0]])), atol=1e-12
        )

    @pytest.mark.parametrize("trial", range(5))
    def test_auto_grams_symmetric_psd(self, trial):
        rng = np.random.default_rng(100 + trial)
        for _ in range(10):
            n = int(rng.integers(2, 12))
            d = int(rng.integers(1, 4))
            batch = SampleBatch(rng.normal(size=(n, d)), rng.uniform(0.01, 1.0))
            other = SampleBatch(rng.normal(size=(n + 1, d)), rng.uniform(0.01, 1.0))
            bundle = build_gram_bundle(batch, other)
            for r in (bundle.auto_rows, bundle.auto_cols):
                np.testing.assert_allclose(r, r.T, atol=1e-12)
                eig = np.linalg.eigvalsh(r)
                assert eig.min() >= -1e-10 * np.trace(r)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_gram_bundle(
                SampleBatch(np.zeros((2, 1)), 0.1), SampleBatch(np.zeros((2, 2)), 0.1)
            )


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=0, max_value=10_000),
)
def test_gram_entries_bounded_unit_interval(n, k, seed):
    rng = np.random.default_rng(seed)
    g = gauss_gram(rng.normal(size=(n, 2)), rng.normal(size=(k, 2)),
                   float(rng.uniform(0.05, 2.0)), EXP_ONLY)
    assert np.all(g > 0) and np.all(g <= 1.0)


def test_norm_const_matches_pdf_peak():
    assert gauss_norm_const(1, 0.5) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)
    assert gauss_norm_const(3, 1.0) == pytest.approx((2 * math.pi) ** -1.5, rel=1e-12)
