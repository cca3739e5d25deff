import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricflows.functions import (
    Convention,
    IndicatorBox,
    L1,
    PositivePartSum,
    Quadratic,
    UnsupportedError,
    Zero,
    g_neg,
    g_neg_value,
    moreau_gradient,
    moreau_value,
    prox_euclid,
    prox_g_neg_metric,
    prox_metric,
    value,
)
from metricflows.linalg import Metric
from metricflows.operators import AffineMap, check_cocoercive, negative_yosida_resolvent

M42 = Metric(np.diag([4.0, 8.0]))

VARIANTS = [
    L1(1.0),
    L1(0.3),
    PositivePartSum(1.0),
    PositivePartSum(2.5),
    IndicatorBox([-1.0, 0.0, 2.0], [1.0, 0.5, 3.0]),
    Quadratic(np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 0.5]]), [0.1, -0.3, 0.7]),
    Zero(),
]


class TestValue:
    def test_examples(self):
        assert value(L1(1.0), [1.0, -2.0]) == 3.0
        assert value(IndicatorBox([0.0], [1.0]), [2.0]) == np.inf
        assert value(IndicatorBox([0.0], [1.0]), [0.5]) == 0.0
        assert value(Quadratic(np.eye(2)), [1.0, 1.0]) == 1.0
        assert value(PositivePartSum(), [-1.0, 2.0]) == 2.0

    def test_only_indicator_is_infinite(self):
        rng = np.random.default_rng(0)
        for f in VARIANTS:
            if isinstance(f, IndicatorBox):
                continue
            assert all(np.isfinite(value(f, x)) for x in rng.uniform(-50, 50, (20, 3)))


class TestProxEuclid:
    def test_examples(self):
        assert prox_euclid(L1(1.0), 0.5, [2.0])[0] == 1.5
        x = np.array([0.3, -7.0])
        np.testing.assert_array_equal(prox_euclid(Zero(), 3.0, x), x)
        assert prox_euclid(PositivePartSum(1.0), 0.5, [0.5])[0] == 0.0
        assert prox_euclid(PositivePartSum(1.0), 0.5, [0.75])[0] == 0.25
        assert prox_euclid(PositivePartSum(1.0), 0.5, [-0.2])[0] == -0.2

    def test_box_is_projection(self):
        f = IndicatorBox([0.0, 0.0], [1.0, 1.0])
        np.testing.assert_array_equal(prox_euclid(f, 9.0, [-3.0, 0.4]), [0.0, 0.4])

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ValueError):
            prox_euclid(L1(), 0.0, [1.0])

    def test_prox_minimizes(self):
        # compare against a dense 1-D grid search
        rng = np.random.default_rng(1)
        grid = np.linspace(-6, 6, 120001)
        for f in (L1(0.7), PositivePartSum(1.3)):
            for x in rng.uniform(-5, 5, 5):
                obj = [f.value([v]) + (v - x) ** 2 / (2 * 0.8) for v in grid[::100]]
                v_best = grid[::100][int(np.argmin(obj))]
                assert abs(prox_euclid(f, 0.8, [x])[0] - v_best) <= 2e-2

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.01, 10.0), k=st.integers(0, 6))
    def test_prox_characterization(self, seed, gamma, k):
        f = VARIANTS[k]
        rng = np.random.default_rng(seed)
        for x in rng.uniform(-10, 10, (10, 3)):
            p = prox_euclid(f, gamma, x)
            assert f.in_subdifferential(p, (x - p) / gamma, tol=1e-10 * max(1, 1 / gamma))


class TestProxMetric:
    @pytest.mark.parametrize("conv", [Convention.EXACT, Convention.YOSIDA])
    def test_zero_function(self, conv):
        np.testing.assert_array_equal(prox_metric(Zero(), M42, 4.0, [2.0, -1.0], conv), [2.0, -1.0])

    def test_l1_diagonal_metric(self):
        out = prox_metric(L1(1.0), M42, 4.0, [2.0, 2.0], "exact")
        np.testing.assert_allclose(out, [1.0, 1.5], rtol=1e-15)

    def test_quadratic_exact_stationarity(self):
        rng = np.random.default_rng(2)
        W = rng.standard_normal((3, 3))
        M = Metric(W @ W.T + np.eye(3))
        f = VARIANTS[5]
        for x in rng.standard_normal((10, 3)):
            v = prox_metric(f, M, 0.6, x, "exact")
            r = M.apply(v - x) / 0.6 + f.gradient(v)
            assert np.linalg.norm(r) <= 1e-10 * max(1, np.linalg.norm(x))

    def test_exact_separable_diagonal_minimizes(self):
        # exact prox^M is the minimizer of f(v) + ||v - x||_M^2 / (2 gamma)
        rng = np.random.default_rng(3)
        f = L1(0.9)
        for x in rng.uniform(-3, 3, (10, 2)):
            v = prox_metric(f, M42, 2.0, x, "exact")
            base = f.value(v) + M42.inner(v - x, v - x) / 4.0
            for dv in rng.standard_normal((30, 2)) * 1e-3:
                w = v + dv
                assert base <= f.value(w) + M42.inner(w - x, w - x) / 4.0 + 1e-14

    def test_yosida_form_formula(self):
        f = L1(1.0)
        x = np.array([2.0, 2.0])
        expected = x - 4.0 * M42.solve((x - prox_euclid(f, 4.0, x)) / 4.0)
        np.testing.assert_allclose(prox_metric(f, M42, 4.0, x, "yosida"), expected, rtol=1e-15)

    def test_exact_unsupported_for_coupled_metric(self):
        with pytest.raises(UnsupportedError):
            prox_metric(L1(), Metric([[2.0, 1.0], [1.0, 2.0]]), 1.0, [1.0, 1.0], "exact")


class TestMoreau:
    def test_examples(self):
        assert moreau_value(L1(1.0), 1.0, [0.5]) == 0.125
        assert moreau_value(Zero(), 2.0, [3.0, 4.0]) == 0.0
        x = np.array([1.0, -2.0])
        assert moreau_value(Quadratic(np.eye(2)), 1.0, x) == pytest.approx(x @ x / 4, rel=1e-15)
        assert moreau_gradient(L1(1.0), 1.0, [0.5])[0] == 0.5
        assert moreau_gradient(L1(1.0), 1.0, [3.0])[0] == 1.0
        np.testing.assert_array_equal(moreau_gradient(Zero(), 1.0, [3.0]), [0.0])

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.05, 5.0), k=st.integers(0, 6))
    def test_envelope_lower_bound(self, seed, gamma, k):
        f = VARIANTS[k]
        for x in np.random.default_rng(seed).uniform(-10, 10, (10, 3)):
            fx = f.value(x)
            assert moreau_value(f, gamma, x) <= fx + 1e-12 * max(1.0, abs(fx)) or fx == np.inf

    def test_gradient_matches_finite_differences_away_from_kinks(self):
        rng = np.random.default_rng(4)
        gamma, h, band = 0.7, 1e-5, 1e-4
        kinks = {
            0: lambda x: np.abs(np.abs(x) - gamma * 1.0),
            2: lambda x: np.minimum(np.abs(x), np.abs(x - gamma * 1.0)),
            4: lambda x: np.minimum(np.abs(x - VARIANTS[4].lower), np.abs(x - VARIANTS[4].upper)),
            5: lambda x: np.full_like(x, np.inf),
        }
        for k, dist in kinks.items():
            f = VARIANTS[k]
            checked = 0
            while checked < 100:
                x = rng.uniform(-5, 5, 3)
                if np.any(dist(x) < band):
                    continue
                g = moreau_gradient(f, gamma, x)
                fd = np.array([(moreau_value(f, gamma, x + h * e) - moreau_value(f, gamma, x - h * e))
                               / (2 * h) for e in np.eye(3)])
                assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-2)
                checked += 1


class TestQuadraticGradient:
    def test_beta_is_inverse_largest_eigenvalue(self):
        f = VARIANTS[5]
        assert f.beta == pytest.approx(1 / np.linalg.eigvalsh(f.Q)[-1], rel=1e-12)
        assert check_cocoercive(lambda x: f.gradient(x), f.beta, dim=3).passed
        assert not check_cocoercive(lambda x: f.gradient(x), 1.05 * f.beta, dim=3).passed

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError):
            Quadratic(np.diag([1.0, -1.0]))


class TestNegativeIndex:
    def test_scalar_closed_form(self):
        q = 2.0
        g = Quadratic([[q]])
        for gamma in (0.1, 0.3, 0.45):
            for u in (-2.0, 0.5, 3.0):
                assert g_neg_value(g, gamma, [u]) == pytest.approx(q * u * u / (2 * (1 - gamma * q)),
                                                                  rel=1e-13)

    def test_zero_function(self):
        assert g_neg_value(Zero(), 0.7, [1.0, 2.0]) == 0.0

    def test_boundary_index_is_infinite_off_range(self):
        g = Quadratic([[2.0]])
        assert g_neg_value(g, 0.5, [1.0]) == np.inf
        assert g_neg_value(g, 0.5, [0.0]) == 0.0

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            g_neg_value(Quadratic([[2.0]]), 0.6, [1.0])
        with pytest.raises(UnsupportedError):
            g_neg_value(L1(), 0.1, [1.0])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.05, 0.95))
    def test_round_trip(self, seed, frac):
        rng = np.random.default_rng(seed)
        R = rng.standard_normal((3, 3))
        g = Quadratic(R @ R.T + 0.5 * np.eye(3), rng.standard_normal(3), rng.standard_normal())
        gamma = frac * g.beta
        gn = g_neg(g, gamma)
        for u in rng.uniform(-2, 2, (100, 3)):
            assert abs(moreau_value(gn, gamma, u) - g.value(u)) <= 1e-9
            assert abs(gn.value(u) - g_neg_value(g, gamma, u)) <= 1e-9

    def test_metric_prox_of_negative_index(self):
        rng = np.random.default_rng(5)
        g = Quadratic(np.diag([0.5, 0.25]), [0.2, -0.1])
        x = rng.standard_normal(2)
        B = AffineMap(g.Q, g.b)
        np.testing.assert_array_equal(prox_g_neg_metric(g, M42, 1.5, x),
                                      negative_yosida_resolvent(B, M42, 1.5, x))
        np.testing.assert_array_equal(prox_g_neg_metric(Zero(), M42, 1.5, x), x)
        # agrees with the Yosida-form prox of g_{-gamma} for any metric, and with
        # the exact prox only for M = I
        gn = g_neg(g, 1.5)
        np.testing.assert_allclose(prox_metric(gn, M42, 1.5, x, "yosida"),
                                   prox_g_neg_metric(g, M42, 1.5, x), atol=1e-13)
        I = Metric.identity(2)
        np.testing.assert_allclose(prox_metric(gn, I, 1.5, x, "exact"),
                                   prox_g_neg_metric(g, I, 1.5, x), atol=1e-13)
        assert np.linalg.norm(prox_metric(gn, M42, 1.5, x, "exact")
                              - prox_g_neg_metric(g, M42, 1.5, x)) > 1e-3
