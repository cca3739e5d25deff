import numpy as np
import pytest
from scipy.optimize import minimize

from metricflows.flows import BF, flow_map, residual, validate_parameters
from metricflows.functions import Convention
from metricflows.operators import materialize
from metricflows.problems import (
    PROBLEMS,
    ProblemInstance,
    box_qp_active_set,
    box_qp_small,
    example_4_1,
    example_4_2,
    get_problem,
    lasso_sign_enumeration,
    lasso_small,
    random_affine,
    strongly_monotone_synthetic,
)


def lasso_by_lbfgsb(K, b, w):
    # split x = p - n with p, n >= 0 to get a smooth bound-constrained problem
    d = K.shape[1]

    def fun(z):
        x = z[:d] - z[d:]
        r = K @ x - b
        g = K.T @ r
        return w * z.sum() + 0.5 * r @ r, np.concatenate([w + g, w - g])

    res = minimize(fun, np.zeros(2 * d), jac=True, method="L-BFGS-B",
                   bounds=[(0, None)] * (2 * d), options={"ftol": 1e-15, "gtol": 1e-12})
    return res.x[:d] - res.x[d:], res.fun


class TestPaperExamples:
    def test_example_4_1(self):
        p = example_4_1()
        assert p.solution.tolist() == [0.0] and p.equilibrium.tolist() == [0.0]
        assert p.spec.conv == Convention.EXACT and p.spec.kind == BF
        assert p.reference_schedule.value(50.0) == 1.0 and p.reference_schedule.value(50.1) == 0.0

    def test_example_4_2(self):
        p = example_4_2()
        T = materialize(lambda u: flow_map(p.spec, u), 2)
        np.testing.assert_allclose(T.matrix, p.extras["map_matrix"], atol=1e-15)
        np.testing.assert_array_equal(T.offset, [0.0, 0.0])
        assert validate_parameters(p.spec).passed
        assert p.spec.conv == Convention.YOSIDA

    def test_example_4_2_gamma_is_inside_the_range(self):
        # gamma must lie strictly below 2 kappa = 6
        assert example_4_2().spec.gamma < 2 * example_4_2().spec.constants.kappa


class TestLasso:
    def test_one_dimensional(self):
        p = lasso_small(K=[[1.0]], b=[1.0], weight=0.5)
        assert p.solution[0] == pytest.approx(0.5, abs=1e-14)
        assert p.optimum == pytest.approx(0.5 * 0.5 + 0.5 * 0.25, abs=1e-14)

    def test_large_weight_gives_zero(self):
        K = np.array([[1.0, 0.5], [0.2, 2.0]])
        b = np.array([0.3, -1.0])
        w = float(np.max(np.abs(K.T @ b)))
        x, _ = lasso_sign_enumeration(K, b, w)
        np.testing.assert_array_equal(x, [0.0, 0.0])

    def test_zero_weight_is_least_squares(self):
        rng = np.random.default_rng(0)
        K, b = rng.standard_normal((4, 3)), rng.standard_normal(4)
        x, _ = lasso_sign_enumeration(K, b, 0.0)
        np.testing.assert_allclose(x, np.linalg.lstsq(K, b, rcond=None)[0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_enumeration_against_lbfgsb(self, seed):
        p = lasso_small(seed=seed)
        K, b, w = p.extras["K"], p.extras["b"], p.extras["weight"]
        x_ref, f_ref = lasso_by_lbfgsb(K, b, w)
        assert p.optimum <= f_ref + 1e-12
        np.testing.assert_allclose(p.solution, x_ref, atol=1e-6)

    def test_dimension_limit(self):
        with pytest.raises(ValueError):
            lasso_small(d=5)


class TestBoxQP:
    @pytest.mark.parametrize("seed", range(5))
    def test_active_set_against_lbfgsb(self, seed):
        rng = np.random.default_rng(seed)
        R = rng.standard_normal((3, 3))
        Q, c = R @ R.T + np.eye(3), 3 * rng.standard_normal(3)
        x, val = box_qp_active_set(Q, c, -1.0, 1.0)
        res = minimize(lambda z: (0.5 * z @ Q @ z + c @ z, Q @ z + c), np.zeros(3), jac=True,
                       method="L-BFGS-B", bounds=[(-1, 1)] * 3, options={"ftol": 1e-15, "gtol": 1e-12})
        assert val <= res.fun + 1e-12
        np.testing.assert_allclose(x, res.x, atol=1e-6)

    def test_instance_solution_is_feasible(self):
        p = box_qp_small()
        assert np.all(np.abs(p.solution) <= 1.0)


class TestSynthetic:
    def test_solution_is_zero_of_sum(self):
        p = strongly_monotone_synthetic()
        x = p.solution
        assert (x - 1.0) + x / 4.0 == pytest.approx(0.0, abs=1e-15)

    def test_rate_condition_holds(self):
        rep = validate_parameters(strongly_monotone_synthetic().spec)
        assert rep.passed and rep["rate_condition"].passed


class TestRegistry:
    @pytest.mark.parametrize("name", sorted(PROBLEMS))
    def test_equilibria_are_fixed_points(self, name):
        p = get_problem(name)
        assert residual(p.spec, p.equilibrium).euclidean <= 1e-10
        assert p.u0.shape == p.equilibrium.shape == (p.spec.dim,)

    def test_unknown_name(self):
        with pytest.raises(KeyError, match="unknown problem"):
            get_problem("nope")

    def test_bad_equilibrium_rejected_at_load(self):
        p = example_4_2()
        with pytest.raises(ValueError, match="residual"):
            ProblemInstance("broken", p.spec, p.u0, p.solution, np.array([1.0, 0.0]), "test")

    @pytest.mark.parametrize("seed", range(10))
    def test_random_affine_is_reproducible(self, seed):
        a, b = random_affine(seed), random_affine(seed)
        np.testing.assert_array_equal(a.u0, b.u0)
        np.testing.assert_array_equal(a.equilibrium, b.equilibrium)
        assert residual(a.spec, a.equilibrium).euclidean <= 1e-10
