"""Built-in problem instances with ground-truth solutions.

Each instance stores two points:

``solution``
    a zero of ``A + B`` (for PROX flows, a minimizer of ``f + g``);
``equilibrium``
    the fixed point of the flow map. For BF and PROX flows this is
    ``(I - gamma M^{-1} B)`` applied to ``solution``; for FB flows the two
    coincide.

Construction fails loudly if the stored equilibrium is not a fixed point of
the flow map to within ``1e-10``.
"""

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .flows import BF, FB, Constant, Constants, FlowSpec, switch_off_schedule, residual
from .functions import Convention, IndicatorBox, L1, Quadratic
from .linalg import Metric
from .operators import AffineMap, InverseOfMatrix, PiecewiseScalar, materialize

__all__ = [
    "PROBLEMS",
    "ProblemInstance",
    "box_qp_active_set",
    "box_qp_small",
    "example_4_1",
    "example_4_2",
    "get_problem",
    "lasso_sign_enumeration",
    "lasso_small",
    "random_affine",
    "strongly_monotone_synthetic",
]

LOAD_RESIDUAL_TOL = 1e-10


@dataclass
class ProblemInstance:
    name: str
    spec: FlowSpec
    u0: np.ndarray
    solution: np.ndarray
    equilibrium: np.ndarray
    provenance: str
    notes: str = ""
    t_end: float = 100.0
    reference_schedule: Optional[object] = None
    optimum: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        r = residual(self.spec, self.equilibrium).euclidean
        if r > LOAD_RESIDUAL_TOL:
            raise ValueError(f"{self.name}: stored equilibrium has residual {r:.3e}")

    def with_spec(self, spec):
        return replace(self, spec=spec)


def _bf_equilibrium(spec, solution):
    if spec.kind == FB:
        return np.array(solution, dtype=float)
    return spec.forward(np.asarray(solution, dtype=float))


def example_4_1():
    """Scalar inclusion with a sign-like maximally monotone ``A``.

    ``A(x) = 0`` for ``x < 0``, ``[0, 1]`` at 0, ``1`` for ``x > 0``;
    ``B(x) = x/2``; ``M = 3``; ``gamma = 1/2``. The metric resolvent is
    computed exactly, which gives the flow map ``11u/12`` for ``u < 0``,
    ``0`` on ``[0, 1/6]`` and ``11u/12 - 11/72`` for ``u > 1/6``.
    """
    A = PiecewiseScalar([0.0], [(0.0, 0.0), (0.0, 1.0)], [(0.0, 1.0)],
                        tags={"maximal_monotone": True})
    B = AffineMap([[0.5]], tags={"cocoercive": 1.0})
    M = Metric([[3.0]])
    spec = FlowSpec(BF, A, B, M, 0.5, Constant(1.0), Convention.EXACT,
                    Constants(alpha=0.25, beta=1.0, kappa=0.5))
    sol = np.zeros(1)
    return ProblemInstance(
        "example_4_1", spec, np.array([0.5]), sol, _bf_equilibrium(spec, sol),
        provenance="published worked example; zero derived by hand (0 in [0,1] + 0)",
        notes="exact metric resolvent; region branching on the state",
        t_end=60.0, reference_schedule=switch_off_schedule(50.0),
    )


def example_4_2():
    """Two-dimensional inclusion with the non-monotone ``A = N^{-1}``.

    ``N = diag(-2, 0)``, ``B = diag(1/2, 1/3)``, ``M = diag(4, 8)``,
    ``gamma = 4``; Yosida-form resolvent, flow map ``diag(1/4, 35/48)``.
    """
    A = InverseOfMatrix(np.diag([-2.0, 0.0]), tags={"cohypomonotone": (3.0, 1.0)})
    B = AffineMap(np.diag([0.5, 1.0 / 3.0]), tags={"cocoercive": 1.0})
    M = Metric(np.diag([4.0, 8.0]))
    spec = FlowSpec(BF, A, B, M, 4.0, Constant(1.0), Convention.YOSIDA,
                    Constants(alpha=1.0, beta=1.0, kappa=3.0))
    sol = np.zeros(2)
    return ProblemInstance(
        "example_4_2", spec, np.array([-0.4, 0.5]), sol, _bf_equilibrium(spec, sol),
        provenance="published worked example; unique zero of the linear system",
        t_end=100.0, reference_schedule=switch_off_schedule(50.0),
        extras={"map_matrix": np.diag([0.25, 35.0 / 48.0])},
    )


def strongly_monotone_synthetic():
    """Scalar affine instance where ``B_{-gamma}`` is strongly monotone.

    ``A(x) = x - 1``, ``B(x) = x/4``, ``M = 1``, ``gamma = 1``. Then
    ``B_{-1} = (4 - 1)^{-1} = 1/3`` so ``rho = 1/3``; ``A_1(x) = (x - 1)/2``
    is 2-cocoercive (``alpha = 2``). With ``eta = 1`` the exponential-rate
    hypothesis holds and ``C = 1 - 3/4 = 1/4``.
    """
    A = AffineMap([[1.0]], [-1.0], tags={"maximal_monotone": True})
    B = AffineMap([[0.25]], tags={"cocoercive": 4.0})
    M = Metric([[1.0]])
    spec = FlowSpec(BF, A, B, M, 1.0, Constant(1.0), Convention.YOSIDA,
                    Constants(alpha=2.0, beta=4.0, kappa=2.0, rho=1.0 / 3.0, eta=1.0))
    sol = np.array([0.8])
    return ProblemInstance(
        "strongly_monotone_synthetic", spec, np.array([5.0]), sol,
        _bf_equilibrium(spec, sol),
        provenance="constructed: zero of x - 1 + x/4; rho from scalar Yosida algebra",
        t_end=40.0,
    )


def lasso_sign_enumeration(K, b, weight, tol=1e-12):
    """Exact LASSO minimizer of ``w||x||_1 + ||Kx - b||^2/2`` by sign patterns.

    Enumerates all ``3^d`` sign vectors, solves the stationarity system on
    the active set and keeps consistent candidates. Intended for ``d <= 4``.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = K.shape[1]
    G, Kb = K.T @ K, K.T @ b

    def objective(x):
        r = K @ x - b
        return weight * np.abs(x).sum() + 0.5 * r @ r

    best, best_val = None, np.inf
    for signs in itertools.product((-1, 0, 1), repeat=d):
        s = np.array(signs, dtype=float)
        S = s != 0
        x = np.zeros(d)
        if S.any():
            try:
                x[S] = np.linalg.solve(G[np.ix_(S, S)], Kb[S] - weight * s[S])
            except np.linalg.LinAlgError:
                continue
            if np.any(np.sign(x[S]) != s[S]):
                continue
        corr = Kb - G @ x
        if np.any(np.abs(corr[~S]) > weight + tol):
            continue
        val = objective(x)
        if val < best_val:
            best, best_val = x, val
    if best is None:
        raise RuntimeError("no consistent sign pattern found")
    return best, float(best_val)


def lasso_small(d=3, seed=0, K=None, b=None, weight=None):
    """PROX instance ``min w||x||_1 + ||Kx - b||^2/2`` with ``d <= 4``.

    Random data has singular values of ``K`` in ``[1, 2]`` so the flow
    contracts at rate at least ``1/4``. The metric is the identity, the
    step is ``gamma = beta = 1/lambda_max(K'K)``.
    """
    rng = np.random.default_rng(seed)
    if K is None:
        q1, _ = np.linalg.qr(rng.standard_normal((d, d)))
        q2, _ = np.linalg.qr(rng.standard_normal((d, d)))
        K = q1 @ np.diag(np.linspace(1.0, 2.0, d)) @ q2.T
    K = np.atleast_2d(np.asarray(K, dtype=float))
    d = K.shape[1]
    if d > 4:
        raise ValueError("lasso_small supports d <= 4")
    b = rng.standard_normal(K.shape[0]) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    if weight is None:
        weight = 0.3 * float(np.max(np.abs(K.T @ b)))
    f = L1(weight)
    g = Quadratic(K.T @ K, -K.T @ b, 0.5 * float(b @ b))
    beta = g.beta
    M = Metric.identity(d)
    gamma = beta
    spec = FlowSpec.prox(f, g, M, gamma, schedule=Constant(1.0), conv=Convention.EXACT,
                         constants=Constants(alpha=gamma, beta=beta, kappa=beta))
    sol, opt = lasso_sign_enumeration(K, b, weight)
    return ProblemInstance(
        "lasso_small", spec, rng.standard_normal(d), sol, _bf_equilibrium(spec, sol),
        provenance="exhaustive sign-pattern enumeration",
        t_end=120.0, optimum=opt, extras={"K": K, "b": b, "weight": weight},
    )


def box_qp_active_set(Q, c, lower, upper, tol=1e-12):
    """Exact minimizer of ``x'Qx/2 + c'x`` over a box by active-set enumeration."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.asarray(c, dtype=float)
    lo = np.broadcast_to(np.asarray(lower, dtype=float), c.shape)
    hi = np.broadcast_to(np.asarray(upper, dtype=float), c.shape)
    d = c.size
    best, best_val = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=d):
        p = np.array(pattern)
        x = np.where(p < 0, lo, np.where(p > 0, hi, 0.0))
        F = p == 0
        if F.any():
            rhs = -c[F] - Q[np.ix_(F, ~F)] @ x[~F]
            x[F] = np.linalg.solve(Q[np.ix_(F, F)], rhs)
            if np.any(x[F] < lo[F] - tol) or np.any(x[F] > hi[F] + tol):
                continue
        grad = Q @ x + c
        if np.any(grad[p < 0] < -tol) or np.any(grad[p > 0] > tol):
            continue
        val = 0.5 * x @ Q @ x + c @ x
        if val < best_val:
            best, best_val = x, val
    if best is None:
        raise RuntimeError("no KKT point found")
    return best, float(best_val)


def box_qp_small(d=3, seed=1):
    """PROX instance: strongly convex quadratic over ``[-1, 1]^d``, diagonal metric."""
    if d > 4:
        raise ValueError("box_qp_small supports d <= 4")
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((d, d))
    Q = R @ R.T / d + np.eye(d)
    c = 2.5 * rng.standard_normal(d)
    lo, hi = -np.ones(d), np.ones(d)
    f = IndicatorBox(lo, hi)
    g = Quadratic(Q, c)
    beta = g.beta
    M = Metric(np.linspace(1.0, 1.5, d))
    gamma = beta
    spec = FlowSpec.prox(f, g, M, gamma, schedule=Constant(1.0), conv=Convention.EXACT,
                         constants=Constants(alpha=gamma, beta=beta, kappa=beta))
    sol, opt = box_qp_active_set(Q, c, lo, hi)
    return ProblemInstance(
        "box_qp_small", spec, 2 * rng.standard_normal(d), sol, _bf_equilibrium(spec, sol),
        provenance="active-set enumeration", t_end=120.0, optimum=opt,
    )


def random_affine(seed, dim=3):
    """Seeded BF instance with monotone affine ``A`` and cocoercive symmetric ``B``.

    ``gamma`` is kept below ``beta`` so that ``B_{-gamma}`` exists. The
    equilibrium is obtained by solving the linear fixed-point equation of
    the (materialized) flow map.
    """
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((dim, dim))
    S = rng.standard_normal((dim, dim))
    LA = P @ P.T / dim + 0.5 * (S - S.T)
    R = rng.standard_normal((dim, dim))
    LB = R @ R.T / dim + 0.1 * np.eye(dim)
    beta = 1.0 / np.linalg.eigvalsh(LB)[-1]
    W = rng.standard_normal((dim, dim))
    M = Metric(W @ W.T / dim + np.eye(dim))
    A = AffineMap(LA, rng.standard_normal(dim), tags={"maximal_monotone": True})
    B = AffineMap(LB, rng.standard_normal(dim), tags={"cocoercive": beta})
    spec = FlowSpec(BF, A, B, M, 0.5 * beta, Constant(1.0), Convention.YOSIDA)
    T = materialize(lambda u: spec.forward(spec.resolvent(u)), dim)
    eq = np.linalg.solve(np.eye(dim) - T.matrix, T.offset)
    sol = np.linalg.solve(LA + LB, -(A.offset + B.offset))
    return ProblemInstance(
        f"random_affine[{seed}]", spec, rng.uniform(-3, 3, dim), sol, eq,
        provenance="seeded random data; linear solves", t_end=50.0,
    )


PROBLEMS = {
    "example_4_1": example_4_1,
    "example_4_2": example_4_2,
    "lasso_small": lasso_small,
    "box_qp_small": box_qp_small,
    "strongly_monotone_synthetic": strongly_monotone_synthetic,
}


def get_problem(name, **kwargs):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**kwargs)
