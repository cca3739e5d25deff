"""Operators given through oracles: direct map, resolvents, Yosida maps.

A (possibly set-valued) operator ``A`` is never stored as a graph. Each
operator class knows how to

* evaluate ``A(x)`` when it is single-valued there (:meth:`Operator.apply`),
* solve ``x in y + gamma A(y)`` (the resolvent ``J_{gamma A}``),
* evaluate the Yosida approximation ``A_gamma = (A^{-1} + gamma I)^{-1}``
  for any real index, including negative ones where defined,
* solve ``x in y + gamma M^{-1} A(y)`` for a metric ``M`` (exact metric
  resolvent).

The module also hosts the sampling-based property testers (cocoercivity,
averagedness, strong monotonicity) used to audit regularity claims.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .functions import Convention, FunctionSpec, Quadratic, UnsupportedError, Zero, g_neg
from .linalg import Metric, as_vector

__all__ = [
    "AffineMap",
    "Convention",
    "InverseOfMatrix",
    "Operator",
    "OperatorError",
    "PiecewiseScalar",
    "PropertyReport",
    "ReindexReport",
    "SetValuedError",
    "Subdifferential",
    "YosidaOracle",
    "check_averaged",
    "check_cocoercive",
    "check_metric_cocoercive",
    "check_strongly_monotone",
    "materialize",
    "negative_yosida_resolvent",
    "resolvent_euclid",
    "resolvent_metric",
    "uniform_sampler",
    "yosida",
    "yosida_reindex_check",
]

logger = logging.getLogger(__name__)


class OperatorError(ValueError):
    """An oracle is undefined or not single-valued at the requested point."""


class SetValuedError(OperatorError):
    """Direct evaluation requested where the operator is set-valued."""


class Operator:
    """Base class for operator oracles on ``R^dim``."""

    #: True when every Yosida map of the operator is affine (probing is exact).
    linear_kind = False

    def __init__(self, dim, tags=None):
        self.dim = int(dim)
        self.tags = dict(tags or {})

    def apply(self, x):
        raise NotImplementedError

    def yosida(self, gamma, x):
        raise NotImplementedError

    def resolvent(self, gamma, x):
        """Euclidean resolvent; default via ``J = I - gamma A_gamma``."""
        return x - gamma * self.yosida(gamma, x)

    def resolvent_metric_exact(self, M, gamma, x):
        return _metric_resolvent_by_root(self.apply, M, gamma, x)

    def __call__(self, x):
        return self.apply(as_vector(x, self.dim))


def _solve(a, b, what):
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise OperatorError(f"{what}: singular system") from exc


class AffineMap(Operator):
    """``A(x) = L x + c``."""

    linear_kind = True

    def __init__(self, matrix, offset=None, tags=None):
        L = np.atleast_2d(np.asarray(matrix, dtype=float))
        if L.shape[0] != L.shape[1]:
            raise ValueError("AffineMap needs a square matrix")
        super().__init__(L.shape[0], tags)
        self.matrix = L
        self.offset = np.zeros(self.dim) if offset is None else as_vector(offset, self.dim)
        self._eye = np.eye(self.dim)

    def apply(self, x):
        return self.matrix @ x + self.offset

    def _resolve(self, gamma, x):
        return _solve(self._eye + gamma * self.matrix, x - gamma * self.offset,
                      f"resolvent of index {gamma}")

    def resolvent(self, gamma, x):
        return self._resolve(gamma, x)

    def yosida(self, gamma, x):
        if gamma == 0:
            return self.apply(x)
        return self.apply(self._resolve(gamma, x))

    def resolvent_metric_exact(self, M, gamma, x):
        return _solve(M.matrix + gamma * self.matrix, M.apply(x) - gamma * self.offset,
                      "metric resolvent")

    def __repr__(self):
        return f"AffineMap({self.matrix.tolist()}, {self.offset.tolist()})"


class InverseOfMatrix(Operator):
    """The relation ``A = N^{-1}``, i.e. ``gra A = {(Nz, z)}``.

    ``N`` may be singular, in which case ``A`` is genuinely set-valued (and
    empty off the range of ``N``), while ``A_gamma = (N + gamma I)^{-1}``
    stays single-valued for ``gamma`` outside ``-spec(N)``.
    """

    linear_kind = True

    def __init__(self, matrix, tags=None):
        N = np.atleast_2d(np.asarray(matrix, dtype=float))
        super().__init__(N.shape[0], tags)
        self.matrix = N
        self._eye = np.eye(self.dim)

    def apply(self, x):
        try:
            return np.linalg.solve(self.matrix, x)
        except np.linalg.LinAlgError as exc:
            raise SetValuedError("N is singular: N^{-1} is set-valued") from exc

    def yosida(self, gamma, x):
        return _solve(self.matrix + gamma * self._eye, x, f"Yosida map of index {gamma}")

    def resolvent(self, gamma, x):
        return self.matrix @ self.yosida(gamma, x)

    def resolvent_metric_exact(self, M, gamma, x):
        # x = Nz + gamma M^{-1} z  =>  (MN + gamma I) z = Mx,  y = Nz
        z = _solve(M.matrix @ self.matrix + gamma * self._eye, M.apply(x), "metric resolvent")
        return self.matrix @ z

    def __repr__(self):
        return f"InverseOfMatrix({self.matrix.tolist()})"


class Subdifferential(Operator):
    """``A = ∂f`` (the gradient when ``f`` is smooth)."""

    def __init__(self, function, dim, tags=None):
        if not isinstance(function, FunctionSpec):
            raise TypeError("Subdifferential expects a FunctionSpec")
        super().__init__(dim, tags)
        self.function = function

    @property
    def linear_kind(self):
        return isinstance(self.function, (Quadratic, Zero))

    def apply(self, x):
        if not self.function.smooth:
            raise SetValuedError(f"∂{self.function!r} is set-valued at kinks")
        return self.function.gradient(x)

    def yosida(self, gamma, x):
        f = self.function
        if gamma > 0:
            return (x - f.prox(gamma, x)) / gamma
        if gamma == 0:
            return self.apply(x)
        try:
            # (grad g)_{-s} = grad(g_{-s})
            return g_neg(f, -gamma).gradient(x)
        except (UnsupportedError, ValueError) as exc:
            raise OperatorError(f"Yosida index {gamma} undefined for {f!r}") from exc

    def resolvent(self, gamma, x):
        if gamma > 0:
            return self.function.prox(gamma, x)
        return super().resolvent(gamma, x)

    def resolvent_metric_exact(self, M, gamma, x):
        if gamma <= 0:
            raise OperatorError("metric prox needs a positive index")
        return self.function.prox_metric_exact(M, gamma, x)

    def __repr__(self):
        return f"Subdifferential({self.function!r})"


class PiecewiseScalar(Operator):
    """Scalar operator, affine between breakpoints, interval-valued at them.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing ``b_1 < ... < b_k``.
    pieces : sequence of (slope, intercept)
        ``k + 1`` affine pieces; piece ``i`` acts on ``(b_i, b_{i+1})``
        with ``b_0 = -inf`` and ``b_{k+1} = +inf``.
    values_at_breaks : sequence of (low, high)
        ``A(b_j) = [low_j, high_j]``.
    """

    def __init__(self, breakpoints, pieces, values_at_breaks, tags=None):
        super().__init__(1, tags)
        self.breakpoints = [float(b) for b in breakpoints]
        self.pieces = [(float(s), float(c)) for s, c in pieces]
        self.values_at_breaks = [(float(lo), float(hi)) for lo, hi in values_at_breaks]
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise ValueError("need one more piece than breakpoints")
        if len(self.values_at_breaks) != len(self.breakpoints):
            raise ValueError("need one value interval per breakpoint")
        if any(b1 >= b2 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(lo > hi for lo, hi in self.values_at_breaks):
            raise ValueError("empty value interval at a breakpoint")

    def _bounds(self, i):
        lo = self.breakpoints[i - 1] if i > 0 else -np.inf
        hi = self.breakpoints[i] if i < len(self.breakpoints) else np.inf
        return lo, hi

    def apply(self, x):
        y = float(x[0])
        for j, b in enumerate(self.breakpoints):
            if y == b:
                lo, hi = self.values_at_breaks[j]
                if lo != hi:
                    raise SetValuedError(f"A({b}) = [{lo}, {hi}]")
                return np.array([lo])
        i = int(np.searchsorted(self.breakpoints, y))
        s, c = self.pieces[i]
        return np.array([s * y + c])

    def solve_inclusion(self, tau, x):
        """Unique ``y`` with ``x in y + tau A(y)`` by interval case analysis."""
        x = float(x)
        found = []
        for i, (s, c) in enumerate(self.pieces):
            denom = 1.0 + tau * s
            lo, hi = self._bounds(i)
            if denom == 0.0:
                if x - tau * c == 0.0:
                    raise OperatorError("inclusion has a continuum of solutions")
                continue
            y = (x - tau * c) / denom
            if lo < y < hi:
                found.append(y)
        for b, (vlo, vhi) in zip(self.breakpoints, self.values_at_breaks):
            a1, a2 = sorted((b + tau * vlo, b + tau * vhi))
            if a1 <= x <= a2:
                found.append(b)
        found = sorted(found)
        distinct = [y for k, y in enumerate(found) if k == 0 or y - found[k - 1] > 1e-14 * max(1.0, abs(y))]
        if len(distinct) != 1:
            raise OperatorError(
                f"inclusion x in y + {tau} A(y) at x={x} has {len(distinct)} solutions"
            )
        # prefer an exact breakpoint when rounding produced a near-duplicate
        for y in found:
            if y in self.breakpoints:
                return y
        return distinct[0]

    def resolvent(self, gamma, x):
        return np.array([self.solve_inclusion(gamma, x[0])])

    def yosida(self, gamma, x):
        if gamma == 0:
            return self.apply(x)
        y = self.solve_inclusion(gamma, x[0])
        return np.array([(x[0] - y) / gamma])

    def resolvent_metric_exact(self, M, gamma, x):
        if M.dim != 1:
            raise OperatorError("PiecewiseScalar needs a 1x1 metric")
        return np.array([self.solve_inclusion(gamma / M.matrix[0, 0], x[0])])

    def __repr__(self):
        return (f"PiecewiseScalar({self.breakpoints}, {self.pieces}, "
                f"{self.values_at_breaks})")


class YosidaOracle(Operator):
    """The single-valued map ``base_{index}``.

    Further Yosida maps are served by reindexing,
    ``(base_{index})_gamma = base_{index + gamma}``.
    """

    def __init__(self, base, index, tags=None):
        super().__init__(base.dim, tags)
        self.base = base
        self.index = float(index)

    @property
    def linear_kind(self):
        return self.base.linear_kind

    def apply(self, x):
        return self.base.yosida(self.index, x)

    def yosida(self, gamma, x):
        return self.base.yosida(self.index + gamma, x)

    def resolvent_metric_exact(self, M, gamma, x):
        if self.linear_kind:
            return materialize(self).resolvent_metric_exact(M, gamma, x)
        return super().resolvent_metric_exact(M, gamma, x)

    def __repr__(self):
        return f"YosidaOracle({self.base!r}, {self.index})"


def materialize(T, dim=None):
    """Probe an affine single-valued map into an :class:`AffineMap`.

    ``T`` may be an :class:`Operator` (its :meth:`~Operator.apply` is used)
    or a plain callable, in which case ``dim`` is required.
    """
    fn = T.apply if isinstance(T, Operator) else T
    d = T.dim if isinstance(T, Operator) else int(dim)
    c = np.asarray(fn(np.zeros(d)), dtype=float)
    cols = [np.asarray(fn(e), dtype=float) - c for e in np.eye(d)]
    return AffineMap(np.column_stack(cols), c)


def _metric_resolvent_by_root(T, M, gamma, x):
    # y + gamma M^{-1} T(y) = x for a single-valued T
    def F(y):
        return y + gamma * M.solve(T(y)) - x

    sol = optimize.root(F, x.copy(), method="hybr", options={"xtol": 1e-14})
    if not sol.success or np.linalg.norm(F(sol.x)) > 1e-10 * max(1.0, np.linalg.norm(x)):
        raise OperatorError(f"metric resolvent root solve failed: {sol.message}")
    return sol.x


def _inverse_single_valued(T, delta, x):
    # unique y with y + delta T(y) = x; brentq in 1-D, hybr otherwise
    if x.shape[0] == 1:
        def g(s):
            return s + delta * T(np.array([s]))[0] - x[0]

        width = 1.0 + abs(x[0])
        lo, hi = x[0] - width, x[0] + width
        while g(lo) > 0:
            width *= 2
            lo = x[0] - width
        while g(hi) < 0:
            width *= 2
            hi = x[0] + width
        return np.array([optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)])
    sol = optimize.root(lambda y: y + delta * T(y) - x, x.copy(), method="hybr",
                        options={"xtol": 1e-14})
    if not sol.success:
        raise OperatorError(f"root solve failed: {sol.message}")
    return sol.x


# -- public oracle functions --------------------------------------------------

def yosida(A, gamma, x):
    """Yosida approximation ``A_gamma(x)``; the unique ``z`` with ``x in A^{-1}z + gamma z``."""
    return A.yosida(float(gamma), as_vector(x, A.dim))


def resolvent_euclid(A, gamma, x):
    """``J_{gamma A}(x)``: the unique ``y`` with ``x in y + gamma A(y)``."""
    if gamma == 0:
        raise ValueError("resolvent index must be nonzero")
    return A.resolvent(float(gamma), as_vector(x, A.dim))


def _resolvent_metric(A, M, gamma, x, conv):
    if conv == Convention.EXACT:
        return A.resolvent_metric_exact(M, gamma, x)
    return x - gamma * M.solve(A.yosida(gamma, x))


def resolvent_metric(A, M, gamma, x, conv=Convention.YOSIDA):
    """Metric resolvent of ``gamma A`` under the chosen convention.

    ``"exact"`` solves ``x in y + gamma M^{-1} A(y)``; ``"yosida"`` returns
    ``x - gamma M^{-1} A_gamma(x)``. When both are computable and disagree by
    more than ``1e-8`` a warning is logged, since the two coincide only for
    special metrics.
    """
    conv = Convention.parse(conv)
    x = as_vector(x, A.dim)
    if gamma == 0:
        raise ValueError("resolvent index must be nonzero")
    out = _resolvent_metric(A, M, float(gamma), x, conv)
    other = Convention.YOSIDA if conv == Convention.EXACT else Convention.EXACT
    try:
        alt = _resolvent_metric(A, M, float(gamma), x, other)
    except (OperatorError, UnsupportedError):
        return out
    gap = float(np.linalg.norm(out - alt))
    if gap > 1e-8:
        logger.warning("metric resolvent conventions differ by %.3e at x=%s", gap, x.tolist())
    return out


def negative_yosida_resolvent(B, M, gamma, x):
    """Metric resolvent of ``gamma B_{-gamma}`` without forming ``B_{-gamma}``.

    Equals ``x - gamma M^{-1} B(x)``.
    """
    x = as_vector(x, M.dim)
    Bx = B.apply(x) if isinstance(B, Operator) else np.asarray(B(x), dtype=float)
    return x - gamma * M.solve(Bx)


@dataclass
class ReindexReport:
    gamma: float
    delta: float
    samples: int
    max_discrepancy: float
    tolerance: float = 1e-9
    route: str = "affine"

    @property
    def passed(self):
        return self.max_discrepancy <= self.tolerance


def yosida_reindex_check(A, gamma, delta, samples):
    """Compare ``(A_gamma)_delta`` with ``A_{gamma+delta}`` on sample points.

    ``(A_gamma)_delta`` is computed from the oracle of ``A_gamma`` alone:
    by probing it into an affine map when ``A`` is of affine kind, and by
    solving ``y + delta A_gamma(y) = x`` numerically otherwise.
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.shape[1] != A.dim and pts.shape[0] == A.dim:
        pts = pts.T

    def inner(y):
        return A.yosida(gamma, y)

    route = "affine" if A.linear_kind else "root"
    inner_affine = materialize(inner, A.dim) if A.linear_kind else None
    worst = 0.0
    for x in pts:
        if delta == 0:
            lhs = inner(x)
        elif inner_affine is not None:
            lhs = inner_affine.yosida(delta, x)
        else:
            y = _inverse_single_valued(inner, delta, x)
            lhs = inner(y)
        rhs = A.yosida(gamma + delta, x)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return ReindexReport(gamma, delta, len(pts), worst, route=route)


# -- property testers ---------------------------------------------------------

def uniform_sampler(dim, radius=10.0):
    """Sampler drawing points uniformly from ``[-radius, radius]^dim``."""
    def draw(rng, n):
        return rng.uniform(-radius, radius, size=(n, dim))
    return draw


@dataclass
class PropertyReport:
    """Outcome of a sampled inequality check.

    ``worst`` is the largest scaled violation ``(rhs - lhs) / scale`` seen,
    where ``scale = max(1, |lhs|, |rhs|)``; the check passes iff no pair
    exceeds ``tolerance`` and the precondition (if any) holds.
    """

    name: str
    n: int
    violations: int
    worst: float
    tolerance: float
    precondition_ok: bool = True
    header: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.precondition_ok and self.violations == 0

    @property
    def violation_fraction(self):
        return self.violations / self.n if self.n else 0.0


def _as_map(T):
    if isinstance(T, Operator):
        return T.apply
    if isinstance(T, np.ndarray):
        return lambda x: T @ x
    return T


def _resolve_dim(T, dim):
    if dim is not None:
        return int(dim)
    if isinstance(T, Operator):
        return T.dim
    if isinstance(T, np.ndarray):
        return T.shape[1]
    raise ValueError("dim is required for plain callables")


def _pairs(T, dim, sampler, n, seed):
    rng = np.random.default_rng(seed)
    draw = sampler or uniform_sampler(dim)
    xs, ys = draw(rng, n), draw(rng, n)
    f = _as_map(T)
    for x, y in zip(xs, ys):
        yield x, y, np.asarray(f(x), dtype=float), np.asarray(f(y), dtype=float)


def _tally(name, T, dim, sampler, n, seed, tol, lhs_rhs, **extra):
    dim = _resolve_dim(T, dim)
    violations, worst = 0, -np.inf
    for x, y, Tx, Ty in _pairs(T, dim, sampler, n, seed):
        lhs, rhs = lhs_rhs(x, y, Tx, Ty)
        v = (rhs - lhs) / max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, v)
        if v > tol:
            violations += 1
    return PropertyReport(name, n, violations, float(worst), tol, **extra)


def check_cocoercive(T, beta, sampler=None, n=1000, dim=None, seed=0, tol=1e-12):
    """Sampled check of ``<Tx - Ty, x - y> >= beta ||Tx - Ty||^2``."""
    def lr(x, y, Tx, Ty):
        d = Tx - Ty
        return float(d @ (x - y)), beta * float(d @ d)
    return _tally("cocoercive", T, dim, sampler, n, seed, tol, lr)


def check_strongly_monotone(T, rho, sampler=None, n=1000, dim=None, seed=0, tol=1e-12):
    """Sampled check of ``<Tx - Ty, x - y> >= rho ||x - y||^2``."""
    def lr(x, y, Tx, Ty):
        d = x - y
        return float((Tx - Ty) @ d), rho * float(d @ d)
    return _tally("strongly_monotone", T, dim, sampler, n, seed, tol, lr)


def check_metric_cocoercive(T, M, kappa, modulus, sampler=None, n=1000, seed=0, tol=1e-12):
    """Sampled check that ``M^{-1}T`` is ``kappa``-cocoercive in ``<.,.>_M``.

    The precondition ``||M^{-1}|| <= modulus / kappa`` (``modulus`` being
    ``min(alpha, beta)``) is evaluated first and reported separately. The
    inequality is tested in squared form,
    ``<M^{-1}(Tx - Ty), x - y>_M >= kappa ||M^{-1}(Tx - Ty)||_M^2``.
    """
    header = "squared form: <M^-1 dT, dx>_M >= kappa ||M^-1 dT||_M^2"
    pre_ok = M.inv_norm <= modulus / kappa * (1 + 1e-12)
    details = {"inv_norm": M.inv_norm, "bound": modulus / kappa}

    def lr(x, y, Tx, Ty):
        w = M.solve(Tx - Ty)
        return M.inner(w, x - y), kappa * M.inner(w, w)

    if not pre_ok:
        return PropertyReport("metric_cocoercive", 0, 0, np.nan, tol,
                              precondition_ok=False, header=header, details=details)
    return _tally("metric_cocoercive", T, M.dim, sampler, n, seed, tol, lr,
                  header=header, details=details)


def check_averaged(T, a, metric=None, sampler=None, n=1000, dim=None, seed=0, tol=1e-10):
    """Sampled check that ``T`` is ``a``-averaged in the given metric.

    Uses ``||Tx - Ty||^2 <= ||x - y||^2 - ((1 - a)/a) ||(I - T)x - (I - T)y||^2``
    with all norms taken in ``metric`` (Euclidean when ``None``).
    """
    if not 0 < a < 1:
        raise ValueError("averagedness constant must lie in (0, 1)")
    if dim is None and metric is not None:
        dim = metric.dim
    sq = (lambda v: metric.inner(v, v)) if metric is not None else (lambda v: float(v @ v))
    k = (1 - a) / a

    def lr(x, y, Tx, Ty):
        d = x - y
        dT = Tx - Ty
        return sq(d) - k * sq(d - dT), sq(dT)

    return _tally("averaged", T, dim, sampler, n, seed, tol, lr)


def as_metric(M, dim=None):
    return M if isinstance(M, Metric) else Metric(M, dim)
