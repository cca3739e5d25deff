"""Convex functions with closed-form proximal maps.

Every function here exposes its value, a Euclidean prox and (where a closed
form exists) an exact prox in a metric ``M``::

    prox^M_{gamma f}(x) = argmin_v  f(v) + ||v - x||_M^2 / (2 gamma)

Kinks are handled by exact case analysis, never by smoothing.
"""

import numpy as np

from .linalg import as_vector, spectral_bounds

__all__ = [
    "Convention",
    "FunctionSpec",
    "IndicatorBox",
    "L1",
    "PositivePartSum",
    "Quadratic",
    "UnsupportedError",
    "Zero",
    "g_neg",
    "g_neg_value",
    "moreau_gradient",
    "moreau_value",
    "prox_euclid",
    "prox_g_neg_metric",
    "prox_metric",
    "value",
]


class UnsupportedError(ValueError):
    """Requested computation has no closed form for this function/metric."""


class Convention:
    """How a metric resolvent is evaluated.

    ``EXACT`` solves ``x in y + gamma M^{-1} A(y)`` directly.
    ``YOSIDA`` uses ``x - gamma M^{-1} A_gamma(x)`` with the Euclidean
    Yosida approximation ``A_gamma``. The two differ unless ``M`` is a
    multiple of the identity on the relevant subspace.
    """

    EXACT = "exact"
    YOSIDA = "yosida"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        if key in ("exact",):
            return cls.EXACT
        if key in ("yosida", "yosidaform"):
            return cls.YOSIDA
        raise ValueError(f"unknown resolvent convention {name!r}")


def _soft(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _pos_part_prox(x, thresh):
    # prox of thresh * max(., 0): shift down above thresh, zero on [0, thresh]
    return np.where(x > thresh, x - thresh, np.where(x < 0.0, x, 0.0))


class FunctionSpec:
    """Base class; subclasses fill in the closed forms."""

    smooth = False
    separable = False

    def value(self, x):
        raise NotImplementedError

    def prox(self, gamma, x):
        raise NotImplementedError

    def prox_diag(self, scales, x):
        """Prox with per-coordinate step ``scales`` (separable functions)."""
        raise UnsupportedError(f"{type(self).__name__} has no separable prox")

    def prox_metric_exact(self, M, gamma, x):
        if self.separable and M.is_diagonal:
            return self.prox_diag(gamma / M.diagonal, x)
        raise UnsupportedError(
            f"exact metric prox of {type(self).__name__} needs a diagonal metric"
        )

    def gradient(self, x):
        raise UnsupportedError(f"{type(self).__name__} is not differentiable")

    @property
    def beta(self):
        """Cocoercivity constant of the gradient (``None`` if nonsmooth)."""
        return None

    def in_subdifferential(self, x, v, tol=1e-10):
        """Whether ``v`` lies in ``∂f(x)`` up to ``tol`` (coordinatewise)."""
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)


class Zero(FunctionSpec):
    smooth = True
    separable = True

    def value(self, x):
        return 0.0

    def prox(self, gamma, x):
        return np.array(x, dtype=float)

    def prox_diag(self, scales, x):
        return np.array(x, dtype=float)

    def prox_metric_exact(self, M, gamma, x):
        return np.array(x, dtype=float)

    def gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def beta(self):
        return np.inf

    def in_subdifferential(self, x, v, tol=1e-10):
        return bool(np.all(np.abs(v) <= tol))

    def __repr__(self):
        return "Zero()"


class L1(FunctionSpec):
    """``w * ||x||_1``."""

    separable = True

    def __init__(self, weight=1.0):
        if weight < 0:
            raise ValueError("L1 weight must be nonnegative")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.sum(np.abs(x)))

    def prox(self, gamma, x):
        return _soft(np.asarray(x, dtype=float), gamma * self.weight)

    def prox_diag(self, scales, x):
        return _soft(np.asarray(x, dtype=float), scales * self.weight)

    def in_subdifferential(self, x, v, tol=1e-10):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        w = self.weight
        on = x != 0
        ok_on = np.abs(v[on] - w * np.sign(x[on])) <= tol
        ok_off = np.abs(v[~on]) <= w + tol
        return bool(np.all(ok_on) and np.all(ok_off))

    def __repr__(self):
        return f"L1(weight={self.weight})"


class PositivePartSum(FunctionSpec):
    """``w * sum_i max(x_i, 0)``."""

    separable = True

    def __init__(self, weight=1.0):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.sum(np.maximum(x, 0.0)))

    def prox(self, gamma, x):
        return _pos_part_prox(np.asarray(x, dtype=float), gamma * self.weight)

    def prox_diag(self, scales, x):
        return _pos_part_prox(np.asarray(x, dtype=float), scales * self.weight)

    def in_subdifferential(self, x, v, tol=1e-10):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        w = self.weight
        pos, neg, kink = x > 0, x < 0, x == 0
        return bool(
            np.all(np.abs(v[pos] - w) <= tol)
            and np.all(np.abs(v[neg]) <= tol)
            and np.all((v[kink] >= -tol) & (v[kink] <= w + tol))
        )

    def __repr__(self):
        return f"PositivePartSum(weight={self.weight})"


class IndicatorBox(FunctionSpec):
    """Indicator of ``{x : lower <= x <= upper}`` (coordinatewise)."""

    separable = True

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if np.any(self.lower > self.upper):
            raise ValueError("empty box")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.all(x >= self.lower) and np.all(x <= self.upper)
        return 0.0 if inside else np.inf

    def prox(self, gamma, x):
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def prox_diag(self, scales, x):
        return self.prox(1.0, x)

    def in_subdifferential(self, x, v, tol=1e-10):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        lo = np.broadcast_to(self.lower, x.shape)
        hi = np.broadcast_to(self.upper, x.shape)
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            return False
        at_lo = np.isclose(x, lo, rtol=0, atol=tol)
        at_hi = np.isclose(x, hi, rtol=0, atol=tol)
        ok = np.where(
            at_lo & at_hi,
            True,
            np.where(at_lo, v <= tol, np.where(at_hi, v >= -tol, np.abs(v) <= tol)),
        )
        return bool(np.all(ok))

    def __repr__(self):
        return f"IndicatorBox({self.lower.tolist()}, {self.upper.tolist()})"


class Quadratic(FunctionSpec):
    """``x'Qx/2 + b'x + c`` with ``Q`` symmetric positive semidefinite."""

    smooth = True

    def __init__(self, Q, b=None, c=0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        lo, hi = spectral_bounds(Q)
        if lo < -1e-12 * max(1.0, hi):
            raise ValueError("Quadratic needs a positive semidefinite Q")
        self.Q = Q
        self.b = np.zeros(Q.shape[0]) if b is None else as_vector(b, Q.shape[0])
        self.c = float(c)
        self._lmax = hi

    @property
    def dim(self):
        return self.Q.shape[0]

    @property
    def separable(self):
        return not np.any(self.Q - np.diag(np.diag(self.Q)))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.b @ x + self.c)

    def gradient(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.b

    @property
    def beta(self):
        return np.inf if self._lmax <= 0 else 1.0 / self._lmax

    def prox(self, gamma, x):
        lhs = np.eye(self.dim) + gamma * self.Q
        return np.linalg.solve(lhs, np.asarray(x, dtype=float) - gamma * self.b)

    def prox_diag(self, scales, x):
        if not self.separable:
            raise UnsupportedError("Quadratic with coupled Q is not separable")
        q = np.diag(self.Q)
        return (np.asarray(x, dtype=float) - scales * self.b) / (1.0 + scales * q)

    def prox_metric_exact(self, M, gamma, x):
        # stationarity: M(v - x)/gamma + Qv + b = 0
        lhs = M.matrix + gamma * self.Q
        return np.linalg.solve(lhs, M.apply(np.asarray(x, dtype=float)) - gamma * self.b)

    def in_subdifferential(self, x, v, tol=1e-10):
        return bool(np.all(np.abs(self.gradient(x) - v) <= tol))

    def __repr__(self):
        return f"Quadratic(Q={self.Q.tolist()}, b={self.b.tolist()}, c={self.c})"


def value(f, x):
    return f.value(np.asarray(x, dtype=float))


def prox_euclid(f, gamma, x):
    """Euclidean prox ``argmin f(v) + ||v - x||^2 / (2 gamma)``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return f.prox(gamma, as_vector(x))


def prox_metric(f, M, gamma, x, conv=Convention.YOSIDA):
    """Prox of ``gamma f`` in the metric ``M``.

    With ``conv="exact"`` this is the true metric prox (closed form for a
    diagonal metric with a separable ``f``, or any metric with a quadratic
    ``f``). With ``conv="yosida"`` it returns
    ``x - gamma M^{-1} grad f_gamma(x)``, which is defined for any metric.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = as_vector(x, M.dim)
    if Convention.parse(conv) == Convention.EXACT:
        return f.prox_metric_exact(M, gamma, x)
    return x - M.solve(x - f.prox(gamma, x))


def moreau_value(f, gamma, x):
    """Moreau envelope ``f_gamma(x) = f(p) + ||x - p||^2 / (2 gamma)``."""
    x = as_vector(x)
    p = prox_euclid(f, gamma, x)
    r = x - p
    return f.value(p) + float(r @ r) / (2.0 * gamma)


def moreau_gradient(f, gamma, x):
    """``grad f_gamma(x) = (x - prox_{gamma f}(x)) / gamma``."""
    x = as_vector(x)
    return (x - prox_euclid(f, gamma, x)) / gamma


def _check_neg_index(g, gamma):
    if not isinstance(g, (Quadratic, Zero)):
        raise UnsupportedError("g_{-gamma} is only available for quadratic g")
    beta = g.beta
    if not (gamma > 0 and gamma <= beta * (1 + 1e-12)):
        raise ValueError(f"gamma={gamma} must lie in (0, beta={beta}]")


def g_neg_value(g, gamma, u):
    """``g_{-gamma}(u) = sup_eta g(eta) - ||u - eta||^2 / (2 gamma)``.

    Closed form for quadratic ``g``: the maximizer solves
    ``(I - gamma Q) eta = u + gamma b``. At ``gamma = beta`` the system is
    singular and the supremum is ``+inf`` unless the right-hand side lies in
    the range.
    """
    _check_neg_index(g, gamma)
    u = as_vector(u)
    if isinstance(g, Zero):
        return 0.0
    lhs = np.eye(g.dim) - gamma * g.Q
    rhs = u + gamma * g.b
    eta, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.linalg.norm(lhs @ eta - rhs) > 1e-10 * max(1.0, np.linalg.norm(rhs)):
        return np.inf
    d = u - eta
    return g.value(eta) - float(d @ d) / (2.0 * gamma)


def g_neg(g, gamma):
    """``g_{-gamma}`` as a :class:`Quadratic` (requires ``gamma < beta``).

    ``Q' = Q (I - gamma Q)^{-1}``, ``b' = (I - gamma Q)^{-1} b`` and the
    constant is pinned by :func:`g_neg_value` at the origin.
    """
    _check_neg_index(g, gamma)
    if isinstance(g, Zero):
        return Zero()
    if gamma * g._lmax >= 1.0:
        raise ValueError("g_{-gamma} is not finite everywhere at gamma = beta")
    R = np.linalg.inv(np.eye(g.dim) - gamma * g.Q)
    Q = g.Q @ R
    Q = 0.5 * (Q + Q.T)
    return Quadratic(Q, R @ g.b, g_neg_value(g, gamma, np.zeros(g.dim)))


def prox_g_neg_metric(g, M, gamma, x):
    """``prox^M_{gamma g_{-gamma}} = I - gamma M^{-1} grad g``."""
    x = as_vector(x, M.dim)
    return x - gamma * M.solve(g.gradient(x))
