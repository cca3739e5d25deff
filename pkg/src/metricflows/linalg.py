"""Dense vectors and symmetric strongly positive metric operators.

A :class:`Metric` wraps a symmetric positive definite matrix ``M`` and
provides the inner product ``<x, y>_M = <Mx, y>``, the induced norm and
applications of ``M^{-1}``. Diagonal metrics are detected and handled
without factorization.
"""

import numpy as np
from scipy import linalg as sla

__all__ = [
    "Metric",
    "MetricError",
    "as_vector",
    "m_inner",
    "m_norm",
    "solve_metric",
    "spectral_bounds",
]

SYMMETRY_TOL = 1e-12


class MetricError(ValueError):
    """Raised for matrices that cannot serve as a metric."""


def as_vector(x, dim=None):
    """Return ``x`` as a finite 1-D float array, optionally checking its size."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _check_symmetric(matrix):
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MetricError(f"expected a square matrix, got shape {a.shape}")
    scale = np.maximum(1.0, np.abs(a))
    if np.any(np.abs(a - a.T) > SYMMETRY_TOL * scale):
        raise MetricError("matrix is not symmetric")
    return a


def spectral_bounds(matrix):
    """Smallest and largest eigenvalue of a symmetric matrix.

    Parameters
    ----------
    matrix : array_like
        Symmetric ``(d, d)`` matrix (scalars are treated as ``1x1``).

    Returns
    -------
    (float, float)
        ``(lambda_min, lambda_max)``.
    """
    a = _check_symmetric(np.atleast_2d(np.asarray(matrix, dtype=float)))
    if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        d = np.diag(a)
        return float(d.min()), float(d.max())
    w = np.linalg.eigvalsh(a)
    return float(w[0]), float(w[-1])


class Metric:
    """Symmetric strongly positive operator ``M`` on ``R^d``.

    Validated at construction (symmetry check and Cholesky factorization);
    immutable afterwards.

    Parameters
    ----------
    matrix : array_like
        ``(d, d)`` SPD matrix, a 1-D array of diagonal entries, or a scalar
        (interpreted as ``c * I`` of dimension ``dim``).
    dim : int, optional
        Dimension, only needed for scalar ``matrix``.
    """

    def __init__(self, matrix, dim=None):
        a = np.asarray(matrix, dtype=float)
        if a.ndim == 0:
            a = float(a) * np.eye(1 if dim is None else dim)
        elif a.ndim == 1:
            a = np.diag(a)
        a = _check_symmetric(a)
        if not np.all(np.isfinite(a)):
            raise MetricError("matrix has non-finite entries")
        off = a - np.diag(np.diag(a))
        self._diag = np.diag(a).copy() if not np.any(off) else None
        if self._diag is not None:
            if np.any(self._diag <= 0):
                raise MetricError("matrix is not positive definite")
            self._cho = None
        else:
            try:
                self._cho = sla.cho_factor(a, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise MetricError("matrix is not positive definite") from exc
        self._matrix = a
        self._matrix.flags.writeable = False
        self.m, self.op_norm = spectral_bounds(a)
        if self.m <= 0:
            raise MetricError("matrix is not positive definite")

    @classmethod
    def identity(cls, dim):
        return cls(np.ones(dim))

    @property
    def matrix(self):
        return self._matrix

    @property
    def dim(self):
        return self._matrix.shape[0]

    @property
    def is_diagonal(self):
        return self._diag is not None

    @property
    def diagonal(self):
        return np.diag(self._matrix).copy()

    @property
    def inv_norm(self):
        """Operator norm of ``M^{-1}``, i.e. ``1/m``."""
        return 1.0 / self.m

    def apply(self, x):
        if self._diag is not None:
            return self._diag * x
        return self._matrix @ x

    def solve(self, b):
        if self._diag is not None:
            return b / self._diag
        return sla.cho_solve(self._cho, b, check_finite=False)

    def inverse(self):
        """Dense ``M^{-1}``."""
        if self._diag is not None:
            return np.diag(1.0 / self._diag)
        return sla.cho_solve(self._cho, np.eye(self.dim), check_finite=False)

    def inner(self, x, y):
        return float(np.dot(self.apply(x), y))

    def norm(self, x):
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def __repr__(self):
        if self.is_diagonal:
            return f"Metric(diag={self._diag.tolist()})"
        return f"Metric({self._matrix.tolist()})"


def _checked(M, *vectors):
    return [as_vector(v, M.dim) for v in vectors]


def m_inner(M, x, y):
    """``<x, y>_M = <Mx, y>``."""
    x, y = _checked(M, x, y)
    return M.inner(x, y)


def m_norm(M, x):
    """``||x||_M = sqrt(<Mx, x>)``."""
    (x,) = _checked(M, x)
    return M.norm(x)


def solve_metric(M, b):
    """Return ``y`` with ``My = b``."""
    (b,) = _checked(M, b)
    return M.solve(b)
