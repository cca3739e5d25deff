"""Convergence analysis of recorded trajectories.

Finite-dimensional state spaces only: weak convergence is certified as
strong convergence and reported as a finite-dimensional limit.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flows import PROX, validate_parameters

__all__ = [
    "ConvergenceReport",
    "DegenerateFitError",
    "StabilityVerdict",
    "UnconvergedError",
    "analyze",
    "check_exponential_bound",
    "check_monotone_attractor",
    "classify_stability",
    "estimate_limit",
    "fit_exponential_rate",
    "fit_residual_rate",
    "objective_trace",
    "predicted_rate",
]

CONVERGED_RESIDUAL = 1e-6
MONOTONE_TOL = 1e-9


class UnconvergedError(RuntimeError):
    pass


class DegenerateFitError(ValueError):
    pass


def estimate_limit(traj, tol=CONVERGED_RESIDUAL):
    """Final recorded state, provided the fixed-point residual is below ``tol``."""
    if traj.final_residual >= tol:
        raise UnconvergedError(
            f"final residual {traj.final_residual:.3e} >= {tol:.1e} at t={traj.final_time}"
        )
    return traj.final_state.copy()


def fit_exponential_rate(traj, u_star, window=(0.1, 0.9), floor=1e-12):
    """Least-squares decay rate of ``||u(t) - u*||``.

    Fits ``log ||u(t) - u*|| ~ a - C2 t`` over the central part of the time
    axis. Returns ``(C2, r_squared)``.
    """
    t_end = traj.final_time
    lo, hi = window[0] * t_end, window[1] * t_end
    sel = (traj.times >= lo) & (traj.times <= hi)
    t = traj.times[sel]
    dist = traj.distances(u_star)[sel]
    if t.size < 10:
        raise DegenerateFitError(f"only {t.size} samples in the fit window")
    if np.any(dist <= floor):
        raise DegenerateFitError("distance to u* hits the floor inside the fit window")
    y = np.log(dist)
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def check_monotone_attractor(traj, u_star, tol=MONOTONE_TOL):
    """True iff ``||u(t) - u*||`` never increases by more than ``tol`` between samples."""
    d = traj.distances(u_star)
    return bool(np.all(np.diff(d) <= tol))


@dataclass(frozen=True)
class StabilityVerdict:
    classification: str
    rate: Optional[float] = None

    @property
    def norm_rate(self):
        """Rate for ``||u - u*||`` (half the rate of ``||u - u*||^2 / 2``)."""
        return None if self.rate is None else self.rate / 2


def classify_stability(lam_lower, eta, rho):
    """Exponential or monotone-attractor classification from ``eta * rho``."""
    q = 1.0 / (eta * rho)
    if np.isclose(q, 4.0, rtol=1e-12, atol=0):
        return StabilityVerdict("monotone attractor")
    if q < 4.0:
        return StabilityVerdict("exponentially stable", lam_lower * (1 - 1 / (4 * eta * rho)))
    return StabilityVerdict("undetermined")


def predicted_rate(lam_lower, eta, rho):
    """``C = lambda_lower (1 - 1/(4 eta rho))``, the decay rate of ``||u - u*||^2/2``.

    Raises ``ValueError`` when ``1/(eta rho) >= 4``; use
    :func:`classify_stability` to get the monotone-attractor verdict there.
    """
    v = classify_stability(lam_lower, eta, rho)
    if v.rate is None:
        raise ValueError(f"no exponential rate: {v.classification} (1/(eta rho) = {1 / (eta * rho)})")
    return v.rate


def check_exponential_bound(traj, u_star, rate, slack=1e-6):
    """``||u(t) - u*|| <= (1 + slack) ||u0 - u*|| exp(-(rate/2) t)`` at every sample."""
    d = traj.distances(u_star)
    bound = (1 + slack) * d[0] * np.exp(-0.5 * rate * traj.times)
    return bool(np.all(d <= bound))


def objective_trace(traj, spec):
    """``(f + g)(v(t))`` with ``v(t) = prox^M_{gamma f}(u(t))`` at every sample."""
    if spec.kind != PROX or spec.f is None:
        raise ValueError("objective trace needs a PROX flow")
    out = []
    for u in traj.states:
        v = spec.resolvent(u)
        out.append(spec.f.value(v) + spec.g.value(v))
    return np.array(out)


@dataclass
class ConvergenceReport:
    limit_estimate: Optional[list]
    final_residual: float
    converged: bool
    rate_estimate: Optional[float] = None
    fit_quality: Optional[float] = None
    monotone_attractor: Optional[bool] = None
    exponential_bound_holds: Optional[bool] = None
    predicted_rate: Optional[float] = None
    stability: Optional[str] = None
    conditions: dict = field(default_factory=dict)
    label: str = "limit (finite-dim)"

    def to_dict(self):
        return dict(self.__dict__)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


def analyze(traj, spec, u_star=None):
    """Assemble a :class:`ConvergenceReport` for a trajectory of ``spec``."""
    converged = traj.final_residual < CONVERGED_RESIDUAL
    rep = ConvergenceReport(
        limit_estimate=traj.final_state.tolist() if converged else None,
        final_residual=traj.final_residual,
        converged=converged,
    )
    params = None
    if spec.constants is not None:
        params = validate_parameters(spec)
        rep.conditions = params.to_dict()
    if u_star is None:
        return rep
    rep.monotone_attractor = check_monotone_attractor(traj, u_star)
    try:
        rep.rate_estimate, rep.fit_quality = fit_exponential_rate(traj, u_star)
    except DegenerateFitError:
        pass
    c = spec.constants
    if params is not None and c.rho is not None and c.eta is not None:
        if "rate_condition" in params.names() and params["rate_condition"].passed:
            verdict = classify_stability(spec.schedule.lower, c.eta, c.rho)
            rep.stability = verdict.classification
            if verdict.rate is not None:
                rep.predicted_rate = verdict.rate
                rep.exponential_bound_holds = check_exponential_bound(traj, u_star, verdict.rate)
    return rep


def fit_residual_rate(traj, window=(0.1, 0.9), floor=1e-14):
    """Decay rate of the fixed-point residual, for runs without a known ``u*``.

    Samples whose residual is below ``floor`` are dropped before fitting
    ``log r(t) ~ a - C2 t`` over the window. Returns ``(C2, r_squared)``.
    """
    t_end = traj.final_time
    sel = (traj.times >= window[0] * t_end) & (traj.times <= window[1] * t_end)
    sel &= traj.residuals > floor
    t, r = traj.times[sel], traj.residuals[sel]
    if t.size < 10:
        raise DegenerateFitError(f"only {t.size} usable samples in the fit window")
    y = np.log(r)
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(-slope), (1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0)
