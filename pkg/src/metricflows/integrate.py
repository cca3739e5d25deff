"""Trajectory integration for the relaxed flows and the discrete iteration.

Fixed-step Euler and classical RK4 are implemented here; the adaptive
Dormand-Prince RK45 option delegates to :func:`scipy.integrate.solve_ivp`.
Every method treats the breakpoints of the relaxation schedule as hard step
boundaries, and ``lambda`` is read once per step on the open step interval.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .flows import PROX, LambdaSchedule, field_at, flow_map
from .linalg import as_vector

__all__ = [
    "DiscreteRun",
    "IntegrationError",
    "IntegratorConfig",
    "Trajectory",
    "derivative_estimate",
    "integrate",
    "iterate_discrete",
    "spec_fingerprint",
]

METHODS = ("euler", "rk4", "rk45")
BLOWUP_NORM = 1e12


class IntegrationError(RuntimeError):
    """Integration aborted; ``last_time`` and ``partial`` hold what was computed."""

    def __init__(self, message, last_time=None, partial=None):
        super().__init__(message)
        self.last_time = last_time
        self.partial = partial


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    h: float = 1e-2
    t_end: float = 10.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    record_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.lower())
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    objective: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_time(self):
        return float(self.times[-1])

    @property
    def final_residual(self):
        return float(self.residuals[-1])

    def distances(self, u_star):
        return np.linalg.norm(self.states - np.asarray(u_star, dtype=float), axis=1)

    def state_at(self, t):
        """Recorded state at time ``t`` (must be a sample time)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[i], t, rtol=0, atol=1e-9 * max(1.0, abs(t))):
            raise KeyError(f"t={t} is not a recorded sample")
        return self.states[i]


def spec_fingerprint(spec):
    text = "|".join(map(repr, (spec.kind, spec.A, spec.B, spec.M, spec.gamma,
                               spec.schedule, spec.conv)))
    return hashlib.sha1(text.encode()).hexdigest()[:16]


def _segments(schedule, t_end):
    inner = [b for b in schedule.breakpoints if 0.0 < b < t_end]
    edges = [0.0] + inner + [float(t_end)]
    return list(zip(edges[:-1], edges[1:]))


def _grid(a, b, h):
    n = max(1, int(np.ceil((b - a) / h - 1e-9)))
    g = a + h * np.arange(n + 1)
    g[-1] = b
    return g


def _euler(F, u, dt):
    return u + dt * F(u)


def _rk4(F, u, dt):
    k1 = F(u)
    k2 = F(u + 0.5 * dt * k1)
    k3 = F(u + 0.5 * dt * k2)
    k4 = F(u + dt * k3)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _guard(u, t, times, states):
    if not np.all(np.isfinite(u)) or np.linalg.norm(u) > BLOWUP_NORM:
        partial = (np.array(times), np.array(states))
        raise IntegrationError(f"state blew up after t={times[-1]}", times[-1], partial)


def _objective(spec, u):
    v = spec.resolvent(u)
    return spec.f.value(v) + spec.g.value(v)


def integrate(spec, u0, cfg=None):
    """Integrate ``du/dt = lambda(t) (T(u) - u)`` from ``u(0) = u0``.

    Parameters
    ----------
    spec : FlowSpec
    u0 : array_like
        Initial state.
    cfg : IntegratorConfig, optional
        Defaults to RK4 with ``h = 1e-2`` up to ``t = 10``.

    Returns
    -------
    Trajectory
        Recorded samples (every ``record_stride``-th step plus the final
        state), the Euclidean fixed-point residual at each sample and, for
        PROX flows, the objective ``(f + g)(prox^M_{gamma f}(u))``.

    Raises
    ------
    IntegrationError
        If the state becomes non-finite or exceeds norm ``1e12``, or if the
        adaptive solver fails.
    """
    cfg = cfg or IntegratorConfig()
    if not spec.schedule.continuous:
        raise ValueError(f"{spec.schedule!r} has no continuous-time value")
    u = as_vector(u0, spec.dim).copy()
    times, states = [0.0], [u.copy()]
    for a, b in _segments(spec.schedule, cfg.t_end):
        lam = spec.schedule.value(0.5 * (a + b))

        def F(x, lam=lam):
            return field_at(spec, None, x, lam)

        if cfg.method == "rk45":
            sol = solve_ivp(lambda t, x: F(x), (a, b), u, method="RK45",
                            rtol=cfg.rel_tol, atol=cfg.abs_tol)
            if sol.status != 0:
                raise IntegrationError(f"RK45 failed: {sol.message}", times[-1],
                                       (np.array(times), np.array(states)))
            for t, x in zip(sol.t[1:], sol.y.T[1:]):
                _guard(x, t, times, states)
                times.append(float(t))
                states.append(x.copy())
            u = states[-1].copy()
            continue
        step = _rk4 if cfg.method == "rk4" else _euler
        grid = _grid(a, b, cfg.h)
        for t0, t1 in zip(grid[:-1], grid[1:]):
            u = step(F, u, t1 - t0)
            _guard(u, t1, times, states)
            times.append(float(t1))
            states.append(u.copy())

    times = np.array(times)
    states = np.array(states)
    stride = int(cfg.record_stride)
    if stride > 1:
        keep = np.arange(0, len(times), stride)
        if keep[-1] != len(times) - 1:
            keep = np.append(keep, len(times) - 1)
        times, states = times[keep], states[keep]
    residuals = np.array([np.linalg.norm(flow_map(spec, x) - x) for x in states])
    objective = None
    if spec.kind == PROX and spec.f is not None:
        objective = np.array([_objective(spec, x) for x in states])
    meta = {
        "spec": spec_fingerprint(spec),
        "config": cfg.to_dict(),
        "breakpoints": [b for b in spec.schedule.breakpoints if 0.0 < b < cfg.t_end],
        "kind": spec.kind,
    }
    return Trajectory(times, states, residuals, objective, meta)


@dataclass
class DiscreteRun:
    iterates: np.ndarray
    norms: np.ndarray
    schedule: LambdaSchedule

    def tail_gap(self, n_lo, n_hi):
        """Largest ``| ||u_{n+1}|| - ||u_n|| |`` for ``n`` in ``[n_lo, n_hi)``."""
        d = np.abs(np.diff(self.norms[n_lo:n_hi + 1]))
        return float(d.max()) if d.size else 0.0


def iterate_discrete(spec, u0, schedule, n_max):
    """``u_{n+1} = u_n + lambda_n (T(u_n) - u_n)`` for ``n = 1..n_max``.

    ``iterates[k]`` holds ``u_{k+1}``, so ``iterates[0] = u0``.
    """
    u = as_vector(u0, spec.dim).copy()
    its = [u.copy()]
    for n in range(1, int(n_max) + 1):
        lam = schedule.at(n)
        u = u + lam * (flow_map(spec, u) - u)
        if not np.all(np.isfinite(u)):
            raise IntegrationError(f"non-finite iterate at n={n}", n)
        its.append(u.copy())
    its = np.array(its)
    return DiscreteRun(its, np.linalg.norm(its, axis=1), schedule)


def derivative_estimate(traj, t):
    """Finite-difference estimate of ``du/dt`` at the sample nearest ``t``.

    Central differences where no schedule breakpoint lies strictly inside
    the stencil; one-sided differences next to a breakpoint.
    """
    ts = traj.times
    if t < ts[0] or t > ts[-1]:
        raise ValueError(f"t={t} outside recorded range [{ts[0]}, {ts[-1]}]")
    i = int(np.argmin(np.abs(ts - t)))
    bps = traj.meta.get("breakpoints", [])

    def clean(lo, hi):
        return not any(lo < b < hi for b in bps)

    u = traj.states
    if 0 < i < len(ts) - 1 and clean(ts[i - 1], ts[i + 1]):
        return (u[i + 1] - u[i - 1]) / (ts[i + 1] - ts[i - 1])
    if i > 0 and clean(ts[i - 1], ts[i]):
        return (u[i] - u[i - 1]) / (ts[i] - ts[i - 1])
    if i < len(ts) - 1:
        return (u[i + 1] - u[i]) / (ts[i + 1] - ts[i])
    raise ValueError("trajectory too short for a derivative estimate")
