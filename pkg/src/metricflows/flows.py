"""Vector fields of the backward-forward, forward-backward and prox flows.

All three systems have the form ``du/dt = lambda(t) (T(u) - u)``:

* ``"BF"``:   ``T = (I - gamma M^{-1} B) o J^M_{gamma A}``
* ``"FB"``:   ``T = J^M_{gamma A} o (I - gamma M^{-1} B)``
* ``"PROX"``: ``T = (I - gamma M^{-1} grad g) o prox^M_{gamma f}``, run as BF
  over ``(∂f, grad g)``.

``J^M`` is evaluated with the convention stored on the ``FlowSpec``.
"""

import bisect
from collections import namedtuple
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .functions import Convention, FunctionSpec
from .linalg import Metric, as_vector
from .operators import (
    Operator,
    OperatorError,
    Subdifferential,
    YosidaOracle,
    _resolvent_metric,
    materialize,
)

__all__ = [
    "BF",
    "Condition",
    "Constant",
    "Constants",
    "FB",
    "FlowSpec",
    "HarmonicDiscrete",
    "LambdaSchedule",
    "PROX",
    "ParameterReport",
    "PiecewiseConstant",
    "Residual",
    "field_at",
    "flow_map",
    "switch_off_schedule",
    "residual",
    "swap_spec",
    "validate_parameters",
]

BF, FB, PROX = "BF", "FB", "PROX"
KINDS = (BF, FB, PROX)


# -- relaxation schedules -----------------------------------------------------

class LambdaSchedule:
    """Nonnegative, piecewise-constant relaxation ``lambda(t)``."""

    breakpoints = ()
    continuous = True

    def value(self, t):
        raise NotImplementedError

    def at(self, n):
        """Discrete value ``lambda_n`` (``n >= 1``)."""
        return self.value(float(n))

    @property
    def lower(self):
        raise NotImplementedError

    @property
    def upper(self):
        raise NotImplementedError

    @property
    def within_bounds(self):
        """``0 < inf lambda <= sup lambda < inf``."""
        return self.lower > 0 and np.isfinite(self.upper)

    def __call__(self, t):
        return self.value(t)


class Constant(LambdaSchedule):
    def __init__(self, value=1.0):
        if value < 0:
            raise ValueError("lambda must be nonnegative")
        self._value = float(value)

    def value(self, t):
        return self._value

    @property
    def lower(self):
        return self._value

    @property
    def upper(self):
        return self._value

    def to_dict(self):
        return {"type": "constant", "value": self._value}

    def __repr__(self):
        return f"Constant({self._value})"


class PiecewiseConstant(LambdaSchedule):
    """``values[i]`` on ``(b_{i-1}, b_i]`` with ``b_{-1} = -inf``.

    Right-closed pieces, so ``PiecewiseConstant([50], [1, 0])`` equals 1 on
    ``[0, 50]`` and 0 afterwards.
    """

    def __init__(self, breakpoints, values):
        bps = [float(b) for b in breakpoints]
        vals = [float(v) for v in values]
        if len(vals) != len(bps) + 1:
            raise ValueError("need one more value than breakpoints")
        if any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(v < 0 for v in vals):
            raise ValueError("lambda must be nonnegative")
        self.breakpoints = tuple(bps)
        self.values = tuple(vals)

    def value(self, t):
        return self.values[bisect.bisect_left(self.breakpoints, t)]

    @property
    def lower(self):
        return min(self.values)

    @property
    def upper(self):
        return max(self.values)

    def to_dict(self):
        return {"type": "piecewise", "breakpoints": list(self.breakpoints),
                "values": list(self.values)}

    def __repr__(self):
        return f"PiecewiseConstant({list(self.breakpoints)}, {list(self.values)})"


class HarmonicDiscrete(LambdaSchedule):
    """``lambda_n = 1/n``; only meaningful for discrete iterations."""

    continuous = False

    def value(self, t):
        raise TypeError("HarmonicDiscrete has no continuous-time value")

    def at(self, n):
        if n < 1:
            raise ValueError("harmonic schedule starts at n = 1")
        return 1.0 / n

    @property
    def lower(self):
        return 0.0

    @property
    def upper(self):
        return 1.0

    def to_dict(self):
        return {"type": "harmonic"}

    def __repr__(self):
        return "HarmonicDiscrete()"


def switch_off_schedule(switch_off=50.0):
    """``lambda(t) = 1`` on ``[0, switch_off]`` and ``0`` afterwards."""
    return PiecewiseConstant([switch_off], [1.0, 0.0])


# -- flow specification -------------------------------------------------------

@dataclass(frozen=True)
class Constants:
    """User-supplied regularity constants; never inferred from samples."""

    alpha: float
    beta: float
    kappa: float
    rho: Optional[float] = None
    eta: Optional[float] = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class FlowSpec:
    kind: str
    A: Operator
    B: Operator
    M: Metric
    gamma: float
    schedule: LambdaSchedule = field(default_factory=Constant)
    conv: str = Convention.YOSIDA
    constants: Optional[Constants] = None
    f: Optional[FunctionSpec] = None
    g: Optional[FunctionSpec] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "conv", Convention.parse(self.conv))
        if not (self.A.dim == self.B.dim == self.M.dim):
            raise ValueError("operator and metric dimensions differ")

    @classmethod
    def prox(cls, f, g, M, gamma, **kw):
        """PROX flow for ``min f + g``, assembled as BF over ``(∂f, grad g)``."""
        d = M.dim
        return cls(PROX, Subdifferential(f, d), Subdifferential(g, d), M, gamma,
                   f=f, g=g, **kw)

    @property
    def dim(self):
        return self.M.dim

    @property
    def delta(self):
        if self.constants is None:
            return None
        return (2 * self.constants.kappa + self.gamma) / (2 * self.gamma)

    def with_schedule(self, schedule):
        return replace(self, schedule=schedule)

    def with_gamma(self, gamma):
        return replace(self, gamma=float(gamma))

    def resolvent(self, u):
        """``J^M_{gamma A}(u)`` under the convention stored on the flow."""
        return _resolvent_metric(self.A, self.M, self.gamma, u, self.conv)

    def forward(self, u):
        """``(I - gamma M^{-1} B)(u)``."""
        return u - self.gamma * self.M.solve(self.B.apply(u))


def flow_map(spec, u):
    """Unrelaxed operator ``T(u)`` of the flow."""
    u = as_vector(u, spec.dim)
    try:
        if spec.kind == FB:
            return spec.resolvent(spec.forward(u))
        return spec.forward(spec.resolvent(u))
    except OperatorError as exc:
        raise OperatorError(f"{spec.kind} map undefined at u={u.tolist()}: {exc}") from exc


def field_at(spec, t, u, lam=None):
    """``lambda(t) (T(u) - u)``; the zero vector wherever ``lambda = 0``.

    ``lam`` overrides the schedule lookup (the integrator passes the value on
    the open step interval so breakpoints are never straddled).
    """
    lam = spec.schedule.value(t) if lam is None else lam
    u = np.asarray(u, dtype=float)
    if lam == 0.0:
        return np.zeros_like(u)
    return lam * (flow_map(spec, u) - u)


Residual = namedtuple("Residual", ["euclidean", "metric"])


def residual(spec, u):
    """Fixed-point residual ``||T(u) - u||`` in both norms."""
    r = flow_map(spec, u) - as_vector(u, spec.dim)
    return Residual(float(np.linalg.norm(r)), spec.M.norm(r))


def swap_spec(spec, materialized=False):
    """Dual system over ``(B_{-gamma}, A_gamma)`` with the same trajectories.

    BF over ``(A, B)`` becomes FB over ``(B_{-gamma}, A_gamma)`` and vice
    versa. Only the Yosida-form convention admits the exchange. With
    ``materialized=True`` the two new operators are probed into explicit
    affine maps (affine operators only), so their Yosida maps are recomputed
    from scratch instead of by reindexing.
    """
    if spec.conv != Convention.YOSIDA:
        raise ValueError("swap requires the Yosida-form convention")
    new_A = YosidaOracle(spec.B, -spec.gamma)
    new_B = YosidaOracle(spec.A, spec.gamma)
    if materialized:
        if not (spec.A.linear_kind and spec.B.linear_kind):
            raise ValueError("materialized swap needs affine operators")
        new_A, new_B = materialize(new_A), materialize(new_B)
    kind = BF if spec.kind == FB else FB
    return replace(spec, kind=kind, A=new_A, B=new_B, f=None, g=None)


# -- parameter validation -----------------------------------------------------

@dataclass
class Condition:
    name: str
    lhs: float
    rhs: float
    passed: bool
    description: str = ""

    @property
    def slack(self):
        return self.rhs - self.lhs

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "passed": self.passed,
                "description": self.description}


@dataclass
class ParameterReport:
    conditions: list
    delta: Optional[float] = None

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    @property
    def guarantee(self):
        return "applicable" if self.passed else "not applicable"

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.conditions]

    def to_dict(self):
        return {"passed": self.passed, "guarantee": self.guarantee,
                "delta": self.delta,
                "conditions": [c.to_dict() for c in self.conditions]}


def _leq(lhs, rhs):
    return lhs <= rhs + 1e-12 * max(1.0, abs(rhs))


def validate_parameters(spec):
    """Check the step-size, metric and schedule hypotheses of the convergence theory."""
    c = spec.constants
    if c is None:
        raise ValueError("spec carries no constants to validate")
    gamma, M = spec.gamma, spec.M
    mod = min(c.alpha, c.beta)
    conds = [
        Condition("gamma_range", gamma, 2 * c.kappa, 0 < gamma < 2 * c.kappa,
                  "0 < gamma < 2 kappa"),
        Condition("kappa_metric_bound", c.kappa, M.op_norm * mod,
                  _leq(c.kappa, M.op_norm * mod), "kappa <= ||M|| min(alpha, beta)"),
        Condition("inverse_metric_bound", M.inv_norm, mod / c.kappa,
                  _leq(M.inv_norm, mod / c.kappa), "||M^-1|| <= min(alpha, beta) / kappa"),
    ]
    if spec.kind == PROX:
        conds.append(Condition("metric_norm_half", 0.5, M.op_norm, M.op_norm >= 0.5,
                               "||M|| >= 1/2"))
    sched = spec.schedule
    conds.append(Condition("schedule_bounds", 0.0, sched.lower, sched.within_bounds,
                           "0 < inf lambda <= sup lambda < inf"))
    if c.rho is not None and c.eta is not None:
        lhs = 1 / (2 * c.alpha) + c.eta * M.op_norm ** 2 / (2 * gamma ** 2)
        rhs = c.rho + M.op_norm * sched.upper / gamma
        conds.append(Condition("rate_condition", lhs, rhs, _leq(lhs, rhs),
                               "1/(2 alpha) + eta ||M||^2/(2 gamma^2) <= rho + ||M|| lambda_bar/gamma"))
    return ParameterReport(conds, spec.delta)
