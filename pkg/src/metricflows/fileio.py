"""Run configuration (JSON) and trajectory CSV serialization.

Configuration documents carry ``"schemaVersion": 1`` and name either a
built-in problem or an inline flow specification; see ``docs/config.md``
for the schema. Trajectory CSVs have the header
``t,u_0,...,u_{d-1},residual[,objective]`` and use 17 significant digits so
64-bit floats round-trip exactly.
"""

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import functions as fn
from . import operators as ops
from .flows import Constant, Constants, FlowSpec, PiecewiseConstant, PROX, KINDS
from .integrate import IntegratorConfig, Trajectory
from .linalg import Metric
from .problems import ProblemInstance, get_problem

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "read_csv",
    "write_csv",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(traj, path):
    d = traj.states.shape[1]
    header = ["t"] + [f"u_{i}" for i in range(d)] + ["residual"]
    if traj.objective is not None:
        header.append("objective")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(traj.times)):
            row = [traj.times[k], *traj.states[k], traj.residuals[k]]
            if traj.objective is not None:
                row.append(traj.objective[k])
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
    body = body.reshape(-1, len(header))
    ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
    obj = body[:, header.index("objective")] if "objective" in header else None
    return Trajectory(body[:, 0], body[:, ucols], body[:, header.index("residual")], obj)


# -- config parsing -----------------------------------------------------------

def _req(node, key, where):
    if not isinstance(node, dict):
        raise ConfigError(f"{where}: expected an object")
    if key not in node:
        raise ConfigError(f"{where}.{key}: missing required field")
    return node[key]


def _matrix(value, where):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: not numeric") from exc
    return a


def parse_function(node, where="function"):
    kind = str(_req(node, "type", where)).lower()
    try:
        if kind == "l1":
            return fn.L1(node.get("weight", 1.0))
        if kind == "box":
            return fn.IndicatorBox(_req(node, "lower", where), _req(node, "upper", where))
        if kind == "quadratic":
            return fn.Quadratic(_matrix(_req(node, "Q", where), f"{where}.Q"),
                                node.get("b"), node.get("c", 0.0))
        if kind == "positive_part":
            return fn.PositivePartSum(node.get("weight", 1.0))
        if kind == "zero":
            return fn.Zero()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.type: unknown function type {kind!r}")


def parse_operator(node, dim, where="operator"):
    kind = str(_req(node, "type", where)).lower()
    tags = node.get("tags")
    try:
        if kind == "affine":
            return ops.AffineMap(_matrix(_req(node, "matrix", where), f"{where}.matrix"),
                                 node.get("offset"), tags=tags)
        if kind == "inverse_matrix":
            return ops.InverseOfMatrix(_matrix(_req(node, "matrix", where), f"{where}.matrix"),
                                       tags=tags)
        if kind == "subdifferential":
            return ops.Subdifferential(parse_function(_req(node, "function", where),
                                                      f"{where}.function"), dim, tags=tags)
        if kind == "piecewise_scalar":
            return ops.PiecewiseScalar(_req(node, "breakpoints", where),
                                       _req(node, "pieces", where),
                                       _req(node, "valuesAtBreaks", where), tags=tags)
        if kind == "yosida":
            base = parse_operator(_req(node, "base", where), dim, f"{where}.base")
            return ops.YosidaOracle(base, float(_req(node, "index", where)), tags=tags)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.type: unknown operator type {kind!r}")


def parse_schedule(node, where="schedule", reference=None):
    if node == "reference":
        if reference is None:
            raise ConfigError(f"{where}: this problem has no reference schedule")
        return reference
    kind = str(_req(node, "type", where)).lower()
    try:
        if kind == "constant":
            return Constant(node.get("value", 1.0))
        if kind == "piecewise":
            return PiecewiseConstant(_req(node, "breakpoints", where), _req(node, "values", where))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.type: unknown schedule type {kind!r}")


def _parse_constants(node, where):
    if node is None:
        return None
    try:
        return Constants(**{k: float(v) for k, v in node.items()})
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_inline(node, where="inline"):
    kind = str(node.get("kind", "BF")).upper()
    if kind not in KINDS:
        raise ConfigError(f"{where}.kind: must be one of {KINDS}")
    try:
        M_raw = _matrix(_req(node, "M", where), f"{where}.M")
        M = Metric(M_raw, dim=node.get("dim"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}.M: {exc}") from exc
    d = M.dim
    try:
        gamma = float(_req(node, "gamma", where))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.gamma: expected a number") from exc
    sched = parse_schedule(node.get("schedule", {"type": "constant", "value": 1.0}),
                           f"{where}.schedule")
    conv = node.get("convention", "yosida")
    try:
        conv = fn.Convention.parse(conv)
    except ValueError as exc:
        raise ConfigError(f"{where}.convention: {exc}") from exc
    consts = _parse_constants(node.get("constants"), f"{where}.constants")
    try:
        if kind == PROX:
            f = parse_function(_req(node, "f", where), f"{where}.f")
            g = parse_function(_req(node, "g", where), f"{where}.g")
            spec = FlowSpec.prox(f, g, M, gamma, schedule=sched, conv=conv, constants=consts)
        else:
            A = parse_operator(_req(node, "A", where), d, f"{where}.A")
            B = parse_operator(_req(node, "B", where), d, f"{where}.B")
            spec = FlowSpec(kind, A, B, M, gamma, sched, conv, consts)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return spec


@dataclass
class RunConfig:
    spec: FlowSpec
    u0: np.ndarray
    integrator: IntegratorConfig
    problem_name: str = "inline"
    instance: Optional[ProblemInstance] = None
    equilibrium: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def output_path(self, key, default, out_dir=None):
        base = Path(out_dir or self.outputs.get("dir", "."))
        return base / self.outputs.get(key, default)


def parse_config(doc):
    """Build a :class:`RunConfig` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    version = doc.get("schemaVersion")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schemaVersion: expected {SCHEMA_VERSION}, got {version!r}")
    has_builtin, has_inline = "problem" in doc, "inline" in doc
    if has_builtin == has_inline:
        raise ConfigError("config: give exactly one of 'problem' and 'inline'")
    inst = None
    if has_builtin:
        try:
            inst = get_problem(str(doc["problem"]), **doc.get("problemArgs", {}))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"problem: {exc}") from exc
        spec, name = inst.spec, inst.name
        t_end_default = inst.t_end
        u0_default = inst.u0
        eq = inst.equilibrium
    else:
        spec, name = parse_inline(doc["inline"]), "inline"
        t_end_default, u0_default = 10.0, None
        eq = doc["inline"].get("equilibrium")
        eq = None if eq is None else np.asarray(eq, dtype=float)

    ov = doc.get("overrides", {})
    if "schedule" in ov:
        spec = spec.with_schedule(parse_schedule(ov["schedule"], "overrides.schedule",
                                                 inst.reference_schedule if inst else None))
    if "convention" in ov:
        try:
            spec = replace(spec, conv=fn.Convention.parse(ov["convention"]))
        except ValueError as exc:
            raise ConfigError(f"overrides.convention: {exc}") from exc
    if "gamma" in ov:
        g = float(ov["gamma"])
        if not g > 0:
            raise ConfigError("overrides.gamma: must be positive")
        spec = spec.with_gamma(g)
        eq = None

    integ = doc.get("integrator", {})
    try:
        cfg = IntegratorConfig(
            method=integ.get("method", "rk4"),
            h=float(integ.get("h", 1e-2)),
            t_end=float(integ.get("tEnd", t_end_default)),
            rel_tol=float(integ.get("relTol", 1e-9)),
            abs_tol=float(integ.get("absTol", 1e-12)),
            record_stride=int(integ.get("recordStride", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc

    u0 = doc.get("u0", None if u0_default is None else list(u0_default))
    if u0 is None:
        raise ConfigError("u0: missing required field for inline problems")
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    if u0.shape != (spec.dim,):
        raise ConfigError(f"u0: expected {spec.dim} entries, got {u0.size}")
    x0 = doc.get("x0")
    x0 = None if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    return RunConfig(spec, u0, cfg, name, inst, eq, x0, dict(doc.get("outputs", {})), doc)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc)
