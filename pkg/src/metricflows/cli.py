"""Command-line front end.

Subcommands::

    metricflows run <config> [--out DIR]
    metricflows verify [--filter NAME]
    metricflows sweep <config> --gamma 1,4,5 [--out DIR] [--workers N]
    metricflows compare <config> [--out DIR]

Exit codes: 0 success or convergence, 2 a completed run that did not
converge (or a gap over tolerance), 1 any error.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .diagnostics import CONVERGED_RESIDUAL, DegenerateFitError, analyze, fit_residual_rate
from .fileio import ConfigError, load_config, write_csv
from .flows import swap_spec, validate_parameters
from .functions import Convention, UnsupportedError
from .integrate import IntegrationError, integrate
from .operators import OperatorError

log = logging.getLogger("metricflows")

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2
COMPARE_TOL = 1e-10

# errors a single run can raise for reasons other than a bug
RUN_ERRORS = (IntegrationError, OperatorError, UnsupportedError, np.linalg.LinAlgError, ValueError)


def _write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def cmd_run(args):
    rc = load_config(args.config)
    traj = integrate(rc.spec, rc.u0, rc.integrator)
    rep = analyze(traj, rc.spec, rc.equilibrium)
    csv_path = write_csv(traj, rc.output_path("csv", "trajectory.csv", args.out))
    doc = {
        "schemaVersion": 1,
        "problem": rc.problem_name,
        "kind": rc.spec.kind,
        "convention": rc.spec.conv,
        "gamma": rc.spec.gamma,
        "integrator": rc.integrator.to_dict(),
        "samples": len(traj),
        "final_time": traj.final_time,
        "final_state": traj.final_state.tolist(),
        "report": rep.to_dict(),
    }
    rep_path = _write_json(doc, rc.output_path("report", "report.json", args.out))
    status = "converged" if rep.converged else "not converged"
    print(f"{rc.problem_name}: {status}; final residual {rep.final_residual:.3e}; "
          f"final state {np.array2string(traj.final_state, precision=6)}")
    print(f"wrote {csv_path} and {rep_path}")
    return EXIT_OK if rep.converged else EXIT_UNCONVERGED


def cmd_verify(args):
    from .acceptance import run_all

    results = run_all(args.filter)
    if not results:
        print(f"no criterion matches {args.filter!r}", file=sys.stderr)
        return EXIT_ERROR
    for r in results:
        print(r.line())
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return EXIT_OK if n_ok == len(results) else EXIT_ERROR


def _parse_gammas(text):
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"--gamma: {exc}") from exc
    if not vals:
        raise ConfigError("--gamma: empty list")
    bad = [v for v in vals if not v > 0]
    if bad:
        raise ConfigError(f"--gamma: step sizes must be positive, got {bad}")
    return vals


def _sweep_one(rc, gamma, out_dir):
    spec = rc.spec.with_gamma(gamma)
    row = {"gamma": gamma, "rate": float("nan"), "final_residual": float("nan"),
           "conditions": "n/a", "status": ""}
    if spec.constants is not None:
        params = validate_parameters(spec)
        row["conditions"] = "pass" if params.passed else "fail:" + "+".join(
            c.name for c in params.conditions if not c.passed)
    try:
        traj = integrate(spec, rc.u0, rc.integrator)
    except RUN_ERRORS as exc:
        row["status"] = f"error: {exc}".replace(",", ";")
        return row
    write_csv(traj, Path(out_dir) / f"trajectory_gamma_{gamma:g}.csv")
    row["final_residual"] = traj.final_residual
    try:
        row["rate"], _ = fit_residual_rate(traj)
    except DegenerateFitError:
        pass
    row["status"] = "converged" if traj.final_residual < CONVERGED_RESIDUAL else "not converged"
    if row["conditions"].startswith("fail"):
        row["status"] += " (flagged)"
    return row


def cmd_sweep(args):
    gammas = _parse_gammas(args.gamma)
    rc = load_config(args.config)
    out_dir = Path(args.out or rc.outputs.get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda g: _sweep_one(rc, g, out_dir), gammas))
    lines = ["gamma,rate,final_residual,conditions,status"]
    for r in rows:
        lines.append(f"{r['gamma']:.17g},{r['rate']:.17g},{r['final_residual']:.17g},"
                     f"{r['conditions']},{r['status']}")
    path = out_dir / "sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    for r in rows:
        print(f"gamma={r['gamma']:<8g} rate={r['rate']:<12.6g} residual={r['final_residual']:<11.3e} "
              f"conditions={r['conditions']:<10} {r['status']}")
    print(f"wrote {path}")
    ok = all(r["status"].startswith("converged") for r in rows)
    return EXIT_OK if ok else EXIT_UNCONVERGED


def cmd_compare(args):
    rc = load_config(args.config)
    if rc.spec.conv != Convention.YOSIDA:
        raise ConfigError("compare: the swapped system exists only under the Yosida-form convention")
    if rc.x0 is not None and (rc.x0.shape != rc.u0.shape or not np.array_equal(rc.x0, rc.u0)):
        print("non-comparison: x0 differs from u0, so the trajectories need not coincide",
              file=sys.stderr)
        return EXIT_ERROR
    dual = swap_spec(rc.spec)
    primal_traj = integrate(rc.spec, rc.u0, rc.integrator)
    dual_traj = integrate(dual, rc.u0, rc.integrator)
    gap = float(np.max(np.abs(primal_traj.states - dual_traj.states)))
    write_csv(primal_traj, rc.output_path("csv", "trajectory.csv", args.out))
    write_csv(dual_traj, rc.output_path("dualCsv", "trajectory_swapped.csv", args.out))
    _write_json({"schemaVersion": 1, "problem": rc.problem_name, "primal": rc.spec.kind,
                 "swapped": dual.kind, "max_gap": gap, "tolerance": COMPARE_TOL,
                 "equal": gap <= COMPARE_TOL},
                rc.output_path("compareReport", "compare.json", args.out))
    print(f"{rc.problem_name}: {rc.spec.kind} vs swapped {dual.kind}, max pointwise gap {gap:.3e} "
          f"(tol {COMPARE_TOL:g})")
    return EXIT_OK if gap <= COMPARE_TOL else EXIT_UNCONVERGED


def build_parser():
    p = argparse.ArgumentParser(prog="metricflows", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and details")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a flow from a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides outputs.dir)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the acceptance criteria")
    v.add_argument("--filter", help="only criteria whose name contains this text")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="rerun a config over several step sizes")
    s.add_argument("config")
    s.add_argument("--gamma", required=True, help="comma-separated list of positive step sizes")
    s.add_argument("--out", help="output directory")
    s.add_argument("--workers", type=int, default=4)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="integrate a flow and its swapped dual")
    c.add_argument("config")
    c.add_argument("--out", help="output directory")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
