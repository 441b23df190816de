"""Command-line experiment runner.

Subcommands::

    run          integrate one problem and write trace.csv, solution_<t>.csv, summary.json
    convergence  sweep step sizes against a reference solution
    dof-table    degrees of freedom of the weights for the catalog methods
    stability    |R(z)| on a grid in the complex plane
    selftest     randomized property suites

Settings come from an optional JSON file (``--config``) and are overridden by
flags. Floating-point CSV output uses 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checks
from .integrator import ConfigurationError, IntegrationFailure, IntegratorConfig, integrate
from .order_conditions import MAX_ORDER, degrees_of_freedom
from .problems import get_problem, reference_solution
from .stability import sample_region
from .tableaux import builtin

log = logging.getLogger("bprk")

# rows of the degree-of-freedom tables: (table, label, catalog name)
DOF_ROWS = [
    ("explicit", "Classical RK4", "rk4"),
    ("explicit", "SSPRK(10,4)", "ssprk104"),
    ("explicit", "Cash-Karp RK5(4)6", "cashkarp"),
    ("explicit", "Dormand-Prince RK5(4)7", "dormandprince"),
    ("implicit", "Backward Euler", "backwardeuler"),
    ("implicit", "Lobatto IIIC4", "lobattoiiic4"),
    ("implicit", "Radau IIA3", "radauiia3"),
    ("implicit", "SDIRK(5,4)", "sdirk54"),
    ("implicit", "TR-BDF2", "trbdf2"),
    ("implicit", "Extrapolation BE 2", "extrapolation-be2"),
    ("implicit", "Extrapolation BE 3", "extrapolation-be3"),
    ("implicit", "Extrapolation BE 4", "extrapolation-be4"),
]

_INTEGRATOR_KEYS = {f.name for f in fields(IntegratorConfig)}

DEFAULTS = {
    "problem": "reaction4",
    "problem_params": {},
    "method": "cashkarp",
    "mode": "fixed",
    "adaptation": "off",
    "output_times": [],
    "sweep": {},
    "seed": 0,
    "stability": {"rectangle": [-6.0, 2.0, -4.0, 4.0], "resolution": 400, "weights": "original"},
}


def fmt(x) -> str:
    """17-significant-digit text for floats; ints and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


# -- configuration -----------------------------------------------------------

def load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path:
        with open(path) as fh:
            user = json.load(fh)
        for key, val in user.items():
            if isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    return cfg


def apply_flags(cfg: dict, args: argparse.Namespace) -> dict:
    simple = {
        "problem": "problem", "method": "method", "adaptation": "adaptation", "p_start": "p_start",
        "p_min": "p_min", "tol_delta": "tol_delta", "seed": "seed", "mode": "mode", "t_end": "t_end",
    }
    for attr, key in simple.items():
        val = getattr(args, attr, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "tol", None) is not None:
        cfg["tol"] = args.tol
        if getattr(args, "mode", None) is None:
            cfg["mode"] = "adaptive"
    dt = getattr(args, "dt", None)
    if dt:
        if len(dt) == 1 and args.command != "convergence":
            cfg["dt"] = dt[0]
        else:
            cfg.setdefault("sweep", {})["dt"] = list(dt)
    if getattr(args, "out", None):
        cfg["out"] = args.out
    return cfg


def integrator_config(cfg: dict, **override) -> IntegratorConfig:
    kw = {k: v for k, v in cfg.items() if k in _INTEGRATOR_KEYS}
    kw.update(override)
    if "output_times" in kw:
        kw["output_times"] = tuple(float(t) for t in kw["output_times"])
    return IntegratorConfig(**kw)


def make_problem(cfg: dict):
    return get_problem(cfg["problem"], **cfg.get("problem_params", {}))


# -- writers -----------------------------------------------------------------

TRACE_COLUMNS = [
    "t", "dt", "status", "adapted", "order", "delta", "err_T", "err", "weight_change",
    "min_before", "min_after", "active_iterations",
]


def write_trace(path: Path, trace) -> None:
    labels = sorted({k for r in trace.records for k in r.invariant_drift})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS + [f"drift_{lab}" for lab in labels])
        for r in trace.records:
            row = [r.t, r.dt, r.status.value, r.adapted, r.order, r.delta, r.err_T, r.err,
                   r.weight_change, r.min_before, r.min_after, r.active_iterations]
            row += [r.invariant_drift.get(lab) for lab in labels]
            w.writerow([fmt(x) for x in row])


def write_solution(path: Path, t: float, u: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "u"])
        for i, v in enumerate(u):
            w.writerow([i, fmt(v)])
    log.debug("wrote %s (t=%s)", path, fmt(t))


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ----------------------------------------------------------------

def run(cfg: dict) -> int:
    """Integrate one configuration. Returns the process exit status."""
    out = _out_dir(cfg)
    problem = make_problem(cfg)
    tableau = builtin(cfg["method"])
    icfg = integrator_config(cfg)
    status, message = 0, "completed"
    try:
        trace = integrate(problem, tableau, icfg)
    except IntegrationFailure as exc:
        trace, status, message = exc.trace, 1, str(exc)
        log.error("integration failed: %s", exc)
    write_trace(out / "trace.csv", trace)
    snaps = dict(trace.snapshots)
    if trace.final_state is not None:
        snaps[trace.final_time] = trace.final_state
    for t, u in sorted(snaps.items()):
        write_solution(out / f"solution_{fmt(t)}.csv", t, u)
    summary = trace.summary()
    summary.update({
        "message": message,
        "t0": trace.t0,
        "mode": icfg.mode,
        "adaptation": icfg.adaptation,
        "snapshot_times": sorted(snaps),
        "config": {k: v for k, v in cfg.items() if k != "stability"},
    })
    write_json(out / "summary.json", summary)
    return status


def _slope(dts, errs):
    dts, errs = np.asarray(dts, float), np.asarray(errs, float)
    ok = np.isfinite(errs) & (errs > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(dts[ok]), np.log(errs[ok]), 1)[0])


def convergence(cfg: dict, workers: int | None = None) -> dict:
    """Final-time error for every step size of ``cfg['sweep']['dt']``."""
    out = _out_dir(cfg)
    dts = sorted((float(x) for x in cfg["sweep"]["dt"]), reverse=True)
    if not dts:
        raise ConfigurationError("convergence needs a list of step sizes")
    problem = make_problem(cfg)
    tableau = builtin(cfg["method"])
    t_end = cfg.get("t_end") or problem.t_span[1]
    ref = reference_solution(problem, t_end, finest_dt=min(dts))

    def point(dt):
        icfg = integrator_config(cfg, dt=dt, mode="fixed", t_end=t_end)
        try:
            tr = integrate(problem, tableau, icfg)
        except IntegrationFailure as exc:
            tr = exc.trace
        err = float(np.max(np.abs(tr.final_state - ref))) if tr.completed else np.nan
        return dt, err, len(tr.adapted), len(tr.rejected), tr.completed

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(point, dts))
    # unadapted tail: the smallest step sizes up to the first adapted one
    tail = []
    for row in reversed(rows):
        if row[2] > 0 or not row[4]:
            break
        tail.append(row)
    result = {
        "problem": problem.name,
        "method": tableau.name,
        "adaptation": cfg.get("adaptation", "off"),
        "t_end": t_end,
        "slope_unadapted_tail": _slope([r[0] for r in tail], [r[1] for r in tail]),
        "slope_all": _slope([r[0] for r in rows], [r[1] for r in rows]),
        "points": [
            {"dt": r[0], "error": r[1], "adapted": r[2] > 0, "steps_adapted": r[2],
             "steps_rejected": r[3], "completed": r[4]}
            for r in rows
        ],
    }
    write_rows(out / "convergence.csv", ["dt", "error", "adapted", "steps_adapted", "steps_rejected", "completed"],
               [(r[0], r[1], r[2] > 0, r[2], r[3], r[4]) for r in rows])
    write_json(out / "convergence.json", result)
    return result


def dof_table(max_order: int = MAX_ORDER):
    """Rows (table, label, s, dof_1 .. dof_max_order); ``None`` above the design order."""
    rows = []
    for table, label, name in DOF_ROWS:
        tab = builtin(name)
        cells = [degrees_of_freedom(tab, p) if p <= tab.p else None for p in range(1, max_order + 1)]
        rows.append((table, label, tab.s, *cells))
    return rows


def write_dof_table(cfg: dict, stream=None) -> list:
    rows = dof_table()
    header = ["table", "method", "s"] + [f"p{p}" for p in range(1, MAX_ORDER + 1)]
    if cfg.get("out"):
        write_rows(_out_dir(cfg) / "dof_table.csv", header, [[c if c is not None else "---" for c in r] for r in rows])
    stream = sys.stdout if stream is None else stream
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(c) if c is not None else "---" for c in r])
    return rows


def example_adapted_weights(dt: float = 0.015) -> np.ndarray:
    """Adapted Dormand-Prince weights on advection-decay (N = 100): the step
    whose weights moved furthest from the original ones."""
    problem = get_problem("advection-decay")
    tab = builtin("dormandprince")
    trace = integrate(problem, tab, IntegratorConfig(dt=dt, adaptation="free", t_end=0.5))
    adapted = [w for w in trace.weights if w is not None]
    if not adapted:
        raise RuntimeError("no step was adapted")
    return max(adapted, key=lambda w: float(np.sum(np.abs(w - tab.b))))


def resolve_weights(tableau, spec):
    if spec is None or spec == "original":
        return tableau.b
    if isinstance(spec, str):
        if spec == "example-adapted":
            return example_adapted_weights()
        return tableau.embedded_by_label(spec).weights
    if isinstance(spec, dict) and "mix" in spec:
        # convex combination of the original weights and named embedded vectors
        parts = [resolve_weights(tableau, k) for k in spec["columns"]]
        return np.column_stack(parts) @ np.asarray(spec["mix"], dtype=float)
    return np.asarray(spec, dtype=float)


def stability(cfg: dict):
    out = _out_dir(cfg)
    scfg = cfg.get("stability", {})
    tableau = builtin(cfg["method"])
    w = resolve_weights(tableau, scfg.get("weights", "original"))
    sample = sample_region(tableau, w, tuple(scfg.get("rectangle", DEFAULTS["stability"]["rectangle"])),
                           scfg.get("resolution", 400))
    write_rows(out / "stability.csv", ["re", "im", "abs_R"], sample.rows())
    return sample


def selftest(cfg: dict) -> int:
    results = checks.run_all(seed=int(cfg.get("seed", 0)))
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else 1


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bprk", description="Bound-preserving Runge-Kutta experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    integ = argparse.ArgumentParser(add_help=False)
    integ.add_argument("--problem")
    integ.add_argument("--method")
    integ.add_argument("--dt", type=float, nargs="+")
    integ.add_argument("--tol", type=float)
    integ.add_argument("--mode", choices=["fixed", "adaptive"])
    integ.add_argument("--t-end", type=float)
    integ.add_argument("--adaptation", choices=["off", "free", "convex"])
    integ.add_argument("--p-start", type=int)
    integ.add_argument("--p-min", type=int)
    integ.add_argument("--tol-delta", type=float)
    sub.add_parser("run", parents=[common, integ], help="integrate one configuration")
    sub.add_parser("convergence", parents=[common, integ], help="step-size sweep against a reference")
    sub.add_parser("dof-table", parents=[common], help="degrees of freedom of the weights")
    st = sub.add_parser("stability", parents=[common], help="|R(z)| on a grid")
    st.add_argument("--method")
    st.add_argument("--resolution", type=int)
    sub.add_parser("selftest", parents=[common], help="randomized property suites")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_flags(load_config(args.config), args)
        if args.command == "run":
            return run(cfg)
        if args.command == "convergence":
            res = convergence(cfg)
            print(json.dumps({k: res[k] for k in ("slope_unadapted_tail", "slope_all")}))
            return 0
        if args.command == "dof-table":
            write_dof_table(cfg)
            return 0
        if args.command == "stability":
            if args.resolution:
                cfg["stability"]["resolution"] = args.resolution
            stability(cfg)
            return 0
        return selftest(cfg)
    except (ConfigurationError, KeyError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
