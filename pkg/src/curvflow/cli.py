"""Command-line entry point: ``curvflow <verb> --config FILE --out DIR``.

Verbs
-----
run-flow        integrate one configured profile, write snapshots / monitors / summary
verify-lemmas   randomized inequality checks and constant estimates
sweep-rho       run-flow for several rho values in parallel, one comparison table
fit-decay       refit the decay exponent from an existing run directory
sphere-check    round-sphere run compared with the closed-form radius

Exit codes: 0 success, 1 failed check or numerical failure, 2 configuration
or usage error, 3 corrupted regression corpus.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import lemmas as lab
from .config import default_config, load_config
from .errors import ConfigError, InsufficientDataError
from .estimates import (
    check_speed_floor,
    cylindrical_trend,
    decay_fit,
    fit_speed_floor,
    harmonic_alpha,
    nonincreasing_per_step,
    series,
    theorem_trend,
)
from .flow import Status, run, sphere_exact, sphere_speed_constant
from .profile import write_snapshot

log = logging.getLogger("curvflow")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CORPUS = 0, 1, 2, 3
ARTIFACTS = ("snapshots", "monitors.csv", "summary.json", "reports", "figures", "runs", "sweep.csv", "fit.json")


class RunDirExists(Exception):
    pass


# ----- output helpers ------------------------------------------------------


def fmt17(v):
    """Locale-independent fixed formatting: integers verbatim, floats with 17 significant digits."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_monitors(path, columns, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt17(r[c]) for c in columns])


def read_monitors(path):
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: float(v) for k, v in row.items()} for row in reader]


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if hasattr(o, "as_dict"):
        return o.as_dict()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(x):
    return x if isinstance(x, (int, str, bool)) or x is None or math.isfinite(x) else str(x)


def prepare_out(out, force):
    """Create ``out``; an existing non-empty directory requires ``force``, which removes only known artifacts."""
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise RunDirExists(f"output directory {out} is not empty (use --force to overwrite)")
        for name in ARTIFACTS:
            p = out / name
            if p.is_dir():
                shutil.rmtree(p)
            elif p.exists():
                p.unlink()
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----- run-flow --------------------------------------------------------------


def summarize_run(result):
    rows = result.monitors
    t, min_G = series(rows, "t"), series(rows, "min_G")
    summary = {
        "schema_version": SCHEMA_VERSION,
        "status": result.status.value,
        "message": result.message,
        "steps": result.steps,
        "t_final": rows[-1]["t"],
        "config": result.config.as_dict(),
        "params": {k: _finite(v) for k, v in result.params.as_dict().items()},
        "initial_max_G": rows[0]["max_G"],
        "final_max_G": rows[-1]["max_G"],
        "final_min_u": rows[-1]["min_u"],
        "max_identity_residual": float(np.max(series(rows, "identity_residual"))),
    }
    ok, worst = nonincreasing_per_step(series(rows, "max_H_over_Grho"))
    summary["max_H_over_Grho_nonincreasing"] = {"ok": ok, "worst_relative_rise": worst}
    if len(rows) > 2:
        c_hat = fit_speed_floor(t, min_G)
        floor_ok, floor_worst = check_speed_floor(t, min_G, c_hat)
        summary["speed_floor"] = {"c_hat": c_hat, "ok": floor_ok, "worst_relative_margin": floor_worst}
    try:
        fit = decay_fit(series(rows, "max_neg_l1_over_Grho_hi"), series(rows, "max_G"))
        summary["decay_fit"] = fit.as_dict()
    except InsufficientDataError as exc:
        summary["decay_fit"] = {"error": str(exc)}
    if result.config.spec.k < result.config.spec.n:
        summary["theorem_trend"] = theorem_trend(rows)
        summary["cylindrical_trend"] = cylindrical_trend(rows, result.params)
    return summary


def execute_run(config, out, plots=False):
    """Run one flow and write all artifacts under ``out`` (which must exist)."""
    out = Path(out)
    result = run(config)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for s in result.snapshots:
        write_snapshot(snap_dir / f"step_{s.step_index:08d}.csv", s.mesh, s.field)
    write_monitors(out / "monitors.csv", result.columns, result.monitors)
    summary = summarize_run(result)
    write_json(out / "summary.json", summary)
    if plots:
        from .plotting import write_run_figures

        write_run_figures(out, result)
    return result, summary


def _flow_exit(status):
    return EXIT_OK if status in (Status.BLOW_UP, Status.TIME_OUT) else EXIT_FAIL


def cmd_run_flow(args, cfg):
    config = cfg.run_config(seed=args.seed)
    out = prepare_out(args.out, args.force)
    result, summary = execute_run(config, out, args.plots)
    print(f"status={summary['status']} steps={summary['steps']} t={fmt17(summary['t_final'])} -> {out}")
    return _flow_exit(result.status)


# ----- sphere-check -------------------------------------------------------------

SPHERE_RTOL = 1e-4
SPHERE_CUTOFF = 0.05


def sphere_comparison(result):
    """Compare the simulated radius with the closed form while ``r >= SPHERE_CUTOFF * r0``."""
    cfg = result.config
    spec, r0 = cfg.spec, cfg.profile.R
    rows = result.monitors
    t, r = series(rows, "t"), series(rows, "min_u")
    c = sphere_speed_constant(spec)
    keep = r >= SPHERE_CUTOFF * r0
    exact = sphere_exact(spec, r0, t[keep])
    rel = np.abs(r[keep] - exact) / exact
    min_G = series(rows, "min_G")
    floors = {}
    for name, c_hat in (("reference", 2 * c**2), ("exact", 2 / c)):
        ok, worst = check_speed_floor(t, min_G, c_hat)
        floors[name] = {"c_hat": c_hat, "ok": ok, "worst_relative_margin": worst}
    return {
        "speed_constant": c,
        "compared_samples": int(keep.sum()),
        "smallest_compared_radius": float(r[keep].min()),
        "max_relative_error": float(rel.max()),
        "radius_ok": bool(rel.max() <= SPHERE_RTOL),
        "speed_floor": floors,
    }


def cmd_sphere_check(args, cfg):
    config = cfg.run_config(seed=args.seed)
    if config.profile.kind != "sphere":
        raise ConfigError("sphere-check needs profile.kind = \"sphere\"", field="profile.kind")
    out = prepare_out(args.out, args.force)
    result, summary = execute_run(config, out, args.plots)
    cmp = sphere_comparison(result)
    summary["sphere"] = cmp
    write_json(out / "summary.json", summary)
    ok = cmp["radius_ok"] and all(f["ok"] for f in cmp["speed_floor"].values())
    print(
        f"status={summary['status']} max_rel_err={cmp['max_relative_error']:.3e} "
        f"floor(reference)={cmp['speed_floor']['reference']['ok']} floor(exact)={cmp['speed_floor']['exact']['ok']}"
    )
    return EXIT_OK if ok and _flow_exit(result.status) == EXIT_OK else EXIT_FAIL


# ----- verify-lemmas -------------------------------------------------------------


def _lemma_task(spec, v, seed):
    """All per-rho checks; runs in a worker process."""
    alpha = v["lemmas.alpha"]
    iters = v["lemmas.refine_iterations"]
    sampler = lab.SliceSampler(spec, alpha, seed, v["lemmas.count"])
    z = sampler.draw()
    reports = [lab.check_sandwich(sampler, z), lab.check_first_order(sampler, z), lab.check_second_order(sampler, z)]
    grad_sampler = lab.SliceSampler(spec, alpha, seed, v["lemmas.grad_count"])
    reports.append(lab.estimate_grad_constant(grad_sampler, iterations=iters))
    if spec.k < spec.n:
        alpha1 = harmonic_alpha(spec)
        mu = 1.0 / (2.0 * (1.0 + 1e-10) * alpha1)
        eig_sampler = lab.SliceSampler(spec, 1.0 / mu, seed, v["lemmas.min_eig_count"])
        reports.append(lab.check_min_eig_derivative(eig_sampler, mu))
    return spec.rho, [r.as_dict() for r in reports]


def _bounds_task(spec, v, seed):
    sampler = lab.SliceSampler(spec, v["lemmas.alpha"], seed, v["lemmas.bound_count"])
    res = lab.estimate_uniform_bounds(sampler, tuple(v["lemmas.bound_rhos"]), iterations=v["lemmas.refine_iterations"])
    return {
        f"{rho:g}": {k: (e.as_dict() if hasattr(e, "as_dict") else e) for k, e in d.items()} for rho, d in res.items()
    }


def _codazzi_reports(n):
    from .profile import ProfileMesh

    meshes = {
        "cylinder": ProfileMesh.cylinder(n),
        "neck": ProfileMesh.neck(n),
        "sphere": ProfileMesh.sphere(n),
        "spheroid": ProfileMesh.spheroid(n, eps=0.2),
    }
    return {name: lab.check_codazzi_structure(m).as_dict() for name, m in meshes.items()}


def cmd_verify_lemmas(args, cfg):
    v = cfg.values
    seed = v["seed"] if args.seed is None else args.seed
    specs = [cfg.speed(rho) for rho in v["lemmas.rhos"]]
    base = cfg.speed()
    reg_dir = Path(args.regression or v["lemmas.regression_dir"])
    out = prepare_out(args.out, args.force)
    rep_dir = out / "reports"
    rep_dir.mkdir()

    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_lemma_task, s, v, seed) for s in specs]
        bounds_future = pool.submit(_bounds_task, base, v, seed) if base.k < base.n else None
        results = [f.result() for f in futures]
        bounds = bounds_future.result() if bounds_future else {}

    failures = []
    pinned = {}
    for rho, reports in results:
        for rep in reports:
            name = f"{rep['lemma']}_rho{rho:g}"
            write_json(rep_dir / f"{name}.json", rep)
            if rep["violation_count"]:
                failures.append(name)
            for est_name, est in rep["estimates"].items():
                if isinstance(est, dict) and "value" in est:
                    pinned[f"{est_name}_rho{rho:g}"] = est["value"]
    for rho, d in bounds.items():
        pinned[f"ellipticity_C_rho{rho}"] = d["C"]["value"]
        pinned[f"second_derivative_C_rho{rho}"] = d["C_prime"]["value"]
        if not d["ratio_ok"]:
            failures.append(f"uniform_bounds_ratio_rho{rho}")
    write_json(rep_dir / "uniform_bounds.json", {"spec": base.as_dict(), "alpha": v["lemmas.alpha"], "seed": seed, "bounds": bounds})
    codazzi = _codazzi_reports(base.n)
    write_json(rep_dir / "codazzi.json", codazzi)
    failures += [f"codazzi_{k}" for k, c in codazzi.items() if c["mixed_max"] != 0.0]

    key = lab.regression_key(base, v["lemmas.alpha"], seed, v["lemmas.count"])
    key += "_rhos" + "-".join(f"{r:g}" for r in v["lemmas.rhos"])
    status, mismatches = lab.check_regression(reg_dir, key, pinned)
    failures += [f"regression:{m['name']}" for m in mismatches]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "spec": base.as_dict(),
        "alpha": v["lemmas.alpha"],
        "estimates": pinned,
        "regression": {"key": key, "status": status, "mismatches": mismatches},
        "failures": failures,
    }
    write_json(out / "summary.json", summary)
    for name in failures:
        print(f"FAILED {name}", file=sys.stderr)
    print(f"lemmas: {len(failures)} failure(s); regression {status} ({reg_dir / key}.json)")
    return EXIT_FAIL if failures else EXIT_OK


# ----- sweep-rho ------------------------------------------------------------------


def _sweep_task(config, out, plots):
    logging.getLogger("curvflow").setLevel(logging.WARNING)
    try:
        result, summary = execute_run(config, out, plots)
    except Exception as exc:  # recorded per run, the sweep continues
        return {"rho": config.spec.rho, "status": "Error", "message": f"{type(exc).__name__}: {exc}"}
    trend = summary.get("theorem_trend", {})
    medians = trend.get("medians") or [math.nan]
    fit = summary["decay_fit"]
    return {
        "rho": config.spec.rho,
        "status": summary["status"],
        "message": summary["message"],
        "terminal_max_G": summary["final_max_G"],
        "final_neg_l1_over_Grho": medians[-1],
        "sigma": fit.get("sigma", math.nan),
        "r2": fit.get("r2", math.nan),
    }


SWEEP_COLUMNS = ["rho", "status", "terminal_max_G", "final_neg_l1_over_Grho", "sigma", "r2"]


def cmd_sweep_rho(args, cfg):
    rhos = args.rho if args.rho is not None else cfg["sweep.rhos"]
    if not rhos:
        raise ConfigError("no rho values to sweep", field="sweep.rhos")
    configs = [cfg.run_config(rho=r, seed=args.seed) for r in rhos]
    out = prepare_out(args.out, args.force)
    dirs = []
    for c in configs:
        d = out / "runs" / f"rho_{c.spec.rho:g}"
        d.mkdir(parents=True)
        dirs.append(d)
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        table = list(pool.map(_sweep_task, configs, dirs, [args.plots] * len(configs)))
    table.sort(key=lambda r: r["rho"])
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in table:
            w.writerow([r["status"] if c == "status" else fmt17(r.get(c, math.nan)) for c in SWEEP_COLUMNS])
    write_json(out / "summary.json", {"schema_version": SCHEMA_VERSION, "rows": table})
    if args.plots:
        from .plotting import plot_sweep

        (out / "figures").mkdir(exist_ok=True)
        plot_sweep([r for r in table if "sigma" in r], out / "figures" / "sweep.png")
    print("  ".join(f"{c:>22s}" for c in SWEEP_COLUMNS))
    for r in table:
        print("  ".join(f"{r['status']:>22s}" if c == "status" else f"{r.get(c, math.nan):>22.6g}" for c in SWEEP_COLUMNS))
    failed = [r for r in table if r["status"] not in (Status.BLOW_UP.value, Status.TIME_OUT.value)]
    return EXIT_FAIL if failed else EXIT_OK


# ----- fit-decay ----------------------------------------------------------------


def cmd_fit_decay(args, cfg):
    run_dir = args.run or cfg["fit.run_dir"]
    if not run_dir:
        raise ConfigError("fit-decay needs --run or fit.run_dir", field="fit.run_dir")
    path = Path(run_dir) / "monitors.csv"
    if not path.exists():
        raise ConfigError(f"no monitors.csv in {run_dir}", field="fit.run_dir")
    rows = read_monitors(path)
    u_col, g_col = cfg["fit.u_column"], cfg["fit.G_column"]
    for col in (u_col, g_col):
        if rows and col not in rows[0]:
            raise ConfigError(f"column {col!r} not in {path}", field="fit.u_column" if col == u_col else "fit.G_column")
    try:
        fit = decay_fit(series(rows, u_col), series(rows, g_col))
    except InsufficientDataError as exc:
        print(f"fit-decay: {exc}", file=sys.stderr)
        return EXIT_FAIL
    result = {"schema_version": SCHEMA_VERSION, "run_dir": str(run_dir), "u_column": u_col,
              "G_column": g_col, "decay_fit": fit.as_dict()}
    if args.out:
        out = prepare_out(args.out, args.force)
        write_json(out / "fit.json", result)
    print(json.dumps(result["decay_fit"], sort_keys=True))
    return EXIT_OK


# ----- entry point ----------------------------------------------------------------

COMMANDS = {
    "run-flow": cmd_run_flow,
    "verify-lemmas": cmd_verify_lemmas,
    "sweep-rho": cmd_sweep_rho,
    "fit-decay": cmd_fit_decay,
    "sphere-check": cmd_sphere_check,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (defaults apply if omitted)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (sweep-rho, verify-lemmas)")
    common.add_argument("--force", action="store_true", help="overwrite artifacts in a non-empty output directory")
    common.add_argument("--plots", action="store_true", help="also write PNG figures under OUT/figures")

    parser = argparse.ArgumentParser(prog="curvflow", description="Numerical lab for rotationally symmetric curvature flows.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb, parents=[common])
        if verb == "sweep-rho":
            p.add_argument("--rho", type=float, action="append", help="rho value (repeatable; overrides sweep.rhos)")
        if verb == "verify-lemmas":
            p.add_argument("--regression", help="regression corpus directory (overrides lemmas.regression_dir)")
        if verb == "fit-decay":
            p.add_argument("--run", help="run directory containing monitors.csv")
    return parser


def _setup_logging():
    level = os.environ.get("CURVFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.out is None and args.verb != "fit-decay":
        parser.error(f"{args.verb} requires --out")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        where = f" (field {exc.field}" + (f", line {exc.line}" if exc.line else "") + ")" if exc.field or exc.line else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunDirExists as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except lab.RegressionCorpusError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CORPUS


if __name__ == "__main__":
    sys.exit(main())
