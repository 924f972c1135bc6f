"""Command-line entry point.

Every subcommand reads a JSON configuration (see :mod:`coinvade.config`),
prints a JSON report with a boolean ``pass`` to stdout and, except for
``wavespeed``, writes the report and any bulk CSV series into the output
directory.  Exit status is 0 on pass, 1 on a computational failure or a
failed check, and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, jsonable, load, set_dotted, validate
from .dynamics import (Grid, InitialCondition, auxiliary_map_theorem4, estimate_speed,
                       simulate, simulate_scalar, write_snapshots)
from .kernel import discretize
from .model import EquilibriumError, check_admissibility, coexistence_equilibrium
from .profile import (bounds_for_speed, check_limits, solve_profile, uniform_grid,
                      verify_bounds)
from .rectangle import build_family, iterate_to_equilibrium, verify_with_fallback
from .wavespeed import SubcriticalSpeedError, analyze, scalar_spreading_speed

log = logging.getLogger("coinvade")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
NESTING_TOL = 1e-12
SWEEP_COLUMNS = [
    "a1_a2_kernel_ok", "coeff_ok", "a5_ok", "up_ok", "equilibrium_solvable",
    "c1_star", "c2_star", "c_star", "speed_X", "speed_Y", "rectangle_pass", "profile_pass",
    "error",
]


class CommandFailure(RuntimeError):
    """A computation could not produce a report."""


def _write_json(path: Path, report: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")


def cmd_wavespeed(cfg: RunConfig) -> dict:
    """Critical speeds and, for a supercritical target speed, the bound constants."""
    params, kernels = cfg.params, cfg.kernels
    base = analyze(params, kernels)
    c, how = cfg.speed(base.c_star)
    res = analyze(params, kernels, c)
    report = {
        "c1_star": res.c1_star, "c2_star": res.c2_star, "c_star": res.c_star,
        "lambda_hat": [res.lambda_hat1, res.lambda_hat2],
        "c": c, "c_source": how, "subcritical": res.subcritical,
        "admissibility": check_admissibility(params, kernels).to_dict(),
    }
    if res.boundary_minimum:
        report["boundary_minimum"] = True
    if res.subcritical:
        report["note"] = res.note
    else:
        report.update(
            lambda1=res.lambda1, lambda2=res.lambda2,
            gamma_window1=res.gamma_window1, gamma_window2=res.gamma_window2,
            eta=res.eta, rho=res.rho, L1=res.L1, L2=res.L2,
        )
    report["pass"] = True
    return report


def cmd_simulate(cfg: RunConfig) -> dict:
    """Run the spatial system and measure front speeds."""
    sim, g = cfg.block("simulation"), cfg.block("grid")
    grid = Grid.from_spacing(g["x_min"], g["x_max"], g["dx"])
    initial = InitialCondition(**sim["initial"])
    threshold = tuple(sim["threshold"]) if sim["threshold"] else None
    result = simulate(grid, cfg.params, cfg.kernels, initial, sim["steps"], sim["boundary"],
                      threshold, sim["snapshot_every"], sim["guard_radii"], g["mass_tol"])
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(out / "fronts.csv")
    write_snapshots(out / "snapshots.csv", grid, result.snapshots)

    c_star = analyze(cfg.params, cfg.kernels).c_star
    speeds, ok = {}, True
    for sp in ("X", "Y"):
        try:
            slope, err = estimate_speed(result.trace, sim["window_fraction"], sp)
        except ValueError:
            speeds[sp] = {"speed": "not reached"}
            continue
        ratio = slope / c_star
        within = abs(ratio - 1.0) <= sim["speed_tol"]
        ok = ok and within
        speeds[sp] = {"speed": slope, "stderr": err, "ratio": ratio, "within_tol": within}
    return {"c_star": c_star, "threshold": list(result.trace.threshold), "speeds": speeds,
            "files": ["fronts.csv", "snapshots.csv"], "pass": ok}


def cmd_profile(cfg: RunConfig) -> dict:
    """Solve for a wave profile and check its limits."""
    pb = cfg.block("profile")
    c_star = analyze(cfg.params, cfg.kernels).c_star
    c, how = cfg.speed(c_star)
    profile, rep, bounds = solve_profile(
        c, cfg.params, cfg.kernels, pb["t_min"], pb["t_max"], pb["dt"], pb["tol"],
        pb["max_iter"], pb["theta"], pb["clamp"], cfg.block("grid")["mass_tol"])
    try:
        eq = coexistence_equilibrium(cfg.params)
        right_tol = pb["right_rel_tol"] * min(eq.k1, eq.k2)
    except EquilibriumError:
        right_tol = None
    limits = check_limits(profile, cfg.params, pb["limit_tol"], right_tol)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    profile.to_csv(out / "profile.csv", bounds)
    ok = bool(rep.valid and rep.residual <= pb["residual_tol"] and limits["pass"])
    return {"c": c, "c_source": how, "c_star": c_star, "solve": rep.to_dict(),
            "limits": limits, "files": ["profile.csv"], "pass": ok}


def cmd_verify_bounds(cfg: RunConfig) -> dict:
    """Pointwise check of the upper and lower profile inequalities."""
    bb = cfg.block("bounds")
    c_star = analyze(cfg.params, cfg.kernels).c_star
    c, how = cfg.speed(c_star)
    try:
        bounds = bounds_for_speed(cfg.params, cfg.kernels, c)
    except SubcriticalSpeedError as exc:
        return {"c": c, "c_source": how, "c_star": c_star, "note": f"subcritical: {exc}",
                "pass": False}
    bounds = bounds.scaled(bb["rho_factor"])
    t = uniform_grid(bb["t_min"], bb["t_max"], bb["dt"])
    res = verify_bounds(bounds, cfg.params, cfg.kernels, c, t, cfg.block("grid")["mass_tol"])
    res.update(c=c, c_source=how, c_star=c_star, rho_factor=bb["rho_factor"])
    return res


def cmd_verify_rectangle(cfg: RunConfig) -> dict:
    """Contracting-rectangle verification plus random-start convergence runs."""
    rb = cfg.block("rectangle")
    try:
        eq = coexistence_equilibrium(cfg.params)
    except EquilibriumError as exc:
        return {"note": str(exc), "pass": False}
    report = verify_with_fallback(cfg.params, rb["eps"], rb["samples"], rb["min_eps"])
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rectangle_margins.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "lower_1", "upper_1", "lower_2", "upper_2"])
        for row in report.margins:
            w.writerow([repr(row[k]) for k in ("s", "lower_1", "upper_1", "lower_2", "upper_2")])
    result = report.to_dict()
    result["k"] = [eq.k1, eq.k2]
    ok = report.passed

    if report.passed and rb["starts"] > 0:
        family = build_family(eq, report.eps)
        rng = np.random.default_rng(cfg.seed)
        steps, nested, converged = [], True, True
        for _ in range(rb["starts"]):
            u, v = family.sample_history(rb["start_s"], cfg.params.m, rng)
            run = iterate_to_equilibrium(cfg.params, family, u, v, rb["tol"], rb["max_steps"])
            converged &= run.converged
            steps.append(run.steps)
            nested &= bool(np.all(np.diff(run.enclosing) >= -NESTING_TOL))
        result["starts"] = {"count": rb["starts"], "start_s": rb["start_s"],
                            "all_converged": converged, "max_steps": max(steps),
                            "nested": nested}
        ok = ok and converged and nested
    result["files"] = ["rectangle_margins.csv"]
    result["pass"] = bool(ok)
    return result


def cmd_spread_test(cfg: RunConfig) -> dict:
    """Scalar comparison recursion: spreading speed and the occupied region."""
    sb = cfg.block("spread")
    species = sb["species"]
    bmap = auxiliary_map_theorem4(cfg.params, species)
    kernel = cfg.kernels[species - 1]
    c0 = scalar_spreading_speed(bmap.b0, kernel)
    dk = discretize(kernel, sb["dx"], cfg.block("grid")["mass_tol"])
    grid = Grid.from_spacing(sb["x_min"], sb["x_max"], sb["dx"])
    x = grid.x
    u0 = np.where(np.abs(x) <= sb["half_width"], sb["amplitude"], 0.0)
    u = simulate_scalar(u0, bmap, dk, sb["steps"], boundary="zero")
    reach = sb["fraction"] * c0 * sb["steps"]
    inside = np.abs(x) <= reach
    if not inside.any():
        raise CommandFailure("the occupied window contains no grid points")
    lowest = float(u[inside].min())
    target = sb["level"] * bmap.fixed_point
    report = {
        "species": species, "shift": bmap.shift, "b0": bmap.b0, "u_plus": bmap.fixed_point,
        "c0": c0, "window_half_width": reach, "min_in_window": lowest, "target": target,
        "pass": lowest >= target,
    }
    needed = c0 * sb["steps"] + dk.radius * dk.dx
    if max(-sb["x_min"], sb["x_max"]) < needed:
        report["warning"] = f"domain half-width below c0*steps + kernel radius = {needed:.4g}"
    return report


def _sweep_point(payload) -> dict:
    index, overrides, raw, base_dir, tasks = payload
    row = {"index": index, **{k: v for k, v in overrides}}
    doc = copy.deepcopy(raw)
    errors = []
    try:
        for key, val in overrides:
            set_dotted(doc, key, val)
        cfg = validate(doc, Path(base_dir))
    except ConfigError as exc:
        row["error"] = f"config: {exc}"
        return row
    row.update(check_admissibility(cfg.params, cfg.kernels).to_dict())
    row.pop("lower_bound1", None)
    row.pop("lower_bound2", None)
    row.pop("kernel_notes", None)
    for task in tasks:
        try:
            if task == "wavespeed":
                res = analyze(cfg.params, cfg.kernels)
                row.update(c1_star=res.c1_star, c2_star=res.c2_star, c_star=res.c_star)
            elif task == "simulate":
                sims = cmd_simulate(_scratch(cfg, index))["speeds"]
                row.update(speed_X=sims["X"]["speed"], speed_Y=sims["Y"]["speed"])
            elif task == "rectangle":
                row["rectangle_pass"] = cmd_verify_rectangle(_scratch(cfg, index))["pass"]
            elif task == "profile":
                row["profile_pass"] = cmd_profile(_scratch(cfg, index))["pass"]
        except Exception as exc:  # recorded per point; the sweep carries on
            errors.append(f"{task}: {type(exc).__name__}: {exc}")
    row["error"] = "; ".join(errors)
    return row


def _scratch(cfg: RunConfig, index: int) -> RunConfig:
    raw = copy.deepcopy(cfg.raw)
    raw["output"] = str(cfg.output / f"point_{index:04d}")
    return RunConfig(raw, cfg.params, cfg.kernels, cfg.base_dir)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def sweep_csv(rows: list[dict], keys: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", *keys, *SWEEP_COLUMNS])
    for row in rows:
        w.writerow([row["index"], *(_cell(row.get(k)) for k in keys),
                    *(_cell(row.get(c)) for c in SWEEP_COLUMNS)])
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig, workers: int = 1) -> dict:
    """Evaluate every point of the parameter grid; rows follow input order."""
    sb = cfg.block("sweep")
    keys = list(sb["grid"])
    if not keys:
        raise ConfigError("sweep.grid is empty", "$.sweep.grid")
    raw = copy.deepcopy(cfg.raw)
    raw.pop("sweep")
    raw["output"] = str(cfg.output)
    points = list(itertools.product(*(sb["grid"][k] for k in keys)))
    payloads = [(i, list(zip(keys, vals)), raw, str(cfg.base_dir), sb["tasks"])
                for i, vals in enumerate(points)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(rows, keys))
    failed = [r["index"] for r in rows if r.get("error")]
    return {"points": len(rows), "keys": keys, "failed_points": failed,
            "files": ["sweep.csv"], "pass": not failed}


COMMANDS = {
    "wavespeed": cmd_wavespeed,
    "simulate": cmd_simulate,
    "profile": cmd_profile,
    "verify-rectangle": cmd_verify_rectangle,
    "verify-bounds": cmd_verify_bounds,
    "spread-test": cmd_spread_test,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker processes for sweep")
    common.add_argument("--seed", type=int, metavar="S", help="seed (overrides config)")
    parser = argparse.ArgumentParser(
        prog="coinvade",
        description="Traveling waves and spreading speeds of a delayed Ricker competition "
                    "integro-difference system.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "wavespeed": "critical speeds and bound constants (JSON to stdout)",
        "simulate": "spatial simulation with front tracking",
        "profile": "solve for a traveling wave profile",
        "verify-rectangle": "check the contracting rectangle family",
        "verify-bounds": "check the upper and lower profile inequalities",
        "spread-test": "scalar comparison recursion spreading check",
        "sweep": "parameter grid driver (CSV table)",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("COINVADE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.out is not None:
            cfg.raw["output"] = args.out
        if args.seed is not None:
            cfg.raw["seed"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1", "--workers")
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "sweep":
            report = cmd_sweep(cfg, args.workers)
        else:
            report = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL

    report = jsonable({"command": args.command, "version": __version__, **report,
                       "config": cfg.raw})
    text = json.dumps(report, indent=2)
    print(text)
    if args.command != "wavespeed":
        _write_json(cfg.output / f"{args.command}_report.json", report)
    return EXIT_PASS if report["pass"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
