"""Command line entry point: ``pmnl {classify,simulate,certify,sweep,compare}``.

Every command reads one YAML file (see :mod:`pmnl.config`) and writes its
artifacts under ``--out``.  Exit codes: 0 success, 1 a check ran and failed,
2 configuration error, 3 inconclusive, 4 incompatible barrier family.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import yaml

from . import barriers, classifier, solver
from .config import (RunConfig, _Where, content_hash, emit_config, load_config, parse_config,
                     parse_initial)
from .errors import (ConfigParseError, ExponentOutOfRange, FamilyIncompatible, InvalidBarrier,
                     InvalidDomain, NegativeInitialData, NegativeKernel, NoConvergence,
                     OrderViolationInInputs, PmnlError, SearchExhausted, TooFewCells)
from .geometry import build_grid
from .model import ClosedForm, ConstantKernel, ConstantValue, Sampled, validate

log = logging.getLogger("pmnl")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_INCOMPATIBLE = 0, 1, 2, 3, 4

_CONFIG_ERRORS = (ConfigParseError, ExponentOutOfRange, NegativeKernel, NegativeInitialData, InvalidDomain,
                  TooFewCells, OrderViolationInInputs, InvalidBarrier)
SERIES_COLUMNS = ("t", "sup_norm", "l1_norm", "boundary_influx")


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _write_json(path: Path, payload):
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(command: str, run: RunConfig, started: float, outcome: dict, extra=None) -> dict:
    echo = emit_config(run)
    inputs = {"command": command, "config": echo, **(extra or {})}
    return {"command": command, "config": echo, "hash": content_hash(inputs), "version": tool_version(),
            "duration_s": round(time.perf_counter() - started, 6), "outcome": outcome, **(extra or {})}


# --------------------------------------------------------------------------
# classify
# --------------------------------------------------------------------------

def verdict_record(run: RunConfig) -> dict:
    verdict = classifier.classify(classifier.RegimeInputs.from_spec(run.spec))
    return verdict.to_record()


def cmd_classify(args) -> int:
    started = time.perf_counter()
    run = load_config(args.config)
    rec = verdict_record(run)
    print(json.dumps(_jsonable(rec), sort_keys=True))
    if args.out:
        out = _out_dir(args.out)
        _write_json(out / "verdict.json", rec)
        _write_json(out / "manifest.json", _manifest("classify", run, started, rec))
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def write_series(path: Path, series: solver.Series):
    s = series.decimate()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for row in zip(s.t, s.sup_norm, s.l1_norm, s.boundary_influx):
            w.writerow([repr(float(v)) for v in row])


def outcome_summary(out: solver.SimulationOutcome) -> dict:
    rec = {"status": out.status, "m_final": out.m_final, "m_converged": out.m_converged,
           "message": out.message, "t_final": float(out.final_field.time),
           "sup_final": float(np.max(out.final_field.values)), "t_cross": out.t_cross,
           "t_star": None, "fit_exponent": None, "fit_r_squared": None}
    if out.blowup is not None:
        rec.update(t_star=out.blowup.t_star, fit_exponent=out.blowup.exponent,
                   fit_r_squared=out.blowup.r_squared)
    elif out.status == solver.BLOWUP:
        rec["t_star"] = out.t_cross
    return rec


def simulate_into(run: RunConfig, out: Path) -> tuple[solver.SimulationOutcome, dict]:
    result = solver.solve(run.spec, run.solver)
    write_series(out / "series.csv", result.series)
    with (out / "final_field.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "u"))
        for x, u in zip(result.grid.centers, result.final_field.values):
            w.writerow((repr(float(x)), repr(float(u))))
    summary = outcome_summary(result)
    summary["verdict"] = verdict_record(run)
    _write_json(out / "summary.json", summary)
    return result, summary


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    run = load_config(args.config)
    out = _out_dir(args.out)
    try:
        result, summary = simulate_into(run, out)
    except NoConvergence as exc:
        summary = {"status": "NoConvergence", "error": exc.code, "message": str(exc)}
        _write_json(out / "summary.json", summary)
        _write_json(out / "manifest.json", _manifest("simulate", run, started, summary))
        print(json.dumps(summary))
        return EXIT_INCONCLUSIVE
    _write_json(out / "manifest.json", _manifest("simulate", run, started, summary))
    print(json.dumps(_jsonable({k: summary[k] for k in ("status", "t_star", "t_final", "sup_final")})))
    return EXIT_INCONCLUSIVE if result.status == solver.INCONCLUSIVE else EXIT_OK


# --------------------------------------------------------------------------
# certify
# --------------------------------------------------------------------------

def _barrier_from_config(run: RunConfig, family: str | None):
    if run.barrier and "params" in run.barrier and (family is None or family == run.barrier.get("family")):
        name = run.barrier.get("family")
        if name not in barriers.FAMILIES:
            raise ConfigParseError(f"barrier.family: unknown family {name!r}", field="barrier.family")
        barriers.compatible(run.spec, name)
        params = {k: float(v) for k, v in run.barrier["params"].items()}
        return barriers.FAMILIES[name](barriers.Exponents.of(run.spec), **params)
    name = family or (run.barrier or {}).get("family")
    if name is None:
        raise ConfigParseError("no barrier family: pass --family or set barrier.family", field="family")
    return barriers.suggest_parameters(run.spec, name)


def cmd_certify(args) -> int:
    started = time.perf_counter()
    run = load_config(args.config)
    out = _out_dir(args.out)
    n_probe = int((run.barrier or {}).get("n_probe", 200))
    try:
        barrier = _barrier_from_config(run, args.family)
    except FamilyIncompatible as exc:
        rec = {"verdict": "FamilyIncompatible", "error": exc.code, "message": str(exc)}
        _write_json(out / "certificate.json", rec)
        print(json.dumps(rec))
        return EXIT_INCOMPATIBLE
    except SearchExhausted as exc:
        rec = {"verdict": "SearchExhausted", "error": exc.code, "message": str(exc)}
        _write_json(out / "certificate.json", rec)
        print(json.dumps(rec))
        return EXIT_INCONCLUSIVE
    grid = build_grid(run.spec.domain, n_probe)
    report = barriers.certify(barrier, run.spec, grid)
    rec = report.to_record()
    _write_json(out / "certificate.json", rec)
    _write_residuals(out / "residuals.csv", barrier, run, grid, report)
    _write_json(out / "manifest.json", _manifest("certify", run, started, rec, {"family": barrier.name}))
    print(json.dumps(_jsonable({k: rec[k] for k in ("family", "verdict", "interior_residual",
                                                    "boundary_residual")})))
    return EXIT_OK if report.certified else EXIT_FAILED


def _write_residuals(path: Path, barrier, run, grid, report):
    t = report.location.get("t", 0.0)
    t = 0.0 if t is None or not math.isfinite(t) else t
    r = barriers.residual_interior(barrier, run.spec, grid, t)
    r2 = barriers.residual_interior(barrier, run.spec, grid, t, grid.h / 4)
    b = barriers.residual_boundary(barrier, run.spec, grid, t)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("kind", "x", "t", "residual", "tolerance"))
        for x, v, v2 in zip(grid.centers, r, r2):
            if math.isfinite(v):
                w.writerow(("interior", repr(float(x)), repr(float(t)), repr(float(v)),
                            repr(float(10 * abs(v - v2)))))
        for x, v in zip(grid.boundary_points, b):
            w.writerow(("boundary", repr(float(x)), repr(float(t)), repr(float(v)), ""))


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------

def cmd_compare(args) -> int:
    started = time.perf_counter()
    run = load_config(args.config)
    if not run.compare:
        raise ConfigParseError(f"{args.config}: field 'compare': missing", field="compare")
    where = _Where(str(args.config), Path(args.config).read_text())
    low = parse_initial(run.compare.get("low"), where, "compare.low")
    high = parse_initial(run.compare.get("high"), where, "compare.high")
    tol = float(run.compare.get("tolerance", 1e-6))
    out = _out_dir(args.out)
    report, lo, hi = solver.compare_evolutions(run.spec, low, high, run.solver, tol)
    rec = {"min_gap": report.min_gap, "sup_scale": report.sup_scale,
           "relative_violation": report.relative_violation, "t_compared": report.t_compared,
           "status_low": report.status_low, "status_high": report.status_high,
           "tolerance": report.tolerance, "passed": report.passed}
    _write_json(out / "ordering.json", rec)
    _write_json(out / "manifest.json", _manifest("compare", run, started, rec))
    print(json.dumps(_jsonable(rec), sort_keys=True))
    return EXIT_OK if report.passed else EXIT_FAILED


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

SWEEP_AXES = ("mu", "nu", "l", "a", "k0", "u0")


def _axis_values(name, spec, where) -> list[float]:
    if isinstance(spec, list):
        return [float(v) for v in spec]
    if not isinstance(spec, dict) or not {"start", "stop", "num"} <= spec.keys():
        where.fail(f"axes.{name}", "expected a list or {start, stop, num}")
    return [float(v) for v in np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))]


def _scale_initial(init, amp: float):
    if isinstance(init, ConstantValue):
        return ConstantValue(amp)
    if isinstance(init, Sampled):
        peak = max(abs(v) for v in init.values) or 1.0
        return Sampled(init.nodes, tuple(v * amp / peak for v in init.values))
    params = dict(init.params)
    key = "amplitude" if "amplitude" in params else None
    if key is None:
        raise ConfigParseError(f"u0 axis needs an amplitude parameter in {init.name!r}", field="axes.u0")
    params[key] = amp
    return ClosedForm(init.name, tuple(params.items()))


def point_config(base: RunConfig, values: dict) -> RunConfig:
    spec = base.spec
    phys = {k: v for k, v in values.items() if k in ("mu", "nu", "l", "a")}
    spec = replace(spec, **phys)
    if "k0" in values:
        if not isinstance(spec.kernel, ConstantKernel):
            raise ConfigParseError("the k0 axis needs a constant kernel", field="axes.k0")
        spec = replace(spec, kernel=ConstantKernel(values["k0"]))
    if "u0" in values:
        spec = replace(spec, initial=_scale_initial(spec.initial, values["u0"]))
    return replace(base, spec=spec)


def _sweep_point(job):
    index, values, run, simulate, out = job
    row = {"index": index, **{k: repr(v) for k, v in values.items()}, "hash": content_hash(
        {"config": emit_config(run), "simulate": simulate}), "verdict": "", "clause": "",
        "sim_status": "", "t_star": "", "error": ""}
    try:
        validate(run.spec)
        rec = verdict_record(run)
        row["verdict"], row["clause"] = rec["verdict"], rec["clause"] or ""
        if simulate:
            point_dir = _out_dir(Path(out) / "points" / row["hash"][:16])
            _, summary = simulate_into(run, point_dir)
            row["sim_status"] = summary["status"]
            row["t_star"] = "" if summary["t_star"] is None else repr(float(summary["t_star"]))
    except PmnlError as exc:
        row["error"] = f"{exc.code}: {exc}"
    return row


def run_sweep(plan_path, out_dir, jobs: int = 1) -> tuple[Path, int]:
    """Evaluate every grid point of a sweep plan; returns the CSV path and the number computed."""
    text = Path(plan_path).read_text()
    where = _Where(str(plan_path), text)
    try:
        plan = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{plan_path}: {exc}") from None
    base_raw = plan.get("base")
    if isinstance(base_raw, str):
        base_text = (Path(plan_path).parent / base_raw).read_text()
        base = parse_config(yaml.safe_load(base_text), _Where(base_raw, base_text))
    else:
        base = parse_config(base_raw, _Where(str(plan_path), text))
    axes = plan.get("axes") or {}
    for name in axes:
        if name not in SWEEP_AXES:
            where.fail(f"axes.{name}", f"unknown axis (known: {', '.join(SWEEP_AXES)})")
    names = list(axes)
    grids = [_axis_values(n, axes[n], where) for n in names]
    simulate = bool(plan.get("simulate", False))
    jobs = int(plan.get("jobs", jobs)) if jobs == 1 else jobs
    out = _out_dir(out_dir)
    header = ["index", *names, "hash", "verdict", "clause", "sim_status", "t_star", "error"]
    path = out / "sweep.csv"

    points = list(itertools.product(*grids)) if names else []
    done: dict[str, dict] = {}
    if path.exists():
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                done[row["hash"]] = row
    jobs_list, rows = [], {}
    for i, vals in enumerate(points):
        values = dict(zip(names, vals))
        run = point_config(base, values)
        h = content_hash({"config": emit_config(run), "simulate": simulate})
        if h in done:
            rows[i] = {**done[h], "index": str(i)}
        else:
            jobs_list.append((i, values, run, simulate, str(out)))
    if jobs_list or not path.exists():
        if jobs > 1 and len(jobs_list) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_point, jobs_list))
        else:
            results = [_sweep_point(j) for j in jobs_list]
        for r in results:
            rows[r["index"]] = r
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=header)
            w.writeheader()
            for i in sorted(rows, key=int):
                w.writerow({k: rows[i].get(k, "") for k in header} | {"index": i})
    return path, len(jobs_list)


def cmd_sweep(args) -> int:
    path, computed = run_sweep(args.config, args.out, args.jobs)
    log.info("sweep: %d new points -> %s", computed, path)
    print(json.dumps({"csv": str(path), "computed": computed}))
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmnl", description="Porous medium equation with nonlocal boundary flux")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("classify", cmd_classify, "regime verdict for a configuration"),
                            ("simulate", cmd_simulate, "run the regularized solver"),
                            ("certify", cmd_certify, "search and certify a barrier"),
                            ("sweep", cmd_sweep, "regime map over a parameter grid"),
                            ("compare", cmd_compare, "evolve two ordered data and check ordering")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML configuration (sweep plan for 'sweep')")
        p.add_argument("--out", required=name in ("simulate", "sweep", "compare", "certify"),
                       help="output directory")
        p.add_argument("--family", help="barrier family for 'certify'")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for 'sweep'")
        p.add_argument("--seedless", action="store_true", help="accepted for compatibility; runs are deterministic")
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(json.dumps({"error": exc.code, "message": str(exc), **_jsonable(exc.details)}), file=sys.stderr)
        return EXIT_CONFIG
    except FamilyIncompatible as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (SearchExhausted, NoConvergence) as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
