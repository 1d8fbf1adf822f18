"""Command-line experiment runner.

Exit codes: 0 when the run finished and every invariant held, 2 when an
invariant was violated, 1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import coupling as cp
from . import diagnostics as dg
from . import geometry as geo
from . import reflect as rf
from . import wiener as wn
from .config import (MAX_ROWS, ExperimentConfig, build_domain, build_field, parse_config,
                     parse_function, parse_levels, parse_points, parse_floats)
from .errors import ReflectSDEError

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
SOLVERS = {"catchup": rf.integrate_reflected, "tangent": rf.integrate_tangent_form,
           "picard": rf.solve_picard}


@dataclass
class RunReport:
    exit_code: int
    lines: list = dc_field(default_factory=list)
    files: list = dc_field(default_factory=list)

    @property
    def text(self) -> str:
        return "\n".join(self.lines)


def _default_stride(cfg, cells, substeps):
    if "output.stride" in cfg.values:
        return int(cfg.values["output.stride"])
    total = cells * substeps
    stride = 1
    while total // stride > MAX_ROWS and total % (2 * stride) == 0:
        stride *= 2
    return stride


def _driver(cfg, test_driver, r, seed):
    if test_driver == "zero":
        return wn.zero_path(r, cfg.N, cfg.T)
    if test_driver == "ramp":
        rate = parse_floats(cfg.get("driver.ramp_rate", "-1"))
        return wn.linear_path(rate if len(rate) > 1 else [rate[0]] * r, cfg.N, cfg.T)
    return wn.sample_path(r, cfg.N, cfg.T, int(seed))


def _start(cfg, key, dim):
    x = parse_points(cfg.values[key])[0]
    if len(x) != dim:
        raise ValueError(f"{key} has dimension {len(x)}, domain needs {dim}")
    return x


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v))


def _simulate(cfg, out, seeds, test_driver, rep):
    domain = build_domain(cfg)
    field = build_field(cfg, domain.dim)
    x0 = _start(cfg, "start.x0", domain.dim)
    method = cfg.get("solver.method", "catchup")
    if method not in SOLVERS:
        raise ValueError(f"solver.method: unknown method {method!r}")
    cells = wn.n_cells(cfg.T, cfg.N)
    stride = _default_stride(cfg, cells, cfg.substeps)
    max_files = int(cfg.get("output.max_files", 10))
    tol = float(cfg.get("invariant.variation_tol", 1e-6))
    norm_max = cfg.get("invariant.norm_max")
    rows, bad_var, bad_in, bad_norm = [], 0, 0, 0
    for i, s in enumerate(seeds):
        path = _driver(cfg, test_driver, field.r, s)
        traj = SOLVERS[method](domain, field, path, x0, substeps_per_cell=cfg.substeps,
                               stride=stride)
        if i < max_files:
            name = os.path.join(out, f"trajectory_{i:04d}.csv")
            traj.to_csv(name)
            rep.files.append(name)
        sd = np.max(geo.signed_distance(domain, traj.x))
        bad_in += sd > domain.eps_bdry
        bad_var += traj.lvar[-1] > traj.yvar[-1] + tol
        if norm_max is not None:
            bad_norm += np.linalg.norm(traj.x, axis=1).max() > float(norm_max)
        rows.append([i, int(s), *map(_fmt, traj.final), _fmt(traj.lvar[-1]),
                     _fmt(traj.yvar[-1]), traj.substeps])
    name = os.path.join(out, "final_states.csv")
    _write_rows(name, ["path", "seed", *(f"x{k + 1}" for k in range(domain.dim)),
                       "lvar", "yvar", "substeps"], rows)
    rep.files.append(name)
    checks = [("containment", bad_in), (f"variation bound (tol {tol})", bad_var)]
    if norm_max is not None:
        checks.append((f"norm bound {norm_max}", bad_norm))
    return [(f"{label}: {n} of {len(seeds)} paths violate", n == 0) for label, n in checks]


def _cone_bounds(cfg, domain):
    if "invariant.lower" in cfg.values and "invariant.upper" in cfg.values:
        return float(cfg.values["invariant.lower"]), float(cfg.values["invariant.upper"])
    kind = cfg.values["domain.kind"].lower()
    if kind == "triangle":
        alpha, beta = cp.triangle_angles(domain.vertices)
        return -beta, alpha
    if kind == "lip":
        return -math.pi / 4, math.pi / 4
    return None


def _couple(cfg, out, seeds, test_driver, rep):
    domain = build_domain(cfg)
    if domain.dim != 2:
        raise ValueError("domain.kind: couplings need a planar domain")
    kind = cfg.values["coupling.kind"].lower()
    runner = {"synchronous": cp.run_synchronous, "mirror": cp.run_mirror}.get(kind)
    if runner is None:
        raise ValueError(f"coupling.kind: unknown coupling {kind!r}")
    x0 = _start(cfg, "start.x0", 2)
    y0 = _start(cfg, "start.y0", 2)
    eps = float(cfg.get("invariant.eps_angle", 1e-4))
    cells = wn.n_cells(cfg.T, cfg.N)
    stride = _default_stride(cfg, cells, cfg.substeps)
    max_files = int(cfg.get("output.max_files", 10))
    bounds = _cone_bounds(cfg, domain)
    lip = isinstance(domain, geo.LipDomain)
    totals = {}
    rows = []

    def add(report):
        c, v = totals.get(report.name, (0, 0))
        totals[report.name] = (c + report.checked, v + len(report.violations))
        return len(report.violations)

    for i, s in enumerate(seeds):
        path = _driver(cfg, test_driver, 2, s)
        run = runner(domain, path, x0, y0, substeps=cfg.substeps, stride=stride)
        if i < max_files:
            name = os.path.join(out, f"coupling_{i:04d}.csv")
            run.to_csv(name)
            rep.files.append(name)
        nv = add(cp.check_coalescence_absorbing(run))
        if bounds is not None:
            nv += add(cp.check_cone_invariant(run, *bounds, eps_angle=eps))
        if lip:
            nv += add(cp.check_wall_exclusion(run, domain))
            if kind == "synchronous" and stride == 1:
                nv += add(cp.check_edge_monotonicity(run, domain.lip_constant, eps_angle=eps))
        rows.append([i, int(s), "" if run.tau is None else _fmt(run.tau), run.substeps, nv])
    name = os.path.join(out, "couplings.csv")
    _write_rows(name, ["path", "seed", "tau", "substeps", "violations"], rows)
    rep.files.append(name)
    if lip and kind == "synchronous" and stride != 1:
        rep.lines.append("edge monotonicity: skipped (needs output.stride = 1)")
    if bounds is not None:
        rep.lines.append(f"angle bounds: [{bounds[0]:.12g}, {bounds[1]:.12g}] eps {eps:g}")
    return [(f"{k}: {v} violations in {c} samples", v == 0) for k, (c, v) in totals.items()]


def _converge(cfg, out, seed, rep):
    domain = build_domain(cfg)
    field = build_field(cfg, domain.dim)
    x0 = _start(cfg, "start.x0", domain.dim)
    f = parse_function(cfg.values["converge.f"])
    levels = parse_levels(cfg.values["converge.levels"])
    s = dg.weak_convergence_ladder(domain, field, f, x0, levels, cfg.paths, seed, cfg.T,
                                   cfg.substeps)
    name = os.path.join(out, "ladder.csv")
    s.to_csv(name)
    rep.files.append(name)
    rep.lines.append(s.report())
    return [(k, ok) for k, ok in s.flags.items()]


def _diagnose(cfg, out, seeds, rep):
    domain = build_domain(cfg)
    field = build_field(cfg, domain.dim)
    kind = cfg.values["diagnose.kind"].lower()
    x0 = _start(cfg, "start.x0", domain.dim) if "start.x0" in cfg.values else \
        domain.interior_samples(1, np.random.default_rng(0))[0]
    N, T, nsub = cfg.N, cfg.T, cfg.substeps
    vals = wn.sample_paths(field.r, N, T, seeds)
    cell_grid = kind in ("moments", "ks")
    stride = nsub if cell_grid else _default_stride(cfg, vals.shape[1] - 1, nsub)
    ens = rf.integrate_ensemble(domain, field, vals, N, x0, nsub, stride=stride)
    checks = []
    if kind == "moments":
        m = int(cfg.get("diagnose.m", 0))
        default = " ".join(repr(2.0 ** (k - N)) for k in range(5))
        lags = parse_floats(cfg.get("diagnose.lags", default))
        s = dg.moment_scaling(ens, m, lags)
        if "invariant.slope_range" in cfg.values:
            lo, hi = parse_floats(cfg.values["invariant.slope_range"])
            s.flags[f"slope in [{lo}, {hi}]"] = lo <= s.extra["slope"] <= hi
    elif kind == "holder":
        beta = float(cfg.get("diagnose.beta", 0.25))
        grid = parse_floats(cfg.get("diagnose.R_grid", "0.5 1 2 4 8 16"))
        s = dg.holder_tail(ens, beta, grid, drivers=vals, driver_times=np.arange(
            vals.shape[1]) * 2.0 ** -N)
    elif kind == "variation":
        width = float(cfg.get("diagnose.window", T / 4))
        wins = [(a * width, (a + 1) * width) for a in range(int(round(T / width)))]
        cols = {"path": [], "s": [], "t": [], "ratio": []}
        for i in range(len(ens)):
            v = dg.variation_growth(ens[i], wins)
            for a, b, r in zip(v.columns["s"], v.columns["t"], v.columns["ratio"]):
                for k, val in zip(cols, (i, a, b, r)):
                    cols[k].append(val)
        cols = {k: np.array(v, dtype=float) for k, v in cols.items()}
        s = dg.EnsembleSummary("variation_growth", cols, len(ens),
                               flags={"ratios finite": bool(np.all(np.isfinite(cols["ratio"])))},
                               extra={"max_ratio": float(cols["ratio"].max())})
    elif kind == "ks":
        if not isinstance(domain, geo.Interval) or math.isfinite(domain.hi):
            raise ValueError("diagnose.kind: ks compares against the half-line law")
        sample = ens.x[:, -1, 0] - domain.lo
        ks = dg.ks_statistic(sample, lambda z: dg.folded_normal_cdf(z, math.sqrt(T)))
        limit = float(cfg.get("invariant.ks_max", 0.02))
        s = dg.EnsembleSummary("ks_half_line", {"x_T": np.sort(sample)}, len(sample),
                               flags={f"KS <= {limit}": ks <= limit}, extra={"ks": ks})
    else:
        raise ValueError(f"diagnose.kind: unknown diagnostic {kind!r}")
    name = os.path.join(out, "summary.csv")
    s.to_csv(name)
    rep.files.append(name)
    rep.lines.append(s.report())
    checks += list(s.flags.items())
    return checks


def run_experiment(cfg: ExperimentConfig, out: str | None = None, seed: int | None = None,
                   test_driver: str | None = None) -> RunReport:
    """Run one configured experiment and write its CSVs and report.txt."""
    if seed is not None:
        cfg.values["driver.seed"] = str(int(seed))
    out = out or cfg.get("output.directory", ".")
    rep = RunReport(EXIT_OK)
    start = time.perf_counter()
    master = cfg.seed
    seeds = wn.path_seeds(master, cfg.paths)
    head = [f"experiment: {cfg.kind}", "config:", *("  " + ln for ln in cfg.echo().splitlines()),
            f"master seed: {master}",
            "path seeds: " + " ".join(str(int(s)) for s in seeds[:5])
            + (" ..." if len(seeds) > 5 else "")]
    if test_driver:
        head.append(f"test driver: {test_driver}")
    try:
        os.makedirs(out, exist_ok=True)
        if test_driver and cfg.kind not in ("simulate", "couple"):
            raise ValueError("--test-driver applies to simulate and couple only")
        if cfg.kind == "simulate":
            checks = _simulate(cfg, out, seeds, test_driver, rep)
        elif cfg.kind == "couple":
            checks = _couple(cfg, out, seeds, test_driver, rep)
        elif cfg.kind == "converge":
            checks = _converge(cfg, out, master, rep)
        else:
            checks = _diagnose(cfg, out, seeds, rep)
        for label, ok in checks:
            rep.lines.append(f"{'PASS' if ok else 'FAIL'} {label}")
        rep.exit_code = EXIT_OK if all(ok for _, ok in checks) else EXIT_VIOLATION
    except (ReflectSDEError, ValueError, OSError) as exc:
        rep.lines.append(f"ERROR {type(exc).__name__}: {exc}")
        rep.exit_code = EXIT_ERROR
    status = {EXIT_OK: "ok", EXIT_VIOLATION: "invariant violation", EXIT_ERROR: "error"}
    rep.lines = head + rep.lines + [f"wall time: {time.perf_counter() - start:.3f} s",
                                    f"status: {status[rep.exit_code]} (exit {rep.exit_code})"]
    try:
        name = os.path.join(out, "report.txt")
        with open(name, "w") as fh:
            fh.write(rep.text + "\n")
        rep.files.append(name)
    except OSError as exc:
        rep.lines.append(f"ERROR could not write report: {exc}")
        rep.exit_code = EXIT_ERROR
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reflectsde",
                                 description="Simulate reflected SDEs and couplings.")
    ap.add_argument("command", choices=["simulate", "couple", "converge", "diagnose"])
    ap.add_argument("--config", required=True, help="key = value experiment file")
    ap.add_argument("--out", help="output directory (default: output.directory or .)")
    ap.add_argument("--seed", type=int, help="override driver.seed")
    ap.add_argument("--test-driver", choices=["zero", "ramp"],
                    help="replace the Brownian driver by a deterministic path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text, args.command)
    except (OSError, ReflectSDEError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    rep = run_experiment(cfg, args.out, args.seed, args.test_driver)
    print(rep.text)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
