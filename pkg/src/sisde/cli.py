"""Command-line entry point: ``sisde <subcommand> --config FILE [--seed N] [--workers N] [--out DIR]``.

Data goes to files in the output directory; diagnostics go to stderr.  The
only thing written to stdout is the distance line of ``compare``.

Exit codes: 0 ok, 2 config error, 3 assumption violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import DriftSpec, QuadraticDiffusionSpec, TruncatedModel, greenhalgh_coeffs, validate_assumptions
from .config import ScenarioConfig, load_config, render, resolve
from .diagnostics import cauchy_errors
from .drivers import path_rng
from .engine import JumpRun, SquareRootProcess, SquareRootRun, TriangularRun, ensemble
from .errors import (
    AssumptionViolation,
    ConfigError,
    DegenerateMatrixError,
    InputDomainError,
    NumericalFailure,
    StepSizeError,
)
from .fokker_planck import (
    DensityField,
    evolve_fp,
    evolve_master,
    fields_from_table,
    histogram_field,
    l1_distance,
    n_marginal,
    point_mass,
    unit_bin_histogram,
)
from .transition import greenhalgh_table, n_steps_for

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 2, 3, 4

# Fixed so that sums reduced per block never depend on --workers.
BLOCK = 1000

SUBCOMMANDS = ("simulate", "jump", "converge", "validate", "fokker-planck", "compare")


def _g(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, columns, fmts):
    """Write equal-length columns; ``fmts`` holds one printf format per column."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=fmts, delimiter=",")


def _write_report(path: Path, items):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in items:
            if isinstance(v, (float, np.floating)):
                v = _g(v)
            fh.write(f"{k} = {v}\n")


# -- model assembly -------------------------------------------------------------


def build_specs(cfg: ScenarioConfig):
    if cfg.model == "greenhalgh":
        return greenhalgh_coeffs(cfg.greenhalgh(), M=cfg.declared("M"), H=cfg.declared("H"), L=cfg.declared("L"))
    M = cfg.declared("M") or math.inf
    drift = DriftSpec(resolve(cfg.drift), M=M, L=cfg.declared("L") or math.inf)
    spec = QuadraticDiffusionSpec(
        resolve(cfg.alpha), resolve(cfg.beta), resolve(cfg.scale), M=M, H=cfg.declared("H") or math.inf
    )
    return drift, spec


def build_run(cfg: ScenarioConfig, level=None) -> TriangularRun:
    drift, spec = build_specs(cfg)
    return TriangularRun(
        TruncatedModel(drift, spec),
        SquareRootProcess(cfg.mu, cfg.absorb),
        cfg.x0,
        cfg.y0,
        cfg.T,
        cfg.level if level is None else level,
        cfg.rho,
        cfg.record_every,
    )


def _lattice_start(cfg: ScenarioConfig):
    if cfg.model != "greenhalgh":
        raise ConfigError("this subcommand needs model = greenhalgh")
    if cfg.x0 != int(cfg.x0) or cfg.y0 != int(cfg.y0):
        raise ConfigError("x0 and y0 must be integers on the lattice")
    return (int(cfg.y0 - cfg.x0), int(cfg.x0))


def _lattice_size(cfg: ScenarioConfig) -> int:
    return cfg.fp_max if cfg.fp_max > 0 else int(math.ceil(2 * cfg.y0)) + 1


# -- subcommands ----------------------------------------------------------------


def _write_paths(out: Path, stats, xkey, ykey):
    t = stats.times
    xs, ys = stats.samples[xkey], stats.samples[ykey]
    n, m = xs.shape
    ids = np.repeat(np.arange(n), m)
    _write_csv(
        out / "trajectories.csv",
        ("path_id", "t", "X", "Y"),
        (ids, np.tile(t, n), xs.ravel(), ys.ravel()),
        ["%d", "%.17g", "%.17g", "%.17g"],
    )
    _write_csv(
        out / "moments.csv",
        ("t", "mean_X", "var_X", "mean_Y", "var_Y", "se_X", "se_Y"),
        (t, stats.mean[xkey], stats.var[xkey], stats.mean[ykey], stats.var[ykey], stats.se[xkey], stats.se[ykey]),
        ["%.17g"] * 7,
    )


def cmd_simulate(cfg, out, workers):
    stats = ensemble(build_run(cfg), cfg.paths, cfg.seed, workers=workers, block=BLOCK)
    _write_paths(out, stats, "X", "Y")
    return EXIT_OK


def cmd_jump(cfg, out, workers):
    run = JumpRun(greenhalgh_table(cfg.greenhalgh()), _lattice_start(cfg), cfg.dt, cfg.T, cfg.record_every)
    stats = ensemble(run, cfg.paths, cfg.seed, workers=workers, block=BLOCK)
    # X is the infected count S2, Y the total population N
    _write_paths(out, stats, "S2", "N")
    return EXIT_OK


def cmd_converge(cfg, out, workers):
    levels = sorted(cfg.levels)
    rep = cauchy_errors(build_run(cfg, level=levels[-1]), levels, cfg.paths, cfg.seed, workers=workers, block=BLOCK)
    pairs = rep.levels[:-1]
    _write_csv(
        out / "convergence.csv",
        ("level", "mesh", "l1_error", "sup_error", "l1_se", "sup_se"),
        (pairs, rep.meshes[:-1], rep.l1_error, rep.sup_error, rep.l1_se, rep.sup_se),
        ["%d"] + ["%.17g"] * 5,
    )
    items = [
        ("M", rep.M),
        ("G", rep.G),
        ("bound", rep.bound),
        ("M1", rep.M1),
        ("gamma2", rep.gamma2),
        ("C_hat", rep.C_hat),
        ("sup_mean_1py", rep.sup_mean_1py),
        ("sup_mean_1py_sq", rep.sup_mean_1py_sq),
        ("l1_slope", rep.l1_slope),
        ("sup_slope", rep.sup_slope),
        ("strictly_decreasing", str(rep.strictly_decreasing).lower()),
        ("step1_ok", str(rep.step1_ok).lower()),
    ]
    for k, m, s, g1 in zip(rep.levels, rep.max_mean_abs_x, rep.max_mean_abs_x_se, rep.gamma1):
        items += [(f"max_mean_abs_x_{k}", m), (f"max_mean_abs_x_se_{k}", s), (f"gamma1_{k}", g1)]
    _write_report(out / "bounds.txt", items)
    for note in rep.notes:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(cfg, out, workers):
    drift, spec = build_specs(cfg)
    top = max(cfg.y0, 1.0)
    box = ((0.0, 2.0 * top), (-top, 3.0 * top))
    rep = validate_assumptions(drift, spec, box, cfg.validate_samples, path_rng(cfg.seed, 0))
    items = [
        ("M_hat", rep.M_hat),
        ("H_hat", rep.H_hat),
        ("L_hat", rep.L_hat),
        ("M_declared", rep.M_declared),
        ("H_declared", rep.H_declared),
        ("L_declared", rep.L_declared),
        ("n_samples", rep.n_samples),
        ("flags", "; ".join(rep.flags) or "none"),
    ]
    _write_report(out / "validation.txt", items)
    for f in rep.flags:
        print(f"assumption flagged: {f}", file=sys.stderr)
    return EXIT_OK if rep.ok else EXIT_ASSUMPTION


def _master_density(cfg, table, size) -> DensityField:
    field = point_mass((size, size), _lattice_start(cfg))
    return evolve_master(field, table, cfg.dt, n_steps_for(cfg.T, cfg.dt))


def cmd_fokker_planck(cfg, out, workers):
    table = greenhalgh_table(cfg.greenhalgh())
    size = _lattice_size(cfg)
    if cfg.fp_solver == "master":
        field = _master_density(cfg, table, size)
    else:
        field = point_mass((size, size), _lattice_start(cfg))
        drift, cov = fields_from_table(table, field)
        field = evolve_fp(field, drift, cov, cfg.dt, n_steps_for(cfg.T, cfg.dt))
    x1, x2 = field.coords()
    _write_csv(out / "density.csv", ("x1", "x2", "p"), (x1.ravel(), x2.ravel(), field.p.ravel()), ["%.17g"] * 3)
    print(f"mass {_g(field.mass)} lost {_g(field.lost)}", file=sys.stderr)
    if field.first_negative is not None:
        print(f"first negative cell {field.first_negative}", file=sys.stderr)
    return EXIT_OK


def cmd_compare(cfg, out, workers):
    table = greenhalgh_table(cfg.greenhalgh())
    size = _lattice_size(cfg)
    master = _master_density(cfg, table, size)
    if cfg.compare_target == "y":
        level = max(0, math.ceil(math.log2(cfg.T / cfg.dt)))
        run = SquareRootRun(cfg.mu, cfg.y0, cfg.T, level, cfg.absorb)
        stats = ensemble(run, cfg.paths, cfg.seed, workers=workers, block=BLOCK)
        ref = n_marginal(master)
        d = l1_distance(ref, unit_bin_histogram(stats.samples["Y"][:, -1], len(ref)))
    else:
        run = JumpRun(table, _lattice_start(cfg), cfg.dt, cfg.T)
        stats = ensemble(run, cfg.paths, cfg.seed, workers=workers, block=BLOCK)
        hist = histogram_field(stats.samples["S1"][:, -1], stats.samples["S2"][:, -1], master)
        d = l1_distance(master.p, hist.p)
    verdict = "PASS" if d <= cfg.compare_threshold else "FAIL"
    print(f"l1 {_g(d)} {verdict}")
    _write_report(out / "compare.txt", [("l1", d), ("threshold", cfg.compare_threshold), ("verdict", verdict)])
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "jump": cmd_jump,
    "converge": cmd_converge,
    "validate": cmd_validate,
    "fokker-planck": cmd_fokker_planck,
    "compare": cmd_compare,
}


def write_manifest(out: Path, name: str, cfg: ScenarioConfig):
    with open(out / "manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# sisde {__version__}\n# subcommand: {name}\n")
        fh.write(render(cfg))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sisde", description="Stochastic SIS simulation toolkit")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="flat key = value scenario file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--workers", type=int, default=1, help="threads; changes speed, never results")
    p.add_argument("--out", help="output directory (overrides the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must lie in [0, 2^64)")
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args.subcommand, cfg)
        return COMMANDS[args.subcommand](cfg, out, args.workers)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (NumericalFailure, StepSizeError, DegenerateMatrixError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputDomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
