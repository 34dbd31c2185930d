"""Command line front end.

Exit codes: 0 on success, 1 when a computation fails (non-converged solve
where convergence is required, failed verify suite), 2 on configuration
errors including exponents outside the admissible window.  Records carry
no timestamps; a rerun with the same inputs is bit-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .chqf import ChqfError, read_chqf, write_chqf
from .experiments import (
    SweepRecord,
    concentration_study,
    eps_b_of,
    eps_q_of_gap,
    gap_schedule,
    locate_peak,
    mass_of_gap,
    trichotomy_probe,
)
from .grid import Field
from .io import ConfigError, RunConfig, config_hash, load_config, write_records
from .params import ParamsError, Regime
from .solvers import (
    SolveStatus,
    critical_mass,
    gaussian_field,
    minimize_on_sphere,
    petviashvili_solve,
)
from .spectral import (
    RieszOptions,
    RieszScheme,
    SpectralWorkspace,
    riesz_convolve,
)
from .verify import run_suite, suite_passed

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    defaults = "\n".join(f"  {k} = {v}" for k, v in RunConfig().to_items())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--grid", type=int, metavar="M", help="points per axis")
    common.add_argument("--box", type=float, metavar="L", help="box side length")
    common.add_argument("--seed", type=int, help="seed recorded with the run")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "jsonl"), help="record format")
    common.add_argument(
        "--jobs", type=int, default=1, help="worker threads for independent cells"
    )

    parser = argparse.ArgumentParser(
        prog="chq",
        description="Groundstates and constrained minimizers of the nonlocal "
        "Choquard energy on a periodic spectral grid.",
        epilog="config defaults:\n" + defaults,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser(
        "groundstate", parents=[common], help="unit-coefficient groundstate solve"
    )
    sp.add_argument("--save-field", help="write the solution as a CHQF file")

    sp = sub.add_parser(
        "critical-mass", parents=[common], help="critical mass at the mass-critical p"
    )
    sp.add_argument("--no-cache", action="store_true", help="bypass the result cache")

    sp = sub.add_parser(
        "minimize", parents=[common], help="constrained minimization at fixed mass"
    )
    sp.add_argument("--c", type=float, help="constraint mass (overrides run.c)")
    sp.add_argument("--init", help="initial field, CHQF file")
    sp.add_argument("--save-field", help="write the final field as a CHQF file")

    sp = sub.add_parser(
        "trichotomy", parents=[common], help="regime probe at the configured (p, c)"
    )
    sp.add_argument("--c", type=float, help="constraint mass (overrides run.c)")

    sp = sub.add_parser(
        "sweep", parents=[common], help="mass sweep below the critical mass"
    )
    sp.add_argument("--c-star", type=float, help="skip the critical-mass solve")

    sp = sub.add_parser(
        "concentrate", parents=[common], help="near-critical concentration study"
    )
    sp.add_argument("--no-witness", action="store_true", help="skip the witness bound")
    sp.add_argument(
        "--plot-data",
        metavar="DIR",
        help="write two-column x-y files per figure into DIR",
    )

    sp = sub.add_parser("verify", parents=[common], help="run the oracle suite")
    sp.add_argument(
        "--fault-injection",
        action="store_true",
        help="corrupt each convolution oracle's reference copy; the suite must fail",
    )

    sp = sub.add_parser("convolve", parents=[common], help="apply the nonlocal kernel")
    sp.add_argument("--field", required=True, help="input field, CHQF file")
    sp.add_argument("--alpha", type=float, help="kernel order (overrides params.alpha)")
    sp.add_argument(
        "--scheme",
        choices=tuple(s.value for s in RieszScheme),
        default=RieszScheme.FREE_SPACE.value,
    )
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if args.grid is not None:
        updates["grid_points"] = args.grid
    if args.box is not None:
        updates["box_length"] = args.box
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.format is not None:
        updates["format"] = args.format
    if args.out is not None:
        updates["out"] = args.out
    if updates:
        cfg = replace(cfg, **updates)
    return cfg


def _emit(records: list[dict], cfg: RunConfig) -> None:
    fmt = cfg.format
    if cfg.out is None:
        write_records(records, sys.stdout, fmt)
    else:
        write_records(records, cfg.out, fmt)


def _objects(cfg: RunConfig):
    try:
        params = cfg.params()
        grid = cfg.grid()
        vspec = cfg.vspec()
    except (ParamsError, ConfigError):
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params, grid, vspec


def _cmd_groundstate(cfg: RunConfig, args) -> int:
    params, grid, _ = _objects(cfg)
    ws = SpectralWorkspace(grid)
    rep = petviashvili_solve(params, cfg.pet, ws)
    if args.save_field:
        write_chqf(args.save_field, rep.field)
    _emit([rep.to_record() | {"config_hash": config_hash(cfg)}], cfg)
    return 0 if rep.status is SolveStatus.CONVERGED else 1


def _cmd_critical_mass(cfg: RunConfig, args) -> int:
    params, grid, _ = _objects(cfg)
    if cfg.p is not None and params.regime is not Regime.MASS_CRITICAL:
        raise ConfigError(
            f"critical-mass runs at p = (N+alpha+2)/N = {params.p_critical:g}; "
            f"drop params.p or set it there (got {params.p:g})"
        )
    params = params.with_p(params.p_critical)
    ws = SpectralWorkspace(grid)
    c_star = critical_mass(params, cfg.pet, ws, use_cache=not args.no_cache)
    record = {
        "c_star": c_star,
        "grid": {"N": grid.dim, "M": grid.points_per_axis, "L": grid.box_length},
        "params": {"alpha": params.alpha, "p": params.p},
        "config_hash": config_hash(cfg),
    }
    _emit([record], cfg)
    return 0


def _cmd_minimize(cfg: RunConfig, args) -> int:
    params, grid, vspec = _objects(cfg)
    c = args.c if args.c is not None else cfg.c
    if c is None:
        raise ConfigError("minimize needs a constraint mass: set run.c or pass --c")
    ws = SpectralWorkspace(grid)
    if args.init:
        init = read_chqf(args.init)
        if init.grid != grid:
            raise ConfigError(
                f"initial field grid {init.grid} does not match configured {grid}"
            )
    else:
        init = gaussian_field(grid, cfg.pet.init_width)
    rep = minimize_on_sphere(params, c, vspec, init, cfg.flow, ws)
    if args.save_field:
        write_chqf(args.save_field, rep.field)
    _emit([rep.to_record() | {"config_hash": config_hash(cfg)}], cfg)
    return 0 if rep.status is not SolveStatus.MAX_ITERS else 1


def _cmd_trichotomy(cfg: RunConfig, args) -> int:
    params, grid, _ = _objects(cfg)
    c = args.c if args.c is not None else cfg.c
    if c is None:
        raise ConfigError("trichotomy needs a constraint mass: set run.c or pass --c")
    ws = SpectralWorkspace(grid)
    c_star = None
    if params.regime is Regime.MASS_CRITICAL:
        c_star = critical_mass(params, cfg.pet, ws)
    probe = trichotomy_probe(params, c, ws, c_star=c_star)
    _emit([probe.to_record() | {"config_hash": config_hash(cfg)}], cfg)
    return 0 if probe.ok else 1


def _solve_sweep_point(
    params, c, gap, q, vspec, init, flow, ws, h
) -> tuple[SweepRecord, Field]:
    rep = minimize_on_sphere(params, c, vspec, init, flow, ws)
    br = rep.breakdown
    e_c = rep.energy_value
    record = SweepRecord(
        c=c,
        status=rep.status.value,
        A=br.A,
        B=br.B,
        C=br.C,
        energy=e_c,
        mu=rep.mu,
        eps_q=eps_q_of_gap(gap, q),
        eps_B=eps_b_of(br.B, params),
        y_c=locate_peak(rep.field),
        gap=gap,
        iters=rep.iterations,
        residual=rep.residual,
        boundary_mass=rep.boundary_mass,
        # the trap virial pins C = 4 e_c/(q+2): equality for q = 2,
        # so the bound is checked with a band, not strictly
        C_le_energy=bool(br.C <= e_c + 0.01 * abs(e_c) + 1e-12),
        config_hash=h,
    )
    return record, rep.field


def _cmd_sweep(cfg: RunConfig, args) -> int:
    params, grid, vspec = _objects(cfg)
    if vspec is None:
        raise ConfigError("sweep needs at least one potential well")
    params = params.with_p(params.p_critical)
    ws = SpectralWorkspace(grid)
    c_star = args.c_star if args.c_star is not None else critical_mass(
        params, cfg.pet, ws
    )
    gaps = [float(g) for g in gap_schedule(cfg.sweep_points, cfg.gap_lo, cfg.gap_hi)]
    q = vspec.q_max
    h = config_hash(cfg)
    center = vspec.wells[0].center
    records: list[SweepRecord]
    if args.jobs > 1:
        # independent cells: every point starts from the same Gaussian
        def solve_one(gap: float) -> SweepRecord:
            c = mass_of_gap(gap, c_star, params)
            init = gaussian_field(grid, cfg.pet.init_width, center)
            return _solve_sweep_point(
                params, c, gap, q, vspec, init, cfg.study_flow(), ws, h
            )[0]

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(solve_one, gaps))
    else:
        records = []
        prev: Field | None = None
        for gap in gaps:
            c = mass_of_gap(gap, c_star, params)
            init = prev if prev is not None else gaussian_field(
                grid, cfg.pet.init_width, center
            )
            record, final = _solve_sweep_point(
                params, c, gap, q, vspec, init, cfg.study_flow(), ws, h
            )
            records.append(record)
            if record.status == SolveStatus.CONVERGED.value:
                prev = final
    _emit([r.to_row() for r in records], cfg)
    ok = all(r.status == SolveStatus.CONVERGED.value for r in records)
    return 0 if ok else 1


def _cmd_concentrate(cfg: RunConfig, args) -> int:
    params, grid, vspec = _objects(cfg)
    if vspec is None:
        raise ConfigError("concentrate needs at least one potential well")
    params = params.with_p(params.p_critical)
    ws = SpectralWorkspace(grid)
    gaps = gap_schedule(cfg.sweep_points, cfg.gap_lo, cfg.gap_hi)
    report = concentration_study(
        params,
        vspec,
        ws,
        gaps=gaps,
        flow_opts=cfg.study_flow(),
        pet_opts=cfg.pet,
        config_hash=config_hash(cfg),
        with_witness=not args.no_witness,
    )
    _emit([r.to_row() for r in report.records], cfg)
    summary = {
        "c_star": report.c_star,
        "q": report.q,
        "lambda": report.lam,
        "prefactor_predicted": report.prefactor_predicted,
        "prefactor_measured": report.prefactor_measured,
        "fit_energy": {
            "exponent": report.fit_energy.exponent,
            "theory": report.fit_energy.exponent_theory,
            "r_squared": report.fit_energy.r_squared,
        },
        "fit_kinetic": {
            "exponent": report.fit_kinetic.exponent,
            "theory": report.fit_kinetic.exponent_theory,
            "r_squared": report.fit_kinetic.r_squared,
        },
        "witness": report.witness,
        "config_hash": report.config_hash,
    }
    print(json.dumps(summary), file=sys.stderr)
    if args.plot_data:
        _write_plot_data(Path(args.plot_data), report)
    # per-point failures are reported in the records; the study itself
    # raised already if too few points converged or the grid collapsed
    return 0


def _write_plot_data(outdir: Path, report) -> None:
    """One plain two-column x-y file per figure, x = gap."""
    outdir.mkdir(parents=True, exist_ok=True)
    gaps = [r.gap for r in report.records]

    def dump(name: str, ys) -> None:
        lines = [f"{x!r} {y!r}\n" for x, y in zip(gaps, ys)]
        (outdir / name).write_text("".join(lines))

    dump("energy_vs_gap.dat", [r.energy for r in report.records])
    dump("kinetic_vs_gap.dat", [r.A for r in report.records])
    dump("prefactor_vs_gap.dat", [r.energy / r.eps_q**report.q for r in report.records])
    for key, vals in report.distances.items():
        dump(f"distance_s{key}_vs_gap.dat", vals)


def _cmd_verify(cfg: RunConfig, args) -> int:
    reports = run_suite(fault_injection=args.fault_injection)
    _emit([r.to_record() for r in reports], cfg)
    return 0 if suite_passed(reports) else 1


def _cmd_convolve(cfg: RunConfig, args) -> int:
    f = read_chqf(args.field)
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    ws = SpectralWorkspace(f.grid)
    conv = riesz_convolve(f, RieszOptions(RieszScheme(args.scheme), alpha), ws)
    if cfg.out is None:
        raise ConfigError("convolve writes a CHQF file: pass --out")
    write_chqf(cfg.out, conv)
    return 0


_DISPATCH = {
    "groundstate": _cmd_groundstate,
    "critical-mass": _cmd_critical_mass,
    "minimize": _cmd_minimize,
    "trichotomy": _cmd_trichotomy,
    "sweep": _cmd_sweep,
    "concentrate": _cmd_concentrate,
    "verify": _cmd_verify,
    "convolve": _cmd_convolve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        return _DISPATCH[args.command](cfg, args)
    except (ConfigError, ParamsError, ChqfError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
