"""Command-line entry point.

Subcommands: weak-error, generator-gap, noise-check, mean-field, particles,
spde, validate.  Exit codes: 0 success, 2 configuration rejected, 3 numerical
blow-up, 4 statistical validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationRejected, NumericalBlowUp, StatisticalValidationError
from .experiment import (
    ExperimentConfig,
    fit_rate_rows,
    load_config,
    run_generator_gap_study,
    run_mean_field_baseline,
    run_noise_validation,
    run_weak_error,
    validate_campaign,
    _replicate_id,
    _write_dict_rows,
)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dklab",
        description="Mean-field particle systems vs their conservative-SPDE "
                    "approximation on the torus: simulation and weak-error lab.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="TOML or JSON configuration")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--out-dir", default=None, help="override output directory")
        sp.add_argument("--threads", type=int, default=None, help="replicate-level worker threads")

    sp = sub.add_parser("weak-error", help="run the weak-error campaign")
    common(sp)

    sp = sub.add_parser("generator-gap", help="Ito-correction gap sweeps")
    common(sp)

    sp = sub.add_parser("noise-check", help="statistical validation of the noise sampler")
    common(sp)
    sp.add_argument("--ell", type=float, default=8.0, help="smoothing scale L")
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--dt", type=float, default=1e-3)

    sp = sub.add_parser("mean-field", help="deterministic baseline study")
    common(sp)
    sp.add_argument("--snapshot-times", default=None,
                    help="comma-separated times at which to dump the density")

    sp = sub.add_parser("particles", help="particle paths for one N")
    common(sp)
    sp.add_argument("--n-particles", type=int, default=None)
    sp.add_argument("--replicates", type=int, default=1)
    sp.add_argument("--dump-trajectories", action="store_true",
                    help="write (replicate, step, particle, x_1..x_d) CSV (large)")

    sp = sub.add_parser("spde", help="SPDE replicates for one N with diagnostics")
    common(sp)
    sp.add_argument("--n-particles", type=int, default=None)
    sp.add_argument("--replicates", type=int, default=1)
    sp.add_argument("--snapshot-times", default=None)

    sp = sub.add_parser("validate", help="run the deterministic invariant suites")
    common(sp)
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.out_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_weak_error(args) -> int:
    cfg = _load(args)
    if cfg.out_dir is None:
        cfg.out_dir = "results"
    result = run_weak_error(cfg)
    for r in result.rows:
        print(f"N={r.N:5d} {r.functional:>16s} weak_error={r.weak_error:.6g} "
              f"+- {r.combined_se:.3g} budget={r.budget:.4g}")
    for F in cfg.functionals:
        fit = fit_rate_rows(result.rows_for(F.name))
        if fit.status == "ok":
            print(f"{F.name}: slope {fit.slope:+.3f} "
                  f"(95% CI [{fit.ci_low:+.3f}, {fit.ci_high:+.3f}])")
        else:
            print(f"{F.name}: rate fit inconclusive "
                  f"({fit.n_points} points above the SE gate)")
    print(f"outputs in {cfg.out_dir}")
    return 0


def _cmd_generator_gap(args) -> int:
    cfg = _load(args)
    rows = run_generator_gap_study(cfg)
    for r in rows:
        print(f"sweep={r['sweep']} L={r['L']:<6g} delta={r['delta']:<8g} "
              f"gap={r['gap']:+.6e} budget={r['budget']:.4e}")
    return 0


def _cmd_noise_check(args) -> int:
    cfg = _load(args)
    record = run_noise_validation(cfg, L=args.ell, samples=args.samples, dt=args.dt)
    print(json.dumps(record, indent=2))
    return 0


def _parse_times(spec: str | None):
    return [float(t) for t in spec.split(",")] if spec else []


def _cmd_mean_field(args) -> int:
    cfg = _load(args)
    rows = run_mean_field_baseline(cfg)
    for r in rows:
        print(f"N={r['N']:5d} {r['functional']:>16s} "
              f"|E F[particles] - F[limit]| = {r['discrepancy']:.6g} "
              f"(se {r['se_particle']:.3g})")
    times = _parse_times(args.snapshot_times)
    if times:
        from .mean_field import mv_solve
        from .spde import stability_dt
        grid = cfg.grid
        m0 = cfg.initial_law.density_field(grid)
        dt = stability_dt(grid, cfg.coefficients, m0, cfg.terminal_time)
        out = _outdir(cfg)
        for t in times:
            state, _ = mv_solve(m0, cfg.coefficients, t, dt)
            np.savetxt(out / f"mean_field_t{t:g}.csv", state.m.values.reshape(-1, 1),
                       delimiter=",", header="m", comments="")
        print(f"snapshots in {out}")
    return 0


def _cmd_particles(args) -> int:
    cfg = _load(args)
    from .particles import simulate_particles
    from .spde import stability_dt

    n = args.n_particles or max(cfg.particle_counts)
    grid = cfg.grid
    law = cfg.initial_law
    m0 = law.density_field(grid)
    dt = cfg.dt or stability_dt(grid, cfg.coefficients, m0, cfg.terminal_time)
    out = _outdir(cfg)
    rows = []
    traj = []
    for rep in range(args.replicates):
        ens0 = law.sample(n, cfg.master_seed, replicate=rep)

        def record(step, ens, rep=rep):
            if args.dump_trajectories:
                for i, x in enumerate(ens.positions):
                    traj.append([rep, step, i] + list(x))

        ens = simulate_particles(ens0, cfg.coefficients, cfg.terminal_time, dt,
                                 cfg.master_seed, replicate=rep, record=record)
        rows.append({"replicate": rep,
                     **{F.name: F.value(ens) for F in cfg.functionals}})
    _write_dict_rows(out / "particles_functionals.csv", rows)
    if args.dump_trajectories:
        with open(out / "trajectories.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "step", "particle"] +
                       [f"x_{a+1}" for a in range(grid.d)])
            w.writerows(traj)
    print(f"{args.replicates} particle replicate(s) at N={n}; outputs in {out}")
    return 0


def _cmd_spde(args) -> int:
    cfg = _load(args)
    from .noise import NoiseStream
    from .particles import prepare_initial_data
    from .spde import SpdeSolver, negativity_report
    from .regularization import instantiate_schedule
    from .spde import stability_dt

    n = args.n_particles or max(cfg.particle_counts)
    grid = cfg.grid
    inst = instantiate_schedule(cfg.schedule, n, grid, cfg.coefficients)
    ens0 = cfg.initial_law.sample(n, cfg.master_seed, replicate=0)
    m0 = prepare_initial_data(ens0, inst.eps, grid)
    dt = cfg.dt or stability_dt(grid, cfg.coefficients, m0, cfg.terminal_time)
    times = sorted(_parse_times(args.snapshot_times))
    out = _outdir(cfg)
    records = []
    for rep in range(args.replicates):
        stream = NoiseStream(inst.spectrum, cfg.master_seed, replicate=rep)
        solver = SpdeSolver(grid, cfg.coefficients, dt, tamed=inst.tamed,
                            noise=stream, n_particles=n)
        pending = list(times)

        def record(step, state, rep=rep, pending=pending):
            while pending and state.t >= pending[0] - 0.5 * dt:
                t = pending.pop(0)
                np.savetxt(out / f"spde_rep{rep}_t{t:g}.csv",
                           state.m.values.reshape(-1, 1),
                           delimiter=",", header="m", comments="")

        state = solver.run(m0, cfg.terminal_time, record=record)
        rec = {"replicate": rep, "schedule": inst.report(),
               **state.diagnostics.record(), **negativity_report(state),
               "functionals": {F.name: F.value(state.m) for F in cfg.functionals}}
        records.append(rec)
        with open(out / f"spde_diagnostics_rep{rep}.json", "w") as fh:
            json.dump(rec, fh, indent=2, default=float)
    print(f"{args.replicates} SPDE replicate(s) at N={n}; diagnostics in {out}")
    return 0


def _cmd_validate(args) -> int:
    """Deterministic invariant suites; cheap but broad."""
    cfg = _load(args)
    failures = []

    def check(name, ok, detail=""):
        status = "pass" if ok else "FAIL"
        print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    # taming bounds on a log lattice
    from .regularization import TamedSqrt
    xs = np.concatenate([[0.0], np.logspace(-8, 1, 200)])
    ok = True
    for dl in (1e-1, 1e-2, 1e-3, 1e-4):
        f = TamedSqrt(dl)
        ok &= f(np.array([0.0]))[0] == 0.0
        ok &= bool(np.all(np.abs(f(xs) ** 2 - xs) <= dl * (1 + 1e-12)))
        pos = xs[xs > 0]
        ok &= bool(np.all(f.derivative(pos) <= 1.0 / np.sqrt(pos) * (1 + 1e-12)))
        ok &= bool(np.max(f.derivative(xs)) <= (1 + 1e-12) / np.sqrt(dl))
    check("tamed square-root bounds", ok)

    # Fejer kernel positivity and normalization
    from .torus import TorusGrid, fejer_kernel, quadrature_mass
    grid = cfg.grid
    small = TorusGrid(grid.d, min(grid.n, 32))
    ok = all(
        fejer_kernel(M, small).values.min() >= -1e-12
        and abs(quadrature_mass(fejer_kernel(M, small)) - 1) < 1e-12
        for M in range(0, 9)
    )
    check("Fejer kernel positivity and mass", ok)

    # ellipticity of the configured coefficients
    from .coefficients import check_ellipticity
    rep = check_ellipticity(cfg.coefficients)
    check("ellipticity floor and noise bound", rep.passed, "; ".join(rep.failures))

    # schedule instantiation for every configured N
    try:
        campaign = validate_campaign(cfg)
        check("schedule instantiation (all N)", True,
              f"dt={campaign.dt:.3g}")
    except ConfigurationRejected as exc:
        check("schedule instantiation (all N)", False, str(exc))

    # conservation smoke test: a short deterministic run
    from .mean_field import mv_solve
    m0 = cfg.initial_law.density_field(grid)
    from .spde import stability_dt
    dt = stability_dt(grid, cfg.coefficients, m0, cfg.terminal_time)
    state, _ = mv_solve(m0, cfg.coefficients, 20 * dt, dt)
    check("deterministic mass conservation",
          state.diagnostics.mass_drift_max < 1e-12,
          f"drift={state.diagnostics.mass_drift_max:.2e}")

    if failures:
        raise StatisticalValidationError("validation failures: " + ", ".join(failures))
    print("all validations passed")
    return 0


_COMMANDS = {
    "weak-error": _cmd_weak_error,
    "generator-gap": _cmd_generator_gap,
    "noise-check": _cmd_noise_check,
    "mean-field": _cmd_mean_field,
    "particles": _cmd_particles,
    "spde": _cmd_spde,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationRejected as exc:
        print(f"configuration rejected: {exc}", file=sys.stderr)
        return 2
    except NumericalBlowUp as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return 3
    except StatisticalValidationError as exc:
        print(f"statistical validation failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
