"""Command-line driver: configuration in, CSV/JSONL artifacts out.

    sllb <command> --config cfg.toml --out dir [--seed N] [--paths N]

Commands: simulate, skeleton, control, rate, ensemble, verify, ldp.
Exit codes: 0 success, 2 configuration error, 3 blow-up guard tripped,
4 verification suite failure. SLLB_WORKERS sets the ensemble worker count
(default 1); it is the only environment variable that affects scheduling.
"""

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path


from . import __version__, kernels, persist
from .config import ConfigError, RunSetup, load_config
from .diagnostics import (
    BallComplementEvent, energy_report, identity_suite, ldp_slope_experiment,
    lipschitz_probe,
)
from .noise import Control, path_seed
from .report import ExperimentReport
from .skeleton import OptimizerConfig, rate_function, solve_skeleton
from .solver import BlowUpError, solve_llb_jump, solve_stochastic_control
from .spectral import Field


def _default_control(setup: RunSetup) -> Control:
    if setup.control is not None:
        return setup.control
    return Control.constant(1.0, setup.solver.T, 4, max(setup.nu.n_atoms, 1))


def cmd_simulate(setup: RunSetup, out: Path, args) -> list:
    traj = solve_llb_jump(setup.solver, setup.m0, setup.nu, None,
                          setup.h_phys)
    persist.write_trajectory_csv(traj, out / "trajectory.csv")
    persist.write_jump_log_csv(traj, out / "jumps.csv")
    persist.write_energy_csv(energy_report(traj), out / "energy.csv")
    persist.write_field_binary(traj.terminal_field, out / "terminal.fld")
    outputs = ["trajectory.csv", "jumps.csv", "energy.csv", "terminal.fld"]
    if setup.experiment.get("write_snapshots", False):
        for idx, coeffs in zip(traj.field_indices, traj.field_coeffs):
            name = f"snapshot_{idx:06d}.fld"
            persist.write_field_binary(Field(setup.grid, coeffs), out / name)
            outputs.append(name)
    return outputs


def cmd_skeleton(setup: RunSetup, out: Path, args) -> list:
    theta = _default_control(setup)
    traj = solve_skeleton(setup.solver, setup.m0, setup.nu, theta,
                          setup.h_phys)
    persist.write_trajectory_csv(traj, out / "trajectory.csv")
    persist.write_control_csv(theta, setup.nu, out / "control.csv")
    persist.write_field_binary(traj.terminal_field, out / "terminal.fld")
    return ["trajectory.csv", "control.csv", "terminal.fld"]


def cmd_control(setup: RunSetup, out: Path, args) -> list:
    theta = _default_control(setup)
    traj = solve_stochastic_control(setup.solver, setup.m0, setup.nu, theta,
                                    setup.h_phys, setup.solver.seed)
    persist.write_trajectory_csv(traj, out / "trajectory.csv")
    persist.write_jump_log_csv(traj, out / "jumps.csv")
    persist.write_control_csv(theta, setup.nu, out / "control.csv")
    return ["trajectory.csv", "jumps.csv", "control.csv"]


def _resolve_target(setup: RunSetup, out: Path):
    exp = setup.experiment
    spec = exp.get("target", "unit-control-endpoint")
    if spec == "unit-control-endpoint":
        theta1 = Control.constant(1.0, setup.solver.T, 4,
                                  max(setup.nu.n_atoms, 1))
        target = solve_skeleton(setup.solver, setup.m0, setup.nu, theta1,
                                setup.h_phys).terminal_field
    else:
        target = persist.read_field_binary(Path(spec), setup.grid)
    shift = exp.get("target_shift")
    if shift is not None:
        from .spectral import constant_field
        target = Field(setup.grid,
                       target.coeffs + constant_field(setup.grid, shift).coeffs)
    return target


def cmd_rate(setup: RunSetup, out: Path, args) -> list:
    exp = setup.experiment
    opt = OptimizerConfig(
        penalty0=float(exp.get("penalty0", 10.0)),
        penalty_growth=float(exp.get("penalty_growth", 10.0)),
        outer_iters=int(exp.get("outer_iters", 5)),
        sweeps=int(exp.get("sweeps", 4)))
    result = rate_function(
        _resolve_target(setup, out), setup.solver, setup.m0, setup.nu,
        setup.h_phys, opt_cfg=opt,
        n_cells=int(exp.get("rate_n_cells", 4)),
        gap_tolerance=float(exp.get("gap_tolerance", 1e-3)))
    (out / "rate_report.txt").write_text(result.summary())
    persist.write_control_csv(result.control, setup.nu,
                              out / "rate_control.csv")
    return ["rate_report.txt", "rate_control.csv"]


def _ensemble_member(config_path: str, seed: int) -> tuple:
    setup = load_config(config_path, seed_override=seed)
    traj = solve_llb_jump(setup.solver, setup.m0, setup.nu, None,
                          setup.h_phys)
    return (traj, seed)


def cmd_ensemble(setup: RunSetup, out: Path, args) -> list:
    n_paths = args.paths or int(setup.experiment.get("n_paths", 8))
    master = setup.solver.seed
    seeds = [path_seed(master, i) for i in range(n_paths)]
    workers = int(os.environ.get("SLLB_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ensemble_member,
                                    [str(args.config)] * n_paths, seeds))
    else:
        results = [_ensemble_member(str(args.config), s) for s in seeds]
    outputs = []
    summary = ["path_index,seed,n_jumps,terminal_l2,terminal_h1"]
    for i, (traj, seed) in enumerate(results):
        name = f"path_{i:04d}.csv"
        persist.write_trajectory_csv(traj, out / name)
        outputs.append(name)
        summary.append(f"{i},{seed},{len(traj.jump_events)},"
                       f"{traj.l2[-1]!r},{traj.h1[-1]!r}")
    (out / "summary.csv").write_text("\n".join(summary) + "\n")
    outputs.append("summary.csv")
    return outputs


def cmd_verify(setup: RunSetup, out: Path, args) -> list:
    exp = setup.experiment
    seed = setup.solver.seed
    n_samples = int(exp.get("n_samples", 50))
    reports = [identity_suite(setup.grid, setup.h_field, n_samples, seed)]
    for tag in ("Phi", "G", "H", "b"):
        reports.append(lipschitz_probe(tag, setup.grid, setup.h_field,
                                       setup.nu, n_samples, seed))
    energy = ExperimentReport(suite="energy", scenario="dt-halving",
                              seed=seed)
    residuals = []
    from .noise import LevyMeasure
    nu0 = LevyMeasure.from_atoms([])
    for dt in (4e-3, 2e-3, 1e-3):
        cfg = replace(setup.solver, dt=dt, snapshot_stride=0)
        traj = solve_llb_jump(cfg, setup.m0, nu0, 0, setup.h_phys)
        residuals.append(energy_report(traj).balance_residual)
    for a, b in zip(residuals, residuals[1:]):
        ratio = a / b if b else float("inf")
        energy.add(ratio, params={"kind": "residual_ratio"},
                   tolerance=2.0, passed=1.6 <= ratio <= 2.4)
    reports.append(energy)
    lines = []
    ok = True
    for rep in reports:
        ok = ok and rep.passed
        lines.append(rep.to_jsonl().rstrip("\n"))
    (out / "verify.jsonl").write_text("\n".join(lines) + "\n")
    if not ok:
        raise VerificationFailure("one or more verification suites failed")
    return ["verify.jsonl"]


def cmd_ldp(setup: RunSetup, out: Path, args) -> list:
    exp = setup.experiment
    eps_list = [float(e) for e in exp.get("eps_list", [0.3, 0.2, 0.12])]
    n_paths = args.paths or int(exp.get("n_paths", 200))
    radius = float(exp.get("event_radius", 0.3))
    theta1 = Control.constant(1.0, setup.solver.T, 4,
                              max(setup.nu.n_atoms, 1))
    center = solve_skeleton(setup.solver, setup.m0, setup.nu, theta1,
                            setup.h_phys).terminal_field
    event = BallComplementEvent(center, radius)
    rate = rate_function(event, setup.solver, setup.m0, setup.nu,
                         setup.h_phys,
                         opt_cfg=OptimizerConfig(outer_iters=3, sweeps=2),
                         gap_tolerance=float(exp.get("gap_tolerance", 1e-3)))
    rep = ldp_slope_experiment(eps_list, event, setup.solver, setup.m0,
                               setup.nu, setup.h_phys, n_paths,
                               setup.solver.seed, rate_cost=rate.cost,
                               margin=float(exp.get("rate_margin", 1.0)))
    persist.write_jsonl(rep, out / "ldp.jsonl")
    (out / "rate_report.txt").write_text(rate.summary())
    return ["ldp.jsonl", "rate_report.txt"]


class VerificationFailure(RuntimeError):
    pass


COMMANDS = {
    "simulate": cmd_simulate,
    "skeleton": cmd_skeleton,
    "control": cmd_control,
    "rate": cmd_rate,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
    "ldp": cmd_ldp,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sllb",
        description="jump-noise magnetization dynamics: simulation and "
                    "verification harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override [solver].seed")
        p.add_argument("--paths", type=int, default=None,
                       help="override the ensemble path count")
    args = parser.parse_args(argv)

    try:
        setup = load_config(args.config, seed_override=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        outputs = COMMANDS[args.command](setup, out, args)
    except BlowUpError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    except VerificationFailure as exc:
        persist.write_manifest(out, config_text=setup.raw_text,
                               master_seed=setup.solver.seed,
                               command=args.command, outputs=["verify.jsonl"],
                               wall_clock=time.perf_counter() - t0,
                               backend=kernels.backend(), version=__version__)
        print(f"verification failed: {exc}", file=sys.stderr)
        return 4
    persist.write_manifest(out, config_text=setup.raw_text,
                           master_seed=setup.solver.seed,
                           command=args.command, outputs=outputs,
                           wall_clock=time.perf_counter() - t0,
                           backend=kernels.backend(), version=__version__)
    return 0


if __name__ == "__main__":
    sys.exit(main())
