"""Command-line entry points: solve, shoot, gradcheck, metrics.

Exit codes: 0 on success (including documented non-convergence, which is
data, not failure), 1 on internal errors or failed gradient checks, 2 on
configuration problems.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from .gradcheck import run_scenario_checks
from .io import (
    ensure_dir,
    read_trajectory_csv,
    write_loss_history_csv,
    write_metrics_json,
    write_trajectory_csv,
)
from .problem import running_cost
from .scenarios import (
    SCENARIO_KINDS,
    ConfigError,
    MetricsReport,
    ScenarioConfig,
    build_problem,
    build_scenario,
    build_shooting_config,
    build_train_config,
    control_velocity_alignment,
    final_stage_penalty,
    metrics_from_result,
    shipped_config_text,
)
from .shooting import shoot
from .sympnet import save_checkpoint
from .trainer import PhaseTrajectory, train, violation_metric, warmup_train

GRADCHECK_FAMILIES = ("oscillator", "single_circle", "four_circle", "room_M", "maze", "box3d_swarm")


def load_config(spec: str) -> ScenarioConfig:
    """Load a scenario from a file path or a shipped scenario name."""
    if os.path.exists(spec):
        with open(spec) as f:
            return ScenarioConfig.parse(f.read())
    if spec in SCENARIO_KINDS and spec != "custom":
        return ScenarioConfig.parse(shipped_config_text(spec))
    raise ConfigError(f"config '{spec}' is neither a file nor a shipped scenario name")


def cmd_solve(args) -> int:
    config = load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    out_dir = ensure_dir(args.out or config.out_dir)
    problem = build_problem(config)
    tconf = build_train_config(config, seed=seed)
    started = time.perf_counter()
    runner = warmup_train if tconf.warmup_stages >= 1 else train
    result = runner(problem, tconf)
    wall = time.perf_counter() - started
    traj = result.trajectory
    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj.grid, traj.x, traj.p, traj.u)
    write_loss_history_csv(os.path.join(out_dir, "loss_history.csv"), result.history)
    save_checkpoint(result.net, os.path.join(out_dir, "net_checkpoint.npz"))
    metrics = metrics_from_result(problem, result, wall, seed)
    write_metrics_json(os.path.join(out_dir, "metrics.json"), metrics.to_dict())
    print(f"scenario {config.kind}  seed {seed}")
    print(f"converged: {result.converged}  final loss: {metrics.final_loss:.6g}")
    print(f"running cost: {metrics.running_cost:.6g}")
    if metrics.violation is not None:
        print(f"worst pairwise clearance: {metrics.violation:.6g}")
    if metrics.alignment is not None:
        print(f"control/velocity alignment: {metrics.alignment:.4f}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_shoot(args) -> int:
    config = load_config(args.config)
    out_dir = ensure_dir(args.out or config.out_dir)
    problem = build_problem(config)
    grid_ref, x_ref, p_ref, _ = read_trajectory_csv(args.init_from)
    sconf = build_shooting_config(config, initial_costate=p_ref[0])
    penalty = final_stage_penalty(config) if problem.geometry is not None else None
    result = shoot(problem, sconf, penalty=penalty)
    write_trajectory_csv(
        os.path.join(out_dir, "shoot_trajectory.csv"), result.grid, result.x, result.p, result.u
    )
    # pointwise gap against the provided rollout, sampled on its grid
    x_interp = np.stack(
        [np.interp(grid_ref, result.grid, result.x[:, j]) for j in range(result.x.shape[1])],
        axis=1,
    )
    p_interp = np.stack(
        [np.interp(grid_ref, result.grid, result.p[:, j]) for j in range(result.p.shape[1])],
        axis=1,
    )
    gap = float(
        max(np.max(np.linalg.norm(x_interp - x_ref, axis=1)),
            np.max(np.linalg.norm(p_interp - p_ref, axis=1)))
    )
    report = {
        "residual": result.residual,
        "converged": result.converged,
        "iterations": result.iterations,
        "max_gap_to_reference": gap,
        "p0": [float(v) for v in result.p0],
    }
    write_metrics_json(os.path.join(out_dir, "shoot_report.json"), report)
    print(f"shooting residual: {result.residual:.3e}  converged: {result.converged}")
    print(f"max pointwise gap to reference rollout: {gap:.6g}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.config is not None:
        configs = [load_config(args.config)]
    else:
        configs = [build_scenario(kind) for kind in GRADCHECK_FAMILIES]
    all_ok = True
    for config in configs:
        problem = build_problem(config)
        for res in run_scenario_checks(problem, seed=config.seed):
            status = "PASS" if res.passed else "FAIL"
            print(
                f"{config.kind:14s} {res.name:26s} max_err={res.max_err:.3e} "
                f"tol={res.tol:.0e} samples={res.samples}  {status}"
            )
            all_ok = all_ok and res.passed
    return 0 if all_ok else 1


def cmd_metrics(args) -> int:
    config = load_config(args.config)
    problem = build_problem(config)
    grid, x, p, u = read_trajectory_csv(args.traj)
    traj = PhaseTrajectory(grid=grid, x=x, p=p, u=u, xdot=np.zeros_like(x), pdot=np.zeros_like(p))
    cost = running_cost(problem, grid, x, u)
    violation = None
    if problem.geometry is not None and problem.num_agents >= 2:
        violation = violation_metric(traj, problem.geometry)
    boundary = float(
        max(np.linalg.norm(x[0] - problem.x0), np.linalg.norm(x[-1] - problem.xT))
    )
    report = {
        "running_cost": cost,
        "violation": violation,
        "boundary_error": boundary,
        "alignment": control_velocity_alignment(problem, traj),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        write_metrics_json(args.out, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symoc",
        description="Solve state-constrained optimal control problems with a "
        "latent LQR flow mapped through a trained symplectic network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="train on a scenario and emit trajectory/metrics")
    solve.add_argument("--config", required=True, help="config file or shipped scenario name")
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--out", default=None, help="output directory (default from config)")
    solve.set_defaults(func=cmd_solve)

    shoot_p = sub.add_parser("shoot", help="validate a rollout with the shooting method")
    shoot_p.add_argument("--config", required=True)
    shoot_p.add_argument("--init-from", required=True, dest="init_from",
                         help="trajectory CSV supplying the initial costate guess")
    shoot_p.add_argument("--out", default=None)
    shoot_p.set_defaults(func=cmd_shoot)

    grad = sub.add_parser("gradcheck", help="run every finite-difference suite")
    grad.add_argument("--config", default=None, help="restrict to one scenario")
    grad.set_defaults(func=cmd_gradcheck)

    metrics = sub.add_parser("metrics", help="recompute metrics from a trajectory CSV")
    metrics.add_argument("--traj", required=True)
    metrics.add_argument("--config", required=True)
    metrics.add_argument("--out", default=None)
    metrics.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
