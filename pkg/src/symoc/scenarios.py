"""Scenario catalogue, configuration schema, and metrics reporting.

A scenario is a nested key-value configuration (JSON on disk) that fully
determines a problem, its training hyperparameters, and the shooting
validator settings.  Shipped scenario files live in ``symoc/configs``;
``build_scenario`` loads one and applies overrides.  Validation rejects
unknown keys with a field-path diagnostic so typos cannot silently fall
back to defaults.
"""

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .constraints import Box, CapsuleWall, Circle, RoomBounds, SwarmGeometry
from .penalty import PenaltyParams, PenaltySchedule
from .problem import (
    NEWTONIAN_DRAG,
    SINGLE_INTEGRATOR,
    ProblemSpec,
    RunningCost,
    SubsystemDynamics,
    running_cost,
)
from .shooting import ShootingConfig
from .trainer import PhaseTrajectory, TrainConfig, violation_metric

SCENARIO_KINDS = (
    "oscillator",
    "single_circle",
    "four_circle",
    "room_M",
    "maze",
    "box3d_swarm",
    "custom",
)


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


_OBSTACLE_KEYS = {
    "circle": {"type", "center", "radius"},
    "room": {"type", "lo", "hi", "inflate"},
    "capsule": {"type", "start", "end", "thickness"},
    "box": {"type", "lo", "hi"},
}

_SCHEMA = {
    "kind": None,
    "seed": None,
    "out_dir": None,
    "problem": {
        "num_agents": None,
        "space_dim": None,
        "horizon": None,
        "integrator": None,
        "drag_coeff": None,
        "smoothing": None,
        "control_weight": None,
        "velocity_weight": None,
        "position_weight": None,
        "agent_radius": None,
        "start_positions": None,
        "goal_positions": None,
        "start_velocities": None,
        "goal_velocities": None,
        "obstacles": None,
        "pairwise_collisions": None,
    },
    "train": {
        "grid_steps": None,
        "num_samples": None,
        "learning_rate": None,
        "beta1": None,
        "beta2": None,
        "adam_eps": None,
        "loss_tol": None,
        "max_inner": None,
        "warmup_stages": None,
        "num_pairs": None,
        "width": None,
        "sublayers": None,
        "subwidth": None,
        "up_first": None,
        "squared_loss": None,
        "penalty": {
            "eps0": None,
            "cutoff0": None,
            "eps_factor": None,
            "cutoff_factor": None,
            "num_stages": None,
        },
    },
    "shooting": {
        "steps": None,
        "tolerance": None,
        "max_iterations": None,
        "fd_step": None,
        "damping_shrink": None,
        "max_backtracks": None,
    },
}


def _validate_keys(data, schema, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping at '{path or '<root>'}'")
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key '{where}'")
        sub = schema[key]
        if isinstance(sub, dict):
            _validate_keys(value, sub, where)


def _validate_obstacles(obstacles):
    for i, obs in enumerate(obstacles):
        if not isinstance(obs, dict) or "type" not in obs:
            raise ConfigError(f"problem.obstacles[{i}] needs a 'type' field")
        kind = obs["type"]
        if kind not in _OBSTACLE_KEYS:
            raise ConfigError(f"problem.obstacles[{i}]: unknown obstacle type '{kind}'")
        extra = set(obs) - _OBSTACLE_KEYS[kind]
        if extra:
            raise ConfigError(f"problem.obstacles[{i}]: unknown keys {sorted(extra)}")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Validated scenario configuration backed by a plain nested dict."""

    data: dict

    def __post_init__(self):
        _validate_keys(self.data, _SCHEMA)
        kind = self.data.get("kind")
        if kind not in SCENARIO_KINDS:
            raise ConfigError(f"kind must be one of {SCENARIO_KINDS}, got {kind!r}")
        for section in ("problem", "train", "shooting"):
            if section not in self.data:
                raise ConfigError(f"missing section '{section}'")
        _validate_obstacles(self.data["problem"].get("obstacles", []))

    @property
    def kind(self):
        return self.data["kind"]

    @property
    def seed(self):
        return int(self.data.get("seed", 0))

    @property
    def out_dir(self):
        return self.data.get("out_dir", "out")

    def serialize(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
        return cls(data)


def _deep_merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def shipped_config_text(kind: str) -> str:
    try:
        return (resources.files("symoc") / "configs" / f"{kind}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"no shipped scenario named '{kind}'")


def ring_positions(num_agents: int, radius: float = 0.4) -> list:
    """Evenly spaced agent positions on a circle centred in the room."""
    angles = 2.0 * np.pi * np.arange(num_agents) / num_agents
    pts = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    return [[round(float(a), 12), round(float(b), 12)] for a, b in pts]


def build_scenario(kind: str, overrides: dict | None = None) -> ScenarioConfig:
    """Canonical scenario parameters with optional deep-merged overrides."""
    if kind not in SCENARIO_KINDS or kind == "custom":
        raise ConfigError(f"no canonical parameters for kind {kind!r}")
    data = json.loads(shipped_config_text(kind))
    if overrides:
        prob_over = overrides.get("problem", {})
        if (
            kind == "room_M"
            and "num_agents" in prob_over
            and "start_positions" not in prob_over
        ):
            starts = ring_positions(int(prob_over["num_agents"]))
            prob_over = dict(prob_over)
            prob_over["start_positions"] = starts
            prob_over["goal_positions"] = [[-a, -b] for a, b in starts]
            overrides = dict(overrides)
            overrides["problem"] = prob_over
        data = _deep_merge(data, overrides)
    return ScenarioConfig(data)


def _obstacle_from_dict(obs: dict):
    kind = obs["type"]
    if kind == "circle":
        return Circle(center=tuple(obs["center"]), radius=float(obs["radius"]))
    if kind == "room":
        return RoomBounds(
            lo=tuple(obs["lo"]), hi=tuple(obs["hi"]), inflate=bool(obs.get("inflate", False))
        )
    if kind == "capsule":
        return CapsuleWall(
            start=tuple(obs["start"]), end=tuple(obs["end"]), thickness=float(obs["thickness"])
        )
    return Box(lo=tuple(obs["lo"]), hi=tuple(obs["hi"]))


def build_problem(config: ScenarioConfig) -> ProblemSpec:
    """Instantiate the ProblemSpec described by a scenario configuration."""
    prob = config.data["problem"]
    m = int(prob["num_agents"])
    space = int(prob["space_dim"])
    integrator = prob.get("integrator", NEWTONIAN_DRAG)
    starts = np.asarray(prob["start_positions"], dtype=float).reshape(m, space)
    goals = np.asarray(prob["goal_positions"], dtype=float).reshape(m, space)
    if integrator == SINGLE_INTEGRATOR:
        dx, du = space, space
        x0, xT = starts.reshape(-1), goals.reshape(-1)
        b = np.eye(space)
    else:
        dx, du = 2 * space, space
        v0 = np.asarray(prob.get("start_velocities", np.zeros((m, space))), dtype=float)
        vT = np.asarray(prob.get("goal_velocities", np.zeros((m, space))), dtype=float)
        x0 = np.concatenate([starts, v0.reshape(m, space)], axis=1).reshape(-1)
        xT = np.concatenate([goals, vT.reshape(m, space)], axis=1).reshape(-1)
        b = np.vstack([np.zeros((space, space)), np.eye(space)])
    f_quad = np.zeros((dx, dx))
    position_weight = float(prob.get("position_weight", 0.0))
    velocity_weight = float(prob.get("velocity_weight", 0.0))
    if integrator == SINGLE_INTEGRATOR:
        f_quad += position_weight * np.eye(dx)
    else:
        f_quad[:space, :space] = position_weight * np.eye(space)
        f_quad[space:, space:] = velocity_weight * np.eye(space)
    g_quad = float(prob.get("control_weight", 1.0)) * np.eye(du)
    obstacles = tuple(_obstacle_from_dict(o) for o in prob.get("obstacles", []))
    geometry = None
    if obstacles or m > 1:
        geometry = SwarmGeometry(
            num_agents=m,
            agent_radius=float(prob["agent_radius"]),
            dim=space,
            obstacles=obstacles,
            pairwise=bool(prob.get("pairwise_collisions", True)),
        )
    sched = config.data["train"]["penalty"]
    penalty = PenaltyParams(float(sched["eps0"]), float(sched["cutoff0"])) if geometry else None
    dynamics = tuple(
        SubsystemDynamics(
            kind=integrator,
            b_matrix=b,
            drag_coeff=float(prob.get("drag_coeff", 0.0)),
            smoothing=float(prob.get("smoothing", 1e-6)),
        )
        for _ in range(m)
    )
    costs = tuple(RunningCost(f_quad=f_quad, g_quad=g_quad) for _ in range(m))
    return ProblemSpec(
        num_agents=m,
        state_dim=dx,
        control_dim=du,
        horizon=float(prob["horizon"]),
        x0=x0,
        xT=xT,
        dynamics=dynamics,
        costs=costs,
        geometry=geometry,
        penalty=penalty,
    )


def build_train_config(config: ScenarioConfig, seed: int | None = None) -> TrainConfig:
    tr = dict(config.data["train"])
    pen = tr.pop("penalty")
    schedule = PenaltySchedule(
        eps0=float(pen["eps0"]),
        cutoff0=float(pen["cutoff0"]),
        eps_factor=float(pen["eps_factor"]),
        cutoff_factor=float(pen["cutoff_factor"]),
        num_stages=int(pen["num_stages"]),
    )
    return TrainConfig(
        schedule=schedule, seed=config.seed if seed is None else int(seed), **tr
    )


def build_shooting_config(config: ScenarioConfig, initial_costate=None) -> ShootingConfig:
    return ShootingConfig(initial_costate=initial_costate, **config.data["shooting"])


def final_stage_penalty(config: ScenarioConfig) -> PenaltyParams:
    """Penalty parameters of the last trained stage (what the net solves)."""
    pen = config.data["train"]["penalty"]
    k = int(pen["num_stages"]) - 1
    return PenaltyParams(
        float(pen["eps0"]) * float(pen["eps_factor"]) ** k,
        float(pen["cutoff0"]) * float(pen["cutoff_factor"]) ** k,
    )


def control_velocity_alignment(problem: ProblemSpec, trajectory: PhaseTrajectory) -> float | None:
    """Average cosine between control and velocity along the rollout.

    Drag makes sustained thrust along the velocity necessary, so this grows
    with the drag coefficient.  None for velocity-controlled problems.
    """
    if problem.kind != NEWTONIAN_DRAG:
        return None
    m, s = problem.num_agents, problem.space_dim
    v = trajectory.x.reshape(-1, m, 2 * s)[:, :, s:]
    u = trajectory.u.reshape(-1, m, s)
    dots = np.sum(u * v, axis=2)
    norms = np.linalg.norm(u, axis=2) * np.linalg.norm(v, axis=2)
    cos = np.where(norms > 1e-12, dots / np.maximum(norms, 1e-12), 0.0)
    per_time = np.mean(cos, axis=1)
    return float(np.trapezoid(per_time, trajectory.grid) / trajectory.grid[-1])


@dataclass(frozen=True)
class MetricsReport:
    """Reported metrics of one solve; serializable and seed-reproducible."""

    running_cost: float
    violation: float | None
    final_loss: float
    converged: bool
    wall_time_s: float
    boundary_error: float
    alignment: float | None
    seed: int
    stages: tuple

    def to_dict(self) -> dict:
        return {
            "running_cost": self.running_cost,
            "violation": self.violation,
            "final_loss": self.final_loss,
            "converged": self.converged,
            "wall_time_s": self.wall_time_s,
            "boundary_error": self.boundary_error,
            "alignment": self.alignment,
            "seed": self.seed,
            "stages": list(self.stages),
        }


def metrics_from_result(problem: ProblemSpec, result, wall_time_s: float, seed: int) -> MetricsReport:
    traj = result.trajectory
    cost = running_cost(problem, traj.grid, traj.x, traj.u)
    violation = None
    if problem.geometry is not None and problem.num_agents >= 2:
        violation = violation_metric(traj, problem.geometry)
        if math.isinf(violation):
            violation = None
    boundary = float(
        max(np.linalg.norm(traj.x[0] - problem.x0), np.linalg.norm(traj.x[-1] - problem.xT))
    )
    stages = tuple(
        {
            "stage": s.stage,
            "eps": s.eps,
            "cutoff": s.cutoff,
            "iterations": s.iterations,
            "best_loss": s.best_loss,
            "converged": s.converged,
        }
        for s in result.stages
    )
    return MetricsReport(
        running_cost=cost,
        violation=violation,
        final_loss=result.stages[-1].best_loss,
        converged=result.converged,
        wall_time_s=wall_time_s,
        boundary_error=boundary,
        alignment=control_velocity_alignment(problem, traj),
        seed=seed,
        stages=stages,
    )
