"""Training loop: fit the symplectic map so the latent flow obeys the PMP.

Each iteration samples times in [0, horizon], maps the bracketing latent
nodes through the network, blends them linearly (exact for the affine
layers), and penalises the residual of the Pontryagin system

    || xdot - grad_p H ||  +  || pdot + grad_x H ||

summed over the samples.  Adam minimises the residual; an outer loop
shrinks the constraint penalty parameters between stages.  Non-convergence
is reported as data (best parameters plus a flag), never as an exception.
"""

import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from . import _config  # noqa: F401
from .constraints import SwarmGeometry, pair_indices
from .latent import LatentTrajectory, solve_latent_bvp
from .penalty import PenaltyParams, PenaltySchedule, schedule_step
from .problem import (
    SINGLE_INTEGRATOR,
    ProblemSpec,
    RunningCost,
    SubsystemDynamics,
    grad_p_H,
    grad_x_H,
    recover_control,
)
from .sympnet import (
    KIND_LOW,
    TimeSympNet,
    _apply_layers,
    _jvp_layers,
    _time_derivative_layers,
    build_time_symp_net,
)

_NORM_FLOOR = 1e-24  # keeps the gradient of ||r|| finite at r = 0


@dataclass(frozen=True)
class TrainConfig:
    """All hyperparameters of the training algorithm."""

    grid_steps: int = 100       # latent grid resolution
    num_samples: int = 30       # time samples per iteration (plus endpoints)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss_tol: float = 1e-2      # inner-loop stop threshold
    max_inner: int = 5000       # inner-iteration cap per stage
    schedule: PenaltySchedule = field(default_factory=PenaltySchedule)
    warmup_stages: int = 0      # boundary-homotopy stages (0 = plain train)
    seed: int = 0
    num_pairs: int = 3
    width: int = 16
    sublayers: int = 2
    subwidth: int = 16
    up_first: bool = True
    squared_loss: bool = False  # mean-of-squares variant (smoother)

    def __post_init__(self):
        if self.num_samples < 2:
            raise ValueError("need at least two time samples")
        if self.loss_tol <= 0:
            raise ValueError("loss tolerance must be positive")
        if self.grid_steps < 1 or self.max_inner < 1:
            raise ValueError("grid_steps and max_inner must be >= 1")


@dataclass(frozen=True)
class LossReport:
    """One loss evaluation: total plus per-equation residual sums."""

    total: float
    state_residual: float
    costate_residual: float
    iteration: int = 0
    stage: int = 0
    eps: float = 0.0
    cutoff: float = 0.0
    wall_ms: float = 0.0

    def __post_init__(self):
        if self.total < 0 or self.state_residual < 0 or self.costate_residual < 0:
            raise ValueError("residuals are nonnegative by construction")


@dataclass(frozen=True, eq=False)
class PhaseTrajectory:
    """Rolled-out physical trajectory on the latent grid."""

    grid: np.ndarray
    x: np.ndarray
    p: np.ndarray
    u: np.ndarray
    xdot: np.ndarray
    pdot: np.ndarray


@dataclass(frozen=True)
class StageRecord:
    stage: int
    eps: float
    cutoff: float
    iterations: int
    best_loss: float
    converged: bool


@dataclass(eq=False)
class TrainResult:
    net: TimeSympNet
    trajectory: PhaseTrajectory
    history: list
    stages: list
    converged: bool
    final_penalty: PenaltyParams
    latent: LatentTrajectory


class AdamState(NamedTuple):
    m: object
    v: object
    count: object


def adam_init(params) -> AdamState:
    zeros = jax.tree_util.tree_map(lambda p: jnp.zeros_like(jnp.asarray(p, dtype=float)), params)
    return AdamState(m=zeros, v=jax.tree_util.tree_map(jnp.copy, zeros), count=0)


def adam_step(params, state: AdamState, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard Adam update with bias correction; returns (params, state)."""
    count = state.count + 1
    m = jax.tree_util.tree_map(lambda m, g: beta1 * m + (1 - beta1) * g, state.m, grads)
    v = jax.tree_util.tree_map(lambda v, g: beta2 * v + (1 - beta2) * g * g, state.v, grads)
    c1 = 1.0 - beta1**count
    c2 = 1.0 - beta2**count
    new_params = jax.tree_util.tree_map(
        lambda p, m_, v_: p - lr * (m_ / c1) / (jnp.sqrt(v_ / c2) + eps), params, m, v
    )
    return new_params, AdamState(m=m, v=v, count=count)


def sample_times(config: TrainConfig, rng: np.random.Generator, horizon: float) -> np.ndarray:
    """Sorted sample times 0 = t_0 <= ... <= t_N = horizon.

    Interior points are i.i.d. uniform; the endpoints are always included,
    so the array has ``num_samples + 1`` entries.
    """
    interior = np.sort(rng.uniform(0.0, horizon, size=config.num_samples - 1))
    return np.concatenate([[0.0], interior, [horizon]])


def _bracket(t, dt, num_steps):
    k = jnp.clip(jnp.floor(t / dt).astype(int), 0, num_steps - 1)
    w = (t - k * dt) / dt
    return k, w


def _net_statics(net: TimeSympNet):
    return net.kinds, net.boundary_preserving, net.horizon, net.half_dim


def interpolated_phase(net: TimeSympNet, latent: LatentTrajectory, t):
    """Map both bracketing latent nodes through the net and blend linearly.

    By affinity of the layers this equals mapping the blended latent point.
    """
    kinds, bvp, horizon, n = _net_statics(net)
    tf = float(t)
    if tf < -1e-12 or tf > horizon + 1e-12:
        raise ValueError(f"time {tf} outside the trajectory grid")
    dt = float(latent.grid[1] - latent.grid[0])
    k = min(int(tf // dt), latent.num_nodes - 2)
    w = (tf - k * dt) / dt
    z_k = np.concatenate([latent.y[k], latent.q[k]])
    z_k1 = np.concatenate([latent.y[k + 1], latent.q[k + 1]])
    a = _apply_layers(kinds, net.params, bvp, horizon, n, jnp.asarray(z_k), tf)
    b = _apply_layers(kinds, net.params, bvp, horizon, n, jnp.asarray(z_k1), tf)
    return (1.0 - w) * a + w * b


def phase_derivative(net: TimeSympNet, latent: LatentTrajectory, t):
    """Time derivative of the mapped trajectory at t.

    Chain rule: the net Jacobian applied to the latent flow derivatives,
    plus the explicit time derivative of the net, both terms interpolated
    across the bracketing nodes.
    """
    kinds, bvp, horizon, n = _net_statics(net)
    tf = float(t)
    if tf < -1e-12 or tf > horizon + 1e-12:
        raise ValueError(f"time {tf} outside the trajectory grid")
    dt = float(latent.grid[1] - latent.grid[0])
    k = min(int(tf // dt), latent.num_nodes - 2)
    w = (tf - k * dt) / dt
    out = 0.0
    for node, weight in ((k, 1.0 - w), (k + 1, w)):
        z = jnp.asarray(np.concatenate([latent.y[node], latent.q[node]]))
        zdot = jnp.asarray(np.concatenate([latent.ydot[node], latent.qdot[node]]))
        jv = _jvp_layers(kinds, net.params, bvp, horizon, n, zdot, tf)
        td = _time_derivative_layers(kinds, net.params, bvp, horizon, n, z, tf)
        out = out + weight * (jv + td)
    return out


def _safe_norm(r):
    return jnp.sqrt(jnp.sum(r * r) + _NORM_FLOOR)


def _fused_map_and_rate(kinds, params, bvp, horizon, n, z, zdot, t):
    """One layer-stack pass producing (mapped point, mapped time rate).

    Propagates the value, the Jacobian product with the latent rate, and the
    explicit time derivative together; the three share each layer's K
    products and time-net evaluation (the maps are affine in z, so blending
    before or after the map is equivalent).
    """
    from .sympnet import time_net_value_and_slope

    x, p = z[:n], z[n:]
    vx, vp = zdot[:n], zdot[n:]
    wx = jnp.zeros_like(x)
    wp = jnp.zeros_like(p)
    if bvp:
        scale = t * (horizon - t)
        dscale = horizon - 2.0 * t
    else:
        scale, dscale = 1.0, 0.0
    for kind, layer in zip(kinds, params):
        k, b = layer["k"], layer["bias"]
        a, adot = time_net_value_and_slope(layer["time"], t)
        if kind == KIND_LOW:
            c, cdot = a, adot
            cols = jnp.stack([x, vx, wx], axis=-1)
            kc = k @ cols
            kzb = kc[:, 0] + b
            upd = k.T @ jnp.stack(
                [c * kzb, c * kc[:, 1], c * kc[:, 2] + cdot * kzb], axis=-1
            )
            p = p + upd[:, 0]
            vp = vp + upd[:, 1]
            wp = wp + upd[:, 2]
        else:
            c = scale * a
            cdot = dscale * a + scale * adot
            cols = jnp.stack([p, vp, wp], axis=-1)
            kc = k @ cols
            kzb = kc[:, 0] + b
            upd = k.T @ jnp.stack(
                [c * kzb, c * kc[:, 1], c * kc[:, 2] + cdot * kzb], axis=-1
            )
            x = x + upd[:, 0]
            vx = vx + upd[:, 1]
            wx = wx + upd[:, 2]
    return jnp.concatenate([x, p]), jnp.concatenate([vx + wx, vp + wp])


def _loss_terms(params, kinds, bvp, problem, z_nodes, zdot_nodes, dt, num_steps, times, eps, cutoff, squared):
    """Traceable loss over a batch of sample times."""
    horizon = problem.horizon
    n = problem.phase_dim

    def residuals(t):
        k, w = _bracket(t, dt, num_steps)
        z_t = (1.0 - w) * z_nodes[k] + w * z_nodes[k + 1]
        zdot_t = (1.0 - w) * zdot_nodes[k] + w * zdot_nodes[k + 1]
        z, zdot = _fused_map_and_rate(kinds, params, bvp, horizon, n, z_t, zdot_t, t)
        x, p = z[:n], z[n:]
        rx = zdot[:n] - grad_p_H(problem, x, p, (eps, cutoff))
        rp = zdot[n:] + grad_x_H(problem, x, p, (eps, cutoff))
        if squared:
            return jnp.sum(rx * rx), jnp.sum(rp * rp)
        return _safe_norm(rx), _safe_norm(rp)

    state_terms, costate_terms = jax.vmap(residuals)(times)
    sx = jnp.sum(state_terms)
    sp = jnp.sum(costate_terms)
    if squared:
        count = times.shape[0]
        return (sx + sp) / count, sx / count, sp / count
    return sx + sp, sx, sp


def physics_loss(net: TimeSympNet, problem: ProblemSpec, latent: LatentTrajectory, times, penalty=None) -> LossReport:
    """Physics-informed loss on an explicit sample set (deterministic)."""
    if penalty is None:
        penalty = problem.penalty
    eps, cutoff = (penalty.eps, penalty.cutoff) if isinstance(penalty, PenaltyParams) else (
        (0.0, 1.0) if penalty is None else penalty
    )
    kinds, bvp, _, _ = _net_statics(net)
    z_nodes = jnp.asarray(np.concatenate([latent.y, latent.q], axis=1))
    zdot_nodes = jnp.asarray(np.concatenate([latent.ydot, latent.qdot], axis=1))
    dt = float(latent.grid[1] - latent.grid[0])
    start = time.perf_counter()
    total, sx, sp = _loss_terms(
        net.params,
        kinds,
        bvp,
        problem,
        z_nodes,
        zdot_nodes,
        dt,
        latent.num_nodes - 1,
        jnp.asarray(times, dtype=float),
        eps,
        cutoff,
        squared=False,
    )
    wall = (time.perf_counter() - start) * 1e3
    return LossReport(
        total=float(total), state_residual=float(sx), costate_residual=float(sp), wall_ms=wall
    )


def rollout(net: TimeSympNet, latent: LatentTrajectory, problem: ProblemSpec) -> PhaseTrajectory:
    """Predict the phase trajectory on the full latent grid."""
    kinds, bvp, horizon, n = _net_statics(net)
    num = latent.num_nodes
    xs = np.empty((num, n))
    ps = np.empty((num, n))
    xdot = np.empty((num, n))
    pdot = np.empty((num, n))
    for k in range(num):
        t = float(latent.grid[k])
        z = jnp.asarray(np.concatenate([latent.y[k], latent.q[k]]))
        zdot = jnp.asarray(np.concatenate([latent.ydot[k], latent.qdot[k]]))
        out = np.asarray(_apply_layers(kinds, net.params, bvp, horizon, n, z, t))
        rate = np.asarray(
            _jvp_layers(kinds, net.params, bvp, horizon, n, zdot, t)
            + _time_derivative_layers(kinds, net.params, bvp, horizon, n, z, t)
        )
        xs[k], ps[k] = out[:n], out[n:]
        xdot[k], pdot[k] = rate[:n], rate[n:]
    us = np.stack([np.asarray(recover_control(problem, ps[k])) for k in range(num)])
    return PhaseTrajectory(grid=np.array(latent.grid), x=xs, p=ps, u=us, xdot=xdot, pdot=pdot)


def violation_metric(trajectory: PhaseTrajectory, geometry: SwarmGeometry) -> float:
    """Worst pairwise clearance over the rollout: min ||w_i - w_j|| - 2 C_d.

    Positive means the swarm stays separated; +inf for a single agent
    (no pairs, reported as not applicable).
    """
    m = geometry.num_agents
    if m < 2:
        return float("inf")
    num, n = trajectory.x.shape
    dx = n // m
    blocks = trajectory.x.reshape(num, m, dx)
    w = blocks[:, :, : geometry.dim]
    ii, jj = pair_indices(m)
    dist = np.linalg.norm(w[:, ii, :] - w[:, jj, :], axis=2)
    return float(np.min(dist) - 2.0 * geometry.agent_radius)


def _make_chunk_runner(problem, net, config, num_steps):
    """Scan-compiled inner loop: a chunk of sample-evaluate-update steps.

    The loop carries (params, adam state, best loss, best params, done);
    once the loss drops below the tolerance the remaining steps of the
    chunk stop updating, so the returned parameters are exactly the ones
    the passing loss was evaluated at.
    """
    kinds, bvp, _, _ = _net_statics(net)

    def loss_fn(params, z_nodes, zdot_nodes, times, eps, cutoff):
        total, sx, sp = _loss_terms(
            params,
            kinds,
            bvp,
            problem,
            z_nodes,
            zdot_nodes,
            problem.horizon / num_steps,
            num_steps,
            times,
            eps,
            cutoff,
            config.squared_loss,
        )
        return total, (sx, sp)

    grad_fn = jax.value_and_grad(loss_fn, has_aux=True)

    @jax.jit
    def run_chunk(params, state, best_loss, best_params, done, z_nodes, zdot_nodes, batches, eps, cutoff):
        def step(carry, times):
            params, state, best_loss, best_params, done = carry
            (total, (sx, sp)), grads = grad_fn(params, z_nodes, zdot_nodes, times, eps, cutoff)
            improved = jnp.logical_and(jnp.logical_not(done), total < best_loss)
            best_loss = jnp.where(improved, total, best_loss)
            best_params = jax.tree_util.tree_map(
                lambda b, p: jnp.where(improved, p, b), best_params, params
            )
            hit = total < config.loss_tol
            advance = jnp.logical_and(jnp.logical_not(done), jnp.logical_not(hit))
            new_params, new_state = adam_step(
                params,
                state,
                grads,
                lr=config.learning_rate,
                beta1=config.beta1,
                beta2=config.beta2,
                eps=config.adam_eps,
            )
            params = jax.tree_util.tree_map(
                lambda new, old: jnp.where(advance, new, old), new_params, params
            )
            state = AdamState(
                m=jax.tree_util.tree_map(lambda new, old: jnp.where(advance, new, old), new_state.m, state.m),
                v=jax.tree_util.tree_map(lambda new, old: jnp.where(advance, new, old), new_state.v, state.v),
                count=jnp.where(advance, new_state.count, state.count),
            )
            done = jnp.logical_or(done, hit)
            return (params, state, best_loss, best_params, done), (total, sx, sp, done)

        init = (params, state, best_loss, best_params, done)
        (params, state, best_loss, best_params, done), outs = jax.lax.scan(step, init, batches)
        return params, state, best_loss, best_params, done, outs

    return run_chunk


def train(problem: ProblemSpec, config: TrainConfig, initial_net: TimeSympNet | None = None) -> TrainResult:
    """Run the full staged training loop on one problem.

    Per stage: resample times, evaluate the loss, stop early once it drops
    below the tolerance, otherwise Adam-update up to the iteration cap; then
    shrink the penalty.  The best parameters seen in the final stage are
    returned together with a convergence flag covering every stage.
    """
    latent, _ = solve_latent_bvp(problem, config.grid_steps)
    if initial_net is None:
        net = build_time_symp_net(
            half_dim=problem.phase_dim,
            horizon=problem.horizon,
            num_pairs=config.num_pairs,
            width=config.width,
            sublayers=config.sublayers,
            subwidth=config.subwidth,
            boundary_preserving=True,
            up_first=config.up_first,
            seed=config.seed,
        )
    else:
        net = initial_net
        if net.half_dim != problem.phase_dim or net.horizon != problem.horizon:
            raise ValueError("initial net does not match the problem dimensions")
    rng = np.random.default_rng(config.seed)
    run_chunk = _make_chunk_runner(problem, net, config, config.grid_steps)
    z_nodes = jnp.asarray(np.concatenate([latent.y, latent.q], axis=1))
    zdot_nodes = jnp.asarray(np.concatenate([latent.ydot, latent.qdot], axis=1))

    params = net.params
    state = adam_init(params)
    penalty = config.schedule.initial()
    history: list[LossReport] = []
    stages: list[StageRecord] = []
    start = time.perf_counter()
    chunk = max(1, min(200, config.max_inner))
    for stage in range(1, config.schedule.num_stages + 1):
        best_loss = jnp.inf
        best_params = params
        done = jnp.asarray(False)
        iterations = 0
        while iterations < config.max_inner and not bool(done):
            size = min(chunk, config.max_inner - iterations)
            batches = np.stack(
                [sample_times(config, rng, problem.horizon) for _ in range(size)]
            )
            params, state, best_loss, best_params, done, outs = run_chunk(
                params,
                state,
                best_loss,
                best_params,
                done,
                z_nodes,
                zdot_nodes,
                jnp.asarray(batches),
                penalty.eps,
                penalty.cutoff,
            )
            totals, sxs, sps, flags = (np.asarray(o) for o in outs)
            used = size if not flags.any() else int(np.argmax(flags)) + 1
            wall_ms = (time.perf_counter() - start) * 1e3
            for i in range(used):
                history.append(
                    LossReport(
                        total=float(totals[i]),
                        state_residual=float(sxs[i]),
                        costate_residual=float(sps[i]),
                        iteration=iterations + i,
                        stage=stage,
                        eps=penalty.eps,
                        cutoff=penalty.cutoff,
                        wall_ms=wall_ms,
                    )
                )
            iterations += used
        stage_converged = bool(done)
        if not stage_converged:
            params = best_params
        stages.append(
            StageRecord(
                stage=stage,
                eps=penalty.eps,
                cutoff=penalty.cutoff,
                iterations=iterations,
                best_loss=float(best_loss),
                converged=stage_converged,
            )
        )
        if stage < config.schedule.num_stages:
            penalty = schedule_step(penalty, config.schedule)
    final_params = jax.tree_util.tree_map(lambda a: np.asarray(a, dtype=float), params)
    net = net.with_params(final_params)
    trajectory = rollout(net, latent, problem)
    return TrainResult(
        net=net,
        trajectory=trajectory,
        history=history,
        stages=stages,
        converged=all(s.converged for s in stages),
        final_penalty=penalty,
        latent=latent,
    )


def _velocity_problem(problem: ProblemSpec) -> ProblemSpec:
    """The easier position-only problem used to pick warm-up boundary data.

    Positions become the state, velocities the control; the control cost is
    the kinetic energy and the position block of F is kept.  Constraints and
    boundary positions carry over unchanged.
    """
    if problem.kind == SINGLE_INTEGRATOR:
        return problem
    s = problem.space_dim
    m = problem.num_agents
    x0 = problem.x0.reshape(m, problem.state_dim)[:, :s].reshape(-1)
    xT = problem.xT.reshape(m, problem.state_dim)[:, :s].reshape(-1)
    dynamics = tuple(
        SubsystemDynamics(kind=SINGLE_INTEGRATOR, b_matrix=np.eye(s)) for _ in range(m)
    )
    costs = tuple(
        RunningCost(f_quad=c.f_quad[:s, :s], g_quad=np.eye(s)) for c in problem.costs
    )
    return ProblemSpec(
        num_agents=m,
        state_dim=s,
        control_dim=s,
        horizon=problem.horizon,
        x0=x0,
        xT=xT,
        dynamics=dynamics,
        costs=costs,
        geometry=problem.geometry,
        penalty=problem.penalty,
    )


def _with_boundaries(problem: ProblemSpec, x0, xT) -> ProblemSpec:
    return replace(problem, x0=np.asarray(x0, dtype=float), xT=np.asarray(xT, dtype=float))


def warmup_train(problem: ProblemSpec, config: TrainConfig) -> TrainResult:
    """Boundary-homotopy training.

    Stage 0 solves the velocity-controlled problem to get boundary
    velocities; stages 1..warmup_stages blend the easy boundary data into
    the target data, reusing the trained parameters between stages.
    """
    n_opt = config.warmup_stages
    if n_opt < 1:
        return train(problem, config)
    ease = train(_velocity_problem(problem), config)
    m, s = problem.num_agents, problem.space_dim
    v_easy = ease.trajectory.u.reshape(ease.trajectory.u.shape[0], m, s)
    w0 = problem.x0.reshape(m, problem.state_dim)[:, :s]
    wT = problem.xT.reshape(m, problem.state_dim)[:, :s]
    easy_x0 = np.concatenate([w0, v_easy[0]], axis=1).reshape(-1)
    easy_xT = np.concatenate([wT, v_easy[-1]], axis=1).reshape(-1)
    result = None
    net = None
    for i in range(1, n_opt + 1):
        lam = i / n_opt
        x0 = lam * problem.x0 + (1.0 - lam) * easy_x0
        xT = lam * problem.xT + (1.0 - lam) * easy_xT
        stage_problem = _with_boundaries(problem, x0, xT)
        result = train(stage_problem, config, initial_net=net)
        net = result.net
    return result
