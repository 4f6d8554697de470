"""Finite-difference verification of every analytic derivative path.

Each check compares an analytic implementation against an independent
central-difference oracle on the geometry of one scenario family:
Hamiltonian gradients, constraint-penalty gradients, network
Jacobian-vector products, network time derivatives, and the full
parameter gradient of the training loss.  Used by the test suite and the
``gradcheck`` command.
"""

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .constraints import constraint_jacobian, constraint_values
from .latent import solve_latent_bvp
from .penalty import PenaltyParams, penalty_gradient, penalty_values
from .problem import grad_p_H, grad_x_H, hamiltonian, positions
from .sympnet import build_time_symp_net, forward, jacobian_vp, time_derivative
from .trainer import _loss_terms

FIRST_ORDER_TOL = 1e-6
PARAM_TOL = 1e-4
FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_err: float
    tol: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.samples > 0 and self.max_err <= self.tol


def _rel_err(analytic, fd):
    analytic = np.asarray(analytic, dtype=float)
    fd = np.asarray(fd, dtype=float)
    scale = 1.0 + np.abs(fd)
    return float(np.max(np.abs(analytic - fd) / scale))


def _state_scale(problem):
    return float(max(1.0, np.max(np.abs(problem.x0)), np.max(np.abs(problem.xT))))


def _random_phase(problem, rng):
    n = problem.phase_dim
    x = rng.uniform(-1.0, 1.0, size=n) * _state_scale(problem)
    p = rng.normal(size=n)
    return x, p


def _near_constraint_tie(problem, x, penalty):
    if problem.geometry is None:
        return False
    h = np.asarray(constraint_values(problem.geometry, positions(problem, x)))
    if h.size < 2:
        return False
    vals = np.asarray(
        [float(v) for v in np.sort(h)[:2]]
    )
    return abs(vals[0] - vals[1]) < 1e-3


def check_hamiltonian_gradients(problem, penalty, rng, samples=15) -> list:
    """grad_x_H and grad_p_H against central differences of H."""
    hamilton = jax.jit(lambda x, p: hamiltonian(problem, x, p, (penalty.eps, penalty.cutoff)))
    err_x, err_p, used = 0.0, 0.0, 0
    n = problem.phase_dim
    attempts = 0
    while used < samples and attempts < 10 * samples:
        attempts += 1
        x, p = _random_phase(problem, rng)
        if _near_constraint_tie(problem, x, penalty):
            continue
        gx = np.asarray(grad_x_H(problem, x, p, penalty))
        gp = np.asarray(grad_p_H(problem, x, p, penalty))
        fx, fp = np.empty(n), np.empty(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = FD_STEP
            fx[j] = (float(hamilton(x + e, p)) - float(hamilton(x - e, p))) / (2 * FD_STEP)
            fp[j] = (float(hamilton(x, p + e)) - float(hamilton(x, p - e))) / (2 * FD_STEP)
        err_x = max(err_x, _rel_err(gx, fx))
        err_p = max(err_p, _rel_err(gp, fp))
        used += 1
    return [
        CheckResult("grad_x_H vs FD", err_x, FIRST_ORDER_TOL, used),
        CheckResult("grad_p_H vs FD", err_p, FIRST_ORDER_TOL, used),
    ]


def check_penalty_gradient(problem, penalty, rng, samples=15) -> CheckResult:
    """Constraint-penalty chain rule against FD of the max penalty value."""
    if problem.geometry is None:
        return CheckResult("penalty_gradient vs FD", 0.0, FIRST_ORDER_TOL, samples)
    geometry = problem.geometry

    value = jax.jit(
        lambda w: jnp.max(
            penalty_values(constraint_values(geometry, w), penalty.eps, penalty.cutoff)
        )
    )
    err, used, attempts = 0.0, 0, 0
    dim = geometry.num_agents * geometry.dim
    while used < samples and attempts < 10 * samples:
        attempts += 1
        w = rng.uniform(-1.0, 1.0, size=dim) * _state_scale(problem)
        h = np.asarray(constraint_values(geometry, w))
        if h.size >= 2 and abs(np.sort(h)[0] - np.sort(h)[1]) < 1e-3:
            continue
        jac = np.asarray(constraint_jacobian(geometry, w))
        g = np.asarray(penalty_gradient(h, jac, penalty))
        fd = np.empty(dim)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = FD_STEP
            fd[j] = (float(value(w + e)) - float(value(w - e))) / (2 * FD_STEP)
        err = max(err, _rel_err(g, fd))
        used += 1
    return CheckResult("penalty_gradient vs FD", err, FIRST_ORDER_TOL, used)


def _scenario_net(problem, seed=0, num_pairs=1, width=2):
    return build_time_symp_net(
        half_dim=problem.phase_dim,
        horizon=problem.horizon,
        num_pairs=num_pairs,
        width=width,
        sublayers=1,
        subwidth=3,
        seed=seed,
        time_scale=0.3,
    )


def check_jacobian_vp(problem, rng, samples=10) -> CheckResult:
    net = _scenario_net(problem, seed=1, num_pairs=2, width=4)
    n = problem.phase_dim
    err = 0.0
    for _ in range(samples):
        z = rng.normal(size=2 * n)
        v = rng.normal(size=2 * n)
        t = rng.uniform(0.0, problem.horizon)
        hi = np.asarray(forward(net, z + FD_STEP * v, t))
        lo = np.asarray(forward(net, z - FD_STEP * v, t))
        fd = (hi - lo) / (2 * FD_STEP)
        err = max(err, _rel_err(np.asarray(jacobian_vp(net, z, t, v)), fd))
    return CheckResult("jacobian_vp vs FD", err, FIRST_ORDER_TOL, samples)


def check_time_derivative(problem, rng, samples=10) -> CheckResult:
    net = _scenario_net(problem, seed=2, num_pairs=2, width=4)
    n = problem.phase_dim
    err = 0.0
    margin = 1e-4 * problem.horizon
    for _ in range(samples):
        z = rng.normal(size=2 * n)
        t = rng.uniform(margin, problem.horizon - margin)
        step = 1e-6 * max(1.0, problem.horizon)
        hi = np.asarray(forward(net, z, t + step))
        lo = np.asarray(forward(net, z, t - step))
        fd = (hi - lo) / (2 * step)
        err = max(err, _rel_err(np.asarray(time_derivative(net, z, t)), fd))
    return CheckResult("time_derivative vs FD", err, FIRST_ORDER_TOL, samples)


def check_param_gradient(problem, penalty, rng, max_coords_per_leaf=25) -> CheckResult:
    """Full-pipeline parameter gradient of the loss against FD."""
    latent, _ = solve_latent_bvp(problem, num_steps=20)
    net = _scenario_net(problem, seed=3)
    z_nodes = jnp.asarray(np.concatenate([latent.y, latent.q], axis=1))
    zdot_nodes = jnp.asarray(np.concatenate([latent.ydot, latent.qdot], axis=1))
    times = jnp.asarray(np.linspace(0.0, problem.horizon, 6))
    dt = float(latent.grid[1] - latent.grid[0])

    def loss(params):
        total, _, _ = _loss_terms(
            params,
            net.kinds,
            net.boundary_preserving,
            problem,
            z_nodes,
            zdot_nodes,
            dt,
            latent.num_nodes - 1,
            times,
            penalty.eps,
            penalty.cutoff,
            squared=False,
        )
        return total

    loss_jit = jax.jit(loss)
    value_and_grad = jax.jit(jax.value_and_grad(loss))
    _, grads = value_and_grad(net.params)
    flat_g, treedef = jax.tree_util.tree_flatten(grads)
    flat_p = [np.asarray(l, dtype=float) for l in jax.tree_util.tree_leaves(net.params)]
    err, checked = 0.0, 0
    step = 1e-6
    for li, leaf in enumerate(flat_p):
        coords = list(np.ndindex(leaf.shape))
        if len(coords) > max_coords_per_leaf:
            picks = rng.choice(len(coords), size=max_coords_per_leaf, replace=False)
            coords = [coords[int(i)] for i in picks]
        for m in coords:
            hi = [l.copy() for l in flat_p]
            lo = [l.copy() for l in flat_p]
            hi[li][m] += step
            lo[li][m] -= step
            fd = (
                float(loss_jit(jax.tree_util.tree_unflatten(treedef, hi)))
                - float(loss_jit(jax.tree_util.tree_unflatten(treedef, lo)))
            ) / (2 * step)
            got = float(np.asarray(flat_g[li])[m])
            err = max(err, abs(got - fd) / (1.0 + abs(fd)))
            checked += 1
    return CheckResult("param_gradient vs FD", err, PARAM_TOL, checked)


def run_scenario_checks(problem, penalty=None, seed=0) -> list:
    """All finite-difference suites on one problem's geometry."""
    if penalty is None:
        penalty = problem.penalty if problem.penalty is not None else PenaltyParams(0.1, 0.1)
    rng = np.random.default_rng(seed)
    results = []
    results += check_hamiltonian_gradients(problem, penalty, rng)
    results.append(check_penalty_gradient(problem, penalty, rng))
    results.append(check_jacobian_vp(problem, rng))
    results.append(check_time_derivative(problem, rng))
    results.append(check_param_gradient(problem, penalty, rng))
    return results
