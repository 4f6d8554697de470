"""Classical shooting baseline and validator for the Pontryagin system.

Integrates the Hamiltonian field (grad_p H, -grad_x H) with fixed-step RK4
from a guessed initial costate and Newton-iterates on the terminal-state
mismatch S(p0) = x(T; p0) - xT.  The Jacobian of S is finite-differenced
column by column; a backtracking damping step keeps the residual decreasing.
Divergence is returned as data (best iterate plus a flag), matching the
well-known fragility of shooting under bad initial guesses.
"""

import time
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from . import _config  # noqa: F401
from .problem import ProblemSpec, grad_p_H, grad_x_H, recover_control


@dataclass(frozen=True)
class ShootingConfig:
    """Integrator and Newton settings for the shooting solve."""

    steps: int = 400
    tolerance: float = 1e-8
    max_iterations: int = 50
    fd_step: float = 1e-6
    damping_shrink: float = 0.5
    max_backtracks: int = 25
    initial_costate: np.ndarray | None = None

    def __post_init__(self):
        if self.steps < 10:
            raise ValueError("integrator needs at least 10 steps")
        if self.tolerance <= 0 or self.fd_step <= 0:
            raise ValueError("tolerances must be positive")
        if not (0 < self.damping_shrink < 1):
            raise ValueError("damping shrink factor must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class ShootResult:
    p0: np.ndarray
    grid: np.ndarray
    x: np.ndarray
    p: np.ndarray
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool


def rk4_integrate(field, z0, t_end, steps):
    """Classical fixed-step RK4; returns (grid, trajectory) with the nodes.

    ``field`` maps a phase vector to its derivative; autonomous systems only
    (the penalised Hamiltonian is time-independent at fixed penalty
    parameters).
    """
    z = np.asarray(z0, dtype=float)
    grid = np.linspace(0.0, t_end, steps + 1)
    out = np.empty((steps + 1, z.size))
    out[0] = z
    h = t_end / steps
    for i in range(steps):
        k1 = np.asarray(field(z))
        k2 = np.asarray(field(z + 0.5 * h * k1))
        k3 = np.asarray(field(z + 0.5 * h * k2))
        k4 = np.asarray(field(z + h * k3))
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = z
    return grid, out


def hamiltonian_field(problem: ProblemSpec, penalty=None):
    """The autonomous phase-space field z -> (grad_p H, -grad_x H)."""
    n = problem.phase_dim

    def field(z):
        x, p = z[:n], z[n:]
        return jnp.concatenate(
            [grad_p_H(problem, x, p, penalty), -grad_x_H(problem, x, p, penalty)]
        )

    return field


def _terminal_state_map(problem: ProblemSpec, penalty, steps):
    """Batched, jit-compiled map p0 -> x(T; p0) via RK4 under lax.scan."""
    n = problem.phase_dim
    field = hamiltonian_field(problem, penalty)
    h = problem.horizon / steps
    x0 = jnp.asarray(problem.x0)

    def step(z, _):
        k1 = field(z)
        k2 = field(z + 0.5 * h * k1)
        k3 = field(z + 0.5 * h * k2)
        k4 = field(z + h * k3)
        return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), None

    def terminal(p0):
        z0 = jnp.concatenate([x0, p0])
        zT, _ = jax.lax.scan(step, z0, None, length=steps)
        return zT[:n]

    return jax.jit(terminal), jax.jit(jax.vmap(terminal))


def shoot(problem: ProblemSpec, config: ShootingConfig, penalty=None) -> ShootResult:
    """Damped-Newton root finding on the terminal-state mismatch.

    The shooting function S(p0) = x(T; p0) - xT is driven to zero; the
    Jacobian is finite-differenced one costate column at a time (batched).
    Non-convergence returns the best iterate with ``converged=False``.
    """
    if penalty is None:
        penalty = problem.penalty
    n = problem.phase_dim
    terminal, terminal_batch = _terminal_state_map(problem, penalty, config.steps)
    xT = np.asarray(problem.xT)

    def mismatch(p0):
        return np.asarray(terminal(jnp.asarray(p0))) - xT

    p0 = (
        np.zeros(n)
        if config.initial_costate is None
        else np.asarray(config.initial_costate, dtype=float).reshape(n)
    )
    s = mismatch(p0)
    norm_s = float(np.linalg.norm(s)) if np.all(np.isfinite(s)) else np.inf
    best_p0, best_norm = p0.copy(), norm_s
    converged = best_norm <= config.tolerance
    iterations = 0
    while not converged and np.isfinite(best_norm) and iterations < config.max_iterations:
        iterations += 1
        steps_fd = config.fd_step * (1.0 + np.abs(p0))
        probes = p0[None, :] + np.diag(steps_fd)
        cols = np.asarray(terminal_batch(jnp.asarray(probes))) - xT
        jac = (cols - s[None, :]).T / steps_fd[None, :]
        try:
            delta = np.linalg.solve(jac, -s)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jac, -s, rcond=None)[0]
        if not np.all(np.isfinite(delta)):
            break
        alpha = 1.0
        norm0 = float(np.linalg.norm(s))
        accepted = False
        for _ in range(config.max_backtracks):
            candidate = p0 + alpha * delta
            s_new = mismatch(candidate)
            if np.all(np.isfinite(s_new)) and np.linalg.norm(s_new) < norm0:
                p0, s = candidate, s_new
                accepted = True
                break
            alpha *= config.damping_shrink
        if not accepted:
            break
        norm = float(np.linalg.norm(s))
        if norm < best_norm:
            best_norm, best_p0 = norm, p0.copy()
        if norm <= config.tolerance:
            converged = True
    field = hamiltonian_field(problem, penalty)
    fast = jax.jit(field)
    grid, zs = rk4_integrate(lambda z: np.asarray(fast(jnp.asarray(z))),
                             np.concatenate([problem.x0, best_p0]),
                             problem.horizon, config.steps)
    xs, ps = zs[:, :n], zs[:, n:]
    us = np.stack([np.asarray(recover_control(problem, ps[k])) for k in range(len(grid))])
    return ShootResult(
        p0=best_p0,
        grid=grid,
        x=xs,
        p=ps,
        u=us,
        residual=best_norm,
        iterations=iterations,
        converged=converged,
    )


def rotate_solution(traj, angle):
    """Rotate a planar trajectory about the origin by ``angle`` radians.

    Every consecutive coordinate pair of the state, costate, control and
    derivative columns is rotated, which covers the agent-major
    (position, velocity) layout in 2-d space.  Used to turn a one-agent
    solution into the symmetric multi-agent one.  Returns the same
    trajectory type with rotated fields.
    """
    from dataclasses import replace

    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])

    def rotate_pairs(arr):
        arr = np.asarray(arr, dtype=float)
        num, width = arr.shape
        if width % 2 != 0:
            raise ValueError("planar rotation needs an even number of columns")
        reshaped = arr.reshape(num, width // 2, 2)
        return np.einsum("ij,tkj->tki", rot, reshaped).reshape(num, width)

    updates = {name: rotate_pairs(getattr(traj, name))
               for name in ("x", "p", "u", "xdot", "pdot") if hasattr(traj, name)}
    return replace(traj, **updates)
