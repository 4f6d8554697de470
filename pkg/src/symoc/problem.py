"""Control problem definition and its Pontryagin Hamiltonian.

A problem is a set of identical-shape subsystems (agents) with drift + B*u
dynamics, quadratic running costs F(x) + G(u), optional constraint geometry,
and fixed boundary states.  The penalised Hamiltonian is

    H(x, p) = sum_i <p_i, f_i(x_i)> - F_i(x_i) + G_i*(B_i^T p_i) - U(h(x))

with G* the convex conjugate (closed form for quadratic G) and U the
log-barrier penalty over the constraint vector.  Gradients are analytic;
finite differences are used only as test oracles.
"""

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from . import _config  # noqa: F401
from .constraints import SwarmGeometry, constraint_jacobian, constraint_values
from .penalty import PenaltyParams, penalty_slopes, penalty_values

SINGLE_INTEGRATOR = "single_integrator"
NEWTONIAN_DRAG = "newtonian_drag"


@dataclass(frozen=True, eq=False)
class SubsystemDynamics:
    """Per-agent dynamics: xdot = f(x) + B u.

    ``single_integrator`` has zero drift (the state is directly driven).
    ``newtonian_drag`` splits the state into (position, velocity) halves and
    applies quadratic drag -k*v*|v| to the velocity, with |v| smoothed as
    sqrt(||v||^2 + delta^2) so gradients exist at v = 0.
    """

    kind: str
    b_matrix: np.ndarray
    drag_coeff: float = 0.0
    smoothing: float = 1e-6

    def __post_init__(self):
        if self.kind not in (SINGLE_INTEGRATOR, NEWTONIAN_DRAG):
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        b = np.atleast_2d(np.asarray(self.b_matrix, dtype=float))
        object.__setattr__(self, "b_matrix", b)
        if self.drag_coeff < 0:
            raise ValueError("drag coefficient must be >= 0")
        if self.smoothing <= 0:
            raise ValueError("speed smoothing must be > 0")
        if self.kind == NEWTONIAN_DRAG:
            dx, du = b.shape
            if dx % 2 != 0 or du != dx // 2:
                raise ValueError("newtonian drag needs state (w, v) and B of shape (2s, s)")
            expected = np.vstack([np.zeros((du, du)), np.eye(du)])
            if not np.array_equal(b, expected):
                raise ValueError("newtonian drag requires B = [0; I]")

    @property
    def state_dim(self) -> int:
        return self.b_matrix.shape[0]

    @property
    def control_dim(self) -> int:
        return self.b_matrix.shape[1]


@dataclass(frozen=True, eq=False)
class RunningCost:
    """Quadratic costs F(x) = x'Fx/2 (any symmetric F) and G(u) = u'Gu/2 (PD)."""

    f_quad: np.ndarray
    g_quad: np.ndarray

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.f_quad, dtype=float))
        g = np.atleast_2d(np.asarray(self.g_quad, dtype=float))
        if not np.allclose(f, f.T, atol=1e-12):
            raise ValueError("F quadratic form must be symmetric")
        if not np.allclose(g, g.T, atol=1e-12):
            raise ValueError("G quadratic form must be symmetric")
        if np.min(np.linalg.eigvalsh(g)) <= 0:
            raise ValueError("G must be positive definite (strongly convex control cost)")
        object.__setattr__(self, "f_quad", f)
        object.__setattr__(self, "g_quad", g)
        object.__setattr__(self, "g_inv", np.linalg.inv(g))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One boundary-value optimal control problem over [0, horizon]."""

    num_agents: int
    state_dim: int
    control_dim: int
    horizon: float
    x0: np.ndarray
    xT: np.ndarray
    dynamics: tuple
    costs: tuple
    geometry: SwarmGeometry | None = None
    penalty: PenaltyParams | None = None

    def __post_init__(self):
        m, dx, du = self.num_agents, self.state_dim, self.control_dim
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        xT = np.asarray(self.xT, dtype=float).reshape(-1)
        if x0.shape != (m * dx,) or xT.shape != (m * dx,):
            raise ValueError(f"boundary states must have dimension {m * dx}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xT", xT)
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if len(self.dynamics) != m or len(self.costs) != m:
            raise ValueError("need one dynamics and one cost entry per agent")
        kinds = {d.kind for d in self.dynamics}
        if len(kinds) != 1:
            raise ValueError("mixed dynamics kinds are not supported")
        for d in self.dynamics:
            if d.state_dim != dx or d.control_dim != du:
                raise ValueError("dynamics shape disagrees with declared dimensions")
        for c in self.costs:
            if c.f_quad.shape != (dx, dx) or c.g_quad.shape != (du, du):
                raise ValueError("cost shapes disagree with declared dimensions")
        space = dx if self.kind == SINGLE_INTEGRATOR else dx // 2
        if self.geometry is not None:
            if self.geometry.num_agents != m or self.geometry.dim != space:
                raise ValueError("geometry does not match agent count / space dimension")
        # stacked per-agent constants used by the vectorised evaluations
        object.__setattr__(self, "_fq", np.stack([c.f_quad for c in self.costs]))
        object.__setattr__(self, "_ginv", np.stack([c.g_inv for c in self.costs]))
        b = np.stack([d.b_matrix for d in self.dynamics])
        object.__setattr__(self, "_b", b)
        object.__setattr__(
            self, "_bginvbt", np.einsum("mij,mjk,mlk->mil", b, self._ginv, b)
        )
        object.__setattr__(self, "_k", np.array([d.drag_coeff for d in self.dynamics]))
        object.__setattr__(self, "_delta", np.array([d.smoothing for d in self.dynamics]))

    @property
    def kind(self) -> str:
        return self.dynamics[0].kind

    @property
    def space_dim(self) -> int:
        return self.state_dim if self.kind == SINGLE_INTEGRATOR else self.state_dim // 2

    @property
    def phase_dim(self) -> int:
        return self.num_agents * self.state_dim


def _agents(spec: ProblemSpec, vec):
    return jnp.asarray(vec, dtype=float).reshape(spec.num_agents, spec.state_dim)


def positions(spec: ProblemSpec, x):
    """Agent position block of a state vector: (M, space_dim)."""
    xa = _agents(spec, x)
    if spec.kind == SINGLE_INTEGRATOR:
        return xa
    return xa[:, : spec.space_dim]


def dynamics_f(spec: ProblemSpec, x):
    """Drift f(x) (no control term), flattened over agents."""
    xa = _agents(spec, x)
    if spec.kind == SINGLE_INTEGRATOR:
        return jnp.zeros_like(xa).reshape(-1)
    s = spec.space_dim
    v = xa[:, s:]
    speed = jnp.sqrt(jnp.sum(v * v, axis=1, keepdims=True) + spec._delta[:, None] ** 2)
    drag = -spec._k[:, None] * v * speed
    return jnp.concatenate([v, drag], axis=1).reshape(-1)


def _drift_costate_term(spec: ProblemSpec, xa, pa):
    """(df/dx)^T p per agent; the drag Jacobian is -k(s I + v v^T / s)."""
    if spec.kind == SINGLE_INTEGRATOR:
        return jnp.zeros_like(xa)
    s = spec.space_dim
    v = xa[:, s:]
    pw, pv = pa[:, :s], pa[:, s:]
    speed = jnp.sqrt(jnp.sum(v * v, axis=1, keepdims=True) + spec._delta[:, None] ** 2)
    k = spec._k[:, None]
    jv_pv = -k * (speed * pv + v * jnp.sum(v * pv, axis=1, keepdims=True) / speed)
    return jnp.concatenate([jnp.zeros_like(pw), pw + jv_pv], axis=1)


def _penalty_args(spec: ProblemSpec, penalty):
    if penalty is None:
        penalty = spec.penalty
    if penalty is None or spec.geometry is None or spec.geometry.num_constraints == 0:
        return None
    if isinstance(penalty, PenaltyParams):
        return penalty.eps, penalty.cutoff
    eps, cutoff = penalty
    return eps, cutoff


def hamiltonian(spec: ProblemSpec, x, p, penalty=None):
    """Penalised Hamiltonian value at (x, p)."""
    xa, pa = _agents(spec, x), _agents(spec, p)
    drift = jnp.asarray(dynamics_f(spec, x)).reshape(spec.num_agents, spec.state_dim)
    value = jnp.sum(pa * drift)
    value -= 0.5 * jnp.sum(xa * jnp.einsum("mij,mj->mi", spec._fq, xa))
    value += 0.5 * jnp.sum(pa * jnp.einsum("mij,mj->mi", spec._bginvbt, pa))
    args = _penalty_args(spec, penalty)
    if args is not None:
        h = constraint_values(spec.geometry, positions(spec, x))
        value -= jnp.max(penalty_values(h, *args))
    return value


def grad_p_H(spec: ProblemSpec, x, p, penalty=None):
    """Analytic costate gradient: f(x) + B G^{-1} B^T p per agent."""
    del penalty  # the penalty term does not depend on p
    pa = _agents(spec, p)
    term = jnp.einsum("mij,mj->mi", spec._bginvbt, pa).reshape(-1)
    return dynamics_f(spec, x) + term


def grad_x_H(spec: ProblemSpec, x, p, penalty=None):
    """Analytic state gradient, including the penalty chain rule."""
    xa, pa = _agents(spec, x), _agents(spec, p)
    grad = _drift_costate_term(spec, xa, pa)
    grad -= jnp.einsum("mij,mj->mi", spec._fq, xa)
    args = _penalty_args(spec, penalty)
    if args is not None:
        w = positions(spec, x)
        h = constraint_values(spec.geometry, w)
        jac = constraint_jacobian(spec.geometry, w)
        vals = penalty_values(h, *args)
        idx = jnp.argmax(vals)
        pen_w = penalty_slopes(h[idx], *args) * jac[idx]
        pen = pen_w.reshape(spec.num_agents, spec.space_dim)
        if spec.kind == SINGLE_INTEGRATOR:
            grad -= pen
        else:
            grad = grad.at[:, : spec.space_dim].add(-pen)
    return grad.reshape(-1)


def recover_control(spec: ProblemSpec, p):
    """Maximising control u = G^{-1} B^T p, flattened over agents."""
    pa = _agents(spec, p)
    u = jnp.einsum("mij,mkj,mk->mi", jnp.asarray(spec._ginv), jnp.asarray(spec._b), pa)
    return u.reshape(-1)


def running_cost(spec: ProblemSpec, grid, xs, us):
    """Trapezoidal quadrature of sum_i F_i + G_i along a rollout."""
    grid = np.asarray(grid, dtype=float)
    xs = np.asarray(xs, dtype=float).reshape(len(grid), spec.num_agents, spec.state_dim)
    us = np.asarray(us, dtype=float).reshape(len(grid), spec.num_agents, spec.control_dim)
    gq = np.stack([c.g_quad for c in spec.costs])
    lagrangian = 0.5 * np.einsum("tmi,mij,tmj->t", xs, spec._fq, xs)
    lagrangian += 0.5 * np.einsum("tmi,mij,tmj->t", us, gq, us)
    return float(np.trapezoid(lagrangian, grid))
