"""Constraint geometry for multi-agent path planning.

The constraint vector has two parts: per-agent obstacle clearances (one block
of components per agent, obstacles in insertion order) and pairwise agent
separation.  All components are >= 0 exactly when the scene is collision
free.  Evaluations and gradients are traceable jax expressions so the
training loss can differentiate through them.
"""

from dataclasses import dataclass
from functools import lru_cache

import jax.numpy as jnp
import numpy as np

from . import _config  # noqa: F401

_TINY = 1e-12  # distance guard at nonsmooth loci (agent exactly on a center/axis)


@dataclass(frozen=True)
class Circle:
    """Disk (or ball) obstacle: clearance is center distance minus radii."""

    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("circle radius must be >= 0")

    def num_components(self, dim: int) -> int:
        return 1


@dataclass(frozen=True)
class RoomBounds:
    """Axis-aligned room: one clearance component per face.

    Components are ordered (lo_1, hi_1, lo_2, hi_2, ...).  With
    ``inflate`` the agent radius is subtracted from every face clearance;
    the default keeps the plain wall distances.
    """

    lo: tuple
    hi: tuple
    inflate: bool = False

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("room lo/hi must have equal length")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("room requires lo < hi on every axis")

    def num_components(self, dim: int) -> int:
        return 2 * dim


@dataclass(frozen=True)
class CapsuleWall:
    """Wall made of all points within ``thickness`` of a segment."""

    start: tuple
    end: tuple
    thickness: float

    def __post_init__(self):
        if tuple(self.start) == tuple(self.end):
            raise ValueError("capsule segment endpoints must be distinct")
        if self.thickness < 0:
            raise ValueError("capsule thickness must be >= 0")

    def num_components(self, dim: int) -> int:
        return 1


@dataclass(frozen=True)
class Box:
    """Axis-aligned box obstacle; clearance is the max face excess."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box lo/hi must have equal length")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box requires lo < hi on every axis")

    def num_components(self, dim: int) -> int:
        return 1


Obstacle = Circle | RoomBounds | CapsuleWall | Box


@dataclass(frozen=True)
class SwarmGeometry:
    """Agents as balls of radius ``agent_radius`` among obstacles.

    ``pairwise`` controls whether the pairwise separation constraints are
    part of the constraint vector; scenes whose obstacle clearances already
    enforce separation may opt out.
    """

    num_agents: int
    agent_radius: float
    dim: int
    obstacles: tuple = ()
    pairwise: bool = True

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError("need at least one agent")
        if self.agent_radius <= 0:
            raise ValueError("agent radius must be > 0")
        if self.dim not in (2, 3):
            raise ValueError("space dimension must be 2 or 3")
        for obs in self.obstacles:
            for field in ("center", "lo", "hi", "start", "end"):
                coords = getattr(obs, field, None)
                if coords is not None and len(coords) != self.dim:
                    raise ValueError(f"{type(obs).__name__}.{field} must have dim {self.dim}")

    @property
    def components_per_agent(self) -> int:
        return sum(o.num_components(self.dim) for o in self.obstacles)

    @property
    def num_pairs(self) -> int:
        if not self.pairwise:
            return 0
        return self.num_agents * (self.num_agents - 1) // 2

    @property
    def num_constraints(self) -> int:
        return self.num_agents * self.components_per_agent + self.num_pairs


@lru_cache(maxsize=None)
def pair_indices(num_agents: int):
    """0-based pair (i, j) arrays ordered by index l = i + j(j-1)/2.

    Enumerates j as the outer loop so that, in the 1-based convention
    l = i + (j-1)(j-2)/2, pair (i, j) with i < j lands exactly at slot l.
    """
    ii, jj = [], []
    for j in range(1, num_agents):
        for i in range(j):
            ii.append(i)
            jj.append(j)
    return np.asarray(ii, dtype=int), np.asarray(jj, dtype=int)


def _as_positions(geometry: SwarmGeometry, positions):
    w = jnp.asarray(positions, dtype=float)
    return w.reshape(geometry.num_agents, geometry.dim)


def _segment_closest(obs: CapsuleWall, w):
    """Closest point on the wall segment to each row of w (M, dim)."""
    p1 = jnp.asarray(obs.start, dtype=float)
    d = jnp.asarray(obs.end, dtype=float) - p1
    t = jnp.clip((w - p1) @ d / (d @ d), 0.0, 1.0)
    return p1 + t[:, None] * d


def _box_candidates(obs: Box, w, agent_radius):
    """Face excesses, interleaved (lo_1, hi_1, lo_2, hi_2, ...) per agent."""
    lo = jnp.asarray(obs.lo, dtype=float)
    hi = jnp.asarray(obs.hi, dtype=float)
    low_side = lo - agent_radius - w
    high_side = w - hi - agent_radius
    return jnp.stack([low_side, high_side], axis=-1).reshape(w.shape[0], -1)


def _obstacle_values(obs: Obstacle, w, agent_radius):
    """Clearance components for one obstacle, all agents: (M, n_comp)."""
    if isinstance(obs, Circle):
        dist = jnp.linalg.norm(w - jnp.asarray(obs.center, dtype=float), axis=1)
        return (dist - (obs.radius + agent_radius))[:, None]
    if isinstance(obs, RoomBounds):
        off = agent_radius if obs.inflate else 0.0
        lo = jnp.asarray(obs.lo, dtype=float)
        hi = jnp.asarray(obs.hi, dtype=float)
        return jnp.stack([w - lo - off, hi - w - off], axis=-1).reshape(w.shape[0], -1)
    if isinstance(obs, CapsuleWall):
        dist = jnp.linalg.norm(w - _segment_closest(obs, w), axis=1)
        return (dist - (obs.thickness + agent_radius))[:, None]
    if isinstance(obs, Box):
        return jnp.max(_box_candidates(obs, w, agent_radius), axis=1)[:, None]
    raise TypeError(f"unknown obstacle type {type(obs).__name__}")


def _obstacle_grads(obs: Obstacle, w, agent_radius):
    """d(components)/d(own position) for one obstacle: (M, n_comp, dim)."""
    m, dim = w.shape
    if isinstance(obs, Circle):
        diff = w - jnp.asarray(obs.center, dtype=float)
        dist = jnp.maximum(jnp.linalg.norm(diff, axis=1, keepdims=True), _TINY)
        return (diff / dist)[:, None, :]
    if isinstance(obs, RoomBounds):
        eye = jnp.eye(dim)
        per_axis = jnp.stack([eye, -eye], axis=1).reshape(2 * dim, dim)
        return jnp.broadcast_to(per_axis, (m, 2 * dim, dim))
    if isinstance(obs, CapsuleWall):
        diff = w - _segment_closest(obs, w)
        dist = jnp.maximum(jnp.linalg.norm(diff, axis=1, keepdims=True), _TINY)
        return (diff / dist)[:, None, :]
    if isinstance(obs, Box):
        cand = _box_candidates(obs, w, agent_radius)
        k = jnp.argmax(cand, axis=1)  # first occurrence on ties
        axis = k // 2
        sign = jnp.where(k % 2 == 0, -1.0, 1.0)
        return (sign[:, None] * jnp.eye(dim)[axis])[:, None, :]
    raise TypeError(f"unknown obstacle type {type(obs).__name__}")


def clearance_D(obstacle: Obstacle, w, agent_radius: float = 0.0):
    """Clearance components of one obstacle at a single position."""
    w = jnp.asarray(w, dtype=float)[None, :]
    return _obstacle_values(obstacle, w, agent_radius)[0]


def h1(geometry: SwarmGeometry, positions):
    """Obstacle clearances for all agents, agent-major."""
    w = _as_positions(geometry, positions)
    if not geometry.obstacles:
        return jnp.zeros((0,))
    per_agent = jnp.concatenate(
        [_obstacle_values(obs, w, geometry.agent_radius) for obs in geometry.obstacles], axis=1
    )
    return per_agent.reshape(-1)


def h2(geometry: SwarmGeometry, positions):
    """Pairwise separations ||w_i - w_j|| - 2*agent_radius, index-mapped."""
    w = _as_positions(geometry, positions)
    if geometry.num_agents < 2 or not geometry.pairwise:
        return jnp.zeros((0,))
    ii, jj = pair_indices(geometry.num_agents)
    dist = jnp.linalg.norm(w[ii] - w[jj], axis=1)
    return dist - 2.0 * geometry.agent_radius


def constraint_values(geometry: SwarmGeometry, positions):
    """Full constraint vector (h1 then h2)."""
    return jnp.concatenate([h1(geometry, positions), h2(geometry, positions)])


def constraint_jacobian(geometry: SwarmGeometry, positions):
    """Analytic Jacobian of the full constraint vector.

    Rows follow :func:`constraint_values`; columns are the flattened agent
    positions.  Rows are sparse in structure (an h1 row touches one agent,
    an h2 row two) but returned dense to stay traceable.
    """
    w = _as_positions(geometry, positions)
    m, dim = w.shape
    blocks = []
    if geometry.obstacles:
        grads = jnp.concatenate(
            [_obstacle_grads(obs, w, geometry.agent_radius) for obs in geometry.obstacles], axis=1
        )  # (M, n_comp, dim), gradient w.r.t. the agent's own position
        n_comp = grads.shape[1]
        jac1 = jnp.zeros((m, n_comp, m, dim))
        agents = jnp.arange(m)
        jac1 = jac1.at[agents, :, agents, :].set(grads)
        blocks.append(jac1.reshape(m * n_comp, m * dim))
    if geometry.num_agents >= 2 and geometry.pairwise:
        ii, jj = pair_indices(m)
        diff = w[ii] - w[jj]
        dist = jnp.maximum(jnp.linalg.norm(diff, axis=1, keepdims=True), _TINY)
        unit = diff / dist
        p = len(ii)
        jac2 = jnp.zeros((p, m, dim))
        rows = jnp.arange(p)
        jac2 = jac2.at[rows, ii, :].set(unit)
        jac2 = jac2.at[rows, jj, :].set(-unit)
        blocks.append(jac2.reshape(p, m * dim))
    if not blocks:
        return jnp.zeros((0, m * dim))
    return jnp.concatenate(blocks, axis=0)
