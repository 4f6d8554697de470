"""Latent linear-quadratic Hamiltonian system, solved in closed form.

The physical problem is quadratised at the origin, one block per agent:
A = Jf(0), Q = Hess(F)(0)/2, R = Hess(G*)(0)/2.  Each block yields a linear
Hamiltonian flow zdot = H z whose two-point boundary problem is solved
exactly with matrix exponentials: pick the initial costate q0 so that the
state component of e^{H T} (x0, q0) lands on xT.

The block matrix is assembled as [[A, 2BRB^T], [2Q, -A^T]], the Hamilton
equations of the quadratised Hamiltonian <q, Ay> - <y, Qy> + <B^T q, R B^T q>.
This makes the latent flow coincide exactly with the physical Pontryagin flow
whenever the physical problem is itself linear-quadratic and unconstrained.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, lu_factor, lu_solve

from .problem import SINGLE_INTEGRATOR, ProblemSpec

CONDITION_LIMIT = 1e12
BOUNDARY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LatentSubsystem:
    """Quadratised per-agent data (A, B, Q, R) for the latent flow."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    q_matrix: np.ndarray
    r_matrix: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        b = np.atleast_2d(np.asarray(self.b_matrix, dtype=float))
        q = np.atleast_2d(np.asarray(self.q_matrix, dtype=float))
        r = np.atleast_2d(np.asarray(self.r_matrix, dtype=float))
        for name, mat in (("A", a), ("B", b), ("Q", q), ("R", r)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} contains non-finite entries")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if not np.allclose(r, r.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.min(np.linalg.eigvalsh(r)) <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "q_matrix", q)
        object.__setattr__(self, "r_matrix", r)

    @property
    def state_dim(self) -> int:
        return self.a_matrix.shape[0]


@dataclass(frozen=True, eq=False)
class LatentTrajectory:
    """Closed-form latent rollout sampled on a uniform grid.

    ``y``/``q`` hold states and costates, row k at time grid[k];
    ``ydot``/``qdot`` are the exact flow derivatives H (y, q) at each node.
    """

    grid: np.ndarray
    y: np.ndarray
    q: np.ndarray
    ydot: np.ndarray
    qdot: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.grid)

    @property
    def dim(self) -> int:
        return self.y.shape[1]


def symplectic_form(n: int) -> np.ndarray:
    """Canonical skew form J = [[0, I], [-I, 0]] on R^{2n}."""
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = np.eye(n)
    j[n:, :n] = -np.eye(n)
    return j


def hamiltonian_defect(h: np.ndarray) -> float:
    """Max-norm asymmetry of J H; zero iff H generates a symplectic flow."""
    n = h.shape[0] // 2
    jh = symplectic_form(n) @ h
    return float(np.max(np.abs(jh - jh.T)))


def linearize(problem: ProblemSpec) -> list[LatentSubsystem]:
    """Quadratise each agent's drift and costs at the origin.

    The drift Jacobian is analytic per dynamics kind; the quadratic-drag
    contribution vanishes at v = 0, so drag never enters A.  R comes from
    the conjugate cost: for G(u) = u'Su/2 the conjugate is z'S^{-1}z/2,
    hence R = S^{-1}/2.
    """
    subs = []
    for i, (dyn, cost) in enumerate(zip(problem.dynamics, problem.costs)):
        dx = dyn.state_dim
        if dyn.kind == SINGLE_INTEGRATOR:
            a = np.zeros((dx, dx))
        else:
            s = dx // 2
            a = np.zeros((dx, dx))
            a[:s, s:] = np.eye(s)
        r = 0.5 * cost.g_inv
        if np.min(np.linalg.eigvalsh(r)) <= 0:
            raise ValueError(
                f"subsystem {i}: control cost is not strongly convex, latent R not PD"
            )
        subs.append(
            LatentSubsystem(
                a_matrix=a, b_matrix=dyn.b_matrix, q_matrix=0.5 * cost.f_quad, r_matrix=r
            )
        )
    return subs


def build_hamiltonian_matrix(sub: LatentSubsystem) -> np.ndarray:
    """Assemble the flow matrix [[A, 2BRB^T], [2Q, -A^T]] of one block."""
    a, b, q, r = sub.a_matrix, sub.b_matrix, sub.q_matrix, sub.r_matrix
    dx = sub.state_dim
    h = np.zeros((2 * dx, 2 * dx))
    h[:dx, :dx] = a
    h[:dx, dx:] = 2.0 * b @ r @ b.T
    h[dx:, :dx] = 2.0 * q
    h[dx:, dx:] = -a.T
    return h


def matrix_exponential(m: np.ndarray, t: float) -> np.ndarray:
    """e^{M t} by scaling-and-squaring with Pade approximants (scipy)."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix exponential of non-finite matrix")
    return expm(m * float(t))


def _split(hams, vec):
    """Split a stacked state vector into per-subsystem blocks."""
    dims = [h.shape[0] // 2 for h in hams]
    if sum(dims) != len(vec):
        raise ValueError("vector length disagrees with subsystem dimensions")
    out, pos = [], 0
    for d in dims:
        out.append(np.asarray(vec[pos : pos + d], dtype=float))
        pos += d
    return out


def solve_initial_costate(hams, x0, xT, horizon: float) -> np.ndarray:
    """Initial costate q0 with [I 0] e^{H T} (x0, q0) = xT, blockwise.

    Each subsystem is solved independently by LU with partial pivoting.  An
    ill-conditioned top-right block of e^{H T} (condition number beyond
    1e12) signals an uncontrollable or resonant block and raises.
    """
    hams = [np.asarray(h, dtype=float) for h in hams]
    x0_blocks = _split(hams, x0)
    xT_blocks = _split(hams, xT)
    q0_blocks = []
    for i, (h, a0, aT) in enumerate(zip(hams, x0_blocks, xT_blocks)):
        dx = h.shape[0] // 2
        e = matrix_exponential(h, horizon)
        e11, e12 = e[:dx, :dx], e[:dx, dx:]
        # smallest singular value measured against the whole boundary map, so
        # that near-zero blocks (conjugate times) are caught even when the
        # block itself is scale-free well conditioned
        sigma_min = np.min(np.linalg.svd(e12, compute_uv=False))
        cond = np.inf if sigma_min == 0.0 else np.linalg.norm(e, 2) / sigma_min
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise ValueError(
                f"subsystem {i}: boundary map block is singular or ill-conditioned "
                f"(cond={cond:.3e}); the latent flow cannot reach the target state"
            )
        q0 = lu_solve(lu_factor(e12), aT - e11 @ a0)
        residual = float(np.linalg.norm(e11 @ a0 + e12 @ q0 - aT))
        if residual > BOUNDARY_TOL:
            raise ValueError(f"subsystem {i}: boundary residual {residual:.3e} exceeds tolerance")
        q0_blocks.append(q0)
    return np.concatenate(q0_blocks)


def latent_trajectory(hams, x0, q0, grid) -> LatentTrajectory:
    """Sample the latent flow at the grid nodes: z_k = e^{H t_k} (x0, q0)."""
    hams = [np.asarray(h, dtype=float) for h in hams]
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or grid[0] != 0.0:
        raise ValueError("grid must be a 1-d array of times starting at 0")
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("grid must be uniform")
    x0_blocks = _split(hams, x0)
    q0_blocks = _split(hams, q0)
    n = sum(len(b) for b in x0_blocks)
    num = len(grid)
    y = np.empty((num, n))
    q = np.empty((num, n))
    ydot = np.empty((num, n))
    qdot = np.empty((num, n))
    pos = 0
    for h, a0, c0 in zip(hams, x0_blocks, q0_blocks):
        dx = h.shape[0] // 2
        step = matrix_exponential(h, steps[0])
        z = np.concatenate([a0, c0])
        sl = slice(pos, pos + dx)
        for k in range(num):
            zdot = h @ z
            y[k, sl], q[k, sl] = z[:dx], z[dx:]
            ydot[k, sl], qdot[k, sl] = zdot[:dx], zdot[dx:]
            if k + 1 < num:
                z = step @ z
        pos += dx
    return LatentTrajectory(grid=grid, y=y, q=q, ydot=ydot, qdot=qdot)


def solve_latent_bvp(problem: ProblemSpec, num_steps: int = 100):
    """Full latent pipeline: linearize, solve q0, sample the grid.

    Returns (trajectory, per-subsystem flow matrices).
    """
    subs = linearize(problem)
    hams = [build_hamiltonian_matrix(s) for s in subs]
    q0 = solve_initial_costate(hams, problem.x0, problem.xT, problem.horizon)
    grid = np.linspace(0.0, problem.horizon, num_steps + 1)
    return latent_trajectory(hams, problem.x0, q0, grid), hams
