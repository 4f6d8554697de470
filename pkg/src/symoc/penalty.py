"""Soft log-barrier penalty converting state constraints into running cost.

A constraint component h_i >= 0 is penalised by a log barrier that switches
to a quadratic extension below a cutoff, so the penalty is finite (and C^1)
on the whole real line.  The barrier strength ``eps`` and the cutoff shrink
geometrically over the outer training stages, driving the penalty towards
the indicator function of [0, inf).
"""

from dataclasses import dataclass

import jax.numpy as jnp

from . import _config  # noqa: F401  (enables float64)


@dataclass(frozen=True)
class PenaltyParams:
    """Barrier strength and quadratic-extension cutoff, both positive."""

    eps: float
    cutoff: float

    def __post_init__(self):
        if not (self.eps > 0.0):
            raise ValueError(f"penalty eps must be positive, got {self.eps}")
        if not (self.cutoff > 0.0):
            raise ValueError(f"penalty cutoff must be positive, got {self.cutoff}")


@dataclass(frozen=True)
class PenaltySchedule:
    """Geometric shrink schedule for the penalty over outer stages."""

    eps0: float = 0.1
    cutoff0: float = 0.1
    eps_factor: float = 0.5
    cutoff_factor: float = 0.4
    num_stages: int = 5

    def __post_init__(self):
        if not (0.0 < self.eps_factor < 1.0):
            raise ValueError("eps_factor must lie in (0, 1)")
        if not (0.0 < self.cutoff_factor < 1.0):
            raise ValueError("cutoff_factor must lie in (0, 1)")
        if self.num_stages < 1:
            raise ValueError("num_stages must be >= 1")
        PenaltyParams(self.eps0, self.cutoff0)

    def initial(self) -> PenaltyParams:
        return PenaltyParams(self.eps0, self.cutoff0)


def penalty_values(h, eps, cutoff):
    """Elementwise penalty of constraint values ``h`` (traceable).

    Above the cutoff: -eps*log(h).  At or below: -eps*log(cutoff) plus a
    quadratic in (h - 2*cutoff) that matches value and slope at h = cutoff,
    keeping the function total and C^1.
    """
    h = jnp.asarray(h)
    safe = jnp.maximum(h, cutoff)  # keeps log off nonpositive arguments
    barrier = -eps * jnp.log(safe)
    quad = -eps * jnp.log(cutoff) + 0.5 * eps * (((h - 2.0 * cutoff) / cutoff) ** 2 - 1.0)
    return jnp.where(h > cutoff, barrier, quad)


def penalty_slopes(h, eps, cutoff):
    """Elementwise derivative of :func:`penalty_values` w.r.t. h."""
    h = jnp.asarray(h)
    safe = jnp.maximum(h, cutoff)
    return jnp.where(h > cutoff, -eps / safe, eps * (h - 2.0 * cutoff) / cutoff**2)


def penalty_scalar(h, params: PenaltyParams) -> float:
    """Penalty of a single constraint value."""
    return float(penalty_values(jnp.asarray(h, dtype=float), params.eps, params.cutoff))


def penalty_max(h, params: PenaltyParams):
    """Penalty of a constraint vector: max over components.

    Returns (value, argmax index); ties break to the lowest index.
    """
    vals = penalty_values(jnp.asarray(h, dtype=float), params.eps, params.cutoff)
    if vals.ndim != 1 or vals.shape[0] == 0:
        raise ValueError("penalty_max expects a nonempty 1-d constraint vector")
    idx = int(jnp.argmax(vals))
    return float(vals[idx]), idx


def penalty_gradient(h, h_jac, params: PenaltyParams):
    """Gradient of penalty_max(h(x)) w.r.t. x given the constraint Jacobian.

    Only the argmax component carries gradient (subgradient choice with
    lowest-index tie-break, matching :func:`penalty_max`).
    """
    h = jnp.asarray(h, dtype=float)
    h_jac = jnp.asarray(h_jac, dtype=float)
    if h_jac.shape[0] != h.shape[0]:
        raise ValueError("h_jac must have one row per constraint component")
    vals = penalty_values(h, params.eps, params.cutoff)
    idx = jnp.argmax(vals)
    slope = penalty_slopes(h[idx], params.eps, params.cutoff)
    return slope * h_jac[idx]


def schedule_step(params: PenaltyParams, sched: PenaltySchedule) -> PenaltyParams:
    """One outer-stage update: shrink eps and cutoff by their factors."""
    return PenaltyParams(params.eps * sched.eps_factor, params.cutoff * sched.cutoff_factor)
