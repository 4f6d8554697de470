"""Solver for state-constrained optimal control problems.

The method computes a closed-form trajectory of a latent linear-quadratic
Hamiltonian system and trains a time-dependent, boundary-value-preserving
symplectic transformation so that the mapped trajectory satisfies the
Pontryagin ODE of the penalised physical problem.  A classical shooting
method is included as an independent validator.
"""

from . import _config  # noqa: F401  (enables float64 in jax)

from .constraints import (
    Box,
    CapsuleWall,
    Circle,
    RoomBounds,
    SwarmGeometry,
    clearance_D,
    constraint_jacobian,
    constraint_values,
    h1,
    h2,
)
from .latent import (
    LatentSubsystem,
    LatentTrajectory,
    build_hamiltonian_matrix,
    hamiltonian_defect,
    latent_trajectory,
    linearize,
    matrix_exponential,
    solve_initial_costate,
    solve_latent_bvp,
    symplectic_form,
)
from .penalty import (
    PenaltyParams,
    PenaltySchedule,
    penalty_gradient,
    penalty_max,
    penalty_scalar,
    schedule_step,
)
from .problem import (
    NEWTONIAN_DRAG,
    SINGLE_INTEGRATOR,
    ProblemSpec,
    RunningCost,
    SubsystemDynamics,
    dynamics_f,
    grad_p_H,
    grad_x_H,
    hamiltonian,
    recover_control,
    running_cost,
)
from .scenarios import (
    MetricsReport,
    ScenarioConfig,
    build_problem,
    build_scenario,
    build_shooting_config,
    build_train_config,
    final_stage_penalty,
)
from .shooting import ShootingConfig, ShootResult, rk4_integrate, rotate_solution, shoot
from .sympnet import (
    GSympLayer,
    PhasePoint,
    TimeSympNet,
    build_time_symp_net,
    bvp_forward,
    forward,
    gsymp_forward,
    gsymp_inverse,
    jacobian_vp,
    load_checkpoint,
    param_gradient,
    save_checkpoint,
    symplecticity_defect,
    time_derivative,
    tl_forward,
)
from .trainer import (
    LossReport,
    PhaseTrajectory,
    TrainConfig,
    TrainResult,
    adam_init,
    adam_step,
    interpolated_phase,
    phase_derivative,
    physics_loss,
    rollout,
    sample_times,
    train,
    violation_metric,
    warmup_train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
