"""One agent steering around a circular obstacle under quadratic drag.

Solves the same boundary problem for drag coefficients k = 0, 1, 2 and
validates the k = 0 run against the shooting method seeded with the
network's initial costate.  With more drag the control has to keep pushing
along the velocity to maintain speed, so the control/velocity alignment
grows with k.

Run:  python demos/single_agent_drag.py          (a few minutes on CPU)
"""

import numpy as np

from symoc import build_problem, build_scenario, build_shooting_config, build_train_config, shoot, train
from symoc.scenarios import control_velocity_alignment, final_stage_penalty

rollouts = {}
for k in (0.0, 1.0, 2.0):
    config = build_scenario("single_circle", {"problem": {"drag_coeff": k}})
    problem = build_problem(config)
    result = train(problem, build_train_config(config))
    traj = result.trajectory
    clearance = float(np.min(np.linalg.norm(traj.x[:, :2], axis=1)) - 0.2)
    align = control_velocity_alignment(problem, traj)
    print(
        f"k={k:.0f}: converged={result.converged}  final_loss={result.stages[-1].best_loss:.3e}  "
        f"min obstacle clearance={clearance:+.4f}  alignment={align:.3f}"
    )
    rollouts[k] = (config, problem, result)

config, problem, result = rollouts[0.0]
shot = shoot(
    problem,
    build_shooting_config(config, initial_costate=result.trajectory.p[0]),
    penalty=final_stage_penalty(config),
)
grid = result.trajectory.grid
x_interp = np.stack(
    [np.interp(grid, shot.grid, shot.x[:, j]) for j in range(shot.x.shape[1])], axis=1
)
gap = float(np.max(np.linalg.norm(x_interp - result.trajectory.x, axis=1)))
print(f"shooting validation (k=0): residual={shot.residual:.2e}  max state gap={gap:.4f}")
