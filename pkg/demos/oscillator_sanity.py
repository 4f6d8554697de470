"""Sanity check on the 1-d harmonic oscillator.

The boundary problem x(0) = 1, x(pi/4) = sqrt(2)/2 under H = (x^2+p^2)/2
has the closed-form solution x = cos, p = -sin.  The latent quadratisation
is already exact here, so the identity-initialised network converges
immediately and both the trained rollout and the shooting baseline should
land on the analytic curve.

Run:  python demos/oscillator_sanity.py
"""

import numpy as np

from symoc import (
    ShootingConfig,
    build_problem,
    build_scenario,
    build_shooting_config,
    build_train_config,
    shoot,
    train,
)

config = build_scenario("oscillator")
problem = build_problem(config)

result = train(problem, build_train_config(config))
grid = result.trajectory.grid
x_err = np.max(np.abs(result.trajectory.x[:, 0] - np.cos(grid)))
p_err = np.max(np.abs(result.trajectory.p[:, 0] + np.sin(grid)))

print("trained solve")
print(f"  converged:            {result.converged}")
print(f"  max |x - cos|:        {x_err:.3e}")
print(f"  max |p + sin|:        {p_err:.3e}")

shot = shoot(problem, build_shooting_config(config))
print("shooting baseline")
print(f"  initial costate p0:   {shot.p0[0]:+.3e}   (analytic value 0)")
print(f"  terminal residual:    {shot.residual:.3e}")

gap = np.max(np.abs(shot.x[:, 0] - np.cos(shot.grid)))
print(f"  max gap to cos curve: {gap:.3e}")
