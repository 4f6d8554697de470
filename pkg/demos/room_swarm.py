"""Eight agents swapping places inside a walled square room.

Agents start evenly spaced on a ring and each must reach the antipodal
point, with wall clearance and pairwise separation enforced through the
penalty schedule.  Reports the running cost, the worst pairwise clearance
(negative would mean a collision), and the per-stage loss trace.

Run:  python demos/room_swarm.py                  (several minutes on CPU)
"""

from symoc import build_problem, build_scenario, build_train_config, warmup_train
from symoc.scenarios import metrics_from_result

import time

config = build_scenario("room_M")
problem = build_problem(config)

start = time.perf_counter()
result = warmup_train(problem, build_train_config(config))
wall = time.perf_counter() - start

metrics = metrics_from_result(problem, result, wall, config.seed)
print(f"agents:                 {problem.num_agents}")
print(f"converged:              {metrics.converged}")
print(f"running cost:           {metrics.running_cost:.4f}")
print(f"worst pair clearance:   {metrics.violation:+.5f}")
print(f"wall time:              {wall:.0f} s")
print("stage trace:")
for s in result.stages:
    print(
        f"  stage {s.stage}: eps={s.eps:.4g} cutoff={s.cutoff:.4g} "
        f"iters={s.iterations:5d} best_loss={s.best_loss:.4g} converged={s.converged}"
    )
