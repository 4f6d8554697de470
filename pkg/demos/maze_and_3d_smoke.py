"""Geometry coverage: the capsule maze and the 100-drone 3-d box scene.

These larger scenes are exercised as smoke tests: build the geometry, run
every finite-difference suite on it, and do a short training run to confirm
the loss decreases.  (Full solves at publication scale are deliberately out
of scope for a desk run.)

Run:  python demos/maze_and_3d_smoke.py           (a few minutes on CPU)
"""

from symoc import build_problem, build_scenario, build_train_config, train
from symoc.gradcheck import run_scenario_checks

for kind in ("maze", "box3d_swarm"):
    config = build_scenario(
        kind, {"train": {"max_inner": 200, "warmup_stages": 0, "penalty": {"num_stages": 1}}}
    )
    problem = build_problem(config)
    print(f"--- {kind}: {problem.num_agents} agents, "
          f"{problem.geometry.num_constraints} constraint components")
    for res in run_scenario_checks(problem, seed=0):
        flag = "ok" if res.passed else "FAIL"
        print(f"  {res.name:26s} max_err={res.max_err:.2e}  {flag}")
    result = train(problem, build_train_config(config))
    first = result.history[0].total
    best = min(r.total for r in result.history)
    print(f"  smoke solve: loss {first:.4g} -> {best:.4g} over {len(result.history)} iterations")
