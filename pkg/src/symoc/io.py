"""Result emission: trajectory CSV, loss-history CSV, metrics JSON.

The trajectory schema is shared by training rollouts and shooting runs so
the two can be diffed directly: columns t, then states (agent-major,
position-then-velocity), then costates, then controls, with a mandatory
header row.  Floats are written with repr-exact precision so identical
(config, seed) pairs produce byte-identical files.
"""

import json
import os

import numpy as np


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(path, grid, x, p, u):
    grid = np.asarray(grid)
    x, p, u = np.asarray(x), np.asarray(p), np.asarray(u)
    n, m = x.shape[1], u.shape[1]
    header = (
        ["t"]
        + [f"x{i}" for i in range(n)]
        + [f"p{i}" for i in range(n)]
        + [f"u{i}" for i in range(m)]
    )
    lines = [",".join(header)]
    for k in range(len(grid)):
        row = [_fmt(grid[k])]
        row += [_fmt(v) for v in x[k]]
        row += [_fmt(v) for v in p[k]]
        row += [_fmt(v) for v in u[k]]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_trajectory_csv(path):
    """Parse a trajectory CSV back into (grid, x, p, u)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    if not header or header[0] != "t":
        raise ValueError(f"{path}: missing or malformed trajectory header")
    n = sum(1 for c in header if c.startswith("x"))
    m = sum(1 for c in header if c.startswith("u"))
    if len(header) != 1 + 2 * n + m:
        raise ValueError(f"{path}: header columns do not form (t, x, p, u) blocks")
    data = np.asarray(rows, dtype=float)
    grid = data[:, 0]
    x = data[:, 1 : 1 + n]
    p = data[:, 1 + n : 1 + 2 * n]
    u = data[:, 1 + 2 * n :]
    return grid, x, p, u


def write_loss_history_csv(path, history):
    header = "iteration,stage,eps,cutoff,loss,state_residual,costate_residual,wall_ms"
    lines = [header]
    for rec in history:
        lines.append(
            ",".join(
                [
                    str(rec.iteration),
                    str(rec.stage),
                    _fmt(rec.eps),
                    _fmt(rec.cutoff),
                    _fmt(rec.total),
                    _fmt(rec.state_residual),
                    _fmt(rec.costate_residual),
                    _fmt(rec.wall_ms),
                ]
            )
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_metrics_json(path, metrics: dict):
    with open(path, "w") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write("\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
