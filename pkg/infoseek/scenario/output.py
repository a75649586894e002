"""
CSV emission: UTF-8, LF line endings, shortest round-trip float text.
"""
import csv
import logging
import numbers
from pathlib import Path

from infoseek.scenario.metrics import RunMetrics

logger = logging.getLogger(__name__)

RMSE_HEADER = ("n", "self_rmse", "target_rmse")
AGENT_RMSE_HEADER = ("n", "agent", "rmse")
TRAJECTORY_HEADER = (
    "run",
    "n",
    "agent",
    "kind",
    "estimator",
    "x1",
    "x2",
    "v1",
    "v2",
    "est_x1",
    "est_x2",
)
COST_HEADER = ("run", "n", "ca", "layer", "primitive", "reals")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, numbers.Integral):
        return str(int(value))
    return repr(float(value))


def _write(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def emit_csv(metrics: RunMetrics, out_dir):
    """Write rmse.csv, agent_rmse.csv, trajectories.csv and cost.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    rmse_rows = []
    for i in range(metrics.n_steps):
        target = None if metrics.target_rmse is None else metrics.target_rmse[i]
        rmse_rows.append((i + 1, metrics.self_rmse[i], target))
    written.append(out / "rmse.csv")
    _write(written[-1], RMSE_HEADER, rmse_rows)

    agent_rows = [
        (i + 1, ca, metrics.agent_rmse[ca][i])
        for i in range(metrics.n_steps)
        for ca in metrics.mobiles
    ]
    written.append(out / "agent_rmse.csv")
    _write(written[-1], AGENT_RMSE_HEADER, agent_rows)

    written.append(out / "trajectories.csv")
    _write(written[-1], TRAJECTORY_HEADER, metrics.trajectories)

    written.append(out / "cost.csv")
    _write(written[-1], COST_HEADER, metrics.cost_rows)

    logger.info("wrote %s", ", ".join(str(p) for p in written))
    return written
