"""
Aggregation of per-run errors into RMSE curves.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np


@dataclass
class RunMetrics:
    """RMSE curves over all runs plus the raw per-run records.

    RMSE at time n is the square root of the mean squared error over runs
    and agents, never a mean of per-run RMSEs.
    """

    n_steps: int
    mobiles: Sequence[int]
    self_rmse: np.ndarray
    target_rmse: Optional[np.ndarray]
    agent_rmse: Dict[int, np.ndarray]
    trajectories: List[tuple]
    cost_rows: List[tuple]
    gradient_calls: List[int]
    clamped: int = 0


def aggregate(results, mobiles) -> RunMetrics:
    results = sorted(results, key=lambda r: r.run)
    self_sq = np.stack([r.self_sq_err for r in results])  # (runs, steps, mobiles)
    self_rmse = np.sqrt(self_sq.mean(axis=(0, 2)))
    agent_rmse = {
        ca: np.sqrt(self_sq[:, :, i].mean(axis=0)) for i, ca in enumerate(mobiles)
    }
    target_sq = np.stack([r.target_sq_err for r in results])
    target_rmse = np.sqrt(target_sq.mean(axis=(0, 2))) if target_sq.shape[2] else None
    trajectories = [row for r in results for row in r.trajectory]
    cost_rows = [row for r in results for row in r.cost_rows]
    return RunMetrics(
        n_steps=self_sq.shape[1],
        mobiles=tuple(mobiles),
        self_rmse=self_rmse,
        target_rmse=target_rmse,
        agent_rmse=agent_rmse,
        trajectories=trajectories,
        cost_rows=cost_rows,
        gradient_calls=[r.gradient_calls for r in results],
        clamped=sum(r.clamped for r in results),
    )


def rmse_from_trajectories(rows, kind="mobile"):
    """Recompute an RMSE curve from trajectory rows of one agent kind."""
    by_time = {}
    for row in rows:
        if row[3] != kind:
            continue
        n, x1, x2, e1, e2 = row[1], row[5], row[6], row[9], row[10]
        by_time.setdefault(n, []).append((e1 - x1) ** 2 + (e2 - x2) ** 2)
    return np.array([np.sqrt(np.mean(by_time[n])) for n in sorted(by_time)])
