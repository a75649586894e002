"""
Monte-Carlo orchestration over independent seeded runs.
"""
import logging
from concurrent.futures import ProcessPoolExecutor

from infoseek.scenario.config import ScenarioConfig
from infoseek.scenario.metrics import RunMetrics, aggregate
from infoseek.scenario.simulate import run_once

logger = logging.getLogger(__name__)


def run_scenario(cfg: ScenarioConfig, workers=None) -> RunMetrics:
    """Run ``cfg.n_runs`` runs and reduce them in run order.

    Runs draw from disjoint random streams, so serial and parallel
    execution give identical metrics.
    """
    workers = cfg.workers if workers is None else workers
    runs = range(cfg.n_runs)
    logger.info(
        "%s: mode=%s scheme=%s, %d runs x %d steps, J=%d, control J=%d J'=%d",
        cfg.scenario, cfg.mode, cfg.scheme, cfg.n_runs, cfg.n_steps,
        cfg.estimation.J, cfg.control.J, cfg.control.J_prime,
    )
    if workers > 1 and cfg.n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_once, [cfg] * cfg.n_runs, runs))
    else:
        results = [run_once(cfg, run) for run in runs]
    return aggregate(results, cfg.mobiles)
