"""
Scenario configuration, simulation runs, aggregation and CLI.
"""
from infoseek.scenario.config import ScenarioConfig, load_config, load_preset, resolve
from infoseek.scenario.metrics import RunMetrics
from infoseek.scenario.output import emit_csv
from infoseek.scenario.runner import run_scenario
from infoseek.scenario.simulate import RunState, init_run, run_once, step

__all__ = [
    "RunMetrics",
    "RunState",
    "ScenarioConfig",
    "emit_csv",
    "init_run",
    "load_config",
    "load_preset",
    "resolve",
    "run_once",
    "run_scenario",
    "step",
]
