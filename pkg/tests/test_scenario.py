"""
End-to-end tests of the scenario driver on scaled-down presets.
"""
import os
import tempfile

import numpy as np
import pytest

from infoseek.particles import StreamFactory
from infoseek.scenario.config import resolve
from infoseek.scenario.metrics import rmse_from_trajectories
from infoseek.scenario.output import TRAJECTORY_HEADER, emit_csv
from infoseek.scenario.runner import run_scenario
from infoseek.scenario.simulate import heading_control, init_run, run_once, step

TINY = {
    "n_runs": 2,
    "n_steps": 3,
    "estimation.J": 60,
    "control.J": 10,
    "control.J_prime": 2,
}


def tiny(scenario, **fields):
    doc = {"scenario": scenario}
    doc.update(fields)
    return resolve(doc, overrides=TINY)


def desk_scale(scenario, **fields):
    """Preset at its own desk-scale sizes."""
    doc = {"scenario": scenario}
    doc.update(fields)
    return resolve(doc)


def _read(path):
    with open(path, "rb") as f:
        return f.read()


class TestDeterminism:
    """Fixed seed, identical output."""

    def test_repeated_runs_write_identical_files(self):
        cfg = tiny("coslat")
        with tempfile.TemporaryDirectory() as temp_dir:
            first = emit_csv(run_scenario(cfg), os.path.join(temp_dir, "a"))
            second = emit_csv(run_scenario(cfg), os.path.join(temp_dir, "b"))
            for a, b in zip(first, second):
                assert a.name == b.name
                assert _read(a) == _read(b), a.name

    def test_parallel_matches_serial(self):
        cfg = tiny("coop")
        serial = run_scenario(cfg, workers=1)
        parallel = run_scenario(cfg, workers=2)
        assert np.array_equal(serial.self_rmse, parallel.self_rmse)
        assert serial.trajectories == parallel.trajectories
        assert serial.cost_rows == parallel.cost_rows

    def test_runs_use_distinct_streams(self):
        cfg = tiny("coop")
        a, b = run_once(cfg, 0), run_once(cfg, 1)
        assert not np.array_equal(a.self_sq_err, b.self_sq_err)


class TestModes:
    def test_uncontrolled_mode_keeps_headings(self):
        cfg = tiny("coop", mode="CN")
        state = init_run(cfg, 0)
        fixed = {ca: u.copy() for ca, u in state.fixed_controls.items()}
        assert set(fixed) == set(cfg.mobiles)
        for ca, u in fixed.items():
            assert np.linalg.norm(u) == pytest.approx(cfg.agent(ca).u_max)
        for _ in range(3):
            step(state)
            for ca in cfg.mobiles:
                assert np.array_equal(state.controls[ca], fixed[ca])
        assert state.gradient_calls == 0
        assert not [r for r in state.ledger.rows() if r[2] == "control"]

    def test_headings_come_from_shared_stream(self):
        cfg = tiny("coop", mode="CN")
        state = init_run(cfg, 1)
        shared = StreamFactory(cfg.seed, 1)
        for ca in cfg.mobiles:
            angle = shared.rng(None, f"heading-{ca}", 0).uniform(0.0, 2.0 * np.pi)
            expected = cfg.agent(ca).u_max * np.array([np.cos(angle), np.sin(angle)])
            assert np.array_equal(state.fixed_controls[ca], expected)
            assert np.array_equal(
                heading_control(shared, ca, cfg.agent(ca).u_max), expected
            )
        # in a controlled mode only the uncontrolled CA keeps a fixed heading
        noncoop = tiny("noncoop")
        assert set(init_run(noncoop, 0).fixed_controls) == {5}

    def test_controlled_mode_calls_controller(self):
        metrics = run_scenario(tiny("coop"))
        assert all(calls > 0 for calls in metrics.gradient_calls)
        assert [r for r in metrics.cost_rows if r[3] == "control"]

    def test_noncooperative_mobiles_exchange_nothing(self):
        cfg = tiny("noncoop")
        metrics = run_scenario(cfg)
        mobile_estimation = [
            r[5]
            for r in metrics.cost_rows
            if r[2] in cfg.mobiles and r[3] == "estimation"
        ]
        assert sum(mobile_estimation) == 0

    def test_noncooperative_tracking_keeps_private_target_beliefs(self):
        cfg = tiny("coslat", mode="NC")
        state = init_run(cfg, 0)
        assert set(state.target_beliefs) == {
            (ca, m) for ca in cfg.mobiles for m in cfg.targets
        }
        step(state)
        assert len(state.target_sq_err[0]) == len(cfg.mobiles) * len(cfg.targets)

    def test_everyone_starts_censored(self):
        cfg = tiny("coop")
        state = init_run(cfg, 0)
        assert state.censored == frozenset(cfg.mobiles)
        for a in cfg.anchors:
            assert state.beliefs[a].J == 1


class TestOutputs:
    def test_files_and_row_counts(self):
        cfg = tiny("coslat")
        metrics = run_scenario(cfg)
        with tempfile.TemporaryDirectory() as temp_dir:
            emit_csv(metrics, temp_dir)
            with open(os.path.join(temp_dir, "rmse.csv"), newline="") as f:
                rmse = f.read().split("\n")
            with open(os.path.join(temp_dir, "trajectories.csv"), newline="") as f:
                traj = f.read().split("\n")
            with open(os.path.join(temp_dir, "cost.csv"), newline="") as f:
                cost = f.read().split("\n")

        assert rmse[0] == "n,self_rmse,target_rmse"
        assert len(rmse) == 1 + cfg.n_steps + 1
        assert all(len(line.split(",")) == 3 for line in rmse[1:-1])
        assert traj[0] == ",".join(TRAJECTORY_HEADER)
        per_step = (
            len(cfg.anchors) + len(cfg.mobiles) + len(cfg.targets) * len(cfg.mobiles)
        )
        assert len(traj) == 1 + cfg.n_runs * cfg.n_steps * per_step + 1
        assert len(cost) == 1 + len(metrics.cost_rows) + 1

    def test_self_localization_has_no_target_column_values(self):
        metrics = run_scenario(tiny("coop"))
        assert metrics.target_rmse is None
        with tempfile.TemporaryDirectory() as temp_dir:
            emit_csv(metrics, temp_dir)
            with open(os.path.join(temp_dir, "rmse.csv"), newline="") as f:
                lines = f.read().split("\n")
        assert lines[1].endswith(",")

    def test_rmse_recomputed_from_trajectories(self):
        metrics = run_scenario(tiny("coslat"))
        mobile = rmse_from_trajectories(metrics.trajectories, "mobile")
        target = rmse_from_trajectories(metrics.trajectories, "target")
        assert np.allclose(mobile, metrics.self_rmse, rtol=0.0, atol=1e-9)
        assert np.allclose(target, metrics.target_rmse, rtol=0.0, atol=1e-9)

    def test_per_agent_curves_pool_to_overall(self):
        metrics = run_scenario(tiny("coop"))
        squares = np.stack([metrics.agent_rmse[ca] ** 2 for ca in metrics.mobiles])
        assert np.allclose(np.sqrt(squares.mean(axis=0)), metrics.self_rmse)


@pytest.mark.slow
class TestTrends:
    """Desk-scale presets run in full; enable with INFOSEEK_SLOW=1.

    Curves are indexed by time step, so step n sits at index n - 1.
    """

    WORKERS = min(4, os.cpu_count() or 1)

    def _metrics(self, scenario, **fields):
        return run_scenario(desk_scale(scenario, **fields), workers=self.WORKERS)

    def test_noncooperative_localization(self):
        metrics = self._metrics("noncoop")
        for ca in (2, 3, 4):
            curve = metrics.agent_rmse[ca]
            assert curve[299] < 15.0, ca
            assert curve[299] < 0.25 * curve[9], ca
        # CA 5 keeps its random heading and never localizes
        assert metrics.agent_rmse[5][299] > 40.0

    def test_cooperative_control_beats_references(self):
        at_250 = {
            mode: self._metrics("coop", mode=mode).self_rmse[249]
            for mode in ("CC", "NC", "CN")
        }
        assert at_250["CC"] < at_250["NC"]
        assert at_250["CC"] < at_250["CN"]

    def test_controlled_tracking_beats_uncontrolled(self):
        controlled = self._metrics("coslat").target_rmse
        uncontrolled = self._metrics("coslat", mode="CN").target_rmse
        assert controlled[399] < controlled[39]
        assert controlled[399] < uncontrolled[399]
