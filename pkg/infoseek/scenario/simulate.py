"""
One Monte-Carlo run: sense, estimate, control, actuate.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Tuple

import numpy as np

from infoseek import control
from infoseek.core import MeasurementBundle, ParticleSet, Topology
from infoseek.estimation import SpawnInputs, censored, predict_target, run_spawn
from infoseek.models import measure
from infoseek.netsim import CostLedger
from infoseek.particles import (
    ResampleKind,
    StreamFactory,
    cov_trace,
    draw_target_prior,
    draw_uniform_prior,
    kernel_resample,
    resample_schedule,
    systematic_resample,
)
from infoseek.scenario.config import ScenarioConfig

logger = logging.getLogger(__name__)

SHARED_GROUP = 0


@dataclass
class RunState:
    """Mutable state of one run between time steps.

    Target beliefs are keyed by (group, target): cooperative modes keep one
    common belief under ``SHARED_GROUP``; NC keeps one per mobile CA.
    """

    cfg: ScenarioConfig
    run: int
    streams: StreamFactory
    truth: Dict[int, np.ndarray]
    beliefs: Dict[int, ParticleSet]
    target_beliefs: Dict[Tuple[int, int], ParticleSet]
    controls: Dict[int, np.ndarray]
    fixed_controls: Dict[int, np.ndarray]
    censored: FrozenSet[int]
    n: int = 0
    phase: Dict[object, int] = field(default_factory=dict)
    ledger: CostLedger = field(default_factory=CostLedger)
    diagnostics: control.GradientDiagnostics = field(
        default_factory=control.GradientDiagnostics
    )
    gradient_calls: int = 0
    self_sq_err: List[np.ndarray] = field(default_factory=list)
    target_sq_err: List[np.ndarray] = field(default_factory=list)
    trajectory: List[tuple] = field(default_factory=list)

    @property
    def anchor(self):
        return self.cfg.anchors[0]

    def target_group(self, holder):
        return holder if self.cfg.mode == "NC" else SHARED_GROUP


def sensing_topology(cfg: ScenarioConfig) -> Topology:
    targets_of = {ca: cfg.targets for ca in cfg.mobiles}
    if cfg.measure_peers and cfg.mode != "NC":
        return Topology.fully_connected(cfg.cas, cfg.anchors, targets_of)
    return Topology.anchor_star(cfg.anchors[0], cfg.mobiles, targets_of)


def heading_control(streams: StreamFactory, ca, u_max):
    """Fixed random heading, drawn once per run from the shared stream."""
    angle = streams.rng(None, f"heading-{ca}", 0).uniform(0.0, 2.0 * np.pi)
    return u_max * np.array([np.cos(angle), np.sin(angle)])


def init_run(cfg: ScenarioConfig, run: int) -> RunState:
    streams = StreamFactory(cfg.seed, run)
    truth = {a.id: a.initial_state() for a in cfg.agents}
    J = cfg.estimation.J
    beliefs = {a: ParticleSet.point_mass(truth[a], 1) for a in cfg.anchors}
    for ca in cfg.mobiles:
        beliefs[ca] = draw_uniform_prior(J, cfg.prior_box, streams.rng(ca, "prior", 0))
    groups = cfg.mobiles if cfg.mode == "NC" else (SHARED_GROUP,)
    target_beliefs = {}
    for m in cfg.targets:
        for g in groups:
            rng = streams.rng(m, "target-prior", 0)
            target_beliefs[(g, m)] = draw_target_prior(
                J, cfg.prior_box, cfg.target_velocity_mean, cfg.target_velocity_cov, rng
            )
    fixed = {}
    for ca in cfg.mobiles:
        spec = cfg.agent(ca)
        if cfg.mode == "CN" or not spec.controlled:
            fixed[ca] = heading_control(streams, ca, spec.u_max)
    controls = {ca: np.zeros(2) for ca in cfg.mobiles}
    threshold = cfg.estimation.censor_threshold
    flagged = frozenset(ca for ca in cfg.mobiles if censored(beliefs[ca], threshold))
    return RunState(
        cfg, run, streams, truth, beliefs, target_beliefs, controls, fixed, flagged
    )


def sense(state: RunState, topology: Topology, n) -> MeasurementBundle:
    entries = {}
    for l in topology.mobiles:
        rng = state.streams.rng(l, "measure", n)
        meas = state.cfg.meas_model(l)
        for k in sorted(topology.ca_neighbors[l] | topology.ca_targets[l]):
            entries[(l, k)] = measure(meas, state.truth[l], state.truth[k], rng)
    return MeasurementBundle(entries)


def _resample(state: RunState, key, belief: ParticleSet, rng_agent, purpose, n):
    settings = state.cfg.estimation
    state.phase[key] = state.phase.get(key, 0) + 1
    T = cov_trace(belief, dims=2)
    rng = state.streams.rng(rng_agent, purpose, n)
    kind = resample_schedule(T, state.phase[key])
    if settings.kernel_resampling and kind is ResampleKind.KERNEL:
        logger.debug("run %d n=%d: kernel resampling %s (T=%.3g)", state.run, n, key, T)
        return kernel_resample(
            belief,
            state.cfg.sigma0_2,
            rng,
            dims=2,
            exponent=settings.bandwidth_exponent,
        )
    return systematic_resample(belief, rng)


def _spawn_groups(state: RunState, topology: Topology):
    """(group key, sub-topology) pairs the estimation layer runs on."""
    if state.cfg.mode != "NC":
        return [(SHARED_GROUP, topology)]
    groups = []
    for l in topology.mobiles:
        sub = Topology.anchor_star(state.anchor, [l], {l: topology.ca_targets[l]})
        groups.append((l, sub))
    return groups


def estimate(state: RunState, topology: Topology, bundle: MeasurementBundle, n):
    cfg = state.cfg
    ca_model = cfg.ca_motion_model()
    tgt_model = cfg.target_motion_model()
    estimates = {}
    target_estimates = {}
    for group, sub in _spawn_groups(state, topology):
        posteriors = {ca: state.beliefs[ca] for ca in sub.cas}
        for m in sub.targets:
            posteriors[m] = state.target_beliefs[(group, m)]
        pairs = set(sub.measurement_pairs())
        own = {p: v for p, v in bundle.entries.items() if p in pairs}
        inputs = SpawnInputs(
            topology=sub,
            ca_motion={ca: ca_model for ca in sub.mobiles},
            target_motion={m: tgt_model for m in sub.targets},
            meas={ca: cfg.meas_model(ca) for ca in sub.mobiles},
            posteriors=posteriors,
            controls={ca: state.controls[ca] for ca in sub.mobiles},
            measurements=MeasurementBundle(own),
            censored=state.censored & frozenset(sub.mobiles),
            consensus_iters=cfg.estimation.consensus_iters,
        )
        table = run_spawn(inputs, cfg.estimation.P, state.streams, n, state.ledger)
        for ca in sub.mobiles:
            estimates[ca] = table.estimates[ca]
            belief = table.beliefs[ca]
            state.beliefs[ca] = _resample(state, ca, belief, ca, "resample", n)
        observed = set()
        for ca in sub.mobiles:
            if ca not in state.censored:
                observed.update(sub.ca_targets[ca])
        for m in sub.targets:
            target_estimates[(group, m)] = table.estimates[m]
            belief = table.beliefs[m]
            if m in observed:
                purpose = f"target-resample-{group}"
                belief = _resample(state, (group, m), belief, m, purpose, n)
            state.target_beliefs[(group, m)] = belief
    return estimates, target_estimates


def _control_samples(state: RunState, n):
    cfg = state.cfg
    Jc = cfg.control.J
    samples = {}
    for a in cfg.anchors:
        samples[a] = np.tile(state.truth[a], (Jc, 1))
    for ca in cfg.mobiles:
        belief = state.beliefs[ca]
        rng = state.streams.rng(ca, "control-subsample", n)
        idx = rng.choice(belief.J, size=Jc, replace=Jc > belief.J)
        samples[ca] = belief.samples[idx]
    return samples


def _target_next(state: RunState, group, targets, n):
    cfg = state.cfg
    Jc = cfg.control.J
    out = {}
    for m in targets:
        belief = state.target_beliefs[(group, m)]
        rng = state.streams.rng(m, f"control-target-{group}", n)
        idx = rng.choice(belief.J, size=Jc, replace=Jc > belief.J)
        sub = ParticleSet.equal_weights(belief.samples[idx])
        out[m] = predict_target(cfg.target_motion_model(), sub, rng).samples
    return out


def _plan_group(state: RunState, topology: Topology, group, controlled, samples, n):
    cfg = state.cfg
    ca_model = cfg.ca_motion_model()
    plan = control.ControlGroup(
        topology=topology,
        ca_samples={ca: samples[ca] for ca in topology.cas},
        target_next=_target_next(state, group, topology.targets, n),
        u_ref={ca: np.zeros(2) for ca in topology.cas},
        motion={ca: ca_model for ca in topology.mobiles},
        meas={ca: cfg.meas_model(ca) for ca in topology.mobiles},
        controlled=tuple(controlled),
        diagnostics=state.diagnostics,
    )
    u_max = {ca: cfg.agent(ca).u_max for ca in controlled}
    state.gradient_calls += 1
    return control.plan_controls(
        plan,
        u_max,
        cfg.scheme,
        cfg.control.J_prime,
        cfg.control.consensus_iters,
        state.streams,
        n,
        state.ledger,
    )


def plan(state: RunState, topology: Topology, n):
    """Choose the control each mobile CA applies before the next step."""
    cfg = state.cfg
    new = dict(state.fixed_controls)
    wanted = [ca for ca in cfg.mobiles if ca not in state.fixed_controls]
    if not wanted:
        return new
    samples = _control_samples(state, n)
    anchor = state.anchor
    lonely = [ca for ca in wanted if ca in state.censored]
    if cfg.mode == "NC":
        for ca in wanted:
            if ca in lonely:
                sub = Topology.anchor_star(anchor, [ca])
            else:
                sub = Topology.anchor_star(anchor, [ca], {ca: topology.ca_targets[ca]})
            new.update(_plan_group(state, sub, ca, [ca], samples, n))
        return new
    active = [ca for ca in cfg.mobiles if ca not in state.censored]
    if active:
        sub = topology.restricted(set(active) | {anchor}, observing=active)
        controlled = [ca for ca in wanted if ca in active]
        if controlled:
            new.update(_plan_group(state, sub, SHARED_GROUP, controlled, samples, n))
    for ca in lonely:
        alone = Topology.anchor_star(anchor, [ca])
        new.update(_plan_group(state, alone, SHARED_GROUP, [ca], samples, n))
    return new


def actuate(state: RunState, n):
    cfg = state.cfg
    ca_model = cfg.ca_motion_model()
    tgt_model = cfg.target_motion_model()
    for ca in cfg.mobiles:
        q = ca_model.draw_noise(state.streams.rng(ca, "process", n), 1)[0]
        state.truth[ca] = ca_model.evolve(state.truth[ca], state.controls[ca], q)
    for m in cfg.targets:
        q = tgt_model.draw_noise(state.streams.rng(m, "target-process", n), 1)[0]
        state.truth[m] = tgt_model.evolve(state.truth[m], np.zeros(2), q)


def _record(state: RunState, n, estimates, target_estimates):
    cfg = state.cfg
    errs = []
    for ca in cfg.mobiles:
        diff = estimates[ca][:2] - state.truth[ca][:2]
        errs.append(float(diff @ diff))
    state.self_sq_err.append(np.array(errs))
    t_errs = []
    for m in cfg.targets:
        for ca in cfg.mobiles:
            est = target_estimates[(state.target_group(ca), m)]
            diff = est[:2] - state.truth[m][:2]
            t_errs.append(float(diff @ diff))
    state.target_sq_err.append(np.array(t_errs))

    rows = state.trajectory
    for a in cfg.anchors:
        x = state.truth[a]
        rows.append((state.run, n, a, "anchor", a, *x[:2], None, None, *x[:2]))
    for ca in cfg.mobiles:
        x, est = state.truth[ca], estimates[ca]
        rows.append((state.run, n, ca, "mobile", ca, *x[:2], None, None, *est[:2]))
    for m in cfg.targets:
        x = state.truth[m]
        for ca in cfg.mobiles:
            est = target_estimates[(state.target_group(ca), m)]
            rows.append((state.run, n, m, "target", ca, *x[:4], *est[:2]))


def step(state: RunState) -> RunState:
    n = state.n + 1
    state.ledger.time = n
    topology = sensing_topology(state.cfg)
    bundle = sense(state, topology, n)
    estimates, target_estimates = estimate(state, topology, bundle, n)
    _record(state, n, estimates, target_estimates)
    state.controls = plan(state, topology, n)
    threshold = state.cfg.estimation.censor_threshold
    flagged = frozenset(
        ca for ca in state.cfg.mobiles if censored(state.beliefs[ca], threshold)
    )
    for ca in sorted(flagged ^ state.censored):
        status = "censored" if ca in flagged else "localized"
        logger.debug("run %d n=%d: CA %d %s", state.run, n, ca, status)
    state.censored = flagged
    actuate(state, n)
    state.n = n
    return state


@dataclass
class RunResult:
    run: int
    self_sq_err: np.ndarray
    target_sq_err: np.ndarray
    trajectory: List[tuple]
    cost_rows: List[tuple]
    gradient_calls: int
    clamped: int


def run_once(cfg: ScenarioConfig, run: int) -> RunResult:
    state = init_run(cfg, run)
    for _ in range(cfg.n_steps):
        step(state)
    logger.info(
        "run %d finished: %d steps, %d controller calls, %d clamped log ratios",
        run, cfg.n_steps, state.gradient_calls, state.diagnostics.clamped,
    )
    return RunResult(
        run=run,
        self_sq_err=np.stack(state.self_sq_err),
        target_sq_err=np.stack(state.target_sq_err),
        trajectory=state.trajectory,
        cost_rows=[(run,) + row for row in state.ledger.rows()],
        gradient_calls=state.gradient_calls,
        clamped=state.diagnostics.clamped,
    )
