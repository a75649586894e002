"""
Estimation layer: particle prediction and SPAWN belief propagation.

CA-to-CA factors use the neighbors' full beliefs; CA-target factors use
extrinsic information so a CA's own measurement is not fed back to it.
Target beliefs are fused across observers by average consensus over
per-sample log messages. All products are formed in the log domain.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Mapping, Tuple

import numpy as np
from scipy.special import logsumexp

from infoseek import netsim
from infoseek.core import (
    DegenerateWeightsError,
    DimensionError,
    MeasurementBundle,
    ParticleSet,
    Topology,
)
from infoseek.models import log_likelihood
from infoseek.particles import (
    StreamFactory,
    cov_trace,
    mmse_estimate,
    systematic_resample,
)

logger = logging.getLogger(__name__)

CENSOR_THRESHOLD = 10.0
EXTRINSIC_FLOOR = 1e-300
_PAIR_BLOCK = 1 << 21


def predict_ca(model, p: ParticleSet, u, rng) -> ParticleSet:
    noise = model.draw_noise(rng, p.J)
    moved = model.evolve(p.samples, np.asarray(u, float), noise)
    return ParticleSet(moved, p.weights)


def predict_target(model, p: ParticleSet, rng) -> ParticleSet:
    zero = np.zeros(model.control_dim)
    moved = model.evolve(p.samples, zero, model.draw_noise(rng, p.J))
    return ParticleSet(moved, p.weights)


def log_bp_messages(meas, y, receiver_samples, sender: ParticleSet):
    """log Σ_i w_i f(y | x^{(j)}, s_i) for every receiver sample x^{(j)}."""
    receiver_samples = np.atleast_2d(receiver_samples)
    log_w = sender.log_weights()
    rows = max(1, _PAIR_BLOCK // sender.J)
    out = np.empty(receiver_samples.shape[0])
    for start in range(0, receiver_samples.shape[0], rows):
        block = receiver_samples[start : start + rows, None, :]
        logf = log_likelihood(meas, y, block, sender.samples[None, :, :])
        out[start : start + rows] = logsumexp(logf + log_w[None, :], axis=1)
    return out


def bp_message_from_belief(meas, y, sender: ParticleSet, x_l):
    """Monte-Carlo value of ∫ f(y | x_l, x') b(x') dx'."""
    x_l = np.asarray(x_l, float)[None, :]
    return float(np.exp(log_bp_messages(meas, y, x_l, sender)[0]))


def bp_update_ca(
    predicted: ParticleSet, meas, neighbor_beliefs, target_extrinsics, measurements
):
    """Reweight a CA's predicted samples by its incoming messages.

    ``neighbor_beliefs`` maps neighbor CA -> belief, ``target_extrinsics``
    maps target -> ParticleSet carrying ψ_{m→l} on the target samples, and
    ``measurements`` maps agent -> y_{l,k}. Returns the new belief and the
    log messages received from each target (needed for ψ_{l→m}).
    """
    if not neighbor_beliefs and not target_extrinsics:
        return predicted, {}
    samples = predicted.samples
    log_w = predicted.log_weights()
    for k in sorted(neighbor_beliefs):
        msg = log_bp_messages(meas, measurements[k], samples, neighbor_beliefs[k])
        log_w = log_w + msg
    from_targets = {}
    for m in sorted(target_extrinsics):
        msg = log_bp_messages(meas, measurements[m], samples, target_extrinsics[m])
        from_targets[m] = msg
        log_w = log_w + msg
    return ParticleSet.from_log_weights(samples, log_w), from_targets


def bp_update_target(
    predicted: ParticleSet, observer_log_messages, graph=None, R=1, ledger=None
):
    """Fuse per-observer log messages on the common target samples.

    Observers run average consensus on their message vectors; the sum is
    recovered as |C_m| times the consensus value held by the lowest-id
    observer.
    """
    if not observer_log_messages:
        return predicted
    for ca, msg in observer_log_messages.items():
        if np.shape(msg) != (predicted.J,):
            raise DimensionError(
                f"observer {ca} sent {np.shape(msg)} values "
                f"for {predicted.J} target samples"
            )
    observers = frozenset(observer_log_messages)
    if graph is None:
        graph = netsim.complete_graph(observers)
    sub = {ca: frozenset(graph[ca]) & observers for ca in observers}
    agreed = netsim.average_consensus(
        sub, observer_log_messages, R, ledger, netsim.ESTIMATION
    )
    total = len(observers) * agreed[min(observers)]
    log_w = predicted.log_weights() + total
    return ParticleSet.from_log_weights(predicted.samples, log_w)


def log_extrinsic_info(log_belief_w, log_incoming, rel_floor=EXTRINSIC_FLOOR):
    """log ψ = log b − log max(msg, floor·max msg), normalized."""
    log_incoming = np.asarray(log_incoming, float)
    floor = np.max(log_incoming) + np.log(rel_floor)
    log_psi = np.asarray(log_belief_w, float) - np.maximum(log_incoming, floor)
    return log_psi - logsumexp(log_psi)


def extrinsic_info(belief_w, incoming_msg, eps=None):
    """ψ_j ∝ b_j / max(msg_j, eps).

    ``eps`` defaults to 1e-300 times the largest message.
    """
    belief_w = np.asarray(belief_w, float)
    incoming_msg = np.asarray(incoming_msg, float)
    if eps is None:
        eps = EXTRINSIC_FLOOR * incoming_msg.max()
    psi = belief_w / np.maximum(incoming_msg, eps)
    return psi / psi.sum()


def censored(belief: ParticleSet, threshold=CENSOR_THRESHOLD):
    """True while the CA is too poorly localized to act as a partner."""
    return cov_trace(belief, dims=2) >= threshold


@dataclass(frozen=True)
class SpawnInputs:
    """Everything one group of CAs feeds into a SPAWN time step.

    ``posteriors`` holds the previous posterior of every CA and target in
    the topology (anchors as point masses); ``controls`` the control that
    moved each mobile CA into this step.
    """

    topology: Topology
    ca_motion: Mapping[int, object]
    target_motion: Mapping[int, object]
    meas: Mapping[int, object]
    posteriors: Mapping[int, ParticleSet]
    controls: Mapping[int, np.ndarray]
    measurements: MeasurementBundle
    censored: FrozenSet[int] = frozenset()
    consensus_iters: int = 1


@dataclass
class BeliefTable:
    """Beliefs after iteration ``p`` plus the extrinsic information in flight."""

    beliefs: Dict[int, ParticleSet]
    p: int = 0
    log_psi_to_ca: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    log_psi_to_target: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    estimates: Dict[int, np.ndarray] = field(default_factory=dict)
    message_count: int = 0
    diverged: set = field(default_factory=set)

    def extrinsic(self, m, l):
        """ψ_{m→l} as normalized weights on the target samples."""
        samples = self.beliefs[m].samples
        return ParticleSet.from_log_weights(samples, self.log_psi_to_ca[(m, l)]).weights


def _broadcasters(topology: Topology, partners):
    # beliefs are only sent when some mobile neighbor measures the sender
    listening = set()
    for ca in topology.mobiles:
        listening |= topology.ca_neighbors[ca]
    return {ca for ca in topology.mobiles if ca in partners and ca in listening}


def _predict_all(inputs: SpawnInputs, streams: StreamFactory, time):
    topo = inputs.topology
    predicted = {}
    for ca in topo.cas:
        if ca in topo.anchors:
            predicted[ca] = inputs.posteriors[ca]
            continue
        rng = streams.rng(ca, "predict", time)
        predicted[ca] = predict_ca(
            inputs.ca_motion[ca], inputs.posteriors[ca], inputs.controls[ca], rng
        )
    for m in topo.targets:
        rng = streams.rng(m, "target-predict", time)
        prior = inputs.posteriors[m]
        predicted[m] = predict_target(inputs.target_motion[m], prior, rng)
    return predicted


def run_spawn(
    inputs: SpawnInputs, P, streams: StreamFactory, time, ledger=None
) -> BeliefTable:
    """Prediction followed by P synchronous SPAWN rounds.

    Every round reads the iteration p-1 beliefs and extrinsic information
    of all agents before any iteration p result is written, so the output
    does not depend on the order CAs are visited in.
    """
    if P < 1:
        raise ValueError("at least one message-passing iteration is required")
    topo = inputs.topology
    inputs.measurements.check_against(topo)
    predicted = _predict_all(inputs, streams, time)

    partners = set(topo.anchors)
    partners.update(ca for ca in topo.mobiles if ca not in inputs.censored)
    observing = partners - set(topo.anchors)
    observers = {m: sorted(cs & observing) for m, cs in topo.target_observers.items()}

    table = BeliefTable(beliefs=dict(predicted))
    for m, cs in observers.items():
        for l in cs:
            table.log_psi_to_ca[(m, l)] = predicted[m].log_weights()
            table.log_psi_to_target[(l, m)] = predicted[l].log_weights()

    talkers = _broadcasters(topo, partners)
    y = inputs.measurements
    for p in range(1, P + 1):
        payloads = {ca: None for ca in topo.cas}
        for ca in talkers:
            payloads[ca] = table.beliefs[ca]
        if p == 1:
            for a in topo.anchors:
                payloads[a] = mmse_estimate(predicted[a])
        netsim.neighbor_exchange(topo.links, payloads, ledger, netsim.ESTIMATION)

        updated = {}
        from_targets = {}
        for l in topo.mobiles:
            nbrs = {k: table.beliefs[k] for k in topo.ca_neighbors[l] if k in partners}
            exts = {}
            if l in observing:
                for m in topo.ca_targets[l]:
                    exts[m] = ParticleSet.from_log_weights(
                        predicted[m].samples, table.log_psi_to_ca[(m, l)]
                    )
            meas_l = {k: y[(l, k)] for k in list(nbrs) + list(exts)}
            try:
                updated[l], from_targets[l] = bp_update_ca(
                    predicted[l], inputs.meas[l], nbrs, exts, meas_l
                )
            except DegenerateWeightsError:
                logger.warning(
                    "CA %d: weights underflowed at n=%s p=%d, keeping prediction",
                    l, time, p,
                )
                table.diverged.add(l)
                updated[l], from_targets[l] = predicted[l], {}
            table.message_count += len(nbrs) + len(exts)

        to_targets = {}
        for m, cs in observers.items():
            msgs = {}
            for l in cs:
                sender = ParticleSet.from_log_weights(
                    predicted[l].samples, table.log_psi_to_target[(l, m)]
                )
                msgs[l] = log_bp_messages(
                    inputs.meas[l], y[(l, m)], predicted[m].samples, sender
                )
            to_targets[m] = msgs
            table.message_count += len(msgs)
            updated[m] = bp_update_target(
                predicted[m], msgs, topo.links, inputs.consensus_iters, ledger
            )

        for m, msgs in to_targets.items():
            for l, msg in msgs.items():
                table.log_psi_to_ca[(m, l)] = log_extrinsic_info(
                    updated[m].log_weights(), msg
                )
                if m in from_targets[l]:
                    table.log_psi_to_target[(l, m)] = log_extrinsic_info(
                        updated[l].log_weights(), from_targets[l][m]
                    )
        table.beliefs.update(updated)
        table.p = p

    table.estimates = {agent: mmse_estimate(b) for agent, b in table.beliefs.items()}
    return table


def spawn_local_only(inputs: SpawnInputs, P, streams, time, ledger=None) -> BeliefTable:
    """SPAWN self-localization with the target machinery switched off."""
    topo = inputs.topology
    local = Topology(topo.ca_neighbors, {}, topo.anchors, topo.links)
    entries = {
        pair: v
        for pair, v in inputs.measurements.entries.items()
        if pair[1] in topo.ca_neighbors
    }
    stripped = SpawnInputs(
        topology=local,
        ca_motion=inputs.ca_motion,
        target_motion={},
        meas=inputs.meas,
        posteriors={ca: inputs.posteriors[ca] for ca in topo.cas},
        controls=inputs.controls,
        measurements=MeasurementBundle(entries),
        censored=inputs.censored,
        consensus_iters=inputs.consensus_iters,
    )
    return run_spawn(stripped, P, streams, time, ledger)


def target_only_filter(
    model,
    prior: ParticleSet,
    observers,
    rng,
    graph=None,
    R=1,
    ledger=None,
    resample=True,
):
    """Bootstrap particle-filter step for a target seen by CAs with known states.

    ``observers`` maps CA -> (state, y, meas model).
    """
    predicted = predict_target(model, prior, rng)
    msgs = {
        l: log_likelihood(meas, y, np.asarray(state, float), predicted.samples)
        for l, (state, y, meas) in observers.items()
    }
    belief = bp_update_target(predicted, msgs, graph, R, ledger)
    if resample and msgs:
        return systematic_resample(belief, rng)
    return belief
