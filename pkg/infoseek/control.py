"""
Control layer: information-seeking gradient ascent.

Each controlled CA estimates the gradient of the mutual information
between the next states and the next measurements with respect to its
own control, from J joint state samples and J' future measurement draws
per joint sample. The joint likelihood over all measurements is either
assembled locally after flooding every CA's samples, or reconstructed
from average consensus over per-CA log-likelihood tensors.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import differential_entropy

from infoseek import netsim
from infoseek.core import DimensionError, ParticleSet, Topology, TopologyError
from infoseek.models import (
    LOG_2PI,
    LinearAdditive,
    SingularJacobianError,
    distance,
    log_likelihood,
    log_likelihood_grad_xl,
    noise_var,
)

logger = logging.getLogger(__name__)

FLOODING = "flooding"
CONSENSUS = "consensus"

_TENSOR_BLOCK = 1 << 22


@dataclass
class GradientDiagnostics:
    """Counts log-ratio entries that had to be clamped to zero."""

    clamped: int = 0
    evaluated: int = 0


@dataclass(frozen=True, eq=False)
class FutureSampleBank:
    """Joint samples and future measurement draws held by one CA.

    ``current`` are the CA samples x^{(j)} at the present step, ``propagated``
    the mean-propagated next states (targets: predicted samples) and ``y``
    maps each measurement pair (l, k) to a (J, J') array of draws.
    """

    current: Mapping[int, np.ndarray]
    propagated: Mapping[int, np.ndarray]
    y: Mapping[Tuple[int, int], np.ndarray]
    u_ref: Mapping[int, np.ndarray]

    @property
    def J(self):
        return next(iter(self.propagated.values())).shape[0]

    @property
    def J_prime(self):
        if not self.y:
            return 1
        return next(iter(self.y.values())).shape[1]

    @property
    def pairs(self):
        return tuple(sorted(self.y))

    def measurement_count(self):
        return len(self.y)


@dataclass(frozen=True, eq=False)
class Fstat:
    """Per-CA log-likelihood tensor F^{(l)} over (j, j', j'')."""

    ca: int
    values: np.ndarray


def propagate(ca_samples, u_ref, motion):
    """Mean-propagate each CA's samples at its reference control."""
    out = {}
    for ca, samples in ca_samples.items():
        model = motion.get(ca)
        out[ca] = samples if model is None else model.mean_evolve(samples, u_ref[ca])
    return out


def _future_measurements(propagated, pairs, meas, normals):
    y = {}
    for l, k in pairs:
        dist = distance(propagated[l], propagated[k])
        sd = np.sqrt(noise_var(meas[l], dist))
        y[(l, k)] = dist[:, None] + sd[:, None] * normals[(l, k)]
    return y


def draw_normals(l, topology: Topology, J, J_prime, rng):
    """Standard-normal draws for CA l's own future measurements, in agent order."""
    if l in topology.anchors:
        return {}
    own = sorted(topology.ca_neighbors[l] | topology.ca_targets[l])
    return {(l, k): rng.standard_normal((J, J_prime)) for k in own}


def _require_samples(needed, available):
    missing = sorted(set(needed) - set(available))
    if missing:
        raise TopologyError(f"no samples received for agents {missing}")


def sample_future_global(
    ca_samples, target_next, u_ref, motion, meas, topology, J_prime, streams, time
) -> FutureSampleBank:
    """Full bank after flooding: every measurement pair of the topology."""
    _require_samples(topology.cas, ca_samples)
    _require_samples(topology.targets, target_next)
    propagated = dict(propagate(ca_samples, u_ref, motion))
    propagated.update(target_next)
    J = next(iter(ca_samples.values())).shape[0]
    normals = {}
    for l in topology.mobiles:
        rng = streams.rng(l, "future-meas", time)
        normals.update(draw_normals(l, topology, J, J_prime, rng))
    y = _future_measurements(propagated, topology.measurement_pairs(), meas, normals)
    return FutureSampleBank(dict(ca_samples), propagated, y, dict(u_ref))


def ytilde_pairs(l, topology: Topology):
    """Pairs whose likelihood depends on x_l.

    These are CA l's own measurements plus the ones its neighbors take of it.
    """
    pairs = set(topology.measurement_pairs())
    own = [(l, k) for k in sorted(topology.ca_neighbors[l] | topology.ca_targets[l])]
    reverse = [(k, l) for k in sorted(topology.ca_neighbors[l])]
    return tuple(p for p in own + reverse if p in pairs)


def sample_future_local(l, propagated, own_y, received_y, u_ref, current, topology):
    """Assemble CA l's slice: own draws plus the reverse pairs sent by neighbors."""
    y = dict(own_y)
    for k in sorted(topology.ca_neighbors[l]):
        if k in topology.anchors:
            continue
        if (k, l) not in received_y:
            raise TopologyError(f"CA {l} did not receive y_({k},{l}) from its neighbor")
        y[(k, l)] = received_y[(k, l)]
    return FutureSampleBank(dict(current), dict(propagated), y, dict(u_ref))


def log_tilde_likelihood(meas, y, states, l, topology):
    """log of the product of every factor that involves x_l."""
    total = 0.0
    for a, b in ytilde_pairs(l, topology):
        total = total + log_likelihood(meas[a], y[(a, b)], states[a], states[b])
    return total


def tilde_likelihood(meas, y, states, l, topology):
    return np.exp(log_tilde_likelihood(meas, y, states, l, topology))


def _control_jacobians(model, current, u):
    current = np.atleast_2d(current)
    if isinstance(model, LinearAdditive):
        jac = model.mean_evolve_grad_u(current[0], u)
        return np.broadcast_to(jac, (current.shape[0],) + jac.shape)
    return np.stack([model.mean_evolve_grad_u(x, u) for x in current])


def tilde_score_u(meas, y, states, l, topology, model, current, u_l):
    """∂ log f̃ / ∂u_l through the chain rule x_l⁺ = g̃(x_l, u_l).

    ``states`` are propagated states with a sample axis first; ``y`` values
    may carry extra trailing axes (J' draws), which are broadcast.
    """
    pairs = ytilde_pairs(l, topology)
    if not pairs:
        return np.zeros(np.shape(u_l))
    single = np.ndim(states[l]) == 1
    x_l = np.atleast_2d(states[l])
    extra = max(np.ndim(y[pairs[0]]) - (0 if single else 1), 0)
    pad = (slice(None),) + (None,) * extra
    grad_x = 0.0
    for a, b in pairs:
        other = np.atleast_2d(states[b if a == l else a])
        term = log_likelihood_grad_xl(meas[a], y[(a, b)], x_l[pad], other[pad])
        grad_x = grad_x + term
    jac = _control_jacobians(model, current, u_l)
    jac = jac.reshape((jac.shape[0],) + (1,) * extra + jac.shape[1:])
    score = np.einsum("...d,...dc->...c", grad_x, jac)
    return score[0] if single else score


def tilde_likelihood_grad_u(meas, y, states, l, topology, model, current, u_l):
    score = tilde_score_u(meas, y, states, l, topology, model, current, u_l)
    return np.asarray(tilde_likelihood(meas, y, states, l, topology))[..., None] * score


def _pair_log_lik_block(propagated, y, pairs, meas, rows):
    """log f(y^{(j,j')} | x^{(j'')}) summed over ``pairs`` for j in ``rows``."""
    J = next(iter(propagated.values())).shape[0]
    count = rows.stop - rows.start
    J_prime = next(iter(y.values())).shape[1] if y else 1
    block = np.zeros((count, J_prime, J))
    for l, k in pairs:
        dist = distance(propagated[l], propagated[k])
        var = noise_var(meas[l], dist)
        resid = y[(l, k)][rows, :, None] - dist[None, None, :]
        block -= 0.5 * (LOG_2PI + np.log(var))[None, None, :]
        block -= 0.5 * resid * resid / var
    return block


def _cond_and_marg(block, start):
    count, _, J = block.shape
    idx = np.arange(count)
    cond = block[idx, :, start + idx]
    marg = logsumexp(block, axis=2) - np.log(J)
    return cond, marg


def _row_blocks(J, J_prime):
    step = max(1, _TENSOR_BLOCK // (J_prime * J))
    for start in range(0, J, step):
        yield slice(start, min(start + step, J))


def joint_log_terms(bank: FutureSampleBank, meas):
    """log f(y|x^{(j)}) and log f(y) estimates, each of shape (J, J')."""
    J, J_prime = bank.J, bank.J_prime
    cond = np.empty((J, J_prime))
    marg = np.empty((J, J_prime))
    for rows in _row_blocks(J, J_prime):
        block = _pair_log_lik_block(bank.propagated, bank.y, bank.pairs, meas, rows)
        cond[rows], marg[rows] = _cond_and_marg(block, rows.start)
    return cond, marg


def f_y_marginal(bank: FutureSampleBank, meas):
    """(1/J) Σ_j'' f(y^{(j,j')} | x^{(j'')}) for every draw."""
    return np.exp(joint_log_terms(bank, meas)[1])


def local_fstat(bank: FutureSampleBank, l, meas, topology) -> Fstat:
    """F^{(l)}: log-likelihood of CA l's own measurements over all (j, j', j'')."""
    own = [(a, b) for a, b in bank.pairs if a == l]
    values = _pair_log_lik_block(bank.propagated, bank.y, own, meas, slice(0, bank.J))
    return Fstat(l, values)


def _ratio_term(score, cond, marg, diagnostics):
    ratio = cond - marg
    bad = ~np.isfinite(ratio)
    if diagnostics is not None:
        diagnostics.evaluated += ratio.size
        diagnostics.clamped += int(bad.sum())
    if bad.any():
        logger.debug("clamped %d non-finite log ratios", int(bad.sum()))
        ratio = np.where(bad, 0.0, ratio)
    return np.mean(score * ratio[..., None], axis=(0, 1))


def _bank_score(bank: FutureSampleBank, meas, model, l, topology):
    return tilde_score_u(
        meas,
        bank.y,
        bank.propagated,
        l,
        topology,
        model,
        bank.current[l],
        bank.u_ref[l],
    )


def grad_DI_flooding(bank, meas, motion, l, topology, diagnostics=None, terms=None):
    """Score-function estimate of ∂ I / ∂u_l from the full bank."""
    cond, marg = joint_log_terms(bank, meas) if terms is None else terms
    score = _bank_score(bank, meas, motion[l], l, topology)
    if np.ndim(score) == 1:
        return score * 0.0
    return _ratio_term(score, cond, marg, diagnostics)


def grad_DI_consensus(
    bank, F_avg, group_size, meas, motion, l, topology, diagnostics=None
):
    """Same estimator with the joint log-likelihood rebuilt as |C|·F."""
    joint = group_size * np.asarray(F_avg)
    cond, marg = _cond_and_marg(joint, 0)
    score = _bank_score(bank, meas, motion[l], l, topology)
    if np.ndim(score) == 1:
        return score * 0.0
    return _ratio_term(score, cond, marg, diagnostics)


def grad_G(model, p, u_r):
    """Gradient of the Jacobian-determinant term; zero for constant Jacobians."""
    u_r = np.asarray(u_r, float)
    if getattr(model, "jacobian_constant", False):
        return np.zeros(u_r.shape)
    if not isinstance(p, ParticleSet):
        p = ParticleSet.equal_weights(p)
    dets = np.array([model.jacobian_det(x, u_r) for x in p.samples])
    if np.any(dets == 0.0):
        raise SingularJacobianError(
            "Jacobian determinant vanishes at the reference control"
        )
    grads = np.stack([model.jacobian_det_grad_u(x, u_r) for x in p.samples])
    terms = np.sign(dets)[:, None] * grads / np.abs(dets)[:, None]
    return p.weights @ terms


def control_update(grad_DI, grad_G, u_r, u_max):
    """Step from u_r along d = grad_DI − grad_G to the boundary ‖u‖ = u_max."""
    if u_max <= 0:
        raise ValueError("u_max must be positive")
    d = np.asarray(grad_DI, float) - np.asarray(grad_G, float)
    u_r = np.asarray(u_r, float)
    dd = float(d @ d)
    if dd == 0.0:
        return u_r.copy()
    ud = float(u_r @ d)
    slack = max(u_max * u_max - float(u_r @ u_r), 0.0)
    c = (-ud + np.sqrt(ud * ud + dd * slack)) / dd
    u_hat = u_r + c * d
    norm = np.linalg.norm(u_hat)
    if norm > u_max:
        u_hat = u_hat * (u_max / norm)
    return u_hat


def mutual_information_mc(current, target_next, u, motion, meas, pairs, normals):
    """Direct MC estimate of I(x; y) at controls ``u`` with fixed noise draws."""
    propagated = dict(propagate(current, u, motion))
    propagated.update(target_next)
    y = _future_measurements(propagated, pairs, meas, normals)
    bank = FutureSampleBank(dict(current), propagated, y, dict(u))
    cond, marg = joint_log_terms(bank, meas)
    return float(np.mean(cond - marg))


def entropy_scaling_gap(samples, scale):
    """h(s·a) − h(a) − log|s| with the Vasicek spacing estimator."""
    samples = np.asarray(samples, float)
    h_a = differential_entropy(samples)
    h_b = differential_entropy(scale * samples)
    return float(h_b - h_a - np.log(abs(scale)))


@dataclass
class ControlGroup:
    """CAs that jointly evaluate one information objective at one step.

    ``ca_samples`` are the control-layer subsamples (equal J for every CA),
    ``target_next`` the predicted common target samples.
    """

    topology: Topology
    ca_samples: Dict[int, np.ndarray]
    target_next: Dict[int, np.ndarray]
    u_ref: Dict[int, np.ndarray]
    motion: Mapping[int, object]
    meas: Mapping[int, object]
    controlled: Tuple[int, ...] = ()
    diagnostics: GradientDiagnostics = field(default_factory=GradientDiagnostics)


def _gradient_total(group, l, grad_di):
    samples = ParticleSet.equal_weights(group.ca_samples[l])
    return grad_di, grad_G(group.motion[l], samples, group.u_ref[l])


def gradients_flooding(group: ControlGroup, J_prime, streams, time, ledger=None):
    """Flood samples and u_r, then every controlled CA evaluates the full bank."""
    topo = group.topology
    payloads = {ca: (group.ca_samples[ca], group.u_ref[ca]) for ca in topo.cas}
    knowledge, _ = netsim.flood(topo.links, payloads, ledger, netsim.CONTROL)
    received = knowledge[min(topo.cas)]
    ca_samples = {ca: received[ca][0] for ca in topo.cas}
    u_ref = {ca: received[ca][1] for ca in topo.cas}
    bank = sample_future_global(
        ca_samples,
        group.target_next,
        u_ref,
        group.motion,
        group.meas,
        topo,
        J_prime,
        streams,
        time,
    )
    terms = joint_log_terms(bank, group.meas)
    out = {}
    for l in group.controlled:
        g = grad_DI_flooding(
            bank, group.meas, group.motion, l, topo, group.diagnostics, terms
        )
        out[l] = _gradient_total(group, l, g)
    return out


def gradients_consensus(group: ControlGroup, J_prime, R, streams, time, ledger=None):
    """Neighbor exchange of samples and reverse measurements, then J²J' consensus."""
    topo = group.topology
    links = topo.links
    payloads = {ca: (group.ca_samples[ca], group.u_ref[ca]) for ca in topo.cas}
    inbox = netsim.neighbor_exchange(links, payloads, ledger, netsim.CONTROL)
    J = next(iter(group.ca_samples.values())).shape[0]

    own_y, views = {}, {}
    for l in topo.cas:
        view_samples = {l: group.ca_samples[l]}
        view_u = {l: group.u_ref[l]}
        for k, (samples, u) in inbox[l].items():
            view_samples[k], view_u[k] = samples, u
        _require_samples(topo.ca_neighbors[l], view_samples)
        prop = propagate(view_samples, view_u, group.motion)
        prop.update(group.target_next)
        rng = streams.rng(l, "future-meas", time)
        normals = draw_normals(l, topo, J, J_prime, rng)
        own_y[l] = _future_measurements(prop, sorted(normals), group.meas, normals)
        views[l] = (view_samples, view_u, prop)

    sends = {}
    for l in topo.cas:
        sends[l] = netsim.Unicast(
            {k: own_y[l][(l, k)] for k in sorted(links[l]) if (l, k) in own_y[l]}
        )
    delivered = netsim.neighbor_exchange(links, sends, ledger, netsim.CONTROL)

    banks = {}
    for l in topo.cas:
        view_samples, view_u, prop = views[l]
        received = {(k, l): y for k, y in delivered[l].items()}
        banks[l] = sample_future_local(
            l, prop, own_y[l], received, view_u, view_samples, topo
        )

    # the J²J' consensus instances are independent, so they run block-wise
    size = len(topo.cas)
    cond = {l: np.empty((J, J_prime)) for l in group.controlled}
    marg = {l: np.empty((J, J_prime)) for l in group.controlled}
    for rows in _row_blocks(J, J_prime):
        local = {}
        for l in topo.cas:
            own = [p for p in banks[l].pairs if p[0] == l]
            local[l] = _pair_log_lik_block(
                banks[l].propagated, banks[l].y, own, group.meas, rows
            )
        agreed = netsim.average_consensus(links, local, R, ledger, netsim.CONTROL)
        for l in group.controlled:
            cond[l][rows], marg[l][rows] = _cond_and_marg(size * agreed[l], rows.start)

    out = {}
    for l in group.controlled:
        score = _bank_score(banks[l], group.meas, group.motion[l], l, topo)
        if np.ndim(score) == 1:
            g = np.zeros_like(score)
        else:
            g = _ratio_term(score, cond[l], marg[l], group.diagnostics)
        out[l] = _gradient_total(group, l, g)
    return out


def plan_controls(
    group: ControlGroup, u_max, scheme, J_prime, R, streams, time, ledger=None
):
    """Control update for every controlled CA of the group."""
    if J_prime < 1:
        raise DimensionError("J' must be at least 1")
    if scheme == FLOODING:
        grads = gradients_flooding(group, J_prime, streams, time, ledger)
    elif scheme == CONSENSUS:
        grads = gradients_consensus(group, J_prime, R, streams, time, ledger)
    else:
        raise ValueError(f"unknown processing scheme {scheme!r}")
    return {
        l: control_update(g_di, g_g, group.u_ref[l], u_max[l])
        for l, (g_di, g_g) in grads.items()
    }
