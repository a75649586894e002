"""
Domain types shared by every layer: agent kinds, particle sets, topology
and measurement bundles, plus the package exception hierarchy.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import AbstractSet, Dict, FrozenSet, Iterable, Mapping, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

AgentId = int
Pair = Tuple[AgentId, AgentId]

WEIGHT_TOLERANCE = 1e-9


class InfoseekError(Exception):
    """Base class for all errors raised by this package."""


class TopologyError(InfoseekError):
    """Unknown agent ids, asymmetric neighborhoods or disconnected graphs."""


class DimensionError(InfoseekError, ValueError):
    """State, control or sample dimensions do not line up."""


class DegenerateWeightsError(InfoseekError):
    """All weights vanished (zero or -inf in the log domain)."""


class ConfigError(InfoseekError):
    """Invalid scenario configuration."""

    def __init__(self, message, field_path=None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class AgentKind(enum.Enum):
    ANCHOR = "anchor"
    MOBILE = "mobile"
    TARGET = "target"

    @property
    def is_ca(self):
        return self is not AgentKind.TARGET


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Weighted samples of one agent state.

    ``samples`` has shape (J, dim) and ``weights`` shape (J,). Both arrays
    are copied and made read-only so a set can be shared between runs.
    """

    samples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        weights = _frozen_array(self.weights)
        if samples.ndim == 1:
            samples = _frozen_array(samples[:, None])
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise DimensionError(
                f"samples must be a nonempty (J, dim) array, got {samples.shape}"
            )
        if weights.shape != (samples.shape[0],):
            raise DimensionError(
                f"{samples.shape[0]} samples but weights of shape {weights.shape}"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise DegenerateWeightsError("weights must be finite and nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise DegenerateWeightsError(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def equal_weights(cls, samples):
        samples = np.asarray(samples, dtype=float)
        count = samples.shape[0]
        return cls(samples, np.full(count, 1.0 / count))

    @classmethod
    def from_log_weights(cls, samples, log_weights):
        """Normalize log-domain weights; raises if every entry is -inf."""
        log_weights = np.asarray(log_weights, dtype=float)
        peak = np.max(log_weights)
        if not np.isfinite(peak):
            raise DegenerateWeightsError("all log-weights are -inf")
        w = np.exp(log_weights - peak)
        return cls(samples, w / w.sum())

    @classmethod
    def point_mass(cls, state, count):
        state = np.asarray(state, dtype=float)
        return cls.equal_weights(np.tile(state, (count, 1)))

    @property
    def J(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def log_weights(self):
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def reweighted(self, weights):
        return ParticleSet(self.samples, weights)

    def size_in_reals(self):
        return int(self.samples.size + self.weights.size)


def _freeze_map(mapping) -> Dict[AgentId, FrozenSet[AgentId]]:
    return {int(k): frozenset(int(v) for v in vs) for k, vs in mapping.items()}


@dataclass(frozen=True)
class Topology:
    """Neighborhood sets of one time step.

    ``ca_neighbors`` maps every CA (anchors included) to C_l and must be
    symmetric. ``ca_targets`` maps CAs to T_l. ``anchors`` never measure,
    so they contribute no entries to a measurement bundle. ``links`` is
    the communication graph among CAs and defaults to the complete graph.
    """

    ca_neighbors: Mapping[AgentId, FrozenSet[AgentId]]
    ca_targets: Mapping[AgentId, FrozenSet[AgentId]] = field(default_factory=dict)
    anchors: FrozenSet[AgentId] = frozenset()
    links: Mapping[AgentId, FrozenSet[AgentId]] = None

    def __post_init__(self):
        neighbors = _freeze_map(self.ca_neighbors)
        targets = _freeze_map(self.ca_targets)
        for ca in neighbors:
            targets.setdefault(ca, frozenset())
        unknown = set(targets) - set(neighbors)
        if unknown:
            raise TopologyError(f"target sets given for unknown CAs {sorted(unknown)}")
        _check_symmetric(neighbors, "measurement neighborhood")
        overlap = set().union(*targets.values()) & set(neighbors) if targets else set()
        if overlap:
            raise TopologyError(f"agents {sorted(overlap)} are both CA and target")
        anchors = frozenset(int(a) for a in self.anchors)
        if not anchors <= set(neighbors):
            raise TopologyError(f"anchors {sorted(anchors - set(neighbors))} unknown")
        for a in anchors:
            if targets[a]:
                raise TopologyError(f"anchor {a} cannot observe targets")
        if self.links is None:
            cas = frozenset(neighbors)
            links = {ca: cas - {ca} for ca in cas}
        else:
            links = _freeze_map(self.links)
            if set(links) != set(neighbors):
                raise TopologyError("communication graph must cover exactly the CAs")
            _check_symmetric(links, "communication graph")
        object.__setattr__(self, "ca_neighbors", neighbors)
        object.__setattr__(self, "ca_targets", targets)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "links", links)

    @classmethod
    def fully_connected(cls, cas, anchors=(), targets_of=None):
        cas = frozenset(cas)
        targets_of = targets_of or {}
        return cls(
            {ca: cas - {ca} for ca in cas},
            {ca: frozenset(targets_of.get(ca, ())) for ca in cas},
            frozenset(anchors),
        )

    @classmethod
    def anchor_star(cls, anchor, mobiles, targets_of=None, links=None):
        """Mobile CAs measure only the anchor; used for noncooperative runs."""
        mobiles = frozenset(mobiles)
        neighbors = {anchor: mobiles}
        neighbors.update({m: frozenset({anchor}) for m in mobiles})
        targets_of = targets_of or {}
        return cls(
            neighbors,
            {ca: frozenset(targets_of.get(ca, ())) for ca in neighbors},
            frozenset({anchor}),
            links,
        )

    @property
    def cas(self):
        return tuple(sorted(self.ca_neighbors))

    @property
    def mobiles(self):
        return tuple(ca for ca in self.cas if ca not in self.anchors)

    @property
    def targets(self):
        found = set()
        for ts in self.ca_targets.values():
            found |= ts
        return tuple(sorted(found))

    @property
    def target_observers(self) -> Dict[AgentId, FrozenSet[AgentId]]:
        observers = {m: set() for m in self.targets}
        for ca, ts in self.ca_targets.items():
            for m in ts:
                observers[m].add(ca)
        return {m: frozenset(cs) for m, cs in observers.items()}

    def measurement_pairs(self) -> Tuple[Pair, ...]:
        """All (l, k) with l a measuring CA and k in A_l, in canonical order."""
        pairs = []
        for ca in self.mobiles:
            for k in sorted(self.ca_neighbors[ca] | self.ca_targets[ca]):
                pairs.append((ca, k))
        return tuple(pairs)

    def restricted(self, keep_cas: Iterable[AgentId], observing: AbstractSet = None):
        """Sub-topology on ``keep_cas``; only CAs in ``observing`` keep targets."""
        keep = frozenset(keep_cas)
        observing = keep if observing is None else frozenset(observing) & keep
        return Topology(
            {ca: self.ca_neighbors[ca] & keep for ca in keep},
            {
                ca: self.ca_targets[ca] if ca in observing else frozenset()
                for ca in keep
            },
            self.anchors & keep,
            {ca: self.links[ca] & keep for ca in keep},
        )


def _check_symmetric(mapping, label):
    for a, bs in mapping.items():
        if a in bs:
            raise TopologyError(f"{label}: agent {a} lists itself")
        for b in bs:
            if b not in mapping or a not in mapping[b]:
                raise TopologyError(f"{label} is not symmetric between {a} and {b}")


@dataclass(frozen=True)
class MeasurementBundle:
    """Pairwise range measurements y_{l,k} acquired at one time step."""

    entries: Mapping[Pair, float]

    def __post_init__(self):
        object.__setattr__(
            self,
            "entries",
            {(int(l), int(k)): float(v) for (l, k), v in self.entries.items()},
        )

    def check_against(self, topology: Topology):
        expected = set(topology.measurement_pairs())
        got = set(self.entries)
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise TopologyError(
                f"measurement bundle mismatch: missing {missing}, unexpected {extra}"
            )

    def __getitem__(self, pair):
        return self.entries[pair]

    def __contains__(self, pair):
        return pair in self.entries


def neighbors_of(topology: Topology, l: AgentId):
    """Return (C_l, T_l) for CA ``l``."""
    if l not in topology.ca_neighbors:
        kind = "a target" if l in topology.targets else "unknown"
        raise TopologyError(f"agent {l} is {kind}, not a CA of this topology")
    return topology.ca_neighbors[l], topology.ca_targets[l]


def stack_joint_sample(parts: Sequence[ParticleSet], j: int):
    """Concatenate the j-th sample of every set, in the given order."""
    if not parts:
        raise DimensionError("no particle sets to stack")
    counts = {p.J for p in parts}
    if len(counts) != 1:
        raise DimensionError(f"particle sets disagree on J: {sorted(counts)}")
    count = counts.pop()
    if not 0 <= j < count:
        raise IndexError(f"sample index {j} out of range for J={count}")
    return np.concatenate([p.samples[j] for p in parts])


def positions(states):
    """Position sub-vector (first two components) of one or many states."""
    return np.asarray(states, dtype=float)[..., :2]
