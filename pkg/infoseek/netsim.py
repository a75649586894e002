"""
Synchronous-round communication fabric between CAs.

Every primitive is lossless and round-based: all sends of a round are
complete before any receive is visible. Transmissions are charged to a
``CostLedger`` in real-valued scalars.
"""
import logging
from collections import defaultdict, deque
from typing import AbstractSet, Dict, Mapping

import numpy as np

from infoseek.core import ParticleSet, TopologyError

logger = logging.getLogger(__name__)

Graph = Mapping[int, AbstractSet[int]]

ESTIMATION = "estimation"
CONTROL = "control"

NEIGHBOR = "neighbor"
FLOOD = "flood"
CONSENSUS = "consensus"


class CostLedger:
    """Counters of real values transmitted, per (time, CA, layer, primitive)."""

    def __init__(self):
        self.time = 0
        self._counts = defaultdict(int)

    def add(self, ca, layer, primitive, reals):
        if reals < 0:
            raise ValueError("transmitted size cannot be negative")
        self._counts[(self.time, int(ca), layer, primitive)] += int(reals)

    def total(self, ca=None, layer=None, primitive=None, time=None):
        return sum(
            count
            for (t, c, lay, prim), count in self._counts.items()
            if (ca is None or c == ca)
            and (layer is None or lay == layer)
            and (primitive is None or prim == primitive)
            and (time is None or t == time)
        )

    def rows(self):
        return [key + (count,) for key, count in sorted(self._counts.items())]

    def merge(self, other: "CostLedger"):
        for key, count in other._counts.items():
            self._counts[key] += count


class Unicast(dict):
    """Per-recipient payloads; each entry is charged separately."""


def payload_size(payload):
    if isinstance(payload, ParticleSet):
        return payload.size_in_reals()
    if isinstance(payload, np.ndarray):
        return int(payload.size)
    if isinstance(payload, Mapping):
        return sum(payload_size(v) for v in payload.values())
    if isinstance(payload, (list, tuple)):
        return sum(payload_size(v) for v in payload)
    return 1


def complete_graph(ids) -> Dict[int, frozenset]:
    ids = frozenset(ids)
    return {i: ids - {i} for i in ids}


def line_graph(ids) -> Dict[int, frozenset]:
    ids = list(ids)
    graph = {i: set() for i in ids}
    for a, b in zip(ids, ids[1:]):
        graph[a].add(b)
        graph[b].add(a)
    return {i: frozenset(ns) for i, ns in graph.items()}


def hop_distances(graph: Graph, source):
    dist = {source: 0}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nb in graph[node]:
            if nb not in dist:
                dist[nb] = dist[node] + 1
                queue.append(nb)
    return dist


def require_connected(graph: Graph):
    if not graph:
        return
    start = min(graph)
    reached = hop_distances(graph, start)
    missing = sorted(set(graph) - set(reached))
    if missing:
        raise TopologyError(
            f"communication graph disconnected: {missing} unreachable from {start}"
        )


def diameter(graph: Graph):
    require_connected(graph)
    return max((max(hop_distances(graph, n).values()) for n in graph), default=0)


def is_complete(graph: Graph):
    return all(len(graph[n]) == len(graph) - 1 for n in graph)


def neighbor_exchange(graph: Graph, payloads, ledger=None, layer=ESTIMATION):
    """One round: every CA broadcasts its payload to its graph neighbors.

    A ``Unicast`` payload sends a distinct entry to each listed neighbor;
    a None payload keeps the CA silent for the round.
    Returns ``{receiver: {sender: payload}}``.
    """
    missing = sorted(set(graph) - set(payloads))
    if missing:
        raise TopologyError(f"no payload for CAs {missing}")
    delivered = {ca: {} for ca in graph}
    for sender in sorted(graph):
        payload = payloads[sender]
        if payload is None:
            continue
        if isinstance(payload, Unicast):
            for receiver, part in payload.items():
                if receiver not in graph[sender]:
                    raise TopologyError(f"CA {sender} has no link to {receiver}")
                delivered[receiver][sender] = part
                if ledger is not None:
                    ledger.add(sender, layer, NEIGHBOR, payload_size(part))
        else:
            for receiver in graph[sender]:
                delivered[receiver][sender] = payload
            if ledger is not None and graph[sender]:
                ledger.add(sender, layer, NEIGHBOR, payload_size(payload))
    return delivered


def flood(graph: Graph, payloads, ledger=None, layer=CONTROL):
    """Relay every payload network-wide.

    Payloads are tagged with their origin; each CA keeps a seen-set and
    relays only what it learned in the previous round. Each round a CA
    transmits one frame the size of its own payload. Returns the per-CA
    knowledge ``{ca: {origin: payload}}`` and the number of rounds W.
    1 <= W <= |C| - 1 for two or more CAs; a lone CA already knows
    everything, so W = 0 and nothing is charged.
    """
    require_connected(graph)
    knowledge = {ca: {ca: payloads[ca]} for ca in graph}
    fresh = {ca: {ca} for ca in graph}
    rounds = 0
    while any(len(k) < len(graph) for k in knowledge.values()):
        incoming = {ca: set() for ca in graph}
        for sender in graph:
            for receiver in graph[sender]:
                incoming[receiver] |= fresh[sender]
        for ca in graph:
            new = incoming[ca] - set(knowledge[ca])
            for origin in new:
                knowledge[ca][origin] = payloads[origin]
            fresh[ca] = new
        rounds += 1
        if ledger is not None:
            for ca in graph:
                ledger.add(ca, layer, FLOOD, payload_size(payloads[ca]))
    logger.debug("flood over %d CAs took %d rounds", len(graph), rounds)
    return knowledge, rounds


def consensus_weights(graph: Graph):
    """Doubly stochastic weights: uniform on complete graphs, Metropolis otherwise."""
    order = sorted(graph)
    index = {ca: i for i, ca in enumerate(order)}
    size = len(order)
    if is_complete(graph):
        return order, np.full((size, size), 1.0 / size)
    weights = np.zeros((size, size))
    for a in order:
        for b in graph[a]:
            degree = max(len(graph[a]), len(graph[b]))
            weights[index[a], index[b]] = 1.0 / (1.0 + degree)
    weights[np.diag_indices(size)] = 1.0 - weights.sum(axis=1)
    return order, weights


def average_consensus(graph: Graph, x0, R, ledger=None, layer=ESTIMATION):
    """R synchronous averaging iterations; returns per-CA estimates of the mean."""
    if R < 0:
        raise ValueError("iteration count must be nonnegative")
    order, weights = consensus_weights(graph)
    state = np.stack([np.asarray(x0[ca], dtype=float) for ca in order])
    for _ in range(R):
        state = np.tensordot(weights, state, axes=1)
        if ledger is not None:
            per_ca = state[0].size
            for ca in order:
                ledger.add(ca, layer, CONSENSUS, per_ca * len(graph[ca]))
    return {ca: state[i] for i, ca in enumerate(order)}


def max_consensus(graph: Graph, x0, R, ledger=None, layer=ESTIMATION):
    """R rounds of neighborhood maxima; exact once R reaches the diameter."""
    order = sorted(graph)
    state = {ca: np.asarray(x0[ca], dtype=float) for ca in order}
    for _ in range(R):
        nxt = {}
        for ca in order:
            stacked = np.stack([state[ca]] + [state[nb] for nb in sorted(graph[ca])])
            nxt[ca] = stacked.max(axis=0)
            if ledger is not None:
                ledger.add(ca, layer, CONSENSUS, state[ca].size * len(graph[ca]))
        state = nxt
    return state
