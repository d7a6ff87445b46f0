"""Binary clustered associative memory (Neural Clique network) and its
unclustered Willshaw-style variant.

Messages hold one unit per cluster; storing a message connects all of its
units pairwise.  Retrieval starts from the known units and repeatedly scores
every unit by the number of active units it is connected to, plus ``gamma``
for units that were already active, keeping one winner per cluster (or the
global top ``c`` in the Willshaw variant).
"""

from __future__ import annotations

from math import comb

import numpy as np

from .dynamics import (
    ERASED,
    TiePolicy,
    activity_to_message,
    message_activity,
    message_units,
    wta_clustered,
    wta_global,
)


class CliqueNetwork:
    """Symmetric boolean adjacency over ``c * ell`` units."""

    def __init__(self, c: int, ell: int):
        if c < 2 or ell < 1:
            raise ValueError("need at least two clusters and one unit per cluster")
        self.c = c
        self.ell = ell
        self.n = c * ell
        self.adjacency = np.zeros((self.n, self.n), dtype=bool)

    def store(self, msg) -> "CliqueNetwork":
        msg = np.asarray(msg)
        if len(msg) != self.c or np.any(msg == ERASED):
            raise ValueError("can only store fully specified messages")
        if np.any((msg < 0) | (msg >= self.ell)):
            raise ValueError(f"message index out of range [0, {self.ell})")
        units = message_units(msg, self.ell)
        self.adjacency[np.ix_(units, units)] = True
        self.adjacency[units, units] = False
        return self

    def store_many(self, messages) -> "CliqueNetwork":
        for msg in messages:
            self.store(msg)
        return self

    def edge_count(self) -> int:
        """Undirected edges."""
        return int(np.count_nonzero(self.adjacency)) // 2

    def edges(self) -> np.ndarray:
        """Sorted (i, j) pairs with i < j."""
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return np.column_stack([i, j]).astype(np.int64)

    @classmethod
    def from_edges(cls, c: int, ell: int, edges) -> "CliqueNetwork":
        net = cls(c, ell)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            i, j = edges[:, 0], edges[:, 1]
            if np.any(i // ell == j // ell):
                raise ValueError("intra-cluster edge in clique network")
            net.adjacency[i, j] = True
            net.adjacency[j, i] = True
        return net

    def __eq__(self, other):
        if not isinstance(other, CliqueNetwork):
            return NotImplemented
        return (self.c, self.ell) == (other.c, other.ell) and np.array_equal(
            self.adjacency, other.adjacency)


def store(net: CliqueNetwork, msg) -> CliqueNetwork:
    return net.store(msg)


def density(net: CliqueNetwork) -> float:
    return net.edge_count() / (comb(net.c, 2) * net.ell ** 2)


def retrieve(net: CliqueNetwork, partial, gamma: float = 1.0, iterations: int = 6,
             tie_policy=TiePolicy.LOWEST_INDEX, rng=None) -> np.ndarray:
    partial = np.asarray(partial)
    if np.all(partial == ERASED):
        raise ValueError("probe has no known position")
    V = message_activity(partial, net.n, net.ell)
    for _ in range(iterations):
        scores = net.adjacency[V].sum(axis=0) + gamma * V
        V = wta_clustered(scores, net.c, net.ell, tie_policy, rng)
    return activity_to_message(V, net.c, net.ell)


def retrieve_batch(net: CliqueNetwork, partials, gamma: float = 1.0, iterations: int = 6,
                   chunk: int = 1024, tie_policy=TiePolicy.LOWEST_INDEX,
                   rng=None) -> np.ndarray:
    """Vectorized :func:`retrieve` for many probes; results match it exactly.

    With lowest-index ties each cluster holds at most one active unit, so
    the state of a probe fits in ``c`` integers. Keep-all ties need the full
    activity matrix. Seeded-random ties consume ``rng`` probe by probe, so they
    run through :func:`retrieve` in order.
    """
    tie_policy = TiePolicy(tie_policy)
    partials = np.asarray(partials, dtype=np.int64).reshape(-1, net.c)
    if np.any(np.all(partials == ERASED, axis=1)):
        raise ValueError("probe has no known position")
    if tie_policy is TiePolicy.SEEDED_RANDOM:
        return np.array([retrieve(net, p, gamma, iterations, tie_policy, rng)
                         for p in partials], dtype=np.int64).reshape(-1, net.c)
    step = _retrieve_chunk if tie_policy is TiePolicy.LOWEST_INDEX else _retrieve_chunk_keep_all
    return np.concatenate(
        [step(net, partials[i:i + chunk], gamma, iterations)
         for i in range(0, len(partials), chunk)] or [partials.copy()])


def _retrieve_chunk(net, state, gamma, iterations):
    c, ell = net.c, net.ell
    offsets = np.arange(c) * ell
    b, k = np.indices(state.shape)
    for _ in range(iterations):
        live = state != ERASED
        units = np.where(live, state + offsets, 0)
        grid = (net.adjacency[units] & live[:, :, None]).sum(axis=1, dtype=np.float64)
        grid = grid.reshape(len(state), c, ell)
        grid[b[live], k[live], state[live]] += gamma
        best = grid.max(axis=2)
        state = np.where(best > 0, grid.argmax(axis=2), ERASED)
    return state


def _retrieve_chunk_keep_all(net, partials, gamma, iterations):
    c, ell = net.c, net.ell
    B = len(partials)
    V = np.zeros((B, c * ell), dtype=np.float32)
    r, k = np.nonzero(partials != ERASED)
    V[r, k * ell + partials[r, k]] = 1
    A = net.adjacency.astype(np.float32)
    for _ in range(iterations):
        # link counts are small integers, exact in float32; gamma is added in float64
        scores = (V @ A).astype(np.float64) + gamma * V
        scores = scores.reshape(B, c, ell)
        best = scores.max(axis=2, keepdims=True)
        V = ((scores == best) & (best > 0)).reshape(B, -1).astype(np.float32)
    per_cluster = V.reshape(B, c, ell)
    winners = per_cluster.sum(axis=2)
    return np.where(winners == 1, per_cluster.argmax(axis=2), ERASED).astype(np.int64)


def retrieve_willshaw(net: CliqueNetwork, probe, c: int, iterations: int = 6,
                      gamma: float = 1.0, tie_policy=TiePolicy.LOWEST_INDEX,
                      rng=None) -> np.ndarray:
    """Unclustered retrieval: keep the ``c`` best-scoring units each round."""
    V = np.zeros(net.n, dtype=bool)
    V[np.asarray(probe, dtype=np.int64)] = True
    for _ in range(iterations):
        if not V.any():
            break
        scores = net.adjacency[V].sum(axis=0) + gamma * V
        V = wta_global(scores, c, tie_policy, rng)
    return np.flatnonzero(V)
