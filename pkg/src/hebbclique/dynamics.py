"""Recurrent network with consolidated Hebbian learning under an energy limit.

One iteration of the network is::

    V(t+1) = H_c(W(t) V(t) + I(t))
    W(t+1) = S(eps * V(t) (x) V(t) + W(t))

where ``H_c`` is a winner-take-all rule (global top-c or one winner per
cluster) and ``S`` applies the consolidation sigmoid to every weight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .noise import NoiseChannel, sample_noisy_activity

ERASED = -1
PRUNE_BELOW = 1e-9


class EnergyRule(str, enum.Enum):
    GLOBAL_TOP_C = "global"
    CLUSTERED = "clustered"


class TiePolicy(str, enum.Enum):
    LOWEST_INDEX = "lowest_index"
    KEEP_ALL = "keep_all"
    SEEDED_RANDOM = "seeded_random"


@dataclass(frozen=True)
class NetworkConfig:
    n: int
    c: int
    ell: int
    epsilon: float
    gamma: float = 1.0
    energy_rule: EnergyRule = EnergyRule.CLUSTERED
    tie_policy: TiePolicy = TiePolicy.LOWEST_INDEX
    decode_iterations: int = 6
    self_loops: bool = False

    def __post_init__(self):
        object.__setattr__(self, "energy_rule", EnergyRule(self.energy_rule))
        object.__setattr__(self, "tie_policy", TiePolicy(self.tie_policy))
        if self.n < 1 or self.c < 1 or self.ell < 1:
            raise ValueError("n, c and ell must be positive")
        if self.c > self.n:
            raise ValueError(f"c={self.c} exceeds n={self.n}")
        if self.energy_rule is EnergyRule.CLUSTERED and self.n != self.c * self.ell:
            raise ValueError(f"clustered rule needs n = c*ell, got {self.n} != {self.c}*{self.ell}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.decode_iterations < 1:
            raise ValueError("decode_iterations must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_rule"] = self.energy_rule.value
        d["tie_policy"] = self.tie_policy.value
        return d


def sigmoid(x):
    """Consolidation sigmoid: 0 at 0, 1/2 at 1/2, 1 from 1 onwards.

    Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0.0) & (x < 1.0)
    xi = np.where(inside, x, 0.5)
    y = 0.5 + 0.5 * np.tanh(np.tan(np.pi * xi - np.pi / 2))
    out = np.where(inside, y, np.where(x >= 1.0, 1.0, 0.0))
    return float(out) if out.ndim == 0 else out


def _sigmoid_scalar(x: float) -> float:
    if x >= 1.0:
        return 1.0
    if x <= 0.0:
        return 0.0
    return 0.5 + 0.5 * math.tanh(math.tan(math.pi * x - math.pi / 2))


def _break_ties(candidates: np.ndarray, k: int, tie_policy: TiePolicy, rng) -> np.ndarray:
    """Pick ``k`` of the tied ``candidates`` (sorted ascending)."""
    if tie_policy is TiePolicy.KEEP_ALL or k >= len(candidates):
        return candidates
    if tie_policy is TiePolicy.LOWEST_INDEX:
        return candidates[:k]
    if rng is None:
        raise ValueError("SeededRandom tie policy needs an rng")
    return np.sort(rng.choice(candidates, size=k, replace=False))


def wta_global(scores, c: int, tie_policy=TiePolicy.LOWEST_INDEX, rng=None) -> np.ndarray:
    """Keep the ``c`` highest strictly positive scores active."""
    scores = np.asarray(scores, dtype=np.float64)
    tie_policy = TiePolicy(tie_policy)
    out = np.zeros(scores.shape, dtype=bool)
    positive = np.flatnonzero(scores > 0)
    if len(positive) <= c:
        out[positive] = True
        return out
    cutoff = np.sort(scores[positive])[-c]
    above = positive[scores[positive] > cutoff]
    tied = positive[scores[positive] == cutoff]
    out[above] = True
    out[_break_ties(tied, c - len(above), tie_policy, rng)] = True
    return out


def wta_clustered(scores, c: int, ell: int, tie_policy=TiePolicy.LOWEST_INDEX,
                  rng=None) -> np.ndarray:
    """Keep one strictly positive winner per cluster of ``ell`` units."""
    scores = np.asarray(scores, dtype=np.float64).reshape(c, ell)
    tie_policy = TiePolicy(tie_policy)
    best = scores.max(axis=1)
    out = np.zeros((c, ell), dtype=bool)
    if tie_policy is TiePolicy.LOWEST_INDEX:
        live = best > 0
        out[np.flatnonzero(live), scores.argmax(axis=1)[live]] = True
        return out.reshape(-1)
    for k in np.flatnonzero(best > 0):
        tied = np.flatnonzero(scores[k] == best[k])
        out[k, _break_ties(tied, 1, tie_policy, rng)] = True
    return out.reshape(-1)


def apply_wta(scores, config: NetworkConfig, rng=None) -> np.ndarray:
    if config.energy_rule is EnergyRule.CLUSTERED:
        return wta_clustered(scores, config.c, config.ell, config.tie_policy, rng)
    return wta_global(scores, config.c, config.tie_policy, rng)


class WeightMatrix:
    """Symmetric weights in [0, 1] with sparse bookkeeping of transient edges.

    Weights live in the upper triangle of a dense array (``i < j``, plus the
    diagonal when self-loops are enabled).  Entries equal to 0 or 1 are
    fixed points of the sigmoid, so an update only has to visit the edges
    incremented in that step and the edges whose weight is strictly between
    0 and 1.  The latter are tracked as flat indices in ``_transient``.
    """

    def __init__(self, n: int, self_loops: bool = False):
        self.n = n
        self.self_loops = self_loops
        self._w = np.zeros((n, n), dtype=np.float64)
        self._transient = np.empty(0, dtype=np.int64)
        self._mark = None
        self._sym = None

    # -- queries --------------------------------------------------------

    def __getitem__(self, ij) -> float:
        i, j = ij
        if i == j and not self.self_loops:
            return 0.0
        return float(self._w[min(i, j), max(i, j)])

    def dense(self) -> np.ndarray:
        """Full symmetric n x n weight array (cached until the next update)."""
        if self._sym is None:
            diag = np.diag(np.diag(self._w))
            self._sym = self._w + self._w.T - diag
        return self._sym

    def _pairs(self, flat: np.ndarray) -> np.ndarray:
        return np.column_stack(np.divmod(flat, self.n)).astype(np.int64)

    def consolidated_edges(self) -> np.ndarray:
        """Sorted (i, j) pairs, i <= j, whose weight is exactly 1."""
        return self._pairs(np.flatnonzero(self._w.reshape(-1) == 1.0))

    def transient(self) -> dict[tuple[int, int], float]:
        flat = np.sort(self._transient)
        w = self._w.reshape(-1)[flat]
        return {(int(i), int(j)): float(v) for (i, j), v in zip(self._pairs(flat), w)}

    def binarized(self, threshold: float = 0.5) -> np.ndarray:
        """Upper-triangle boolean array of edges with weight >= threshold."""
        return np.triu(self._w >= threshold, k=0 if self.self_loops else 1)

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return (self.n == other.n and self.self_loops == other.self_loops
                and np.array_equal(self._w, other._w))

    def copy(self) -> "WeightMatrix":
        out = WeightMatrix(self.n, self.self_loops)
        out._w = self._w.copy()
        out._transient = self._transient.copy()
        return out

    # -- construction ---------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, consolidated, transient=None, self_loops=False) -> "WeightMatrix":
        out = cls(n, self_loops)
        for i, j in consolidated:
            out._w[min(i, j), max(i, j)] = 1.0
        for (i, j), v in (transient or {}).items():
            if not 0.0 < v < 1.0:
                raise ValueError(f"transient weight {v} outside (0, 1)")
            out._w[min(i, j), max(i, j)] = v
        if not self_loops and np.any(np.diag(out._w)):
            raise ValueError("diagonal edge given without self_loops")
        flat = out._w.reshape(-1)
        out._transient = np.flatnonzero((flat > 0) & (flat < 1))
        return out

    # -- update ---------------------------------------------------------

    def hebbian_update(self, active, epsilon: float) -> None:
        """W <- S(eps * V (x) V + W) for the binary activity ``active``."""
        active = np.flatnonzero(np.asarray(active))
        k = 0 if self.self_loops else 1
        r, c = np.triu_indices(len(active), k=k)
        keys = active[r] * self.n + active[c]

        flat = self._w.reshape(-1)
        if self._mark is None:
            self._mark = np.zeros(self.n * self.n, dtype=bool)
        mark = self._mark
        mark[self._transient] = True
        fresh = keys[~mark[keys]]
        mark[self._transient] = False

        flat[keys] += epsilon
        touched = np.concatenate([self._transient, fresh])
        new = sigmoid(flat[touched])
        new[new < PRUNE_BELOW] = 0.0
        flat[touched] = new
        self._transient = touched[(new > 0.0) & (new < 1.0)]
        self._sym = None


def message_units(msg: Sequence[int], ell: int) -> np.ndarray:
    """Global unit indices of the known positions of a message."""
    msg = np.asarray(msg)
    known = np.flatnonzero(msg != ERASED)
    return known * ell + msg[known]


def message_activity(msg: Sequence[int], n: int, ell: int) -> np.ndarray:
    v = np.zeros(n, dtype=bool)
    v[message_units(msg, ell)] = True
    return v


def activity_to_message(v: np.ndarray, c: int, ell: int) -> np.ndarray:
    """One unit per cluster; silent or ambiguous clusters become ERASED."""
    grid = np.asarray(v, dtype=bool).reshape(c, ell)
    out = np.full(c, ERASED, dtype=np.int64)
    single = grid.sum(axis=1) == 1
    out[single] = grid[single].argmax(axis=1)
    return out


def step(V, W: WeightMatrix, I, config: NetworkConfig, rng=None):
    """One synchronous iteration; mutates and returns ``W`` with the new activity."""
    V = np.asarray(V, dtype=bool)
    scores = W.dense() @ V.astype(np.float64) + np.asarray(I, dtype=np.float64)
    V_next = apply_wta(scores, config, rng)
    W.hebbian_update(V, config.epsilon)
    return V_next, W


def learn_pattern(W: WeightMatrix, msg, n_it: int, channel: NoiseChannel,
                  config: NetworkConfig, rng: np.random.Generator) -> WeightMatrix:
    """Expose the network to one message for ``n_it`` noisy iterations."""
    msg = np.asarray(msg)
    if np.any(msg == ERASED):
        raise ValueError("cannot learn a partially erased message")
    intended = message_activity(msg, config.n, config.ell)
    for _ in range(n_it):
        W.hebbian_update(sample_noisy_activity(channel, intended, rng), config.epsilon)
    return W


def recall(W: WeightMatrix, partial, config: NetworkConfig, rng=None) -> np.ndarray:
    """Complete a partially erased message by iterating score + winner-take-all.

    A unit's score is the summed weight to the currently active units, plus
    ``gamma`` if it was itself active (unless self-loops carry that role).
    Returns a message with ERASED in silent or ambiguous clusters.
    """
    partial = np.asarray(partial)
    if np.all(partial == ERASED):
        raise ValueError("probe has no known position")
    weights = W.dense()
    V = message_activity(partial, config.n, config.ell)
    bonus = 0.0 if config.self_loops else config.gamma
    for _ in range(config.decode_iterations):
        scores = weights[:, V].sum(axis=1) + bonus * V
        V = apply_wta(scores, config, rng)
    return activity_to_message(V, config.c, config.ell)


def weight_trajectory(schedule: Sequence[bool], epsilon: float) -> list[tuple[float, float]]:
    """Weight of one connection before and after the sigmoid at each step."""
    if len(schedule) < 1:
        raise ValueError("schedule must not be empty")
    w = 0.0
    out = []
    for coactive in schedule:
        pre = w + epsilon if coactive else w
        w = _sigmoid_scalar(pre)
        out.append((pre, w))
    return out
