"""Learning-under-noise experiments comparing the Hebbian network with the
reference clique memory, and the retrieval error curve of the latter."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Callable, Iterable, Sequence

import numpy as np

from .clique import CliqueNetwork, density, retrieve_batch
from .dynamics import ERASED, NetworkConfig, TiePolicy, WeightMatrix, learn_pattern
from .noise import NoiseChannel


def stream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, purpose, item index)."""
    seq = np.random.SeedSequence(entropy=int(master_seed),
                                 spawn_key=(zlib.crc32(label.encode()), int(index)))
    return np.random.Generator(np.random.Philox(seq))


def random_messages(M: int, c: int, ell: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, ell, size=(M, c), dtype=np.int64)


def erase_positions(messages: np.ndarray, n_erased: int, rng: np.random.Generator) -> np.ndarray:
    """Replace ``n_erased`` randomly chosen positions of every message by ERASED."""
    probes = np.array(messages, dtype=np.int64, copy=True)
    if n_erased == 0:
        return probes
    order = np.argsort(rng.random(probes.shape), axis=1)[:, :n_erased]
    np.put_along_axis(probes, order, ERASED, axis=1)
    return probes


def expected_edges(M: int, c: int, ell: int) -> float:
    """Expected ordered-pair edge count after storing M uniform random messages."""
    return 2 * comb(c, 2) * ell ** 2 * -np.expm1(M * np.log1p(-1.0 / ell ** 2))


@dataclass(frozen=True)
class ExperimentSpec:
    config: NetworkConfig
    channel: NoiseChannel
    M: int
    n_it: int
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.M < 1 or self.n_it < 1 or self.trials < 1:
            raise ValueError("M, n_it and trials must all be >= 1")


@dataclass(frozen=True)
class ComparisonResult:
    connections: int
    added: int
    erased: int


@dataclass(frozen=True)
class Table1Row:
    n_it: int
    M: int
    trial: int
    connections: int
    added: int
    erased: int


@dataclass(frozen=True)
class CurveRow:
    M: int
    trial: int
    density: float
    error_rate: float


@dataclass
class CurveSpec:
    config: NetworkConfig
    M_grid: Sequence[int]
    known_positions: int
    trials: int = 1
    seed: int = 0
    gamma: float | None = None
    iterations: int | None = None
    tie_policy: TiePolicy | None = None

    def __post_init__(self):
        if not 0 < self.known_positions < self.config.c:
            raise ValueError("known_positions must lie in [1, c)")
        if not self.M_grid or min(self.M_grid) < 1:
            raise ValueError("M_grid must hold positive message counts")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def compare_networks(hebb: WeightMatrix, reference: CliqueNetwork,
                     threshold: float = 0.5) -> ComparisonResult:
    """Edge differences, in ordered pairs, after binarizing at ``threshold``."""
    if hebb.n != reference.n:
        raise ValueError(f"dimension mismatch: {hebb.n} vs {reference.n}")
    h = hebb.binarized(threshold)
    np.fill_diagonal(h, False)
    r = np.triu(reference.adjacency, k=1)
    return ComparisonResult(connections=2 * int(np.count_nonzero(r)),
                            added=2 * int(np.count_nonzero(h & ~r)),
                            erased=2 * int(np.count_nonzero(r & ~h)))


def learn_dataset(messages: np.ndarray, spec: ExperimentSpec, rng: np.random.Generator,
                  W: WeightMatrix | None = None) -> WeightMatrix:
    cfg = spec.config
    if W is None:
        W = WeightMatrix(cfg.n, cfg.self_loops)
    for msg in messages:
        learn_pattern(W, msg, spec.n_it, spec.channel, cfg, rng)
    return W


def table1_trial(spec: ExperimentSpec, trial: int) -> Table1Row:
    cfg = spec.config
    messages = random_messages(spec.M, cfg.c, cfg.ell, stream(spec.seed, "messages", trial))
    W = learn_dataset(messages, spec, stream(spec.seed, "learn", trial))
    reference = CliqueNetwork(cfg.c, cfg.ell).store_many(messages)
    res = compare_networks(W, reference)
    return Table1Row(spec.n_it, spec.M, trial, res.connections, res.added, res.erased)


def _run_items(fn: Callable, items: Iterable, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def run_table1(specs: Sequence[ExperimentSpec], threads: int = 1) -> list[Table1Row]:
    """One row per (spec, trial); results do not depend on ``threads``."""
    items = [(spec, t) for spec in specs for t in range(spec.trials)]
    return _run_items(table1_trial, items, threads)


def summarize_table1(rows: Sequence[Table1Row]) -> list[dict]:
    """Mean of each comparison column over trials, keeping row order."""
    groups: dict[tuple[int, int], list[Table1Row]] = {}
    for row in rows:
        groups.setdefault((row.n_it, row.M), []).append(row)
    return [{"n_it": n_it, "M": M, "trials": len(g),
             "connections": float(np.mean([r.connections for r in g])),
             "added": float(np.mean([r.added for r in g])),
             "erased": float(np.mean([r.erased for r in g]))}
            for (n_it, M), g in groups.items()]


def curve_trial(spec: CurveSpec, trial: int) -> list[CurveRow]:
    cfg = spec.config
    grid = sorted(spec.M_grid)
    gamma = cfg.gamma if spec.gamma is None else spec.gamma
    iterations = cfg.decode_iterations if spec.iterations is None else spec.iterations
    tie_policy = cfg.tie_policy if spec.tie_policy is None else spec.tie_policy
    messages = random_messages(grid[-1], cfg.c, cfg.ell, stream(spec.seed, "messages", trial))
    probes = erase_positions(messages, cfg.c - spec.known_positions,
                             stream(spec.seed, "erasures", trial))
    net = CliqueNetwork(cfg.c, cfg.ell)
    stored = 0
    out = []
    for M in grid:
        net.store_many(messages[stored:M])
        stored = M
        found = retrieve_batch(net, probes[:M], gamma, iterations, tie_policy=tie_policy,
                               rng=stream(spec.seed, "ties", trial))
        wrong = np.any(found != messages[:M], axis=1)
        out.append(CurveRow(M, trial, density(net), float(wrong.mean())))
    return out


def error_curve(spec: CurveSpec, threads: int = 1) -> list[CurveRow]:
    """Per-trial (M, density, error_rate) rows; message sets are nested in M."""
    per_trial = _run_items(curve_trial, [(spec, t) for t in range(spec.trials)], threads)
    return sorted((row for rows in per_trial for row in rows), key=lambda r: (r.M, r.trial))


def summarize_curve(rows: Sequence[CurveRow]) -> list[dict]:
    groups: dict[int, list[CurveRow]] = {}
    for row in rows:
        groups.setdefault(row.M, []).append(row)
    return [{"M": M,
             "density": float(np.mean([r.density for r in g])),
             "error_rate": float(np.mean([r.error_rate for r in g]))}
            for M, g in sorted(groups.items())]
