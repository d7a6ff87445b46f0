"""Synaptic and interference noise, reduced to an insertion/erasure channel.

A target neuron receives ``n_inputs`` signal connections plus a Poisson
number of excitatory and inhibitory interferers.  Every connection is a
bundle of ``n_syn`` unreliable synapses, each releasing with probability
``p_rel``.  The total stimulation ``S`` is compared against a threshold
``sigma`` (firing iff ``S >= sigma``), which collapses all of the noise into
two numbers: the probability that an intended unit stays silent (``p_del``)
and that a silent unit fires anyway (``p_ins``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

POISSON_TAIL = 1e-12


class TruncationError(ValueError):
    """Raised when a Poisson rate needs an unreasonably long support."""


@dataclass(frozen=True)
class SynapticModel:
    n_syn: int
    p_rel: float

    def __post_init__(self):
        if int(self.n_syn) != self.n_syn or self.n_syn < 1:
            raise ValueError(f"n_syn must be a positive integer, got {self.n_syn}")
        if not 0.0 <= self.p_rel <= 1.0:
            raise ValueError(f"p_rel must lie in [0, 1], got {self.p_rel}")


@dataclass(frozen=True)
class InterferenceModel:
    n_ex: int
    n_in: int
    f_ext: float
    t_int: float

    def __post_init__(self):
        if self.n_ex < 0 or self.n_in < 0:
            raise ValueError("interferer counts must be nonnegative")
        if self.f_ext < 0:
            raise ValueError(f"f_ext must be >= 0, got {self.f_ext}")
        if self.t_int <= 0:
            raise ValueError(f"t_int must be > 0, got {self.t_int}")

    @property
    def n_ext(self) -> int:
        return self.n_ex + self.n_in


@dataclass(frozen=True)
class FiringContext:
    sigma: float
    n_inputs: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.n_inputs < 0:
            raise ValueError("n_inputs must be nonnegative")


@dataclass(frozen=True)
class NoiseChannel:
    p_ins: float
    p_del: float

    def __post_init__(self):
        for name in ("p_ins", "p_del"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


NOISEFREE = NoiseChannel(0.0, 0.0)


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on the integers ``offset, offset+1, ...``."""

    offset: int
    probabilities: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.probabilities))

    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    def at(self, value: int) -> float:
        k = value - self.offset
        if 0 <= k < len(self.probabilities):
            return float(self.probabilities[k])
        return 0.0

    def prob_at_least(self, threshold: float) -> float:
        """P(X >= threshold)."""
        first = max(math.ceil(threshold) - self.offset, 0)
        return float(self.probabilities[first:].sum())

    def negate(self) -> "Pmf":
        p = self.probabilities[::-1].copy()
        return Pmf(-(self.offset + len(p) - 1), p)

    def __add__(self, other: "Pmf") -> "Pmf":
        """Distribution of the sum of two independent variables."""
        return Pmf(self.offset + other.offset,
                   np.convolve(self.probabilities, other.probabilities))


def point_mass(value: int = 0) -> Pmf:
    return Pmf(value, np.ones(1))


def binomial_pmf(n: int, p: float) -> np.ndarray:
    k = np.arange(n + 1)
    if p == 0.0 or p == 1.0:
        out = np.zeros(n + 1)
        out[0 if p == 0.0 else n] = 1.0
        return out
    log_coef = np.array([math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
                         for j in k])
    return np.exp(log_coef + k * math.log(p) + (n - k) * math.log1p(-p))


def stimulation_pmf(syn: SynapticModel) -> Pmf:
    """Stimulation one active neuron delivers through ``n_syn`` synapses."""
    return Pmf(0, binomial_pmf(syn.n_syn, syn.p_rel))


def interference_rates(m: InterferenceModel) -> tuple[float, float]:
    """Mean number of excitatory and inhibitory interferers per window."""
    return m.n_ex * m.f_ext * m.t_int, m.n_in * m.f_ext * m.t_int


def poisson_pmf(lam: float, x: int) -> float:
    if lam < 0:
        raise ValueError(f"Poisson rate must be >= 0, got {lam}")
    if lam == 0:
        return 1.0 if x == 0 else 0.0
    return math.exp(-lam + x * math.log(lam) - math.lgamma(x + 1))


def poisson_truncation(lam: float, tail: float = POISSON_TAIL,
                       cap: int | None = None) -> int:
    """Smallest ``k`` such that P(X > k) < tail for X ~ Poisson(lam)."""
    if cap is None:
        cap = int(10 * (lam + 20))
    k = 0
    cdf = poisson_pmf(lam, 0)
    while 1.0 - cdf >= tail:
        k += 1
        if k > cap:
            raise TruncationError(
                f"Poisson(lambda={lam}) needs more than {cap} terms to reach tail < {tail}")
        cdf += poisson_pmf(lam, k)
    return k


def compound_pmf(syn: SynapticModel, lam: float, cap: int | None = None) -> Pmf:
    """Stimulation from a Poisson(lam) number of interferers.

    Mixture over the interferer count ``x`` of the ``x``-fold convolution
    of the single-connection binomial, truncated at the 1e-12 tail.
    """
    kmax = poisson_truncation(lam, cap=cap)
    single = binomial_pmf(syn.n_syn, syn.p_rel)
    total = np.zeros(kmax * syn.n_syn + 1)
    conv = np.ones(1)
    for x in range(kmax + 1):
        total[: len(conv)] += poisson_pmf(lam, x) * conv
        conv = np.convolve(conv, single)
    return Pmf(0, total)


def total_stimulation_pmf(syn: SynapticModel, m: InterferenceModel, ctx: FiringContext,
                          signal_present: bool, cap: int | None = None) -> Pmf:
    """Exact distribution of signal + excitation - inhibition."""
    lam_ex, lam_in = interference_rates(m)
    k_signal = ctx.n_inputs if signal_present else 0
    signal = Pmf(0, binomial_pmf(k_signal * syn.n_syn, syn.p_rel))
    return signal + compound_pmf(syn, lam_ex, cap) + compound_pmf(syn, lam_in, cap).negate()


def reduce_to_channel(syn: SynapticModel, m: InterferenceModel, ctx: FiringContext,
                      cap: int | None = None) -> NoiseChannel:
    present = total_stimulation_pmf(syn, m, ctx, True, cap)
    absent = total_stimulation_pmf(syn, m, ctx, False, cap)
    p_del = min(max(1.0 - present.prob_at_least(ctx.sigma), 0.0), 1.0)
    p_ins = min(max(absent.prob_at_least(ctx.sigma), 0.0), 1.0)
    return NoiseChannel(p_ins=p_ins, p_del=p_del)


def sample_total_stimulation(syn: SynapticModel, m: InterferenceModel, ctx: FiringContext,
                             signal_present: bool, size: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo draws of the total stimulation, independent of the convolution path.

    The sum of ``x`` independent B(n_syn, p_rel) draws is B(x * n_syn, p_rel),
    so each draw needs one Poisson and one binomial variate per source.
    """
    lam_ex, lam_in = interference_rates(m)
    k_signal = ctx.n_inputs if signal_present else 0
    s = rng.binomial(k_signal * syn.n_syn, syn.p_rel, size=size).astype(np.int64)
    s += rng.binomial(rng.poisson(lam_ex, size=size) * syn.n_syn, syn.p_rel)
    s -= rng.binomial(rng.poisson(lam_in, size=size) * syn.n_syn, syn.p_rel)
    return s


def monte_carlo_channel(syn: SynapticModel, m: InterferenceModel, ctx: FiringContext,
                        size: int, rng: np.random.Generator) -> NoiseChannel:
    present = sample_total_stimulation(syn, m, ctx, True, size, rng)
    absent = sample_total_stimulation(syn, m, ctx, False, size, rng)
    return NoiseChannel(p_ins=float(np.mean(absent >= ctx.sigma)),
                        p_del=float(np.mean(present < ctx.sigma)))


def sample_noisy_activity(channel: NoiseChannel, intended: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
    """Pass a binary activity vector through the insertion/erasure channel."""
    intended = np.asarray(intended, dtype=bool)
    u = rng.random(intended.shape)
    return np.where(intended, u >= channel.p_del, u < channel.p_ins)
