"""
Sampling, resampling and summary statistics on particle sets, plus the
counter-based random streams every agent draws from.
"""
import enum
import hashlib
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from infoseek.core import DegenerateWeightsError, DimensionError, ParticleSet

logger = logging.getLogger(__name__)


def _purpose_code(purpose: str) -> int:
    digest = hashlib.blake2s(purpose.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class RngStream:
    """Random stream keyed by (seed, run, agent, purpose).

    ``agent`` is None for streams shared by all CAs (common target samples,
    headings). ``generator(time)`` returns a fresh Philox generator, so the
    draws depend only on the key and never on call order.
    """

    seed: int
    run: int
    agent: Optional[int]
    purpose: str

    def key(self, time=0):
        agent_slot = 0 if self.agent is None else int(self.agent) + 1
        return (int(self.run), agent_slot, _purpose_code(self.purpose), int(time))

    def generator(self, time=0) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=self.key(time))
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class StreamFactory:
    """All streams of one Monte-Carlo run."""

    seed: int
    run: int

    def stream(self, agent, purpose) -> RngStream:
        return RngStream(self.seed, self.run, agent, purpose)

    def rng(self, agent, purpose, time=0) -> np.random.Generator:
        return self.stream(agent, purpose).generator(time)


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned rectangle [lo, hi]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box corners must be vectors of equal length")
        if np.any(hi <= lo):
            raise ValueError(f"degenerate box {lo.tolist()} .. {hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def square(cls, half_width):
        return cls(np.full(2, -float(half_width)), np.full(2, float(half_width)))


def draw_uniform_prior(J, box: Box, rng) -> ParticleSet:
    if J <= 0:
        raise ValueError("J must be positive")
    return ParticleSet.equal_weights(rng.uniform(box.lo, box.hi, size=(J, box.lo.size)))


def draw_target_prior(J, box: Box, vel_mean, vel_cov, rng) -> ParticleSet:
    """Position uniform over ``box``, velocity Gaussian."""
    if J <= 0:
        raise ValueError("J must be positive")
    pos = rng.uniform(box.lo, box.hi, size=(J, box.lo.size))
    vel_mean = np.asarray(vel_mean, float)
    vel = rng.multivariate_normal(vel_mean, np.asarray(vel_cov, float), J)
    return ParticleSet.equal_weights(np.hstack([pos, vel]))


def mmse_estimate(p: ParticleSet):
    return p.weights @ p.samples


def cov_trace(p: ParticleSet, dims=None):
    """Trace of the weighted sample covariance over the first ``dims`` axes."""
    x = p.samples if dims is None else p.samples[:, :dims]
    # offsets from a member sample are exactly zero for identical samples
    offset = x - x[0]
    mean = p.weights @ offset
    second = p.weights @ np.sum(offset * offset, axis=1)
    return float(max(second - mean @ mean, 0.0))


def systematic_indices(weights, rng):
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        raise DegenerateWeightsError("cannot resample from all-zero weights")
    count = weights.size
    grid = (rng.random() + np.arange(count)) / count
    edges = np.cumsum(weights) / total
    edges[-1] = 1.0
    return np.minimum(np.searchsorted(edges, grid, side="right"), count - 1)


def systematic_resample(p: ParticleSet, rng) -> ParticleSet:
    return ParticleSet.equal_weights(p.samples[systematic_indices(p.weights, rng)])


def kernel_bandwidth(T, J, sigma0_2, exponent=1.0 / 3.0):
    """Per-axis kernel variance σ_K²."""
    if T < 2.0 * sigma0_2:
        return J**exponent * T / 2.0
    return float(sigma0_2)


def kernel_resample(p: ParticleSet, sigma0_2, rng, dims=None, exponent=1.0 / 3.0):
    """Draw from the Gaussian-kernel mixture of ``p``.

    The kernel acts on the first ``dims`` components (all when None);
    mixture components are picked with the systematic grid.
    """
    dims = p.dim if dims is None else dims
    var = kernel_bandwidth(cov_trace(p, dims), p.J, sigma0_2, exponent)
    samples = p.samples[systematic_indices(p.weights, rng)].copy()
    if var > 0.0:
        samples[:, :dims] += rng.normal(0.0, np.sqrt(var), size=(p.J, dims))
    logger.debug("kernel resampling J=%d with sigma_K^2=%.4g", p.J, var)
    return ParticleSet.equal_weights(samples)


class ResampleKind(enum.Enum):
    SYSTEMATIC = "systematic"
    KERNEL = "kernel"


def kernel_period(T):
    if T < 80.0:
        return 40
    if T < 1000.0:
        return 20
    return 10


def resample_schedule(T, n) -> ResampleKind:
    if T < 0:
        raise ValueError("covariance trace must be nonnegative")
    if n % kernel_period(T) == 0:
        return ResampleKind.KERNEL
    return ResampleKind.SYSTEMATIC
