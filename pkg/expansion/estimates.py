"""
Monte Carlo estimates with reproducible shards.

Every stochastic coefficient is returned as a CoefficientEstimate. Samples are
split over shards whose generators are spawned from one SeedSequence, so a
result depends only on (seed, shard count); the worker count only changes
wall time.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from expansion.errors import InvalidArgument

logger = logging.getLogger(__name__)

# Samples evaluated per vectorized integrand call
BATCH_SIZE = 65536


@dataclass(frozen=True)
class CoefficientEstimate:
    """Value with standard error, sample count and the truncation it was computed at."""

    value: float
    std_error: float = 0.0
    samples: int = 0
    truncation: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def exact(cls, value: float, **truncation: Any) -> "CoefficientEstimate":
        return cls(value=float(value), std_error=0.0, samples=0, truncation=dict(truncation))

    def __add__(self, other: "CoefficientEstimate") -> "CoefficientEstimate":
        # Independent estimates: errors add in quadrature
        return CoefficientEstimate(
            value=self.value + other.value,
            std_error=math.hypot(self.std_error, other.std_error),
            samples=self.samples + other.samples,
            truncation=_merge_truncation(self.truncation, other.truncation),
        )

    def scaled(self, factor: float) -> "CoefficientEstimate":
        return CoefficientEstimate(
            value=self.value * factor,
            std_error=self.std_error * abs(factor),
            samples=self.samples,
            truncation=dict(self.truncation),
        )

    def with_truncation(self, **truncation: Any) -> "CoefficientEstimate":
        merged = dict(self.truncation)
        merged.update(truncation)
        return CoefficientEstimate(self.value, self.std_error, self.samples, merged)

    def within(self, target: float, sigmas: float = 3.0, floor: float = 1e-12) -> bool:
        """True if target lies within ``sigmas`` standard errors of the value."""
        return abs(self.value - target) <= sigmas * self.std_error + floor

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "samples": self.samples,
            "truncation": dict(sorted(self.truncation.items())),
        }


def sum_estimates(estimates: List[CoefficientEstimate]) -> CoefficientEstimate:
    total = CoefficientEstimate.exact(0.0)
    for estimate in estimates:
        total = total + estimate
    return total


class RunningStats:
    """Welford mean/variance accumulator with exact pooled merge."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push_batch(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        other = RunningStats()
        other.count = int(values.size)
        other.mean = float(values.mean())
        other.m2 = float(((values - other.mean) ** 2).sum())
        self.merge(other)

    def merge(self, other: "RunningStats") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else 0.0


def shard_generators(seed: int, shards: int) -> List[np.random.Generator]:
    """One independent PCG64 stream per shard, spawned from ``seed``."""
    if shards < 1:
        raise InvalidArgument(f"shard count must be >= 1, got {shards}")
    children = np.random.SeedSequence(seed).spawn(shards)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def sample_mean(
    integrand: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    samples: int,
    seed: int,
    shards: int = 1,
    workers: int = 1,
    volume: float = 1.0,
    truncation: Optional[Dict[str, Any]] = None,
) -> CoefficientEstimate:
    """
    Estimate ``volume * E[integrand(X)]`` for X drawn by ``sampler``.

    Args:
        integrand: Vectorized; maps a (batch, ...) sample array to (batch,) values.
        sampler: Draws ``size`` samples from the given generator.
        samples: Total sample budget, split as evenly as possible over shards.
        seed: Root seed.
        shards: Number of independent streams.
        workers: Threads used to evaluate shards; does not affect the result.
        volume: Measure of the sampling domain.
        truncation: Metadata attached to the estimate.
    """
    if samples < 1:
        raise InvalidArgument(f"sample budget must be positive, got {samples}")
    generators = shard_generators(seed, shards)
    counts = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]

    def run_shard(index: int) -> RunningStats:
        stats = RunningStats()
        rng = generators[index]
        remaining = counts[index]
        while remaining > 0:
            batch = min(BATCH_SIZE, remaining)
            stats.push_batch(integrand(sampler(rng, batch)))
            remaining -= batch
        logger.debug("Shard %d: %d samples, mean %.6g", index, stats.count, stats.mean)
        return stats

    if workers > 1 and shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_shard, range(shards)))
    else:
        results = [run_shard(i) for i in range(shards)]

    pooled = RunningStats()
    for stats in results:
        pooled.merge(stats)

    return CoefficientEstimate(
        value=volume * pooled.mean,
        std_error=abs(volume) * pooled.std_error,
        samples=pooled.count,
        truncation=dict(truncation or {}),
    )


def uniform_cube_sampler(half_width: float, shape: tuple) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Sampler of arrays (size, *shape) uniform in [-half_width, half_width]."""

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(-half_width, half_width, size=(size, *shape))

    return draw


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _merge_truncation(left: Dict[str, Any], right: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(left)
    for key, value in right.items():
        if key in merged and merged[key] != value:
            merged[key] = max(merged[key], value) if _comparable(merged[key], value) else merged[key]
        else:
            merged[key] = value
    return merged


def _comparable(a: Any, b: Any) -> bool:
    return isinstance(a, (int, float)) and isinstance(b, (int, float))
