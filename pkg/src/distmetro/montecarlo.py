"""Seeded sub-streams and mergeable running moments for chunked Monte Carlo.

Work is split into fixed-size chunks, each with its own ``SeedSequence``
child, so results do not depend on how many threads execute the chunks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

THREADS_ENV = "DISTMETRO_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def chunk_sizes(total: int, chunk: int) -> list[int]:
    if total < 0 or chunk < 1:
        raise ValueError("total must be >= 0 and chunk >= 1")
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunked(fn: Callable[[int, np.random.Generator], T], seed: int, total: int,
                chunk: int = 100_000, threads: int | None = None) -> list[T]:
    """Call ``fn(size, rng)`` for each chunk and return results in chunk order."""
    sizes = chunk_sizes(total, chunk)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(n, np.random.default_rng(ss)) for n, ss in zip(sizes, children)]
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(jobs) < 2:
        return [fn(n, rng) for n, rng in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass
class RunningMoments:
    """Count, mean and centred second moment of a (vector of) statistic(s).

    ``merge`` is the pairwise update of Chan et al., so partial results from
    independent chunks combine exactly.
    """

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    @classmethod
    def from_samples(cls, x) -> "RunningMoments":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if n == 0:
            return cls()
        mean = x.mean(axis=0)
        return cls(n, mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return RunningMoments(self.count, self.mean, self.m2)
        if self.count == 0:
            return RunningMoments(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / n
        return RunningMoments(n, mean, m2)

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else np.zeros_like(self.mean)

    @property
    def std(self):
        return np.sqrt(self.variance)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.count) if self.count > 0 else np.zeros_like(self.mean)


def merge_all(parts) -> RunningMoments:
    out = RunningMoments()
    for p in parts:
        out = out.merge(p)
    return out
