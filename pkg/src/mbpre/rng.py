"""Deterministic random streams and mergeable Monte Carlo accumulators.

Work is cut into fixed-size blocks. Block ``b`` of task ``tag`` always draws
from the Philox stream keyed by ``(seed, tag, b)``, so results are identical
however blocks are spread over workers, and blocks are merged in order.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

BLOCK = 8192


def _tag_id(tag) -> int:
    if isinstance(tag, int):
        return tag
    return zlib.crc32(str(tag).encode())


def stream(seed: int, tag="main", block: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, block)``."""
    if seed is None or seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(_tag_id(tag), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(int(rng))


def seed_of(rng) -> int:
    """Integer root seed from an int or by drawing once from a Generator."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        raise ValueError("a seed is required for stochastic computations")
    return int(rng)


def blocks(total: int, size: int = BLOCK):
    """``[(block_index, count), ...]`` covering ``total`` items."""
    out, b, left = [], 0, int(total)
    while left > 0:
        k = min(size, left)
        out.append((b, k))
        b += 1
        left -= k
    return out


def run_blocks(fn, args_list, workers: int = 1):
    """``[fn(*a) for a in args_list]``, optionally in worker processes, in order."""
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, *a) for a in args_list]
        return [f.result() for f in futs]


@dataclass
class RunningStats:
    """Count, mean and centred second moment; merge is associative (Chan et al.)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, x) -> "RunningStats":
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return cls()
        if x.min() == x.max():
            return cls(int(x.size), float(x[0]), 0.0)
        mu = float(x.mean())
        return cls(int(x.size), mu, float(((x - mu) ** 2).sum()))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.n == 0:
            return RunningStats(self.n, self.mean, self.m2)
        if self.n == 0:
            return RunningStats(other.n, other.mean, other.m2)
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return RunningStats(n, mean, m2)

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.var / self.n)) if self.n > 0 else float("inf")


def merge_all(parts) -> RunningStats:
    acc = RunningStats()
    for part in parts:
        acc = acc.merge(part)
    return acc


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    samples: int
    var: float = 0.0

    @classmethod
    def from_stats(cls, st: RunningStats) -> "Estimate":
        return cls(st.mean, st.stderr, st.n, st.var)

    def within(self, target: float, k: float = 3.0, floor: float = 0.0) -> bool:
        return abs(self.value - target) <= k * self.stderr + floor

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples}
