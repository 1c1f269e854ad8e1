"""Forward simulation of the population and quenched generating-function iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envmodel import EnvModel, EnvState, sample_state
from .errors import DomainError, InsufficientDataError, PopulationOverflowError
from .rng import Estimate, RunningStats, blocks, merge_all, run_blocks, seed_of, stream

MAX_POPULATION = 10**12


def _as_population(z, p) -> np.ndarray:
    z = np.asarray(z)
    if z.shape != (p,) or np.any(z < 0) or not np.issubdtype(z.dtype, np.integer):
        raise DomainError(f"population must be {p} nonnegative integers, got {z!r}")
    return z.astype(np.int64)


def step_population(z, state: EnvState, rng, cap: int = MAX_POPULATION) -> np.ndarray:
    """One generation: each of the ``z_j`` type-``j`` particles draws from law ``j``."""
    z = _as_population(z, state.p)
    out = np.zeros(state.p, dtype=np.int64)
    for j, law in enumerate(state.laws):
        if z[j]:
            counts = rng.multinomial(int(z[j]), law.probs)
            out += counts @ law.support
    if out.sum() > cap:
        raise PopulationOverflowError(f"population {int(out.sum())} exceeds cap {cap}; model is likely supercritical")
    return out


@dataclass
class Trajectory:
    z_path: np.ndarray
    env_path: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.z_path[-1]

    @property
    def alive(self) -> bool:
        return bool(self.z_path[-1].any())


def run(model: EnvModel, z0, n: int, rng, cap: int = MAX_POPULATION) -> Trajectory:
    """Sample ``n`` environment states, then push ``z0`` through them."""
    if n < 0:
        raise DomainError("n must be >= 0")
    z = _as_population(z0, model.p)
    envs = np.asarray(sample_state(model, rng, size=n), dtype=np.int64).reshape(n)
    path = np.zeros((n + 1, model.p), dtype=np.int64)
    path[0] = z
    for k, e in enumerate(envs):
        if z.any():
            z = step_population(z, model.states[e], rng, cap)
        path[k + 1] = z
    return Trajectory(path, envs)


def population_batch(model: EnvModel, z0, n: int, count: int, rng, cap: int = MAX_POPULATION) -> np.ndarray:
    """Final populations of ``count`` independent replicas, shape ``(count, p)``."""
    p = model.p
    Z = np.tile(_as_population(z0, p), (count, 1))
    for _ in range(n):
        live = np.flatnonzero(Z.any(axis=1))
        if live.size == 0:
            break
        envs = np.asarray(sample_state(model, rng, size=live.size))
        nxt = np.zeros((live.size, p), dtype=np.int64)
        for e, st in enumerate(model.states):
            sel = np.flatnonzero(envs == e)
            if sel.size == 0:
                continue
            rows = Z[live[sel]]
            for j, law in enumerate(st.laws):
                nj = rows[:, j]
                if not nj.any():
                    continue
                counts = rng.multinomial(nj, law.probs)
                nxt[sel] += counts @ law.support
        if nxt.sum(axis=1).max(initial=0) > cap:
            raise PopulationOverflowError(f"population exceeds cap {cap}; model is likely supercritical")
        Z[live] = nxt
    return Z


# ---------------------------------------------------------------------------
# generating functions


def complement_path(model: EnvModel, envs, q0=None) -> np.ndarray:
    """``1 - F_{e_n} o ... o F_{e_1}(1 - q0)`` for each row ``e`` of ``envs``.

    The first column acts first. ``q0`` defaults to ``1`` (i.e. ``s = 0``).
    """
    envs = np.atleast_2d(np.asarray(envs, dtype=np.int64))
    count, n = envs.shape
    q = np.ones((count, model.p)) if q0 is None else np.tile(np.asarray(q0, float), (count, 1))
    for k in range(n):
        col = envs[:, k]
        nxt = np.empty_like(q)
        for e, st in enumerate(model.states):
            mask = col == e
            if mask.any():
                nxt[mask] = st.pgf_complement(q[mask])
        q = nxt
    return q


def pgf_iterate(model: EnvModel, envs, s, direction: str = "F0n") -> np.ndarray:
    """Compose state generating functions along an environment sequence.

    ``direction="F0n"`` gives ``F_{e_1}(F_{e_2}(... F_{e_n}(s)))``;
    ``direction="Fn0"`` gives ``F_{e_n}(... F_{e_1}(s))``. An empty sequence
    returns ``s``.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (model.p,) or np.any(s < 0) or np.any(s > 1):
        raise DomainError("s must be a point of [0, 1]^p")
    seq = [int(e) for e in envs]
    if direction == "F0n":
        seq = seq[::-1]
    elif direction != "Fn0":
        raise DomainError(f"unknown direction {direction!r}")
    if not seq:
        return s.copy()
    q = 1.0 - s
    for e in seq:
        q = model.states[e].pgf_complement(q)
    return 1.0 - q


def _survive_from_complement(q, z):
    # 1 - prod_i (1 - q_i)^{z_i}
    with np.errstate(divide="ignore"):
        logs = np.maximum(np.log1p(-q), -1e300)
    return -np.expm1(logs @ np.asarray(z, float))


# ---------------------------------------------------------------------------
# Monte Carlo estimators


def _survival_block(model, z, n, seed, block, count, estimator):
    rng = stream(seed, f"survival_{estimator}", block)
    if estimator == "quenched":
        envs = np.asarray(sample_state(model, rng, size=(count, n)), dtype=np.int64).reshape(count, n)
        vals = _survive_from_complement(complement_path(model, envs), z)
    else:
        vals = population_batch(model, z, n, count, rng).any(axis=1).astype(float)
    return RunningStats.of(vals)


def survival_mc(model: EnvModel, z, n: int, samples: int, rng, estimator: str = "quenched",
                workers: int = 1) -> Estimate:
    """Monte Carlo estimate of ``P(Z_n != 0 | Z_0 = z)``.

    ``quenched`` averages ``1 - prod_i F^i_{0,n}(0)^{z_i}`` over sampled
    environments; ``indicator`` simulates populations and counts survivors.
    """
    z = _as_population(z, model.p)
    if not z.any():
        raise DomainError("z must be nonzero")
    if n < 0 or samples < 1:
        raise DomainError("need n >= 0 and samples >= 1")
    if estimator not in ("quenched", "indicator"):
        raise DomainError(f"unknown estimator {estimator!r}")
    seed = seed_of(rng)
    jobs = [(model, z, n, seed, b, k, estimator) for b, k in blocks(samples)]
    return Estimate.from_stats(merge_all(run_blocks(_survival_block, jobs, workers)))


def _final_block(model, z, n, seed, block, count):
    return population_batch(model, z, n, count, stream(seed, "population", block))


def final_populations(model: EnvModel, z, n: int, samples: int, rng, workers: int = 1) -> np.ndarray:
    """``Z_n`` for ``samples`` replicas, concatenated in block order."""
    z = _as_population(z, model.p)
    seed = seed_of(rng)
    jobs = [(model, z, n, seed, b, k) for b, k in blocks(samples)]
    return np.concatenate(run_blocks(_final_block, jobs, workers), axis=0)


def mean_population(model: EnvModel, z, n: int, samples: int, rng, workers: int = 1):
    """Per-type Monte Carlo estimates of ``E[Z_n | Z_0 = z]``."""
    Z = final_populations(model, z, n, samples, rng, workers)
    return [Estimate.from_stats(RunningStats.of(Z[:, i])) for i in range(model.p)]


@dataclass
class YaglomSample:
    """Empirical law of ``Z_n`` given ``Z_n != 0``."""

    states: np.ndarray
    counts: np.ndarray
    survivors: int
    samples: int

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.survivors

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in y): float(w) for y, w in zip(self.states, self.pmf)}

    def tv_distance(self, states, probs) -> float:
        """Total variation distance to a pmf given on ``states``."""
        ref = {tuple(int(c) for c in y): float(w) for y, w in zip(states, probs)}
        emp = self.as_dict()
        keys = set(ref) | set(emp)
        return 0.5 * sum(abs(ref.get(k, 0.0) - emp.get(k, 0.0)) for k in keys)


def yaglom_mc(model: EnvModel, z, n: int, samples: int, rng, workers: int = 1) -> YaglomSample:
    """Histogram of surviving replicas at generation ``n``.

    Raises
    ------
    InsufficientDataError
        If no replica survives.
    """
    Z = final_populations(model, z, n, samples, rng, workers)
    alive = Z[Z.any(axis=1)]
    if alive.shape[0] == 0:
        raise InsufficientDataError(f"no survivors among {samples} replicas at n={n}")
    states, counts = np.unique(alive, axis=0, return_counts=True)
    return YaglomSample(states, counts, int(alive.shape[0]), int(samples))
