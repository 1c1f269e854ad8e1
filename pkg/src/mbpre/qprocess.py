"""Size-biased kernel ``P*`` and the process conditioned to survive forever.

``P*_xy = (y, U) P_xy / ((x, U) lam)`` is an h-transform of the annealed
chain by the harmonic-up-to-``lam`` function ``x -> (x, U)``. Inside a
truncated window its rows lose exactly the size-biased leak
``(E[Z_1; |Z_1| > K], U) / ((x, U) lam)``.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, DomainError, TruncationError
from .oracle import TruncatedChain, YaglomData, distribution, write_triplets
from .rng import as_generator


@dataclass(eq=False)
class QKernel:
    base: TruncatedChain
    U: np.ndarray
    lam: float
    states: np.ndarray
    Pstar: np.ndarray
    leak_star: np.ndarray
    _rows: list = field(default=None, repr=False)

    @property
    def weights(self) -> np.ndarray:
        """``(x, U)`` over ``states``."""
        return self.states @ self.U

    def row_sum_error(self) -> float:
        return float(np.abs(self.Pstar.sum(axis=1) + self.leak_star - 1.0).max())

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.Pstar, k)

    def transformed_power(self, k: int) -> np.ndarray:
        """``(y, U) P^k_xy / ((x, U) lam^k)`` from powers of the base kernel."""
        Qk = np.linalg.matrix_power(self.base.Q, k)
        w = self.weights
        return Qk * w[None, :] / (w[:, None] * self.lam**k)

    def consistency_error(self, kmax: int = 5) -> float:
        """Max entrywise gap between powering ``P*`` and transforming ``P^k``, ``k <= kmax``."""
        worst, Pk = 0.0, np.eye(len(self.states))
        for k in range(1, kmax + 1):
            Pk = Pk @ self.Pstar
            worst = max(worst, float(np.abs(Pk - self.transformed_power(k)).max()))
        return worst

    def idx(self, y) -> int:
        i = self.base.idx(y)
        if i == 0:
            raise DomainError("the zero state is not part of the size-biased chain")
        return i - 1

    def sampling_rows(self):
        if self._rows is None:
            rows = []
            for i in range(self.Pstar.shape[0]):
                cols = np.flatnonzero(self.Pstar[i] > 0)
                rows.append((cols.tolist(), np.cumsum(self.Pstar[i, cols]).tolist()))
            self._rows = rows
        return self._rows

    def export(self, fh, threshold: float = 0.0):
        write_triplets(fh, self.states, self.Pstar, self.leak_star, kind="qkernel",
                       K=self.base.K, threshold=threshold)


def build_qkernel(chain: TruncatedChain) -> QKernel:
    U, lam = chain.U, chain.lam
    if np.any(U <= 0):
        raise DomainError("right Perron vector must be strictly positive")
    states = chain.plus_states
    w = states @ U
    Pstar = chain.Q * w[None, :] / (w[:, None] * lam)
    leak_star = (chain.leak_mean[1:] @ U) / (w * lam)
    return QKernel(chain, U, lam, states, Pstar, leak_star)


def qprocess_simulate(q: QKernel, y0, n: int, rng) -> np.ndarray:
    """Sample ``Y_0 = y0, ..., Y_n`` from ``P*``; shape ``(n + 1, p)``.

    Raises
    ------
    TruncationError
        When a step lands in the untracked (leaked) part of a row.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    rng = as_generator(rng)
    rows = q.sampling_rows()
    i = q.idx(y0)
    path = np.empty(n + 1, dtype=np.int64)
    path[0] = i
    chunk = 65536
    u = rng.random(min(chunk, max(n, 1)))
    pos = 0
    for k in range(1, n + 1):
        if pos == len(u):
            u = rng.random(min(chunk, n - k + 1))
            pos = 0
        cols, cum = rows[i]
        j = bisect_right(cum, u[pos])
        pos += 1
        if j >= len(cols):
            raise TruncationError(
                f"Q-process left the window |y| <= {q.base.K} at step {k} "
                f"(row leak {q.leak_star[i]:.3g})",
                suggested_K=2 * q.base.K,
            )
        i = cols[j]
        path[k] = i
    return q.states[path]


def occupation(q: QKernel, path) -> np.ndarray:
    """Empirical occupation measure of a path over ``q.states``."""
    idx = np.array([q.idx(y) for y in path]) if len(path) < 1000 else _fast_idx(q, path)
    return np.bincount(idx, minlength=len(q.states)) / len(idx)


def _fast_idx(q, path):
    K = q.base.K
    key = np.ravel_multi_index(tuple(np.asarray(path).T), (K + 1,) * q.states.shape[1])
    table = np.full((K + 1) ** q.states.shape[1], -1, dtype=np.int64)
    table[np.ravel_multi_index(tuple(q.states.T), (K + 1,) * q.states.shape[1])] = np.arange(len(q.states))
    return table[key]


@dataclass
class QStat:
    t_star: np.ndarray
    residual: float
    recurrent_class: np.ndarray
    closed_classes: int
    mass_outside_class: float
    support_ok: bool
    aperiodic_witness: tuple | None

    def as_dict(self, states) -> dict:
        return {
            "invariance_residual": self.residual,
            "closed_classes": self.closed_classes,
            "recurrent_class_size": int(len(self.recurrent_class)),
            "mass_outside_class": self.mass_outside_class,
            "support_matches_class": self.support_ok,
            "aperiodic_witness": None if self.aperiodic_witness is None else list(self.aperiodic_witness),
        }


def t_star(q: QKernel, yaglom: YaglomData) -> np.ndarray:
    return q.weights * yaglom.t / yaglom.W


def qstat(q: QKernel, yaglom: YaglomData, tol: float = 1e-6, mass_threshold: float = 1e-12) -> QStat:
    """Invariant law ``t*``, its invariance residual and the recurrent-class report.

    The recurrent class is the closed strongly connected component of the
    positive-entry graph of ``P*``. ``t*`` must put no more than
    ``mass_threshold`` outside it and positive mass on every class state.

    Raises
    ------
    ConvergenceError
        If ``|t* P* - t*|_1 > tol``.
    """
    ts = t_star(q, yaglom)
    residual = float(np.abs(ts @ q.Pstar - ts).sum())
    adj = csr_matrix(q.Pstar > 0)
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    rows, cols = adj.nonzero()
    leaves = np.zeros(ncomp, dtype=bool)
    np.logical_or.at(leaves, labels[rows], labels[rows] != labels[cols])
    closed = np.flatnonzero(~leaves)
    if len(closed) == 0:
        raise ConvergenceError("size-biased chain has no closed class inside the window")
    # the class carrying most of t*
    best = max(closed, key=lambda c: ts[labels == c].sum())
    members = np.flatnonzero(labels == best)
    outside = float(ts[labels != best].sum())
    support_ok = outside <= mass_threshold and bool(np.all(ts[members] > 0))
    diag = np.flatnonzero(np.diag(q.Pstar)[members] > 0)
    witness = tuple(int(c) for c in q.states[members[diag[0]]]) if diag.size else None
    if residual > tol:
        raise ConvergenceError(
            f"|t* P* - t*|_1 = {residual:.3g} exceeds {tol:g}; the truncation is probably too small"
        )
    return QStat(ts, residual, q.states[members], len(closed), outside, support_ok, witness)


# ---------------------------------------------------------------------------
# finite-dimensional laws and the corollary checks


def path_probability(chain: TruncatedChain, path) -> float:
    """``P(Z_1 = j_1, ..., Z_n = j_n | Z_0 = j_0)`` for ``path = (j_0, ..., j_n)``."""
    out = 1.0
    idx = [chain.idx(j) for j in path]
    for a, b in zip(idx, idx[1:]):
        out *= chain.P[a, b]
    return out


def qpath_probability(q: QKernel, path) -> float:
    out = 1.0
    idx = [q.idx(j) for j in path]
    for a, b in zip(idx, idx[1:]):
        out *= q.Pstar[a, b]
    return out


def qpath_formula(chain: TruncatedChain, yaglom: YaglomData, path) -> float:
    """``lam^-n (j_n, K) / (y, K) P(Z_1 = j_1, ..., Z_n = j_n | Z_0 = y)``."""
    n = len(path) - 1
    K = yaglom.K_vec
    ratio = (np.asarray(path[-1]) @ K) / (np.asarray(path[0]) @ K)
    return float(ratio * path_probability(chain, path) / chain.lam**n)


@dataclass
class CorollaryConfig:
    start: tuple | None = None
    horizon: int = 60
    window: int = 2
    gap_times: tuple = (30, 60)
    mass_floor: float = 1e-3
    path_length: int = 3
    path_size: int = 3
    limit_n: int = 300
    limits_tol: float = 2e-3


@dataclass
class CorollaryReport:
    a_max_error: float
    a_literal_max_error: float
    b_max_error: float
    b_pairs: int
    c_max_error: float
    c_paths: int
    d_max_error: float
    d_tol: float
    flags: list

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _small_states(chain, size, mass=None, floor=0.0):
    out = [tuple(int(c) for c in z) for z in chain.plus_states if z.sum() <= size]
    if mass is not None:
        out = [z for z in out if mass[chain.idx(z) - 1] >= floor]
    return out


def corollary_checks(chain: TruncatedChain, q: QKernel, yaglom: YaglomData,
                     cfg: CorollaryConfig | None = None) -> CorollaryReport:
    """Numerical checks of the conditional finite-dimensional limits.

    (a) the last ``window + 1`` states given survival at ``horizon``, against
        ``lam^-m t_{j_0} prod P`` (``literal`` uses the conditional law given
        ``Z_m != 0`` from ``j_0`` times ``t_{j_m}``);
    (b) ``(Z_{n_1}, Z_{n_2})`` given ``Z_{n_2} != 0`` against
        ``(j_1, K) t_{j_1} t_{j_2}`` over pairs carrying ``t``-mass;
    (c) the product of ``P*`` entries along every short path against the
        explicit size-biased formula;
    (d) ``P*^n`` rows against ``t*``.
    """
    cfg = cfg or CorollaryConfig()
    p = chain.p
    start = np.asarray(cfg.start or np.eye(p, dtype=np.int64)[0])
    lam, t = chain.lam, yaglom.t
    flags = []
    heavy = _small_states(chain, 4, t, cfg.mass_floor)

    # (a)
    n, m = cfg.horizon, cfg.window
    v_early, _ = distribution(chain, start, n - m)
    v_end, _ = distribution(chain, start, n)
    alive = v_end[1:].sum()
    a_err = a_lit = 0.0
    small = _small_states(chain, 2)
    Qm = np.linalg.matrix_power(chain.Q, m)
    for path in product(small, repeat=m + 1):
        prob = path_probability(chain, path)
        if prob == 0.0:
            continue
        j0, jm = chain.idx(path[0]), chain.idx(path[-1])
        exact = v_early[j0] * prob / alive
        limit = t[j0 - 1] * prob / lam**m
        surv_m = Qm[j0 - 1].sum()
        literal = prob / surv_m * t[jm - 1] / lam**m
        a_err = max(a_err, abs(exact - limit))
        a_lit = max(a_lit, abs(exact - literal))

    # (b)
    n1, n2 = cfg.gap_times
    v1, _ = distribution(chain, start, n1)
    Qg = np.linalg.matrix_power(chain.Q, n2 - n1)
    v2, _ = distribution(chain, start, n2)
    surv2 = v2[1:].sum()
    K = yaglom.K_vec
    b_err, pairs = 0.0, 0
    for j1 in heavy:
        for j2 in heavy:
            i1, i2 = chain.idx(j1) - 1, chain.idx(j2) - 1
            exact = v1[i1 + 1] * Qg[i1, i2] / surv2
            limit = (np.asarray(j1) @ K) * t[i1] * t[i2]
            b_err = max(b_err, abs(exact - limit))
            pairs += 1

    # (c)
    c_err, paths = 0.0, 0
    tiny = _small_states(chain, cfg.path_size)
    for path in product(tiny, repeat=cfg.path_length + 1):
        lhs = qpath_probability(q, path)
        rhs = qpath_formula(chain, yaglom, path)
        c_err = max(c_err, abs(lhs - rhs) / max(abs(rhs), 1e-300) if rhs else abs(lhs))
        paths += 1

    # (d)
    ts = t_star(q, yaglom)
    Pn = np.linalg.matrix_power(q.Pstar, cfg.limit_n)
    d_err = 0.0
    for y in small:
        d_err = max(d_err, float(np.abs(Pn[q.idx(y)] - ts).max()))
    if d_err > cfg.limits_tol:
        flags.append(f"(d) limit law off by {d_err:.3g} at n={cfg.limit_n}")
    return CorollaryReport(a_err, a_lit, b_err, pairs, c_err, paths, d_err, cfg.limits_tol, flags)
