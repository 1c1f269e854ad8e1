"""Exact computations for the annealed chain ``Z_n`` on a truncated lattice.

The chain is restricted to ``{z : |z| <= K}``. Every one-step transition that
would leave the window is booked as *leak* (together with its first moment),
so each answer can be bracketed: leaked mass counted as extinct gives a lower
bound, counted as surviving forever gives an upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .envmodel import EnvModel
from .errors import ConvergenceError, DomainError, ResourceError, TruncationError
from .spectral import SpectralData, perron_eig

MAX_STATES = 50_000
MAX_CELLS = 5_000_000


@dataclass(eq=False)
class TruncatedChain:
    """Annealed kernel on ``{0} U {z in N_+^p : |z| <= K}``.

    ``states[0]`` is the zero vector. ``P[x, y]`` are exact one-step
    probabilities inside the window, ``leak[x]`` the probability of jumping
    outside it and ``leak_mean[x]`` the vector ``E[Z_1; |Z_1| > K | Z_0 = x]``.
    """

    model: EnvModel
    K: int
    states: np.ndarray
    P: np.ndarray
    leak: np.ndarray
    leak_mean: np.ndarray
    spectral: SpectralData
    index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {tuple(int(c) for c in z): i for i, z in enumerate(self.states)}

    @property
    def p(self) -> int:
        return self.states.shape[1]

    @property
    def lam(self) -> float:
        return self.spectral.lam

    @property
    def U(self) -> np.ndarray:
        return self.spectral.U

    @property
    def Q(self) -> np.ndarray:
        """Sub-stochastic restriction of ``P`` to the nonzero states."""
        return self.P[1:, 1:]

    @property
    def plus_states(self) -> np.ndarray:
        return self.states[1:]

    def idx(self, z) -> int:
        key = tuple(int(c) for c in np.atleast_1d(z))
        if len(key) != self.p:
            raise DomainError(f"state {key} has wrong dimension for p={self.p}")
        try:
            return self.index[key]
        except KeyError:
            raise DomainError(f"state {key} lies outside the truncation |z| <= {self.K}") from None

    def row_sum_error(self) -> float:
        return float(np.abs(self.P.sum(axis=1) + self.leak - 1.0).max())


def enumerate_states(p: int, K: int) -> np.ndarray:
    """All ``z`` in ``N_0^p`` with ``|z| <= K``, zero first, then by size."""
    pts = [z for z in product(range(K + 1), repeat=p) if sum(z) <= K]
    pts.sort(key=lambda z: (sum(z), tuple(-c for c in z)))
    return np.array(pts, dtype=np.int64).reshape(-1, p)


class _Window:
    """Dense array over the box ``[0, K]^p`` with entries kept only for ``|y| <= K``."""

    def __init__(self, p, K):
        self.p, self.K = p, K
        self.shape = (K + 1,) * p
        grids = np.indices(self.shape)
        self.coords = grids.astype(float)
        self.tot = grids.sum(axis=0)

    def add_particle(self, arr, leak, lmean, law):
        K = self.K
        new = np.zeros(self.shape)
        cut = 0.0
        cut_mean = np.zeros(self.p)
        for v, pi in zip(law.support, law.probs):
            if pi == 0.0:
                continue
            room = K - int(v.sum())
            if room < 0:
                mass = arr.sum()
                cut += pi * mass
                cut_mean += pi * (np.array([(arr * c).sum() for c in self.coords]) + v * mass)
                continue
            src = tuple(slice(0, K + 1 - int(c)) for c in v)
            dst = tuple(slice(int(c), K + 1) for c in v)
            ok = self.tot[src] <= room
            new[dst] += pi * np.where(ok, arr[src], 0.0)
            out = self.tot > room
            mass = arr[out].sum()
            if mass > 0.0:
                cut += pi * mass
                cut_mean += pi * (np.array([(arr[out] * c[out]).sum() for c in self.coords]) + v * mass)
        return new, leak + cut, lmean + leak * law.mean() + cut_mean


def build_chain(model: EnvModel, K: int, max_states: int = MAX_STATES) -> TruncatedChain:
    """Exact annealed kernel ``P_xy = E[(F^x)[y]]`` on ``|z| <= K``.

    Rows are obtained by adding one particle at a time: the offspring
    distribution of ``x`` is the offspring distribution of ``x - e_i``
    convolved with the law of a type-``i`` particle, computed per environment
    state and then averaged over the environment mixture.
    """
    if K < 1:
        raise DomainError("truncation level K must be >= 1")
    p = model.p
    states = enumerate_states(p, K)
    S = states.shape[0]
    if S > max_states or (K + 1) ** p > MAX_CELLS:
        raise ResourceError(f"truncation K={K} gives {S} states (cap {max_states})")
    spectral = perron_eig(model.m)
    win = _Window(p, K)
    flat = np.ravel_multi_index(tuple(states.T), win.shape)
    index = {tuple(int(c) for c in z): i for i, z in enumerate(states)}

    P = np.zeros((S, S))
    leak = np.zeros(S)
    leak_mean = np.zeros((S, p))

    for prob, st in zip(model.probs, model.states):
        def rec(level, cur, prefix):
            if level == p:
                i = index[prefix]
                arr, lk, lm = cur
                P[i] += prob * arr.ravel()[flat]
                leak[i] += prob * lk
                leak_mean[i] += prob * lm
                return
            budget = K - sum(prefix)
            for c in range(budget + 1):
                rec(level + 1, cur, prefix + (c,))
                if c < budget:
                    cur = win.add_particle(*cur, st.laws[level])

        start = np.zeros(win.shape)
        start[(0,) * p] = 1.0
        rec(0, (start, 0.0, np.zeros(p)), ())

    return TruncatedChain(model, K, states, P, leak, leak_mean, spectral, index)


# ---------------------------------------------------------------------------
# survival probabilities


@dataclass
class Bracket:
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)


def distribution(chain: TruncatedChain, z, n: int) -> tuple:
    """Law of ``Z_n`` from ``z`` on the window and the cumulative leaked mass."""
    v = np.zeros(len(chain.states))
    v[chain.idx(z)] = 1.0
    leaked = 0.0
    for _ in range(n):
        leaked += v @ chain.leak
        v = v @ chain.P
    return v, leaked


def survival_curve(chain: TruncatedChain, z, n_max: int):
    """Lower and upper brackets of ``P(Z_n != 0 | Z_0 = z)`` for ``n = 0..n_max``."""
    v = np.zeros(len(chain.states))
    v[chain.idx(z)] = 1.0
    lower = np.empty(n_max + 1)
    upper = np.empty(n_max + 1)
    leaked = 0.0
    for n in range(n_max + 1):
        alive = v[1:].sum()
        lower[n] = alive
        upper[n] = min(1.0, alive + leaked)
        leaked += v @ chain.leak
        v = v @ chain.P
    return lower, upper


def survival_exact(chain: TruncatedChain, z, n: int) -> Bracket:
    """Bracket of ``P(D_n(z))``; a single point when nothing leaks."""
    if not np.any(np.asarray(z)):
        raise DomainError("z must be a nonzero start vector")
    if n < 0:
        raise DomainError("n must be >= 0")
    lower, upper = survival_curve(chain, z, n)
    return Bracket(float(lower[n]), float(upper[n]))


def conditional_law(chain: TruncatedChain, z, n: int) -> np.ndarray:
    """``P(Z_n = y | Z_n != 0, Z_0 = z)`` over ``chain.plus_states`` (window only)."""
    v, _ = distribution(chain, z, n)
    alive = v[1:]
    return alive / alive.sum()


def doubling_bounds(chain: TruncatedChain, z, n: int) -> tuple:
    """``(sum_i z_i P(D_n(e_i)) - P(D_n(z)), sum_ij z_i z_j E[(1 - F^i)(1 - F^j)])``.

    ``E[(1 - F^i_{0,n}(0))(1 - F^j_{0,n}(0))]`` is the survival probability of
    two particles' lines jointly, ``P(D_n(e_i)) + P(D_n(e_j)) - P(D_n(e_i + e_j))``.
    Brackets are resolved at the lower end; call on leak-free windows.
    """
    z = np.asarray(z, dtype=np.int64)
    p = chain.p
    eye = np.eye(p, dtype=np.int64)
    single = np.array([survival_exact(chain, eye[i], n).lower for i in range(p)])
    gap = float(z @ single - survival_exact(chain, z, n).lower)
    bound = 0.0
    for i in range(p):
        for j in range(p):
            both = survival_exact(chain, eye[i] + eye[j], n).lower
            bound += z[i] * z[j] * (single[i] + single[j] - both)
    return gap, float(bound)


# ---------------------------------------------------------------------------
# Yaglom limit


@dataclass
class YaglomData:
    """Quasi-stationary law ``t`` on ``chain.plus_states`` and derived constants."""

    states: np.ndarray
    t: np.ndarray
    W: float
    K_vec: np.ndarray
    rate: float
    lam: float
    U: np.ndarray
    leak_fraction: float
    residual: float
    iterations: int

    def T(self, s):
        """``T(s) = sum_y t_y s^y`` for ``s`` of shape ``(p,)`` or ``(R, p)``."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return np.prod(s[:, None, :] ** self.states[None, :, :], axis=2) @ self.t

    def one_minus_T(self, s):
        """``sum_y t_y (1 - s^y)``; vanishes exactly at ``s = 1``."""
        q = 1.0 - np.atleast_2d(np.asarray(s, dtype=float))
        with np.errstate(divide="ignore"):
            logs = np.maximum(np.log1p(-q), -1e300)
        return -np.expm1(logs @ self.states.T.astype(float)) @ self.t

    def pmf(self) -> dict:
        return {tuple(int(c) for c in y): float(w) for y, w in zip(self.states, self.t)}

    @property
    def tail_bound(self) -> float:
        """Bound on how far truncation can move EqY-type identities."""
        return self.leak_fraction + abs(self.rate - self.lam) + self.residual


def yaglom_exact(chain: TruncatedChain, tol: float = 1e-10, start=None,
                 max_iter: int = 200_000, leak_tol: float = 1e-8) -> YaglomData:
    """Quasi-stationary distribution of the truncated chain by power iteration.

    Iterates ``q <- q Q / |q Q|`` from ``delta_start`` (default ``e_1``) until the
    L1 movement drops below ``tol`` and the mass ratio stabilises.

    Raises
    ------
    TruncationError
        If more than ``leak_tol`` of the quasi-stationary mass leaks per step.
    ConvergenceError
        If ``max_iter`` iterations do not suffice.
    """
    Q = chain.Q
    leak = chain.leak[1:]
    if start is None:
        start = np.eye(chain.p, dtype=np.int64)[0]
    q = np.zeros(Q.shape[0])
    q[chain.idx(start) - 1] = 1.0
    rho_prev = np.nan
    history = []
    for it in range(1, max_iter + 1):
        w = q @ Q
        rho = w.sum()
        if rho <= 0:
            raise ConvergenceError("all mass absorbed in one step; no quasi-stationary law")
        w /= rho
        move = np.abs(w - q).sum()
        q = w
        if move < tol and abs(rho - rho_prev) < tol:
            break
        rho_prev = rho
        if it % 1000 == 0:
            history.append(float(move))
    else:
        raise ConvergenceError(f"quasi-stationary iteration did not converge to {tol:g}", history)
    leak_fraction = float(q @ leak)
    if leak_fraction > leak_tol:
        raise TruncationError(
            f"{leak_fraction:.3g} of the quasi-stationary mass leaks per step at K={chain.K}; "
            f"try K={2 * chain.K}",
            suggested_K=2 * chain.K,
        )
    rate = float((q @ Q).sum())
    residual = float(np.abs(q @ Q - rate * q).sum())
    U = chain.U
    W = float((chain.plus_states @ U) @ q)
    return YaglomData(chain.plus_states, q, W, U / W, rate, chain.lam, U,
                      leak_fraction, residual, it)


# ---------------------------------------------------------------------------
# asymptotic survival constant


@dataclass
class Theorem1Report:
    rows: list
    summary: list
    lam: float
    W: float


def theorem1_report(chain: TruncatedChain, starts, n_max: int = 40, n_ref: int = 30,
                    yaglom: YaglomData | None = None, precision: float = 1e-9) -> Theorem1Report:
    """Ratios ``P(D_n(z)) / lam^n`` against the limit ``(z, U) / W``.

    For every start and every ``n <= n_max`` the row reports the survival
    bracket, the ratio of its midpoint to ``lam^n``, the relative increment of
    that ratio from ``n-1``, and the relative gap
    ``|P(D_n(z)) - sum_i z_i P(D_n(e_i))| / P(D_n(z))``. Rows whose bracket is
    wider than ``precision`` relative to the midpoint are flagged.
    """
    if yaglom is None:
        yaglom = yaglom_exact(chain)
    lam, U, W = chain.lam, chain.U, yaglom.W
    p = chain.p
    basis = [survival_curve(chain, e, n_max) for e in np.eye(p, dtype=np.int64)]
    basis_mid = [0.5 * (lo + up) for lo, up in basis]
    powers = lam ** np.arange(n_max + 1)
    rows, summary = [], []
    for z in starts:
        z = np.asarray(z, dtype=np.int64)
        lo, up = survival_curve(chain, z, n_max)
        mid = 0.5 * (lo + up)
        ratio = mid / powers
        target = float(z @ U / W)
        linear = sum(zi * bm for zi, bm in zip(z, basis_mid))
        gap = np.abs(mid - linear) / mid
        for n in range(n_max + 1):
            inc = abs(ratio[n] - ratio[n - 1]) / ratio[n] if n > 0 else float("nan")
            rows.append({
                "z": z.tolist(), "n": n, "lower": float(lo[n]), "upper": float(up[n]),
                "ratio": float(ratio[n]), "increment": inc, "target": target,
                "linearity_gap": float(gap[n]),
                "flagged": bool(up[n] - lo[n] > precision * mid[n]),
            })
        summary.append({
            "z": z.tolist(),
            "limit_candidate": float(ratio[n_max]),
            "target": target,
            "rel_error": float(abs(ratio[n_max] - target) / target),
            "stabilization": float(abs(ratio[n_max] - ratio[n_ref]) / ratio[n_max]),
            "linearity_gap": float(gap[n_max]),
            "max_bracket_width": float((up - lo).max()),
        })
    return Theorem1Report(rows, summary, lam, W)


# ---------------------------------------------------------------------------
# functional equation and phi


@dataclass
class EqYResult:
    max_residual: float
    tail_bound: float
    residuals: np.ndarray
    s_grid: np.ndarray


def eqy_residual(model: EnvModel, yaglom: YaglomData, s_grid) -> EqYResult:
    """Residual of ``E[T(F(s))] = lam T(s) + 1 - lam`` on a grid of ``s``.

    Written as ``lam (1 - T(s)) - E[1 - T(F(s))]`` so the residual is exactly
    zero at ``s = 1``. ``lam`` is the Perron root of the annealed mean.
    """
    s = np.atleast_2d(np.asarray(s_grid, dtype=float))
    lam = yaglom.lam
    lhs = np.zeros(s.shape[0])
    for prob, st in zip(model.probs, model.states):
        lhs += prob * yaglom.one_minus_T(st.pgf(s))
    res = lam * yaglom.one_minus_T(s) - lhs
    return EqYResult(float(np.abs(res).max()), yaglom.tail_bound, res, s)


def unit_grid(p: int, points: int = 11) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, points)
    return np.array(list(product(axis, repeat=p)))


@dataclass
class PhiEstimate:
    value: float
    n: int
    increment: float


def _cond_complement(chain, v, s):
    # E[1 - s^Z; Z != 0] / P(Z != 0) from a vector over chain.states
    alive = v[1:]
    q = 1.0 - np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.maximum(np.log1p(-q), -1e300)
    pay = -np.expm1(chain.plus_states @ logs)
    return float(alive @ pay / alive.sum())


def phi_estimate(chain: TruncatedChain, s, i: int, tol: float = 1e-13,
                 n_max: int = 5000) -> PhiEstimate:
    """``phi_i(s) = lim E[1 - F^i_{0,n}(s)] / P(D_n(e_i))`` from the exact sub-pmf."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > 1):
        raise DomainError("s must lie in [0, 1]^p")
    v = np.zeros(len(chain.states))
    v[chain.idx(np.eye(chain.p, dtype=np.int64)[i])] = 1.0
    prev = _cond_complement(chain, v, s)
    for n in range(1, n_max + 1):
        v = v @ chain.P
        cur = _cond_complement(chain, v, s)
        inc = abs(cur - prev)
        if inc < tol:
            return PhiEstimate(cur, n, inc)
        prev = cur
    raise ConvergenceError(f"phi_{i} did not stabilise within {n_max} steps")


def representation_check(chain: TruncatedChain, yaglom: YaglomData, s, starts, n: int = 400) -> float:
    """Max over ``starts`` of ``|T(z, s) - sum_i z_i K_i Phi_i(s) / (z, K)|``.

    ``T(z, s)`` is the conditional generating function of ``Z_n`` from ``z``
    at a large finite ``n``; ``Phi_i = 1 - phi_i``.
    """
    K = yaglom.K_vec
    Phi = np.array([1.0 - phi_estimate(chain, s, i).value for i in range(chain.p)])
    worst = 0.0
    for z in starts:
        z = np.asarray(z, dtype=float)
        v, _ = distribution(chain, z.astype(np.int64), n)
        Tz = 1.0 - _cond_complement(chain, v, s)
        rep = float((z * K) @ Phi / (z @ K))
        worst = max(worst, abs(Tz - rep))
    return worst


# ---------------------------------------------------------------------------
# sparse triplet export


def write_triplets(fh, states, matrix, leak=None, kind="chain", K=None, threshold=0.0):
    """Write ``matrix`` as ``i j value`` lines after a state-enumeration header."""
    states = np.asarray(states)
    fh.write("# mbpre sparse-triplet v1\n")
    fh.write(f"# kind {kind}\n# p {states.shape[1]}\n")
    if K is not None:
        fh.write(f"# K {K}\n")
    fh.write(f"# states {states.shape[0]}\n")
    for i, z in enumerate(states):
        fh.write(f"# state {i} " + " ".join(str(int(c)) for c in z) + "\n")
    if leak is not None:
        for i, lk in enumerate(leak):
            fh.write(f"# leak {i} {float(lk)!r}\n")
    rows, cols = np.nonzero(np.asarray(matrix) > threshold)
    for i, j in zip(rows, cols):
        fh.write(f"{i} {j} {float(matrix[i, j])!r}\n")


def read_triplets(fh):
    """Inverse of :func:`write_triplets`; returns ``(states, matrix, leak, meta)``."""
    meta, states, leak, trip = {}, [], {}, []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[0] == "state":
                states.append([int(c) for c in parts[2:]])
            elif parts[0] == "leak":
                leak[int(parts[1])] = float(parts[2])
            elif len(parts) == 2:
                meta[parts[0]] = parts[1]
            continue
        i, j, val = line.split()
        trip.append((int(i), int(j), float(val)))
    S = len(states)
    mat = np.zeros((S, S))
    for i, j, val in trip:
        mat[i, j] = val
    lk = np.array([leak.get(i, 0.0) for i in range(S)]) if leak else None
    return np.array(states, dtype=np.int64), mat, lk, meta
