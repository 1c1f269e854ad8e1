"""Growth spectrum of random matrix products and the tilted environment.

``lambda(theta)`` is the dominant eigenvalue of the transfer operator

    (P_theta g)(x) = sum_e probs[e] |M_e x|^theta g(M_e o x)

acting on functions of the direction ``x`` in the unit simplex. The operator
is discretised on a :class:`~mbpre.simplex.SimplexGrid` with piecewise-linear
interpolation. Its positive eigenfunction ``r_theta`` defines a change of
measure on environment sequences, which drives the importance sampler below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .envmodel import EnvModel, sample_state
from .errors import ConvergenceError, DegenerateError, DomainError
from .rng import Estimate, RunningStats, blocks, merge_all, run_blocks, seed_of, stream
from .simplex import SimplexGrid
from .simulate import complement_path
from .spectral import perron_eig

STRONG = "strongly-subcritical"
OTHER = "other-subcritical"
CRITICAL = "critical-or-supercritical"
INCONCLUSIVE = "inconclusive"


def _directions(model: EnvModel, x):
    """``|M_e x|`` and ``M_e o x`` for all states; shapes ``(E, Q)`` and ``(E, Q, p)``."""
    y = np.einsum("eij,qj->eqi", model.mean_matrices, x)
    a = y.sum(axis=2)
    if np.any(a <= 0):
        raise DegenerateError("a mean matrix maps a simplex direction to zero")
    return a, y / a[:, :, None]


@dataclass
class TransferOperator:
    """Discretised ``P_theta`` on a fixed grid, reusable across ``theta``."""

    model: EnvModel
    grid: SimplexGrid
    norms: np.ndarray = field(init=False, repr=False)
    interp: list = field(init=False, repr=False)

    def __post_init__(self):
        self.norms, dirs = _directions(self.model, self.grid.points)
        self.interp = [self.grid.interp_matrix(d) for d in dirs]

    def matrix(self, theta: float) -> sp.csr_matrix:
        op = None
        for prob, a, A in zip(self.model.probs, self.norms, self.interp):
            term = sp.diags(prob * a**theta) @ A
            op = term if op is None else op + term
        return op.tocsr()


@dataclass
class EigenPair:
    theta: float
    lam: float
    r: np.ndarray
    grid: SimplexGrid
    residual: float
    iterations: int

    @property
    def r_ratio(self) -> float:
        """``max r / min r`` on the grid."""
        return float(self.r.max() / self.r.min())

    def r_at(self, x) -> np.ndarray:
        return self.grid.interp(self.r, x)


def lambda_r_theta(model: EnvModel, theta: float, grid: SimplexGrid | None = None,
                   tol: float = 1e-11, iter_cap: int = 20_000,
                   operator: TransferOperator | None = None) -> EigenPair:
    """Dominant eigenvalue ``lambda(theta)`` and eigenfunction ``r_theta``.

    Power iteration with ``r`` normalised to max 1; stops once
    ``max |P r - lambda r| <= tol``.
    """
    if not theta >= 0:
        raise DomainError("theta must be >= 0")
    if operator is None:
        operator = TransferOperator(model, grid or SimplexGrid.default(model.p))
    grid = operator.grid
    P = operator.matrix(theta)
    r = np.ones(len(grid))
    history = []
    for it in range(1, iter_cap + 1):
        w = P @ r
        lam = w.max()
        if lam <= 0:
            raise DegenerateError("transfer operator annihilated the iterate")
        w /= lam
        resid = float(np.abs(P @ w - lam * w).max())
        r = w
        if resid <= tol:
            return EigenPair(float(theta), float(lam), r, grid, resid, it)
        if it % 500 == 0:
            history.append(resid)
    raise ConvergenceError(f"lambda({theta}) power iteration stalled above {tol:g}", history)


@dataclass
class Derivative:
    """Finite-difference derivative with Richardson refinement."""

    value: float
    coarse: float
    fine: float
    step: float

    @property
    def error(self) -> float:
        return abs(self.fine - self.coarse)

    def flagged(self, tol: float = 1e-3) -> bool:
        return self.error > 10 * tol


def _log_lambda(op, theta, tol):
    return np.log(lambda_r_theta(op.model, theta, operator=op, tol=tol).lam)


def lambda_prime_at_one(model: EnvModel, h: float = 0.05, grid: SimplexGrid | None = None,
                        tol: float = 1e-12, operator: TransferOperator | None = None) -> Derivative:
    """``Lambda'(1)`` by central differences at ``h`` and ``h/2`` plus Richardson."""
    if not 0 < h <= 0.5:
        raise DomainError("h must lie in (0, 0.5]")
    op = operator or TransferOperator(model, grid or SimplexGrid.default(model.p))
    L = {t: _log_lambda(op, t, tol) for t in (1 - h, 1 - h / 2, 1 + h / 2, 1 + h)}
    coarse = (L[1 + h] - L[1 - h]) / (2 * h)
    fine = (L[1 + h / 2] - L[1 - h / 2]) / h
    return Derivative((4 * fine - coarse) / 3, coarse, fine, h)


def lambda_prime_at_zero(model: EnvModel, h: float = 0.05, grid: SimplexGrid | None = None,
                         tol: float = 1e-12, operator: TransferOperator | None = None) -> Derivative:
    """``Lambda'(0)``, the top Lyapunov exponent, by one-sided differences (``Lambda(0) = 0``)."""
    if not 0 < h <= 0.5:
        raise DomainError("h must lie in (0, 0.5]")
    op = operator or TransferOperator(model, grid or SimplexGrid.default(model.p))
    coarse = _log_lambda(op, h, tol) / h
    fine = _log_lambda(op, h / 2, tol) / (h / 2)
    return Derivative(2 * fine - coarse, coarse, fine, h)


@dataclass
class Classification:
    label: str
    lam1: float
    slope_at_one: Derivative
    slope_at_zero: Derivative
    margin: float

    def as_dict(self) -> dict:
        return {
            "class": self.label,
            "lambda_1": self.lam1,
            "Lambda_prime_1": self.slope_at_one.value,
            "Lambda_prime_1_error": self.slope_at_one.error,
            "Lambda_prime_0": self.slope_at_zero.value,
            "Lambda_prime_0_error": self.slope_at_zero.error,
            "margin": self.margin,
        }


def classify(model: EnvModel, h: float = 0.05, grid: SimplexGrid | None = None,
             margin: float | None = None) -> Classification:
    """Strongly subcritical iff ``lambda(1) < 1`` and ``Lambda'(1) < 0``, with margins.

    When ``Lambda'(0) >= 0`` the process is critical or supercritical. An
    estimate closer to its decision boundary than ``margin`` (default: ten
    times the finite-difference error proxy, at least 1e-8) is reported as
    inconclusive.
    """
    op = TransferOperator(model, grid or SimplexGrid.default(model.p))
    lam1 = lambda_r_theta(model, 1.0, operator=op, tol=1e-12).lam
    d1 = lambda_prime_at_one(model, h, operator=op)
    d0 = lambda_prime_at_zero(model, h, operator=op)
    m1 = margin if margin is not None else max(1e-8, 10 * d1.error)
    m0 = margin if margin is not None else max(1e-8, 10 * d0.error)
    if d0.value >= -1e-10:
        label = CRITICAL
    elif d0.value > -m0:
        label = INCONCLUSIVE
    elif d1.value + m1 < 0 and lam1 < 1:
        label = STRONG
    elif abs(d1.value) <= m1:
        label = INCONCLUSIVE
    else:
        label = OTHER
    return Classification(label, lam1, d1, d0, max(m0, m1))


@dataclass
class ThetaSpectrum:
    thetas: np.ndarray
    lambdas: np.ndarray
    pairs: list
    classification: Classification

    @property
    def Lambda(self) -> np.ndarray:
        return np.log(self.lambdas)

    @property
    def Lambda_prime_1(self) -> float:
        return self.classification.slope_at_one.value

    @property
    def label(self) -> str:
        return self.classification.label

    def convexity_defect(self) -> float:
        """Smallest increment of successive slopes of ``Lambda`` (>= 0 when convex)."""
        th = np.concatenate([[0.0], self.thetas]) if self.thetas[0] > 0 else self.thetas
        L = np.concatenate([[0.0], self.Lambda]) if self.thetas[0] > 0 else self.Lambda
        if len(th) < 3:
            return 0.0
        slopes = np.diff(L) / np.diff(th)
        return float(np.diff(slopes).min())

    def r_ratios(self) -> np.ndarray:
        return np.array([pr.r_ratio for pr in self.pairs])

    def pair(self, theta: float) -> EigenPair:
        for pr in self.pairs:
            if abs(pr.theta - theta) < 1e-12:
                return pr
        raise KeyError(theta)


def theta_spectrum(model: EnvModel, thetas=(0.5, 1.0, 1.5, 2.0), grid: SimplexGrid | None = None,
                   h: float = 0.05) -> ThetaSpectrum:
    thetas = np.array(sorted(float(t) for t in thetas))
    if np.any(thetas <= 0):
        raise DomainError("theta grid must be positive")
    op = TransferOperator(model, grid or SimplexGrid.default(model.p))
    pairs = [lambda_r_theta(model, t, operator=op) for t in thetas]
    cls = classify(model, h, grid=op.grid)
    return ThetaSpectrum(thetas, np.array([pr.lam for pr in pairs]), pairs, cls)


# ---------------------------------------------------------------------------
# tilted environment


@dataclass
class TiltedStepResult:
    env_index: int
    new_direction: np.ndarray
    log_weight: float
    q: np.ndarray
    mass: float


class TiltedSampler:
    """Environment sampler tilted by ``|M_e x|^theta r_theta(M_e o x)``.

    Selection probabilities are normalised exactly at every step; the
    normaliser enters the log-weight, so weighted averages are unbiased for
    any positive ``r`` and exact-in-law when ``r`` is the true eigenfunction.
    """

    def __init__(self, model: EnvModel, pair: EigenPair, mass_tol: float = 1e-3):
        self.model = model
        self.theta = pair.theta
        self.lam = pair.lam
        self.pair = pair
        self.mass_tol = mass_tol
        self.warnings = 0
        self.max_mass_error = 0.0

    def selection(self, x):
        """``(q, dirs, norms, log S, mass)`` for directions ``x`` of shape ``(Q, p)``."""
        x = np.atleast_2d(x)
        a, dirs = _directions(self.model, x)
        r_next = np.stack([self.pair.r_at(d) for d in dirs])
        w = self.model.probs[:, None] * a**self.theta * r_next
        S = w.sum(axis=0)
        q = (w / S).T
        mass = S / (self.lam * self.pair.r_at(x))
        err = np.abs(mass - 1.0)
        self.warnings += int((err > self.mass_tol).sum())
        self.max_mass_error = max(self.max_mass_error, float(err.max()))
        return q, dirs, a, r_next, np.log(S), mass

    def step(self, x, rng) -> TiltedStepResult:
        x = np.asarray(x, dtype=float)
        q, dirs, a, r_next, logS, mass = self.selection(x[None, :])
        e = int(rng.choice(len(self.model), p=q[0]))
        lw = logS[0] - self.theta * np.log(a[e, 0]) - np.log(r_next[e, 0])
        return TiltedStepResult(e, dirs[e, 0], float(lw), q[0], float(mass[0]))

    def paths(self, x0, n: int, count: int, rng):
        """Tilted environment paths and their log-weights, ``(count, n)`` and ``(count,)``."""
        x = np.tile(np.asarray(x0, dtype=float), (count, 1))
        envs = np.empty((count, n), dtype=np.int64)
        logw = np.zeros(count)
        rows = np.arange(count)
        for k in range(n):
            q, dirs, a, r_next, logS, _ = self.selection(x)
            u = rng.random(count)
            e = (q.cumsum(axis=1) < u[:, None]).sum(axis=1)
            e = np.minimum(e, len(self.model) - 1)
            envs[:, k] = e
            logw += logS - self.theta * np.log(a[e, rows]) - np.log(r_next[e, rows])
            x = dirs[e, rows]
        return envs, logw


def tilted_step(model: EnvModel, theta: float, r, lam: float, x, rng,
                grid: SimplexGrid | None = None) -> TiltedStepResult:
    """One tilted environment draw from direction ``x``.

    ``r`` is either an :class:`EigenPair` or a table of values on ``grid``.
    """
    if isinstance(r, EigenPair):
        pair = r
    else:
        grid = grid or SimplexGrid.default(model.p)
        pair = EigenPair(float(theta), float(lam), np.asarray(r, float), grid, float("nan"), 0)
    return TiltedSampler(model, pair).step(x, rng)


# ---------------------------------------------------------------------------
# Y(n, theta) estimation


def _integrand(q, theta_vec):
    with np.errstate(divide="ignore"):
        logs = np.where(theta_vec > 0, np.log(q), 0.0)
    return (logs * theta_vec).sum(axis=1)


def _y_block(model, theta_vec, n, seed, block, count, method, pair, x0):
    rng = stream(seed, "estimate_Y", block)
    if method == "direct":
        envs = sample_state(model, rng, size=(count, n)) if n > 0 else np.zeros((count, 0), np.int64)
        vals = np.exp(_integrand(complement_path(model, envs), theta_vec))
        return RunningStats.of(vals), 0, 0.0
    sampler = TiltedSampler(model, pair)
    envs, logw = sampler.paths(x0, n, count, rng)
    vals = np.exp(_integrand(complement_path(model, envs), theta_vec) + logw)
    return RunningStats.of(vals), sampler.warnings, sampler.max_mass_error


@dataclass(frozen=True)
class YEstimate(Estimate):
    method: str = "direct"
    mass_warnings: int = 0
    max_mass_error: float = 0.0


def estimate_Y(model: EnvModel, theta_vec, n: int, samples: int, rng, method: str = "tilted",
               pair: EigenPair | None = None, x0=None, workers: int = 1,
               grid: SimplexGrid | None = None) -> YEstimate:
    """Estimate ``Y(n, theta) = E[prod_i (1 - F^i_{0,n}(0))^theta_i]``.

    ``method="direct"`` averages over i.i.d. environments. ``method="tilted"``
    samples environments from the tilt with ``theta = |theta_vec|`` and
    reweights. Both routes use the composition order in which the first
    sampled state acts on ``0`` first; the two orders agree in law under
    i.i.d. sampling, and this one pairs with the direction ``M_e o x``.
    """
    theta_vec = np.asarray(theta_vec, dtype=float).ravel()
    if theta_vec.shape[0] != model.p:
        raise DomainError(f"theta vector needs {model.p} components")
    if np.any((theta_vec != 0) & (theta_vec < 1)) or np.any(theta_vec < 0):
        raise DomainError("theta components must lie in {0} U [1, inf)")
    if theta_vec.sum() < 1:
        raise DomainError("|theta| must be >= 1")
    if n < 0 or samples < 1:
        raise DomainError("need n >= 0 and samples >= 1")
    if method not in ("direct", "tilted"):
        raise DomainError(f"unknown method {method!r}")
    seed = seed_of(rng)
    theta = float(theta_vec.sum())
    if method == "tilted" and pair is None:
        pair = lambda_r_theta(model, theta, grid=grid)
    if pair is not None and abs(pair.theta - theta) > 1e-12:
        raise DomainError("eigenpair theta does not match |theta_vec|")
    x0 = np.full(model.p, 1.0 / model.p) if x0 is None else np.asarray(x0, float)
    jobs = [(model, theta_vec, n, seed, b, k, method, pair, x0) for b, k in blocks(samples)]
    parts = run_blocks(_y_block, jobs, workers)
    st = merge_all(p[0] for p in parts)
    return YEstimate(st.mean, st.stderr, st.n, st.var, method,
                     sum(p[1] for p in parts), max(p[2] for p in parts))


def _surv_block(model, z, n, seed, block, count, pair, x0):
    rng = stream(seed, "survival_tilted", block)
    sampler = TiltedSampler(model, pair)
    envs, logw = sampler.paths(x0, n, count, rng)
    q = complement_path(model, envs)
    with np.errstate(divide="ignore"):
        logs = np.maximum(np.log1p(-q), -1e300)
    vals = -np.expm1(logs @ z) * np.exp(logw)
    return RunningStats.of(vals), sampler.warnings, sampler.max_mass_error


def survival_tilted(model: EnvModel, z, n: int, samples: int, rng, pair: EigenPair | None = None,
                    x0=None, workers: int = 1, grid: SimplexGrid | None = None) -> YEstimate:
    """Importance-sampled ``P(Z_n != 0 | Z_0 = z)`` under the ``theta = 1`` tilt."""
    z = np.asarray(z, dtype=float).ravel()
    if z.shape[0] != model.p or np.any(z < 0) or not z.any():
        raise DomainError("z must be a nonzero population vector")
    if n < 0 or samples < 1:
        raise DomainError("need n >= 0 and samples >= 1")
    seed = seed_of(rng)
    pair = pair or lambda_r_theta(model, 1.0, grid=grid)
    x0 = np.full(model.p, 1.0 / model.p) if x0 is None else np.asarray(x0, float)
    jobs = [(model, z, n, seed, b, k, pair, x0) for b, k in blocks(samples)]
    parts = run_blocks(_surv_block, jobs, workers)
    st = merge_all(p[0] for p in parts)
    return YEstimate(st.mean, st.stderr, st.n, st.var, "tilted",
                     sum(p[1] for p in parts), max(p[2] for p in parts))


def perron_check(model: EnvModel, grid: SimplexGrid | None = None) -> float:
    """``|lambda(1) - Perron root of the annealed mean|``."""
    return abs(lambda_r_theta(model, 1.0, grid=grid).lam - perron_eig(model.m).lam)
