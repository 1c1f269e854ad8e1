"""Perron eigendata, cone projections and the cone operator norm.

All functions work on small dense nonnegative matrices given as anything
``numpy.asarray`` accepts. Vectors are treated as columns in ``h @ x`` and as
rows in ``x @ h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateError, DomainError

DEFAULT_TOL = 1e-12
DEFAULT_ITER_CAP = 100_000
POSITIVITY_FLOOR = 1e-9


def as_matrix(h) -> np.ndarray:
    """Validate and return a square, finite, nonnegative float matrix."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        raise DomainError(f"expected a square matrix with p >= 1, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise DomainError("matrix has non-finite entries")
    if np.any(h < 0):
        raise DomainError("matrix has negative entries")
    return h


def as_simplex_point(x, tol: float = 1e-9) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or np.any(x < 0) or abs(x.sum() - 1.0) > tol:
        raise DomainError(f"not a point of the unit simplex: {x}")
    return x


@dataclass(frozen=True)
class SpectralData:
    """Perron root ``lam`` of ``m`` with right vector ``U`` and left vector ``V``.

    Normalised so that ``(V, 1) = 1`` and ``(V, U) = 1``.
    """

    m: np.ndarray
    lam: float
    U: np.ndarray
    V: np.ndarray
    iterations: int = 0

    @property
    def p(self) -> int:
        return self.m.shape[0]

    def right_residual(self) -> float:
        return float(np.abs(self.m @ self.U - self.lam * self.U).sum())

    def left_residual(self) -> float:
        return float(np.abs(self.V @ self.m - self.lam * self.V).sum())


def _power(m, start, tol, iter_cap, side):
    apply = (lambda v: m @ v) if side == "right" else (lambda v: v @ m)
    v = start / start.sum()
    history = []
    for it in range(1, iter_cap + 1):
        w = apply(v)
        lam = w.sum()
        if lam <= 0:
            raise DomainError("matrix annihilates the positive cone direction; no Perron vector")
        w = w / lam
        resid = np.abs(apply(w) - lam * w).sum()
        v = w
        if resid <= tol * max(1.0, lam):
            return lam, v, it
        if it % 1000 == 0:
            history.append(float(resid))
    raise ConvergenceError(
        f"{side} power iteration did not reach residual {tol:g} in {iter_cap} steps",
        history=history,
    )


def perron_eig(m, tol: float = DEFAULT_TOL, iter_cap: int = DEFAULT_ITER_CAP) -> SpectralData:
    """Perron root and eigenvectors of a nonnegative matrix by power iteration.

    Parameters
    ----------
    m : (p, p) array_like
        Nonnegative matrix. Strict positivity makes convergence geometric;
        zero entries are tolerated as long as the resulting eigenvectors are
        strictly positive.
    tol : float
        Residual target for ``|m U - lam U|_1`` and ``|V m - lam V|_1``,
        relative to ``max(1, lam)``.
    iter_cap : int
        Maximum number of iterations per side.

    Returns
    -------
    SpectralData

    Raises
    ------
    DomainError
        Negative/non-finite entries, or eigenvectors that are not strictly
        positive (reducible matrix).
    ConvergenceError
        The residual target was not met within ``iter_cap`` iterations.
    """
    m = as_matrix(m)
    if tol <= 0:
        raise DomainError("tol must be positive")
    p = m.shape[0]
    start = np.full(p, 1.0 / p)
    lam_r, u, it_r = _power(m, start, tol, iter_cap, "right")
    lam_l, v, it_l = _power(m, start, tol, iter_cap, "left")
    # entries this small relative to the largest are zero up to the iteration error
    floor = POSITIVITY_FLOOR
    if np.any(u <= floor * u.max()) or np.any(v <= floor * v.max()):
        raise DomainError("Perron vectors are not strictly positive (reducible matrix)")
    lam = 0.5 * (lam_r + lam_l)
    V = v / v.sum()
    U = u / (V @ u)
    return SpectralData(m=m, lam=float(lam), U=U, V=V, iterations=max(it_r, it_l))


def project_col(h, x) -> np.ndarray:
    """``h o x = h x / |h x|``."""
    h = as_matrix(h)
    y = h @ np.asarray(x, dtype=float)
    s = y.sum()
    if s <= 0:
        raise DegenerateError("h x = 0: projection undefined")
    return y / s


def project_row(x, h) -> np.ndarray:
    """``x o h = x h / |x h|``."""
    h = as_matrix(h)
    y = np.asarray(x, dtype=float) @ h
    s = y.sum()
    if s <= 0:
        raise DegenerateError("x h = 0: projection undefined")
    return y / s


def op_norm(h) -> float:
    """Operator norm induced by the L1 norm on the nonnegative cone.

    For nonnegative ``h`` this is ``sup_{|x|=1, x>=0} |h x|``, the largest
    column sum.
    """
    h = as_matrix(h)
    return float(h.sum(axis=0).max())
