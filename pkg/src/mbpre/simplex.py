"""Uniform barycentric lattice on the unit simplex with piecewise-linear interpolation.

Lattice points are ``k / N`` for ``k`` in ``N_0^p`` with ``|k| = N``. Off-lattice
values are interpolated on the Kuhn (Freudenthal) triangulation taken in
cumulative-sum coordinates ``y_j = N * (x_1 + ... + x_j)``; for ``p = 2`` this
is ordinary linear interpolation on a segment, and in general it reproduces
affine functions exactly.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
import scipy.sparse as sp


def _compositions(total, parts):
    # stars and bars, lexicographic in the first coordinate descending
    if parts == 1:
        yield (total,)
        return
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield tuple(out)


class SimplexGrid:
    """Lattice of resolution ``N`` on the ``(p-1)``-simplex."""

    def __init__(self, p: int, N: int):
        if p < 1:
            raise ValueError("p must be >= 1")
        if p == 1:
            N = 0
        elif N < 1:
            raise ValueError("N must be >= 1 for p >= 2")
        self.p = p
        self.N = N
        ks = np.array(list(_compositions(N, p)), dtype=np.int64).reshape(-1, p)
        self.ks = ks
        self.points = ks / N if N > 0 else np.ones((1, 1))
        # cumulative coordinates of lattice points (first p-1 partial sums)
        self._cum = np.cumsum(ks, axis=1)[:, :-1]
        shape = (max(N, 0) + 1,) * (p - 1)
        self._lut = np.full(shape, -1, dtype=np.int64)
        if p > 1:
            self._lut[tuple(self._cum.T)] = np.arange(len(ks))

    def __len__(self):
        return self.points.shape[0]

    @classmethod
    def default(cls, p: int) -> "SimplexGrid":
        """401 points for p=2, 41 per edge for p=3, coarser beyond."""
        N = {1: 0, 2: 400, 3: 40, 4: 16, 5: 10, 6: 8}.get(p, 6)
        return cls(p, N)

    def weights(self, x):
        """Interpolation stencil for points ``x`` of shape ``(Q, p)``.

        Returns ``(idx, w)``, both of shape ``(Q, p)``: lattice indices of the
        simplex vertices containing each point and their barycentric weights.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Q = x.shape[0]
        if self.p == 1:
            return np.zeros((Q, 1), dtype=np.int64), np.ones((Q, 1))
        d = self.p - 1
        y = np.cumsum(x, axis=1)[:, :-1] * self.N
        y = np.clip(y, 0.0, self.N)
        # enforce the ordering 0 <= y_1 <= ... <= y_d <= N against rounding
        y = np.maximum.accumulate(y, axis=1)
        base = np.floor(y).astype(np.int64)
        base = np.minimum(base, self.N - 1)
        f = y - base
        # ties go to the later coordinate first so every vertex keeps y monotone
        tie = np.broadcast_to(-np.arange(d), f.shape)
        order = np.lexsort((tie, -f), axis=1)
        fs = np.take_along_axis(f, order, axis=1)
        w = np.empty((Q, d + 1))
        w[:, 0] = 1.0 - fs[:, 0]
        if d > 1:
            w[:, 1:d] = fs[:, :-1] - fs[:, 1:]
        w[:, d] = fs[:, -1]
        idx = np.empty((Q, d + 1), dtype=np.int64)
        vert = base.copy()
        rows = np.arange(Q)
        for k in range(d + 1):
            if k > 0:
                vert[rows, order[:, k - 1]] += 1
            idx[:, k] = self._lut[tuple(vert.T)]
        if np.any(idx < 0):
            raise AssertionError("interpolation stencil left the simplex lattice")
        return idx, w

    def interp_matrix(self, x) -> sp.csr_matrix:
        """Sparse ``(Q, G)`` matrix ``A`` with ``g(x_q) ~ (A g)_q``."""
        idx, w = self.weights(x)
        Q = idx.shape[0]
        rows = np.repeat(np.arange(Q), idx.shape[1])
        return sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(Q, len(self)))

    def interp(self, values, x):
        idx, w = self.weights(x)
        return (np.asarray(values)[idx] * w).sum(axis=1)
