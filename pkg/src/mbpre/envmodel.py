"""Offspring laws, environment states and the i.i.d. environment distribution.

An environment state is a p-tuple of finite-support offspring laws on
``N_0^p`` (one law per parent type); the environment is an i.i.d. sequence of
states drawn from a finite mixture. All integral characteristics (mean
matrix, second factorial moments, the annealed mean) are exact finite sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Sequence

import numpy as np

from .errors import DegenerateError, DomainError, ModelError
from .simplex import SimplexGrid
from .spectral import op_norm

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Finite-support probability law on ``N_0^p``.

    ``support`` has shape ``(S, p)`` (nonnegative integers, distinct rows) and
    ``probs`` shape ``(S,)``. Probabilities summing to 1 within ``1e-12`` are
    renormalised; anything further off is rejected.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        supp = np.asarray(self.support)
        probs = np.asarray(self.probs, dtype=float).ravel()
        if supp.ndim == 1:
            supp = supp.reshape(-1, 1)
        if supp.ndim != 2 or supp.shape[0] == 0:
            raise ModelError("offspring law needs a nonempty support")
        if not np.all(supp == np.round(supp)) or np.any(supp < 0):
            raise ModelError("support vectors must have nonnegative integer entries")
        supp = supp.astype(np.int64)
        if probs.shape[0] != supp.shape[0]:
            raise ModelError("support and probabilities differ in length")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise ModelError("probabilities must be finite and nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"probabilities sum to {float(total)!r}, not 1")
        if len({tuple(r) for r in supp}) != supp.shape[0]:
            raise ModelError("support vectors must be distinct")
        supp.setflags(write=False)
        probs = probs / total
        probs.setflags(write=False)
        object.__setattr__(self, "support", supp)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, pmf: dict) -> "OffspringLaw":
        """Build from ``{z: prob}`` where ``z`` is an int (p=1) or a tuple."""
        items = list(pmf.items())
        supp = [np.atleast_1d(z) for z, _ in items]
        return cls(np.array(supp), np.array([q for _, q in items], dtype=float))

    @property
    def p(self) -> int:
        return self.support.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.support

    def mass_at_zero(self) -> float:
        zero = ~self.support.any(axis=1)
        return float(self.probs[zero].sum())


@dataclass(frozen=True, eq=False)
class EnvState:
    """One environment: the offspring laws of the p particle types."""

    laws: tuple

    def __post_init__(self):
        laws = tuple(self.laws)
        if not laws:
            raise ModelError("an environment state needs at least one law")
        p = len(laws)
        for k, law in enumerate(laws):
            if law.p != p:
                raise ModelError(f"law {k} lives on N_0^{law.p}, state has p={p}")
        object.__setattr__(self, "laws", laws)

    @property
    def p(self) -> int:
        return len(self.laws)

    @cached_property
    def M(self) -> np.ndarray:
        """Mean matrix, ``M[i, j] = E[z_j]`` under law ``i``."""
        M = np.array([law.mean() for law in self.laws])
        M.setflags(write=False)
        return M

    @cached_property
    def B(self) -> tuple:
        """``B[k][i, j] = E[z_i (z_j - [i = j])]`` under law ``k``."""
        out = []
        for law in self.laws:
            z = law.support.astype(float)
            second = np.einsum("s,si,sj->ij", law.probs, z, z)
            out.append(second - np.diag(law.mean()))
        return tuple(out)

    @cached_property
    def T_stat(self) -> float:
        """``sum_k |B(k)| / |M|^2`` with the cone operator norm."""
        norm_m = op_norm(self.M)
        if norm_m <= 0:
            raise DegenerateError("mean matrix has zero norm")
        return sum(op_norm(b) for b in self.B) / norm_m**2

    def pgf_complement(self, q):
        """``1 - F(1 - q)`` evaluated without cancellation.

        ``q`` has shape ``(p,)`` or ``(R, p)`` with entries in ``[0, 1]``.
        """
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        q2 = np.atleast_2d(q)
        with np.errstate(divide="ignore"):
            # finite stand-in for log 0 so that 0 * log 0 = 0 in the products
            logs = np.maximum(np.log1p(-q2), -1e300)
        out = np.empty_like(q2)
        for i, law in enumerate(self.laws):
            ls = logs @ law.support.T.astype(float)
            out[:, i] = -np.expm1(ls) @ law.probs
        return out[0] if single else out

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        return 1.0 - self.pgf_complement(1.0 - s)


def pgf_eval(state: EnvState, s) -> np.ndarray:
    """``(F^1(s), ..., F^p(s))`` for ``s`` in the unit cube."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > 1) or np.any(~np.isfinite(s)):
        raise DomainError("s must lie in [0, 1]^p")
    if s.shape[-1] != state.p:
        raise DomainError(f"s has dimension {s.shape[-1]}, state has p={state.p}")
    return state.pgf(s)


def mean_matrix(state: EnvState) -> np.ndarray:
    return state.M


def hessians(state: EnvState) -> tuple:
    return state.B


def t_stat(state: EnvState) -> float:
    return state.T_stat


@dataclass(frozen=True, eq=False)
class EnvModel:
    """Finite mixture of environment states with probabilities ``probs``."""

    states: tuple
    probs: np.ndarray
    name: str = ""

    def __post_init__(self):
        states = tuple(self.states)
        probs = np.asarray(self.probs, dtype=float).ravel()
        if not states:
            raise ModelError("model needs at least one environment state")
        if probs.shape[0] != len(states):
            raise ModelError("one probability per environment state is required")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise ModelError("state probabilities must be finite and nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"state probabilities sum to {float(total)!r}, not 1")
        p = states[0].p
        for e, st in enumerate(states):
            if st.p != p:
                raise ModelError(f"state {e} has p={st.p}, expected {p}")
        probs = probs / total
        probs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)

    @property
    def p(self) -> int:
        return self.states[0].p

    def __len__(self):
        return len(self.states)

    @cached_property
    def mean_matrices(self) -> np.ndarray:
        """Stack of state mean matrices, shape ``(E, p, p)``."""
        return np.stack([st.M for st in self.states])

    @cached_property
    def m(self) -> np.ndarray:
        return np.tensordot(self.probs, self.mean_matrices, axes=1)


def annealed_mean(model: EnvModel) -> np.ndarray:
    """``m = E M``, the probability-weighted average of the state mean matrices."""
    return model.m


def sample_state(model: EnvModel, rng: np.random.Generator, size=None):
    """Draw environment state indices i.i.d. from ``model.probs``."""
    if len(model) == 1:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    return rng.choice(len(model), size=size, p=model.probs)


# ---------------------------------------------------------------------------
# condition checks


@dataclass
class ConditionsConfig:
    grid_resolution: int = 201
    samples: int = 20_000
    eps: float = 0.5
    thetas: Sequence[float] = (0.5, 1.0, 1.5, 2.0)
    max_word_length: int = 6
    max_words: int = 4096
    seed: int = 0


@dataclass
class ConditionResult:
    name: str
    passed: bool
    status: str
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{self.name} {'PASS' if self.passed else 'FAIL'}: {self.status}"


@dataclass
class ConditionReport:
    h1: ConditionResult
    h2: ConditionResult
    h3: ConditionResult
    h4: ConditionResult
    h5: ConditionResult
    h6: ConditionResult

    def results(self):
        return [self.h1, self.h2, self.h3, self.h4, self.h5, self.h6]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results())

    def failures(self):
        return [r for r in self.results() if not r.passed]


def _words(model, cfg, rng):
    """Semigroup elements: products of state mean matrices up to a length cap."""
    E = len(model)
    Ms = model.mean_matrices
    words = []
    for L in range(1, cfg.max_word_length + 1):
        if E**L + len(words) <= cfg.max_words:
            seqs = product(range(E), repeat=L)
        else:
            seqs = (tuple(rng.integers(E, size=L)) for _ in range(cfg.max_words // cfg.max_word_length))
        for seq in seqs:
            h = np.eye(model.p)
            for e in seq:
                h = Ms[e] @ h
            words.append((seq, h))
    return words


def _canon(v):
    v = np.real_if_close(v, tol=1e6)
    if np.iscomplexobj(v):
        return None
    n = np.linalg.norm(v)
    if n == 0:
        return None
    v = v / n
    k = np.flatnonzero(np.abs(v) > 1e-12)[0]
    return v if v[k] > 0 else -v


def _check_h2(model, words):
    p = model.p
    if p == 1:
        return ConditionResult("H2", True, "vacuous for p=1")
    cands = []
    for _, h in words:
        vals, vecs = np.linalg.eig(h)
        for k in range(p):
            if abs(vals[k].imag) > 1e-12:
                continue
            v = _canon(vecs[:, k])
            if v is None:
                continue
            if not any(np.abs(v - c).max() < 1e-8 for c in cands):
                cands.append(v)
    gens = [st.M for st in model.states]

    def inside(w, pool):
        if np.linalg.norm(w) < 1e-14:
            return True
        w = _canon(w)
        return any(np.abs(w - c).max() < 1e-7 for c in pool)

    pool = list(cands)
    changed = True
    while changed and pool:
        changed = False
        keep = [c for c in pool if all(inside(g @ c, pool) for g in gens)]
        if len(keep) != len(pool):
            pool, changed = keep, True
    if pool:
        return ConditionResult(
            "H2", False, f"invariant union of {len(pool)} line(s) found",
            {"invariant_lines": [c.tolist() for c in pool]},
        )
    perron = []
    for seq, h in words[: min(len(words), 8)]:
        vals, vecs = np.linalg.eig(h)
        k = int(np.argmax(vals.real))
        perron.append({"word": list(map(int, seq)), "direction": (np.abs(vecs[:, k].real) / np.abs(vecs[:, k].real).sum()).tolist()})
    return ConditionResult(
        "H2", True, f"not falsified ({len(words)} products, {len(cands)} candidate lines)",
        {"witnesses": perron, "heuristic": True},
    )


def check_conditions(model: EnvModel, cfg: ConditionsConfig | None = None) -> ConditionReport:
    """Evaluate conditions H1-H6 on a finite model.

    H1, H3 and H6 are decided exactly. H2 is falsification-only (search for a
    finite union of lines invariant under every generator), H4 is certified by
    exhibiting a product ``h`` with ``min_x log|x h| > 0`` on a simplex grid,
    and H5 is reported both as an exact finite sum and as a Monte Carlo
    estimate with standard error.
    """
    cfg = cfg or ConditionsConfig()
    rng = np.random.default_rng(cfg.seed)
    norms = np.array([op_norm(st.M) for st in model.states])
    if np.any(norms <= 0):
        bad = np.flatnonzero(norms <= 0).tolist()
        raise DegenerateError(f"state(s) {bad} have a zero mean matrix")

    moments = {float(t): float(model.probs @ norms**t) for t in cfg.thetas}
    h1 = ConditionResult("H1", True, "Theta_+ = (0, inf) for finite support",
                         {"Theta_plus": [0.0, float("inf")], "E_norm_M_theta": moments})

    words = _words(model, cfg, rng)
    h2 = _check_h2(model, words)

    gammas = []
    zero_entries = []
    for e, st in enumerate(model.states):
        if np.any(st.M <= 0):
            zero_entries.append(e)
        else:
            gammas.append(float(st.M.max() / st.M.min()))
    if zero_entries:
        h3 = ConditionResult("H3", False, f"zero entries in mean matrix of state(s) {zero_entries}",
                             {"states": zero_entries})
    else:
        gamma = max(gammas)
        h3 = ConditionResult("H3", True, f"gamma = {gamma:.6g}", {"gamma": gamma})

    if model.p == 1:
        grid = SimplexGrid(1, 0)
    elif model.p == 2:
        grid = SimplexGrid(2, cfg.grid_resolution - 1)
    else:
        grid = SimplexGrid(model.p, min(cfg.grid_resolution - 1, 20))
    best, best_word = -np.inf, None
    for seq, h in words:
        with np.errstate(divide="ignore"):
            d = float(np.log((grid.points @ h).sum(axis=1)).min())
        if d > best:
            best, best_word = d, seq
    h4 = ConditionResult(
        "H4", best > 0, f"best delta = {best:.6g} found on {len(words)} products",
        {"delta": best, "word": list(map(int, best_word)) if best_word is not None else None},
    )

    T = np.array([st.T_stat for st in model.states])
    flagged = np.flatnonzero(T == 0).tolist()
    with np.errstate(divide="ignore"):
        logT = np.where(T > 0, np.abs(np.log(np.where(T > 0, T, 1.0))), 0.0)
    vals = norms * logT ** (1.0 + cfg.eps)
    exact = float(model.probs @ vals)
    draws = vals[sample_state(model, rng, size=cfg.samples)]
    h5 = ConditionResult(
        "H5", bool(np.isfinite(exact)),
        f"E[|M| |log T|^(1+eps)] = {exact:.6g} (MC {draws.mean():.6g} +- {draws.std(ddof=1) / np.sqrt(cfg.samples) if cfg.samples > 1 else 0.0:.2g})",
        {"eps": cfg.eps, "exact": exact, "mc_mean": float(draws.mean()),
         "mc_stderr": float(draws.std(ddof=1) / np.sqrt(cfg.samples)) if cfg.samples > 1 else 0.0,
         "zero_T_states": flagged},
    )

    missing = [(e, k) for e, st in enumerate(model.states)
               for k, law in enumerate(st.laws) if law.mass_at_zero() <= 0]
    if missing:
        h6 = ConditionResult("H6", False,
                             "no mass at 0 for (state, law) " + ", ".join(f"({e}, {k})" for e, k in missing),
                             {"offending": missing})
    else:
        h6 = ConditionResult("H6", True, "every law puts positive mass on 0")
    return ConditionReport(h1, h2, h3, h4, h5, h6)
