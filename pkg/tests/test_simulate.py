import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles as O
from conftest import SEEDS
from mbpre import (
    DomainError,
    EnvModel,
    EnvState,
    InsufficientDataError,
    OffspringLaw,
    PopulationOverflowError,
    pgf_iterate,
    run,
    step_population,
    survival_mc,
    yaglom_mc,
)
from mbpre.oracle import conditional_law, survival_exact
from mbpre.simulate import final_populations, mean_population, population_batch


def ivec(*a):
    return np.array(a, dtype=np.int64)


def test_step_zero_is_absorbing(F3):
    rng = np.random.default_rng(0)
    for st_ in F3.states:
        np.testing.assert_array_equal(step_population(ivec(0, 0), st_, rng), [0, 0])


@pytest.mark.parametrize("seed", SEEDS)
def test_step_f1_single(F1, seed):
    rng = np.random.default_rng(seed)
    draws = np.array([step_population(ivec(1), F1.states[0], rng)[0] for _ in range(4000)])
    assert set(np.unique(draws)) <= {0, 1}
    assert abs(draws.mean() - 0.5) < 3 * 0.5 / np.sqrt(4000)


@pytest.mark.parametrize("seed", SEEDS)
def test_step_f1_binomial_chi_square(F1, seed):
    rng = np.random.default_rng(seed)
    Z = population_batch(F1, ivec(2), 1, 100_000, rng)[:, 0]
    obs = np.bincount(Z, minlength=3)
    assert obs.size == 3
    _, pval = stats.chisquare(obs, 100_000 * np.array([0.25, 0.5, 0.25]))
    assert pval > 1e-4


def test_step_population_matches_batch_law(F3):
    # single-replica stepping reproduces the exact one-step row
    rng = np.random.default_rng(5)
    row = O.kernel_row(O.F3_RAW, (1, 1))
    counts = {}
    n = 40_000
    for _ in range(n):
        e = 0 if rng.random() < 0.2 else 1
        y = tuple(int(c) for c in step_population(ivec(1, 1), F3.states[e], rng))
        counts[y] = counts.get(y, 0) + 1
    for y, pr in row.items():
        pr = float(pr)
        assert abs(counts.get(y, 0) / n - pr) <= 4 * np.sqrt(pr * (1 - pr) / n) + 1e-12
    assert set(counts) <= set(row)


def test_overflow_detected():
    boom = EnvState((OffspringLaw.from_dict({(0,): 0.01, (10,): 0.99}),))
    model = EnvModel((boom,), (1.0,))
    with pytest.raises(PopulationOverflowError):
        run(model, ivec(1), 40, np.random.default_rng(0), cap=10**6)


def test_run_shapes(F1, F3):
    rng = np.random.default_rng(1)
    tr = run(F3, ivec(2, 1), 0, rng)
    np.testing.assert_array_equal(tr.z_path, [[2, 1]])
    assert tr.env_path.shape == (0,)
    tr = run(F3, ivec(0, 0), 7, rng)
    assert not tr.z_path.any() and tr.z_path.shape == (8, 2) and tr.env_path.shape == (7,)
    tr = run(F3, ivec(1, 0), 30, rng)
    dead = np.flatnonzero(~tr.z_path.any(axis=1))
    if dead.size:
        assert not tr.z_path[dead[0]:].any()
    with pytest.raises(DomainError):
        run(F1, np.array([1.5]), 3, rng)
    with pytest.raises(DomainError):
        run(F1, ivec(-1), 3, rng)


def test_run_deterministic_given_seed(F3):
    a = run(F3, ivec(1, 1), 20, np.random.default_rng(9))
    b = run(F3, ivec(1, 1), 20, np.random.default_rng(9))
    np.testing.assert_array_equal(a.z_path, b.z_path)
    np.testing.assert_array_equal(a.env_path, b.env_path)


@pytest.mark.parametrize("seed", SEEDS)
def test_f2_indicator_survival(F2, seed):
    est = survival_mc(F2, ivec(1), 10, 100_000, seed, estimator="indicator")
    exact = 0.375**10
    assert est.within(exact, 3.0)


def test_pgf_iterate_examples(F2, F3):
    assert pgf_iterate(F2, [0, 1], np.zeros(1))[0] == pytest.approx(0.875, abs=1e-15)
    assert pgf_iterate(F2, [0, 1], np.zeros(1), "Fn0")[0] == pytest.approx(0.5 + 0.5 * 0.75, abs=1e-15)
    s = np.array([0.3, 0.6])
    np.testing.assert_array_equal(pgf_iterate(F3, [], s), s)
    with pytest.raises(DomainError):
        pgf_iterate(F3, [0], np.array([1.2, 0.0]))
    with pytest.raises(DomainError):
        pgf_iterate(F3, [0], s, "sideways")


def test_pgf_iterate_against_fraction_composition():
    seq = [0, 1, 1, 0, 1]
    s = [0.2, 0.7]
    ref = s
    for e in reversed(seq):
        ref = O.pgf(O.F3_RAW[e][1], ref)
    from mbpre import f3
    np.testing.assert_allclose(pgf_iterate(f3(), seq, np.array(s)), np.array(ref, float), atol=1e-14)


@given(st.lists(st.integers(0, 1), max_size=30))
def test_pgf_iterate_fixes_one(seq):
    from mbpre import f3
    np.testing.assert_array_equal(pgf_iterate(f3(), seq, np.ones(2)), [1.0, 1.0])
    np.testing.assert_array_equal(pgf_iterate(f3(), seq, np.ones(2), "Fn0"), [1.0, 1.0])


def test_survival_mc_examples(F1, F3):
    e = survival_mc(F3, ivec(1, 0), 0, 100, 0)
    assert e.value == 1.0 and e.stderr == 0.0
    e = survival_mc(F1, ivec(1), 5, 1000, 0)
    assert e.value == pytest.approx(0.03125, abs=1e-15)
    assert e.var == 0.0
    with pytest.raises(DomainError):
        survival_mc(F1, ivec(0), 5, 10, 0)
    with pytest.raises(DomainError):
        survival_mc(F1, ivec(1), 5, 10, 0, estimator="psychic")


@pytest.mark.parametrize("seed", SEEDS)
def test_f2_z2_n8_against_bracket(F2, chain_f2, seed):
    br = survival_exact(chain_f2, ivec(2), 8)
    assert br.width == 0.0
    est = survival_mc(F2, ivec(2), 8, 50_000, seed)
    assert est.within(br.lower, 3.0)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("z", [(1, 0), (0, 1), (2, 1)])
def test_f3_survival_against_enumeration(F3, chain_f3, seed, z):
    n = 6
    exact = O.survival_enumerated(O.F3_RAW, z, n)
    br = survival_exact(chain_f3, z, n)
    assert br.lower - 1e-12 <= exact <= br.upper + 1e-12
    q = survival_mc(F3, ivec(*z), n, 40_000, seed)
    ind = survival_mc(F3, ivec(*z), n, 40_000, seed + 1000, estimator="indicator")
    assert q.within(exact, 3.0)
    assert ind.within(exact, 3.0)
    # Rao-Blackwellised estimator never has larger variance
    assert q.var <= ind.var
    comb = np.hypot(q.stderr, ind.stderr)
    assert abs(q.value - ind.value) <= 3 * comb


@pytest.mark.parametrize("seed", SEEDS)
def test_mean_population_is_linear(F3, seed):
    z = ivec(2, 1)
    n = 4
    exact = z @ np.linalg.matrix_power(F3.m, n)
    est = mean_population(F3, z, n, 40_000, seed)
    for i in range(2):
        assert est[i].within(exact[i], 3.0)


@pytest.mark.parametrize("seed", SEEDS)
def test_survival_monotone_and_subadditive(F3, seed):
    vals = [survival_mc(F3, ivec(2, 1), n, 20_000, seed) for n in (2, 4, 8, 12)]
    for a, b in zip(vals, vals[1:]):
        assert b.value <= a.value + 3 * np.hypot(a.stderr, b.stderr)
    n = 8
    joint = vals[2]
    e1 = survival_mc(F3, ivec(1, 0), n, 20_000, seed)
    e2 = survival_mc(F3, ivec(0, 1), n, 20_000, seed)
    bound = 2 * e1.value + e2.value
    assert joint.value <= bound + 3 * np.sqrt(joint.stderr**2 + 4 * e1.stderr**2 + e2.stderr**2)


def test_worker_count_invariance(F3):
    a = survival_mc(F3, ivec(1, 1), 10, 20_000, 4, workers=1)
    b = survival_mc(F3, ivec(1, 1), 10, 20_000, 4, workers=2)
    assert a == b
    A = final_populations(F3, ivec(1, 1), 10, 20_000, 4, workers=1)
    B = final_populations(F3, ivec(1, 1), 10, 20_000, 4, workers=3)
    np.testing.assert_array_equal(A, B)


@pytest.mark.parametrize("seed", SEEDS)
def test_yaglom_scalar_fixtures_are_point_masses(F1, F2, seed):
    for model in (F1, F2):
        ys = yaglom_mc(model, ivec(1), 4, 5000, seed)
        np.testing.assert_array_equal(ys.states, [[1]])
        np.testing.assert_array_equal(ys.pmf, [1.0])
        assert ys.survivors == ys.counts.sum() and ys.samples == 5000


def test_yaglom_zero_survivors(F1):
    with pytest.raises(InsufficientDataError):
        yaglom_mc(F1, ivec(1), 40, 1000, 0)


@pytest.mark.parametrize("seed", SEEDS)
def test_yaglom_f3_moderate_n(F3, chain_f3, seed):
    n = 12
    ys = yaglom_mc(F3, ivec(1, 0), n, 400_000, seed)
    ref = conditional_law(chain_f3, (1, 0), n)
    tv = ys.tv_distance(chain_f3.plus_states, ref)
    assert ys.survivors > 5000
    assert tv < 0.05


def test_tv_distance_basics():
    from mbpre.simulate import YaglomSample
    ys = YaglomSample(np.array([[1], [2]]), np.array([3, 1]), 4, 10)
    assert ys.tv_distance(np.array([[1], [2]]), [0.75, 0.25]) == 0.0
    assert ys.tv_distance(np.array([[3]]), [1.0]) == 1.0
