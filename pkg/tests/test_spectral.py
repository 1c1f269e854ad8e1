import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from frozen import F3_LAMBDA, F3_U, F3_V
from mbpre import DegenerateError, DomainError, op_norm, perron_eig, project_col, project_row


def positive_matrices(p):
    return arrays(float, (p, p), elements=st.floats(0.05, 5.0))


def simplex_points(p):
    return arrays(float, (p,), elements=st.floats(0.0, 1.0)).filter(lambda x: x.sum() > 1e-3).map(
        lambda x: x / x.sum())


def test_identity():
    sd = perron_eig(np.eye(2))
    assert sd.lam == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sd.V, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sd.U, [1.0, 1.0], atol=1e-12)


def test_all_ones():
    sd = perron_eig([[1.0, 1.0], [1.0, 1.0]])
    assert sd.lam == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(sd.V, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sd.U, [1.0, 1.0], atol=1e-12)


def test_f3_against_characteristic_polynomial(F3):
    sd = perron_eig(F3.m)
    assert sd.lam == pytest.approx(F3_LAMBDA, abs=1e-11)
    np.testing.assert_allclose(sd.U, F3_U, atol=1e-9)
    np.testing.assert_allclose(sd.V, F3_V, atol=1e-9)


def test_domain_errors():
    with pytest.raises(DomainError):
        perron_eig([[1.0, -1.0], [0.0, 1.0]])
    with pytest.raises(DomainError):
        perron_eig([[1.0, 0.0, 1.0]])
    with pytest.raises(DomainError):
        perron_eig([[2.0, 1.0], [0.0, 1.0]])  # reducible: U = (1, 0)


def test_convergence_error_carries_history():
    from mbpre import ConvergenceError

    with pytest.raises(ConvergenceError):
        perron_eig([[1.0, 1.0], [0.0, 1.0]], iter_cap=10)  # Jordan block: algebraic convergence


def test_projections():
    x = np.array([0.3, 0.7])
    np.testing.assert_allclose(project_col(np.eye(2), x), x)
    np.testing.assert_allclose(project_col(np.ones((2, 2)), [1.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(project_row(x, np.eye(2)), x)
    np.testing.assert_allclose(project_row([1.0, 0.0], [[2, 2], [1, 1]]), [0.5, 0.5])
    np.testing.assert_allclose(project_row([0.0, 1.0], [[2, 2], [1, 3]]), [0.25, 0.75])
    with pytest.raises(DegenerateError):
        project_col([[0.0, 1.0], [0.0, 1.0]], [1.0, 0.0])
    with pytest.raises(DegenerateError):
        project_row([1.0, 0.0], [[0.0, 0.0], [1.0, 1.0]])


def test_op_norm_examples():
    assert op_norm(np.eye(3)) == 1.0
    assert op_norm([[1, 2], [3, 4]]) == 6.0


@given(positive_matrices(3))
def test_eigen_invariants(m):
    sd = perron_eig(m)
    assert sd.right_residual() <= 1e-10 * max(1.0, sd.lam)
    assert sd.left_residual() <= 1e-10 * max(1.0, sd.lam)
    assert sd.V.sum() == pytest.approx(1.0, abs=1e-12)
    assert sd.V @ sd.U == pytest.approx(1.0, abs=1e-12)
    assert np.all(sd.U > 0) and np.all(sd.V > 0)
    assert sd.lam == pytest.approx(np.abs(np.linalg.eigvals(m)).max(), rel=1e-9)


@given(positive_matrices(2), simplex_points(2), st.floats(0.01, 100.0))
def test_project_col_scale_invariant(h, x, c):
    y = project_col(h, x)
    assert y.sum() == pytest.approx(1.0) and np.all(y >= 0)
    np.testing.assert_allclose(y, (h @ x) / (h @ x).sum())
    np.testing.assert_allclose(project_col(c * h, x), y, atol=1e-12)


@given(positive_matrices(3), positive_matrices(3), st.floats(0.01, 100.0))
def test_op_norm_submultiplicative_homogeneous(a, b, c):
    assert op_norm(a @ b) <= op_norm(a) * op_norm(b) * (1 + 1e-12)
    assert op_norm(c * a) == pytest.approx(c * op_norm(a))
    # the norm is the sup of |h x| over the simplex: attained at a vertex
    assert op_norm(a) == pytest.approx(max((a @ e).sum() for e in np.eye(3)))


@given(positive_matrices(3), arrays(float, (3, 3), elements=st.floats(0.0, 5.0)))
def test_sandwich(m, h):
    U = perron_eig(m).U
    p = 3
    hU = (h @ U).sum()
    assert hU / (p * U.sum()) <= op_norm(h) + 1e-12
    assert op_norm(h) <= (h @ np.ones(p)).sum() + 1e-12
    assert (h @ np.ones(p)).sum() <= hU / U.min() + 1e-9
