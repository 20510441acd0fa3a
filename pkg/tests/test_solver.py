import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stagfem.driver import condition_scaling
from stagfem.solver import SolverError, condition_number_1, relative_residual, solve_slab


def test_identity_system():
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(solve_slab((sp.identity(3), b)), b)


def test_diagonal_system():
    x = solve_slab((sp.diags([2.0, 3.0]), np.array([2.0, 3.0])))
    assert np.allclose(x, [1.0, 1.0], atol=1e-15)


def test_singular_and_malformed_systems():
    with pytest.raises(SolverError):
        solve_slab((sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), np.array([1.0, 0.0])))
    with pytest.raises(SolverError):
        solve_slab((sp.identity(3), np.ones(2)))


def test_condition_examples():
    assert condition_number_1(sp.identity(5)).value == pytest.approx(1.0)
    assert condition_number_1(sp.diags([1.0, 1e6])).value == pytest.approx(1e6)
    k = condition_number_1(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]])))
    assert k.singular and k.value == np.inf


def test_condition_estimate_above_cap(rng):
    A = sp.diags([np.full(49, -1.0), np.full(50, 2.0), np.full(49, -1.0)], [-1, 0, 1], format="csc")
    exact = condition_number_1(A)
    est = condition_number_1(A, cap=10)
    assert not exact.estimate and est.estimate
    assert est.value <= exact.value * (1 + 1e-12)
    assert est.value >= exact.value / 3
    # dense oracle
    assert exact.value == pytest.approx(np.linalg.cond(A.toarray(), 1), rel=1e-10)


@given(n=st.integers(2, 8), alpha=st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-3),
       seed=st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_condition_scale_invariance(n, alpha, seed):
    A = np.random.default_rng(seed).normal(size=(n, n)) + n * np.eye(n)
    k = condition_number_1(sp.csr_matrix(A)).value
    assert k >= 1.0 - 1e-12
    assert condition_number_1(sp.csr_matrix(alpha * A)).value == pytest.approx(k, rel=1e-10)


def test_relative_residual():
    A = sp.identity(2)
    assert relative_residual(A, np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 0.0
    assert relative_residual(A, np.array([1.0, 0.0]), np.zeros(2)) == 1.0


def test_stiffness_condition_grows_like_inverse_h_squared():
    res = condition_scaling([3, 4])
    ratio = res["kappa_A"][1] / res["kappa_A"][0]
    assert 2.5 <= ratio <= 6.0
