"""Direct slab solves and 1-norm condition numbers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10
DENSE_CAP = 20000


class SolverError(RuntimeError):
    pass


def _factorize(A: sp.spmatrix):
    A = sp.csc_matrix(A)
    try:
        # the slab matrices are structurally symmetric; minimum degree on A+A^T
        # with diagonal preference keeps the fill low
        return spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1,
                         options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(f"sparse factorisation failed: {exc}") from exc


def solve_slab(system, tol: float = RESIDUAL_TOL) -> np.ndarray:
    """Solve a ``SlabSystem`` (or an ``(A, b)`` pair) and verify the residual."""
    A, b = (system if isinstance(system, tuple) else (system.matrix, system.rhs))
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise SolverError(f"inconsistent system shapes {A.shape} and {b.shape}")
    x = _factorize(A).solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    res = relative_residual(A, x, b)
    if res > tol:
        # one step of iterative refinement before giving up
        x = x + _factorize(A).solve(b - A @ x)
        res = relative_residual(A, x, b)
        if res > tol:
            raise SolverError(f"residual {res:.3e} exceeds {tol:.1e}")
    if not isinstance(system, tuple):
        system.info["residual"] = res
    return x


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


@dataclass
class ConditionNumber:
    value: float
    estimate: bool
    singular: bool = False

    def __float__(self):
        return self.value


def condition_number_1(A, cap: int = DENSE_CAP) -> ConditionNumber:
    """``||A||_1 ||A^-1||_1``.

    Below ``cap`` the inverse norm is computed exactly from an LU
    factorisation (column blocks of the inverse); above it by the
    Hager-Higham block estimator. Singular matrices return ``inf``.
    """
    A = sp.csc_matrix(A, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("condition number needs a square matrix")
    norm_a = spla.norm(A, 1)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1,
                       options=dict(SymmetricMode=True))
    except RuntimeError:
        return ConditionNumber(np.inf, False, True)
    if n <= cap:
        inv_norm = 0.0
        block = 256
        for s in range(0, n, block):
            k = min(block, n - s)
            E = np.zeros((n, k))
            E[np.arange(s, s + k), np.arange(k)] = 1.0
            X = lu.solve(E)
            if not np.all(np.isfinite(X)):
                return ConditionNumber(np.inf, False, True)
            inv_norm = max(inv_norm, np.abs(X).sum(axis=0).max())
        estimate = False
    else:
        op = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"),
                                 dtype=float)
        inv_norm = spla.onenormest(op, t=4)
        estimate = True
    kappa = float(norm_a * inv_norm)
    if not np.isfinite(kappa):
        return ConditionNumber(np.inf, estimate, True)
    return ConditionNumber(kappa, estimate)
