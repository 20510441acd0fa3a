"""Reference quadrature rules on [0, 1]^d and on simplices."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


def npoints_for(order: int) -> int:
    """Gauss points needed to integrate degree ``order`` exactly in 1D."""
    return max(1, int(np.ceil((int(order) + 1) / 2)))


@lru_cache(maxsize=None)
def gauss_1d(order: int):
    """Gauss-Legendre rule on [0, 1] exact for degree ``order``."""
    x, w = leggauss(npoints_for(order))
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_lobatto_nodes(q: int) -> np.ndarray:
    """q+1 Gauss-Lobatto nodes on [0, 1] (q >= 1)."""
    if q < 1:
        raise ValueError("Gauss-Lobatto needs q >= 1")
    if q == 1:
        return np.array([0.0, 1.0])
    c = np.zeros(q + 1)
    c[-1] = 1.0
    inner = np.polynomial.legendre.Legendre(c).deriv().roots()
    return np.concatenate([[0.0], 0.5 * (np.sort(inner.real) + 1.0), [1.0]])


@lru_cache(maxsize=None)
def tensor_rule(order: int, dim: int):
    """Tensor Gauss rule on [0, 1]^dim, exact for Q_order."""
    x, w = gauss_1d(order)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    pts = np.stack([g.ravel(order="F") for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel(order="F") for g in wgrids], axis=-1), axis=1)
    return pts, wts


@lru_cache(maxsize=None)
def triangle_rule(order: int):
    """Collapsed Gauss-Jacobi rule on the unit triangle, exact for P_order.

    Returns barycentric-free coordinates ``(u, v)`` on the triangle
    (0,0), (1,0), (0,1) and weights summing to 1/2.
    """
    n = npoints_for(order)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + xj)
    wu = wj / 4.0
    xl, wl = gauss_1d(order)
    U, V = np.meshgrid(u, xl, indexing="ij")
    WU, WV = np.meshgrid(wu, wl, indexing="ij")
    # collapse: first axis carries the (1 - u) Jacobian
    s = 1.0 - U
    pts = np.stack([(s * V).ravel(), U.ravel()], axis=-1)
    return pts, (WU * WV).ravel()


def simplex_rule(order: int, dim: int):
    if dim == 1:
        x, w = gauss_1d(order)
        return x[:, None], w
    if dim == 2:
        return triangle_rule(order)
    raise NotImplementedError("simplex rules are provided for dim <= 2")


def map_simplices(verts: np.ndarray, order: int):
    """Quadrature on a batch of simplices ``verts`` of shape (m, d+1, d).

    Returns ``(points (m*nq, d), weights (m*nq,), parent (m*nq,))``.
    """
    m, nv, d = verts.shape
    ref, w = simplex_rule(order, d)
    origin = verts[:, 0, :]
    J = np.transpose(verts[:, 1:, :] - origin[:, None, :], (0, 2, 1))  # (m, d, d)
    det = np.abs(np.linalg.det(J)) if d > 1 else np.abs(J[:, 0, 0])
    pts = origin[:, None, :] + np.einsum("mij,qj->mqi", J, ref)
    wts = det[:, None] * w[None, :]
    parent = np.repeat(np.arange(m), len(w))
    return pts.reshape(-1, d), wts.reshape(-1), parent
