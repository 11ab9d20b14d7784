"""Vertex-linear (P1) finite elements on simplices embedded in R^N, plus
derivative recovery.

Everything here works for k-simplices in R^N with k <= N, so the same code
serves planar domains and embedded surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import simplex_measures


class SolverError(RuntimeError):
    pass


def barycentric_gradients(vertices: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the barycentric coordinates, shape (C, k+1, N), and cell measures."""
    corners = vertices[cells]
    e = corners[:, 1:, :] - corners[:, :1, :]          # (C, k, N)
    gram = np.einsum("cik,cjk->cij", e, e)
    dual = np.einsum("cij,cjn->cin", np.linalg.inv(gram), e)  # rows: grad lambda_1..k
    grads = np.concatenate([-dual.sum(axis=1, keepdims=True), dual], axis=1)
    return grads, simplex_measures(corners)


def stiffness(vertices: np.ndarray, cells: np.ndarray, weights: np.ndarray | None = None) -> sp.csr_matrix:
    grads, vol = barycentric_gradients(vertices, cells)
    w = vol if weights is None else vol * weights
    local = np.einsum("cin,cjn->cij", grads, grads) * w[:, None, None]
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    n = len(vertices)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def cell_gradients(vertices: np.ndarray, cells: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Piecewise-constant gradient of the P1 interpolant (exact for affine data)."""
    grads, _ = barycentric_gradients(vertices, cells)
    return np.einsum("cin,ci->cn", grads, values[cells])


def averaged_vertex_gradients(vertices: np.ndarray, cells: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Volume-weighted average of incident cell gradients."""
    g = cell_gradients(vertices, cells, values)
    vol = simplex_measures(vertices[cells])
    out = np.zeros((len(vertices), vertices.shape[1]))
    wsum = np.zeros(len(vertices))
    for j in range(cells.shape[1]):
        np.add.at(out, cells[:, j], g * vol[:, None])
        np.add.at(wsum, cells[:, j], vol)
    return out / wsum[:, None]


@dataclass(frozen=True)
class NeumannSolution:
    values: np.ndarray
    compatibility_residual: float
    linear_residual: float


def solve_neumann_system(K: sp.spmatrix, load: np.ndarray, masses: np.ndarray) -> NeumannSolution:
    """Solve K u = load on the complement of constants, with sum(masses * u) = 0.

    The bordered system [[K, m], [m^T, 0]] is nonsingular exactly when the
    kernel of K is the constants; the multiplier equals the compatibility
    defect sum(load) / sum(masses).
    """
    n = K.shape[0]
    m = masses.reshape(-1, 1)
    A = sp.bmat([[K, sp.csr_matrix(m)], [sp.csr_matrix(m.T), None]], format="csc")
    rhs = np.append(load, 0.0)
    try:
        sol = splu(A).solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"singular system beyond the constant nullspace: {exc}") from exc
    u = sol[:n]
    if not np.all(np.isfinite(u)):
        raise SolverError("solver produced non-finite values")
    lam = sol[n]
    scale = max(np.linalg.norm(load), 1e-300)
    resid = np.linalg.norm(K @ u + masses * lam - load) / scale
    return NeumannSolution(u, abs(float(load.sum())), float(resid))


# --- neighbourhoods and local quadratic fits ---------------------------------

def adjacency(cells: np.ndarray, n: int) -> sp.csr_matrix:
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    A.data[:] = 1.0
    return A


def ring_patches(cells: np.ndarray, n: int, depth: int = 2) -> np.ndarray:
    """Padded (n, P) array of the depth-ring around each vertex (itself first), -1 padded."""
    A = adjacency(cells, n)
    R = A.copy()
    for _ in range(depth - 1):
        R = R @ A
        R.data[:] = 1.0
    R = R.tocsr()
    R.sort_indices()
    counts = np.diff(R.indptr)
    out = -np.ones((n, counts.max()), dtype=int)
    for i in range(n):
        nb = R.indices[R.indptr[i]:R.indptr[i + 1]]
        nb = np.concatenate([[i], nb[nb != i]])
        out[i, :len(nb)] = nb
    return out


def quadratic_design(coords: np.ndarray) -> np.ndarray:
    """Columns 1, x_a, and x_a x_b / (2 or 1) so that coefficients are the
    value, gradient and Hessian entries (upper triangle)."""
    d = coords.shape[-1]
    cols = [np.ones(coords.shape[:-1])]
    cols += [coords[..., a] for a in range(d)]
    for a in range(d):
        for b in range(a, d):
            fac = 0.5 if a == b else 1.0
            cols.append(fac * coords[..., a] * coords[..., b])
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class QuadraticFit:
    value: np.ndarray      # (V,)
    gradient: np.ndarray   # (V, d)
    hessian: np.ndarray    # (V, d, d), symmetric
    fallback: np.ndarray   # (V,) bool: rank-deficient patch, ridge-regularized


def fit_quadratics(coords: np.ndarray, values: np.ndarray, mask: np.ndarray, ridge: float = 1e-8) -> QuadraticFit:
    """Least-squares quadratic fit per patch.

    coords: (V, P, d) offsets from the patch centre; values: (V, P);
    mask: (V, P) valid entries.  Exact whenever the data are a quadratic and
    the patch is unisolvent.
    """
    V, P, d = coords.shape
    scale = np.sqrt(np.max(np.where(mask[..., None], coords**2, 0.0).sum(-1), axis=1))
    scale[scale == 0] = 1.0
    X = quadratic_design(coords / scale[:, None, None]) * mask[..., None]
    y = values * mask
    ncol = X.shape[-1]
    AtA = np.einsum("vpi,vpj->vij", X, X)
    Atb = np.einsum("vpi,vp->vi", X, y)
    count = mask.sum(axis=1)
    eig_min = np.linalg.eigvalsh(AtA)[:, 0]
    fallback = (count < ncol) | (eig_min < 1e-10 * np.maximum(np.trace(AtA, axis1=1, axis2=2), 1.0))
    if fallback.any():
        reg = np.zeros((V, ncol))
        reg[fallback, 1 + d:] = ridge * np.maximum(np.trace(AtA, axis1=1, axis2=2), 1.0)[fallback, None]
        reg[fallback, 1:1 + d] = 1e-14
        AtA = AtA + reg[:, :, None] * np.eye(ncol)[None]
    coef = np.linalg.solve(AtA, Atb[..., None])[..., 0]
    value = coef[:, 0]
    grad = coef[:, 1:1 + d] / scale[:, None]
    H = np.zeros((V, d, d))
    k = 1 + d
    for a in range(d):
        for b in range(a, d):
            H[:, a, b] = H[:, b, a] = coef[:, k] / scale**2
            k += 1
    return QuadraticFit(value, grad, H, fallback)


PATCH_GROWTH = 0.3


def recovery_depth(vertices: np.ndarray, cells: np.ndarray) -> int:
    """Ring depth for Hessian recovery: at least 2, growing like (h/diam)^(-1/2).

    P1 nodal errors carry an O(h^2) component that is irregular at the mesh
    scale wherever the mesh is not a smooth image of a lattice (fan centres,
    wedge seams, corners).  A fit over a patch of radius R turns that into
    O(h^2/R^2) Hessian noise, so R must shrink more slowly than h.  R ~ sqrt(h)
    balances it against the O(R) bias on non-quadratic data.
    """
    k = cells.shape[1]
    edges = np.concatenate([vertices[cells[:, i]] - vertices[cells[:, j]]
                            for i in range(k) for j in range(i + 1, k)])
    diam = float(np.ptp(vertices, axis=0).max())
    rel = float(np.linalg.norm(edges, axis=1).mean()) / diam
    return max(2, round(PATCH_GROWTH / np.sqrt(rel)))


def recover_on_patches(vertices: np.ndarray, cells: np.ndarray, values: np.ndarray,
                       patches: np.ndarray | None = None, depth: int | None = None) -> QuadraticFit:
    """Quadratic fit over the ring patch of each vertex in ambient coordinates.

    Depth defaults to ``recovery_depth``; pass depth=2 for the plain 2-ring fit.
    """
    if patches is None:
        if depth is None:
            depth = recovery_depth(vertices, cells)
        patches = ring_patches(cells, len(vertices), depth)
    mask = patches >= 0
    idx = np.where(mask, patches, 0)
    coords = (vertices[idx] - vertices[:, None, :]) * mask[..., None]
    vals = (values[idx] - values[:, None]) * mask
    fit = fit_quadratics(coords, vals, mask)
    return QuadraticFit(fit.value + values, fit.gradient, fit.hessian, fit.fallback)
