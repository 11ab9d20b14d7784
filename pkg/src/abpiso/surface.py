"""Embedded simplicial n-manifolds in R^N: frames, curvature, and intrinsic
derivative recovery.

Sign convention: the mean curvature vector is the trace of the vector-valued
second fundamental form (sum of principal curvatures), so that the
Laplace-Beltrami operator applied to the position gives H.  The unit sphere in
R^3 has H = -2x, pointing inward, with |H| = 2.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from . import fem
from .mesh import GAMMA, GEOM_TOL, LABELS, SIGMA, DomainMesh, Support, lumped_masses, simplex_measures

FRAME_TOL = 1e-10


@dataclass(frozen=True)
class SurfaceMesh(DomainMesh):
    """Simplicial n-manifold in R^N with per-vertex orthonormal frames.

    tangents: (V, n, N); normals: (V, m, N) with m = N - n.
    """
    tangents: np.ndarray | None = None
    normals: np.ndarray | None = None

    def __post_init__(self):
        if self.tangents is None or self.normals is None:
            t, nu = estimate_frames(self.vertices, self.cells)
            object.__setattr__(self, "tangents", t if self.tangents is None else self.tangents)
            object.__setattr__(self, "normals", nu if self.normals is None else self.normals)

    @property
    def n(self) -> int:
        return self.cells.shape[1] - 1

    @property
    def codim(self) -> int:
        return self.dim - self.n

    def masses(self) -> np.ndarray:
        return vertex_areas(self.vertices, self.cells)

    def permuted(self, perm: np.ndarray) -> "SurfaceMesh":
        base = DomainMesh.permuted(self, perm)
        return replace(base, tangents=self.tangents[perm], normals=self.normals[perm])

    def rigid(self, rotation: np.ndarray, shift: np.ndarray) -> "SurfaceMesh":
        """Image under x -> R x + b; the support is dropped unless R fixes it."""
        R = np.asarray(rotation, dtype=float)
        b = np.asarray(shift, dtype=float)
        sup = None
        if self.support is not None:
            nrm = self.support.normals @ R.T
            sup = Support(nrm, self.support.offsets + nrm @ b)
        return replace(self, vertices=self.vertices @ R.T + b, tangents=self.tangents @ R.T,
                       normals=self.normals @ R.T, support=sup)

    def lifted(self) -> "SurfaceMesh":
        """Append a zero coordinate, adding e_(N+1) to every normal frame."""
        V = len(self.vertices)
        pad = np.zeros((V, 1))
        extra = np.zeros((V, 1, self.dim + 1))
        extra[:, 0, -1] = 1.0
        sup = None
        if self.support is not None:
            sup = Support(np.column_stack([self.support.normals, np.zeros(len(self.support.offsets))]),
                          self.support.offsets)
        meta = dict(self.metadata)
        meta["lifted"] = meta.get("lifted", 0) + 1
        return replace(self, vertices=np.hstack([self.vertices, pad]),
                       tangents=np.concatenate([self.tangents, np.zeros((V, self.n, 1))], axis=2),
                       normals=np.concatenate([np.concatenate([self.normals, np.zeros((V, self.codim, 1))], axis=2),
                                               extra], axis=1),
                       support=sup, metadata=meta)

    def to_json(self) -> dict:
        d = DomainMesh.to_json(self)
        d["tangents"] = self.tangents.tolist()
        d["normals"] = self.normals.tolist()
        return d


def surface_from_json(d: dict) -> SurfaceMesh:
    from .mesh import mesh_from_json
    base = mesh_from_json({k: v for k, v in d.items() if k not in ("tangents", "normals")})
    t = np.asarray(d["tangents"], dtype=float) if "tangents" in d else None
    nu = np.asarray(d["normals"], dtype=float) if "normals" in d else None
    return SurfaceMesh(base.vertices, base.cells, base.faces, base.labels, base.support, base.metadata, t, nu)


def estimate_frames(vertices: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex frames from the area-weighted sum of incident cell tangent projectors.

    The top-n eigenvectors span the tangent estimate; the rest complete an
    orthonormal normal frame.
    """
    V, N = vertices.shape
    n = cells.shape[1] - 1
    e = vertices[cells[:, 1:]] - vertices[cells[:, :1]]            # (C, n, N)
    q, _ = np.linalg.qr(np.swapaxes(e, 1, 2))                        # (C, N, n)
    proj = np.einsum("cin,cjn->cij", q, q) * simplex_measures(vertices[cells])[:, None, None]
    acc = np.zeros((V, N, N))
    for j in range(n + 1):
        np.add.at(acc, cells[:, j], proj)
    _, vecs = np.linalg.eigh(acc)                                    # ascending
    tangents = np.swapaxes(vecs[:, :, N - n:][:, :, ::-1], 1, 2)
    normals = np.swapaxes(vecs[:, :, :N - n], 1, 2)
    return tangents, normals


def frame_defect(mesh: SurfaceMesh) -> float:
    F = np.concatenate([mesh.tangents, mesh.normals], axis=1)
    G = np.einsum("vik,vjk->vij", F, F)
    return float(np.max(np.abs(G - np.eye(mesh.dim))))


def tangent_angle_defect(mesh: SurfaceMesh) -> float:
    """Largest sine of the angle between a vertex tangent space and an incident cell's hull."""
    e = mesh.vertices[mesh.cells[:, 1:]] - mesh.vertices[mesh.cells[:, :1]]
    q, _ = np.linalg.qr(np.swapaxes(e, 1, 2))
    worst = 0.0
    for j in range(mesh.n + 1):
        nu = mesh.normals[mesh.cells[:, j]]                          # (C, m, N)
        worst = max(worst, float(np.max(np.abs(np.einsum("cmk,ckn->cmn", nu, q)))))
    return worst


def validate_surface(mesh: SurfaceMesh, angle_tol: float = 0.5) -> list[str]:
    v, c = mesh.vertices, mesh.cells
    errs: list[str] = []
    if c.shape[1] - 1 >= v.shape[1]:
        errs.append("cells must have dimension below the ambient dimension")
        return errs
    if c.min() < 0 or c.max() >= len(v):
        return ["cell references a missing vertex"]
    vol = simplex_measures(v[c])
    for ci in np.flatnonzero(vol <= 0):
        errs.append(f"cell {int(ci)} is degenerate")
    counts: Counter = Counter()
    for cell in c:
        for face in combinations(sorted(int(x) for x in cell), len(cell) - 1):
            counts[face] += 1
    for face, k in counts.items():
        if k > 2:
            errs.append(f"non-conforming face {face} shared by {k} cells")
    bnd = {f for f, k in counts.items() if k == 1}
    seen = Counter(tuple(sorted(int(x) for x in f)) for f in mesh.faces)
    for key in bnd:
        if seen[key] != 1:
            errs.append(f"boundary face {key} labelled {seen[key]} times")
    for key in seen:
        if key not in bnd:
            errs.append(f"labelled face {key} is not a boundary face")
    for lab in mesh.labels:
        if lab not in LABELS:
            errs.append(f"unknown label {lab!r}")
    if mesh.support is not None:
        trunc = mesh.metadata.get("truncation_radius")
        for fi, (face, lab) in enumerate(zip(mesh.faces, mesh.labels)):
            if lab != GAMMA:
                continue
            pts = v[face]
            if trunc is not None and np.all(np.abs(np.linalg.norm(pts, axis=1) - trunc) < 1e-6 * trunc):
                continue
            if np.max(np.abs(mesh.support.level(pts))) > GEOM_TOL * max(1.0, float(np.max(np.abs(pts)))):
                errs.append(f"gamma face {fi} is off the support")
    fd = frame_defect(mesh)
    if fd > FRAME_TOL:
        errs.append(f"frames not orthonormal (defect {fd:.2e})")
    ad = tangent_angle_defect(mesh)
    if ad > angle_tol:
        errs.append(f"tangent frames deviate from incident cells (sine {ad:.3f})")
    return errs


# --- areas and the Laplace-Beltrami operator ---------------------------------

def mixed_voronoi_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Mixed Voronoi vertex areas for triangles in R^N (obtuse triangles split
    half/quarter/quarter).  Sums to the total area exactly."""
    p = vertices[cells]
    area = simplex_measures(p)
    out = np.zeros(len(vertices))
    cot = np.zeros((len(cells), 3))
    sq = np.zeros((len(cells), 3))
    for i in range(3):
        a, b, c = p[:, i], p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        u, w = b - a, c - a
        cot[:, i] = np.einsum("ij,ij->i", u, w) / (2 * area)
        sq[:, i] = np.sum((b - c) ** 2, axis=1)          # edge opposite vertex i
    obtuse = np.any(cot < 0, axis=1)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        # Voronoi share of vertex i: edges ij (opposite k) and ik (opposite j)
        vor = (sq[:, k] * cot[:, k] + sq[:, j] * cot[:, j]) / 8.0
        share = np.where(obtuse, np.where(cot[:, i] < 0, area / 2, area / 4), vor)
        np.add.at(out, cells[:, i], share)
    return out


def vertex_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    if cells.shape[1] == 3:
        return mixed_voronoi_areas(vertices, cells)
    return lumped_masses(vertices, cells)


def boundary_mask(mesh: SurfaceMesh) -> np.ndarray:
    return mesh.boundary_vertices()


# --- curvature ---------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureData:
    mean_curvature: np.ndarray        # (V, N) ambient vectors
    second_form: np.ndarray           # (V, m, n, n) in the vertex frames
    fallback: np.ndarray              # (V,) bool
    convention: str = "H = trace of the second fundamental form; unit sphere: H = -2x"

    def scaled(self, s: float) -> "CurvatureData":
        return replace(self, mean_curvature=self.mean_curvature / s, second_form=self.second_form / s)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.mean_curvature, axis=1)


def tangent_coordinates(mesh: SurfaceMesh, patches: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offsets to each patch member split into tangent coordinates (V, P, n)
    and normal coordinates (V, P, m), plus the validity mask."""
    mask = patches >= 0
    idx = np.where(mask, patches, 0)
    d = (mesh.vertices[idx] - mesh.vertices[:, None, :]) * mask[..., None]
    t = np.einsum("vpk,vik->vpi", d, mesh.tangents)
    nrm = np.einsum("vpk,vak->vpa", d, mesh.normals)
    return t, nrm, mask


def fit_second_form(mesh: SurfaceMesh, patches: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per normal direction, the Hessian of a quadratic fit of the normal height
    over the tangent coordinates; linear terms absorb frame tilt."""
    if patches is None:
        patches = fem.ring_patches(mesh.cells, len(mesh.vertices), fem.recovery_depth(mesh.vertices, mesh.cells))
    t, nrm, mask = tangent_coordinates(mesh, patches)
    V = len(mesh.vertices)
    out = np.zeros((V, mesh.codim, mesh.n, mesh.n))
    fallback = np.zeros(V, dtype=bool)
    for a in range(mesh.codim):
        fit = fem.fit_quadratics(t, nrm[..., a], mask)
        out[:, a] = fit.hessian
        fallback |= fit.fallback
    return out, fallback


def curvature(mesh: SurfaceMesh, patches: np.ndarray | None = None) -> CurvatureData:
    """Mean curvature vector from the stiffness (cotangent) Laplacian of the
    position at interior vertices, projected to the normal frame; at boundary
    vertices, where the discrete Laplacian picks up a boundary term, the trace
    of the fitted second fundamental form is used instead."""
    Pi, fallback = fit_second_form(mesh, patches)
    K = fem.stiffness(mesh.vertices, mesh.cells)
    area = vertex_areas(mesh.vertices, mesh.cells)
    lap = -(K @ mesh.vertices) / area[:, None]
    coeff = np.einsum("vk,vak->va", lap, mesh.normals)
    H = np.einsum("va,vak->vk", coeff, mesh.normals)
    bnd = mesh.boundary_vertices()
    traced = np.einsum("vaii->va", Pi)
    H[bnd] = np.einsum("va,vak->vk", traced[bnd], mesh.normals[bnd])
    return CurvatureData(H, Pi, fallback)


# --- intrinsic derivatives ----------------------------------------------------

@dataclass(frozen=True)
class IntrinsicDerivatives:
    gradient: np.ndarray      # (V, N) tangential ambient vectors
    hessian: np.ndarray       # (V, n, n) in the tangent frame
    fallback: np.ndarray


def intrinsic_derivatives(mesh: SurfaceMesh, values: np.ndarray, patches: np.ndarray | None = None,
                          fit_gradient: bool = False) -> IntrinsicDerivatives:
    """Quadratic fit of u in tangent coordinates.  Interior gradients are the
    area-weighted average of cell gradients projected to the tangent frame;
    boundary gradients come from the fit.  With ``fit_gradient`` every vertex
    takes the fitted gradient, which is exact on quadratics."""
    if patches is None:
        patches = fem.ring_patches(mesh.cells, len(mesh.vertices), fem.recovery_depth(mesh.vertices, mesh.cells))
    t, _, mask = tangent_coordinates(mesh, patches)
    idx = np.where(mask, patches, 0)
    vals = (values[idx] - values[:, None]) * mask
    fit = fem.fit_quadratics(t, vals, mask)
    avg = fem.averaged_vertex_gradients(mesh.vertices, mesh.cells, values)
    grad_t = np.einsum("vk,vik->vi", avg, mesh.tangents)
    bnd = mesh.boundary_vertices() if not fit_gradient else np.ones(len(values), dtype=bool)
    grad_t[bnd] = fit.gradient[bnd]
    grad = np.einsum("vi,vik->vk", grad_t, mesh.tangents)
    H = 0.5 * (fit.hessian + np.swapaxes(fit.hessian, 1, 2))
    return IntrinsicDerivatives(grad, H, fit.fallback)


def cell_tangent_gradients(mesh: SurfaceMesh, values: np.ndarray) -> np.ndarray:
    return fem.cell_gradients(mesh.vertices, mesh.cells, values)


def conormals(mesh: SurfaceMesh, label: str) -> np.ndarray:
    from .mesh import vertex_normals
    return vertex_normals(mesh, label)


def components(cells: np.ndarray, n_vertices: int) -> np.ndarray:
    from scipy.sparse.csgraph import connected_components
    _, lab = connected_components(fem.adjacency(cells, n_vertices), directed=False)
    return lab
