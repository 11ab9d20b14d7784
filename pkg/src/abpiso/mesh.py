"""Simplicial domain meshes with labelled relative/free boundary faces.

A codimension-0 mesh lives in R^N with N-simplex cells.  Boundary faces are
the (N-1)-simplices owned by exactly one cell; each carries a label, SIGMA
for the relative boundary and GAMMA for the free boundary resting on the
support hypersurface S = boundary of a convex body C.  The support, when
declared, is polyhedral: C = {x : <x, n_k> < b_k for all k}, with each n_k the
outward normal of S.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np

SIGMA = "sigma"
GAMMA = "gamma"
LABELS = (SIGMA, GAMMA)
GEOM_TOL = 1e-9


class MeshValidationError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations[:8]) + (" ..." if len(self.violations) > 8 else ""))


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Support:
    """Polyhedral convex body C = {x : <x, normals[k]> < offsets[k]}."""

    normals: np.ndarray
    offsets: np.ndarray

    @classmethod
    def halfspace(cls, normal, offset: float = 0.0) -> "Support":
        n = np.asarray(normal, dtype=float)
        return cls(n[None, :] / np.linalg.norm(n), np.array([float(offset)]))

    def level(self, x: np.ndarray) -> np.ndarray:
        """max_k <x, n_k> - b_k: zero on S, negative inside C."""
        x = np.atleast_2d(x)
        return np.max(x @ self.normals.T - self.offsets[None, :], axis=1)

    def scaled(self, s: float) -> "Support":
        return Support(self.normals, self.offsets * s)

    def to_json(self) -> dict:
        return {"normals": self.normals.tolist(), "offsets": self.offsets.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Support":
        return cls(np.asarray(d["normals"], dtype=float), np.asarray(d["offsets"], dtype=float))


def simplex_measures(corners: np.ndarray) -> np.ndarray:
    """k-measure of k-simplices embedded in R^N; corners has shape (M, k+1, N)."""
    e = corners[:, 1:, :] - corners[:, :1, :]
    k = e.shape[1]
    if k == 0:
        return np.ones(corners.shape[0])
    gram = np.einsum("mik,mjk->mij", e, e)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)) / math.factorial(k)


def signed_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    c = vertices[cells]
    e = c[:, 1:, :] - c[:, :1, :]
    return np.linalg.det(e) / math.factorial(e.shape[1])


def facet_counts(cells: np.ndarray) -> Counter:
    counts: Counter = Counter()
    for cell in cells:
        for face in combinations(sorted(int(v) for v in cell), len(cell) - 1):
            counts[face] += 1
    return counts


def boundary_facets(cells: np.ndarray) -> list[tuple[int, ...]]:
    return sorted(f for f, c in facet_counts(cells).items() if c == 1)


def outward_face_normals(vertices: np.ndarray, cells: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Outward unit normals (within the cell's affine hull) of boundary faces."""
    owner = {}
    for ci, cell in enumerate(cells):
        for face in combinations(sorted(int(v) for v in cell), len(cell) - 1):
            owner.setdefault(face, ci)
    out = np.zeros((len(faces), vertices.shape[1]))
    for k, face in enumerate(faces):
        key = tuple(sorted(int(v) for v in face))
        cell = cells[owner[key]]
        opposite = [int(v) for v in cell if int(v) not in key][0]
        fpts = vertices[list(key)]
        base = fpts[0]
        e = (fpts[1:] - base).T
        # component of the opposite-vertex offset orthogonal to the face hull
        w = vertices[opposite] - base
        if e.shape[1]:
            coeff, *_ = np.linalg.lstsq(e, w, rcond=None)
            w = w - e @ coeff
        out[k] = -w / np.linalg.norm(w)
    return out


@dataclass(frozen=True)
class Measures:
    volume: float
    sigma_area: float
    gamma_area: float


@dataclass(frozen=True)
class DomainMesh:
    vertices: np.ndarray
    cells: np.ndarray
    faces: np.ndarray
    labels: tuple[str, ...]
    support: Support | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def mesh_size(self) -> float:
        c = self.vertices[self.cells]
        best = 0.0
        for i, j in combinations(range(c.shape[1]), 2):
            best = max(best, float(np.max(np.linalg.norm(c[:, i] - c[:, j], axis=1))))
        return best

    def cell_volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.cells)

    def face_areas(self) -> np.ndarray:
        return simplex_measures(self.vertices[self.faces])

    def label_mask(self, label: str) -> np.ndarray:
        return np.array([lab == label for lab in self.labels], dtype=bool)

    def vertices_with_label(self, label: str) -> np.ndarray:
        mask = np.zeros(len(self.vertices), dtype=bool)
        mask[self.faces[self.label_mask(label)].ravel()] = True
        return mask

    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(len(self.vertices), dtype=bool)
        mask[self.faces.ravel()] = True
        return mask

    def face_normals(self) -> np.ndarray:
        return outward_face_normals(self.vertices, self.cells, self.faces)

    def scaled(self, s: float) -> "DomainMesh":
        meta = dict(self.metadata)
        meta["scale"] = meta.get("scale", 1.0) * s
        if "truncation_radius" in meta:
            meta["truncation_radius"] = meta["truncation_radius"] * s
        sup = self.support.scaled(s) if self.support is not None else None
        return replace(self, vertices=self.vertices * s, support=sup, metadata=meta)

    def permuted(self, perm: np.ndarray) -> "DomainMesh":
        """Renumber vertices: new vertex i is old vertex perm[i]."""
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return replace(self, vertices=self.vertices[perm], cells=inv[self.cells], faces=inv[self.faces])

    def to_json(self) -> dict:
        d = {
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "boundary": [{"face": f.tolist(), "label": lab} for f, lab in zip(self.faces, self.labels)],
        }
        if self.support is not None:
            d["support"] = self.support.to_json()
        d.update({k: v for k, v in self.metadata.items()})
        return d


def mesh_from_json(d: dict) -> DomainMesh:
    vertices = np.asarray(d["vertices"], dtype=float)
    cells = np.asarray(d["cells"], dtype=int)
    faces = np.asarray([b["face"] for b in d.get("boundary", [])], dtype=int).reshape(-1, cells.shape[1] - 1)
    labels = tuple(str(b.get("label", "")).lower() for b in d.get("boundary", []))
    support = Support.from_json(d["support"]) if "support" in d else None
    meta = {k: v for k, v in d.items() if k not in ("vertices", "cells", "boundary", "support")}
    return DomainMesh(vertices, cells, faces, labels, support, meta)


def validate(mesh: DomainMesh) -> list[str]:
    """All invariant violations, empty when the mesh is valid."""
    v, c = mesh.vertices, mesh.cells
    errs: list[str] = []
    n = v.shape[1]
    if c.ndim != 2 or c.shape[1] != n + 1:
        return [f"cells must be {n}-simplices with {n + 1} vertices"]
    if not np.all(np.isfinite(v)):
        errs.append("non-finite vertex coordinates")
    if c.min() < 0 or c.max() >= len(v):
        return errs + ["cell references a missing vertex"]
    vol = signed_volumes(v, c)
    for ci in np.flatnonzero(vol <= 0):
        errs.append(f"cell {int(ci)} is inverted or degenerate (signed volume {vol[ci]:.3e})")
    counts = facet_counts(c)
    for face, k in counts.items():
        if k > 2:
            errs.append(f"non-conforming face {face} shared by {k} cells")
    bnd = {f for f, k in counts.items() if k == 1}
    seen: Counter = Counter()
    for fi, (face, lab) in enumerate(zip(mesh.faces, mesh.labels)):
        key = tuple(sorted(int(x) for x in face))
        seen[key] += 1
        if key not in bnd:
            errs.append(f"labelled face {fi} {key} is not a boundary face")
        if lab not in LABELS:
            errs.append(f"face {fi} {key} has unknown label {lab!r}")
    for key in sorted(bnd):
        if seen[key] == 0:
            errs.append(f"boundary face {key} is unlabelled")
        elif seen[key] > 1:
            errs.append(f"boundary face {key} labelled {seen[key]} times")
    # closure: every ridge of the boundary is shared by an even number of boundary faces
    ridges: Counter = Counter()
    for key in bnd:
        for r in combinations(key, len(key) - 1):
            ridges[r] += 1
    for r, k in ridges.items():
        if k % 2:
            errs.append(f"boundary not closed at ridge {r}")
    if mesh.support is not None:
        trunc = mesh.metadata.get("truncation_radius")
        for fi, (face, lab) in enumerate(zip(mesh.faces, mesh.labels)):
            if lab != GAMMA:
                continue
            pts = v[face]
            if trunc is not None and np.all(np.abs(np.linalg.norm(pts, axis=1) - trunc) < 1e-6 * trunc):
                continue
            lev = mesh.support.level(pts)
            if np.max(np.abs(lev)) > GEOM_TOL * max(1.0, float(np.max(np.abs(pts)))):
                errs.append(f"gamma face {fi} {tuple(int(x) for x in face)} is off the support")
    return errs


def euler_characteristic(cells: np.ndarray) -> int:
    """Alternating count of all faces of the complex."""
    chi = 0
    k = cells.shape[1]
    for size in range(1, k + 1):
        faces = {tuple(sorted(f)) for cell in cells.tolist() for f in combinations(cell, size)}
        chi += (-1) ** (size - 1) * len(faces)
    return chi


def load_and_validate(source) -> DomainMesh:
    """Load from a path, a JSON string, a dict, or pass through a mesh; raise on violations."""
    if isinstance(source, DomainMesh):
        mesh = source
    elif isinstance(source, dict):
        mesh = mesh_from_json(source)
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        mesh = mesh_from_json(json.loads(text))
    errs = validate(mesh)
    if errs:
        raise MeshValidationError(errs)
    return mesh


def save_mesh(mesh, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mesh.to_json()))


def measures(mesh: DomainMesh) -> Measures:
    areas = mesh.face_areas()
    return Measures(
        volume=float(mesh.cell_volumes().sum()),
        sigma_area=float(areas[mesh.label_mask(SIGMA)].sum()),
        gamma_area=float(areas[mesh.label_mask(GAMMA)].sum()),
    )


def normalize_codim0(mesh: DomainMesh) -> tuple[DomainMesh, float]:
    """Scale coordinates by s so that |Sigma| / |Omega| = N.

    Areas scale by s^(N-1) and volumes by s^N, so s = |Sigma| / (N |Omega|).
    """
    m = measures(mesh)
    if not m.sigma_area > 0:
        raise PreconditionError("relative boundary has zero area; cannot normalize")
    s = m.sigma_area / (mesh.dim * m.volume)
    return mesh.scaled(s), s


def lumped_masses(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Vertex-lumped (barycentric) masses: each cell splits its measure equally."""
    vol = simplex_measures(vertices[cells])
    k = cells.shape[1]
    return np.bincount(cells.ravel(), weights=np.repeat(vol / k, k), minlength=len(vertices))


def boundary_lumped(vertices: np.ndarray, faces: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Vertex-lumped boundary measure (optionally weighted per face)."""
    if len(faces) == 0:
        return np.zeros(len(vertices))
    area = simplex_measures(vertices[faces])
    if weights is not None:
        area = area * weights
    k = faces.shape[1]
    return np.bincount(faces.ravel(), weights=np.repeat(area / k, k), minlength=len(vertices))


def vertex_normals(mesh: DomainMesh, label: str) -> np.ndarray:
    """Area-weighted mean outward normal of the faces carrying ``label``, per
    vertex; zero rows for vertices touching no such face."""
    mask = mesh.label_mask(label)
    faces = mesh.faces[mask]
    out = np.zeros_like(mesh.vertices)
    if len(faces) == 0:
        return out
    nrm = mesh.face_normals()[mask] * mesh.face_areas()[mask][:, None]
    for j in range(faces.shape[1]):
        np.add.at(out, faces[:, j], nrm)
    length = np.linalg.norm(out, axis=1)
    hit = length > 0
    out[hit] /= length[hit, None]
    return out
