"""Deterministic fixture meshes with analytic ground truth.

Planar sectors are triangulated ring by ring: ring k sits at radius k/K and
carries m*k equal segments, with m chosen so each wedge spans about 60
degrees.  Zipping consecutive rings by angle then reproduces the hexagonal
lattice pattern inside every wedge.  Curved or
embedded fixtures are images of these planar meshes, so refinement studies
see the same connectivity pattern everywhere.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np
from scipy import integrate

from .mesh import GAMMA, SIGMA, DomainMesh, Support, boundary_facets, signed_volumes

KINDS = ("half_disk", "quarter_wedge", "quarter_disk", "full_disk_closed", "perturbed_half_disk",
         "unit_square", "flat_half_disk_embedded", "full_disk_embedded", "sphere_cap",
         "cylinder_patch", "unit_sphere", "free_half_disk")


class UnknownFixture(ValueError):
    pass


def _zip_rings(inner: list[int], inner_ang: np.ndarray, outer: list[int], outer_ang: np.ndarray) -> list[tuple]:
    tris = []
    if len(inner) == 1:
        for j in range(len(outer) - 1):
            tris.append((inner[0], outer[j], outer[j + 1]))
        return tris
    i = j = 0
    while i < len(inner) - 1 or j < len(outer) - 1:
        advance_outer = i == len(inner) - 1 or (j < len(outer) - 1 and outer_ang[j + 1] <= inner_ang[i + 1])
        if advance_outer:
            tris.append((inner[i], outer[j], outer[j + 1]))
            j += 1
        else:
            tris.append((inner[i], outer[j], inner[i + 1]))
            i += 1
    return tris


def polar_sector(h: float, angle: float, start: float = 0.0, closed: bool = False):
    """Vertices (as (r, theta) pairs) and triangles of a unit-radius sector.

    ``closed`` makes a full disk (angle ignored, periodic rings).
    """
    rings = max(2, math.ceil(1.0 / h))
    polar = [(0.0, start)]
    ring_ids: list[list[int]] = [[0]]
    ring_angles: list[np.ndarray] = [np.array([start])]
    span = 2 * math.pi if closed else angle
    per_ring = max(3 if closed else 1, round(span / (math.pi / 3)))
    tris: list[tuple] = []
    for k in range(1, rings + 1):
        r = k / rings
        nseg = per_ring * k
        if closed:
            angs = start + span * np.arange(nseg) / nseg
        else:
            angs = start + span * np.arange(nseg + 1) / nseg
        ids = list(range(len(polar), len(polar) + len(angs)))
        polar.extend((r, float(a)) for a in angs)
        if closed:
            # periodic wrap: repeat the first vertex at angle + span
            inner_ids = ring_ids[-1] + ([ring_ids[-1][0]] if len(ring_ids[-1]) > 1 else [])
            inner_angs = np.append(ring_angles[-1], ring_angles[-1][0] + span) if len(ring_ids[-1]) > 1 else ring_angles[-1]
            outer_ids = ids + [ids[0]]
            outer_angs = np.append(angs, angs[0] + span)
            tris.extend(_zip_rings(inner_ids, inner_angs, outer_ids, outer_angs))
        else:
            tris.extend(_zip_rings(ring_ids[-1], ring_angles[-1], ids, angs))
        ring_ids.append(ids)
        ring_angles.append(angs)
    return np.array(polar), np.array(tris, dtype=int)


def _orient(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    vol = signed_volumes(vertices, cells)
    cells = cells.copy()
    flip = vol < 0
    cells[flip, 0], cells[flip, 1] = cells[flip, 1].copy(), cells[flip, 0].copy()
    return cells


def _label(vertices: np.ndarray, cells: np.ndarray, support: Support | None, gamma_tol: float = 1e-12):
    faces = np.array(boundary_facets(cells), dtype=int)
    labels = []
    for f in faces:
        if support is not None and np.all(np.abs(support.level(vertices[f])) < gamma_tol):
            labels.append(GAMMA)
        else:
            labels.append(SIGMA)
    return faces, tuple(labels)


def _planar(polar: np.ndarray, radius_fn=None) -> np.ndarray:
    r, t = polar[:, 0], polar[:, 1]
    if radius_fn is not None:
        r = r * radius_fn(t)
    xy = np.column_stack([r * np.cos(t), r * np.sin(t)])
    # snap rounding noise so straight edges lie exactly on the support
    xy[np.abs(xy) < 1e-15] = 0.0
    return xy


def half_disk(h: float = 0.05, radius: float = 1.0) -> DomainMesh:
    polar, tris = polar_sector(h / radius, math.pi)
    v = _planar(polar) * radius
    v[np.isclose(polar[:, 1], math.pi), 1] = 0.0
    sup = Support.halfspace([0.0, 1.0])
    cells = _orient(v, tris)
    faces, labels = _label(v, cells, sup)
    exact = {"volume": math.pi * radius**2 / 2, "sigma_area": math.pi * radius, "gamma_area": 2 * radius}
    return DomainMesh(v, cells, faces, labels, sup, {"fixture": "half_disk", "h": h, "exact_measures": exact})


def perturbed_half_disk(amplitude: float, h: float = 0.05) -> DomainMesh:
    """Half-disk with arc radius 1 + a sin^2(2 theta); the arc still meets the
    diameter orthogonally because dR/dtheta vanishes at theta = 0, pi."""
    if amplitude == 0.0:
        mesh = half_disk(h)
        mesh.metadata["fixture"] = "perturbed_half_disk"
        mesh.metadata["amplitude"] = 0.0
        return mesh

    def rfun(t):
        return 1.0 + amplitude * np.sin(2 * t) ** 2

    def drfun(t):
        return 2.0 * amplitude * np.sin(4 * t)

    polar, tris = polar_sector(h, math.pi)
    v = _planar(polar, rfun)
    v[np.isclose(polar[:, 1], math.pi), 1] = 0.0
    sup = Support.halfspace([0.0, 1.0])
    cells = _orient(v, tris)
    faces, labels = _label(v, cells, sup)
    area = integrate.quad(lambda t: rfun(t) ** 2 / 2, 0, math.pi, epsabs=1e-13)[0]
    arc = integrate.quad(lambda t: math.hypot(rfun(t), drfun(t)), 0, math.pi, epsabs=1e-13, limit=200)[0]
    exact = {"volume": area, "sigma_area": arc, "gamma_area": 2.0}
    return DomainMesh(v, cells, faces, labels, sup,
                      {"fixture": "perturbed_half_disk", "h": h, "amplitude": amplitude, "exact_measures": exact})


def quarter_wedge(h: float = 0.05) -> DomainMesh:
    """Unit disk minus the convex quarter-plane C = {x > 0, y < 0}.

    Gamma is the two straight edges on S = boundary of C; the domain has a
    reflex corner at the apex of the wedge.
    """
    polar, tris = polar_sector(h, 1.5 * math.pi)
    v = _planar(polar)
    v[np.isclose(polar[:, 1], 1.5 * math.pi), 0] = 0.0
    sup = Support(np.array([[-1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    cells = _orient(v, tris)
    faces, labels = _label(v, cells, sup)
    exact = {"volume": 0.75 * math.pi, "sigma_area": 1.5 * math.pi, "gamma_area": 2.0}
    return DomainMesh(v, cells, faces, labels, sup, {"fixture": "quarter_wedge", "h": h, "exact_measures": exact})


def quarter_disk(h: float = 0.05) -> DomainMesh:
    """Quarter disk with Gamma on both straight edges.

    The complement near the corner is a 270 degree region, which is not
    convex, so this fixture violates the convex-support hypothesis; no
    support is declared.
    """
    polar, tris = polar_sector(h, 0.5 * math.pi)
    v = _planar(polar)
    v[np.isclose(polar[:, 1], 0.5 * math.pi), 0] = 0.0
    cells = _orient(v, tris)
    faces = np.array(boundary_facets(cells), dtype=int)
    labels = tuple(GAMMA if np.all(np.min(np.abs(v[f]), axis=1) < 1e-12) and
                   (np.all(np.abs(v[f][:, 0]) < 1e-12) or np.all(np.abs(v[f][:, 1]) < 1e-12)) else SIGMA
                   for f in faces)
    exact = {"volume": math.pi / 4, "sigma_area": math.pi / 2, "gamma_area": 2.0}
    return DomainMesh(v, cells, faces, labels, None,
                      {"fixture": "quarter_disk", "h": h, "exact_measures": exact, "support_convex": False})


def full_disk_closed(h: float = 0.05) -> DomainMesh:
    polar, tris = polar_sector(h, 0.0, closed=True)
    v = _planar(polar)
    cells = _orient(v, tris)
    faces, labels = _label(v, cells, None)
    exact = {"volume": math.pi, "sigma_area": 2 * math.pi, "gamma_area": 0.0}
    return DomainMesh(v, cells, faces, labels, None, {"fixture": "full_disk_closed", "h": h, "exact_measures": exact})


def kuhn_box(n: int, dim: int = 2, side: float = 1.0, gamma_bottom: bool = False) -> DomainMesh:
    """Structured Kuhn triangulation of [0, side]^dim with n cells per side.

    With ``gamma_bottom`` the face x_dim = 0 is free boundary over the
    half-space support {x_dim < 0}.
    """
    from itertools import permutations

    grid = np.array(list(product(range(n + 1), repeat=dim)), dtype=float)
    index = {tuple(int(c) for c in p): i for i, p in enumerate(grid)}
    cells = []
    for base in product(range(n), repeat=dim):
        for perm in permutations(range(dim)):
            cur = list(base)
            simplex = [index[tuple(cur)]]
            for axis in perm:
                cur[axis] += 1
                simplex.append(index[tuple(cur)])
            cells.append(simplex)
    v = grid * (side / n)
    cells = _orient(v, np.array(cells, dtype=int))
    sup = None
    if gamma_bottom:
        normal = np.zeros(dim)
        normal[-1] = 1.0
        sup = Support.halfspace(normal)
    faces, labels = _label(v, cells, sup)
    exact = {"volume": side**dim, "sigma_area": 2 * dim * side ** (dim - 1) - (side ** (dim - 1) if gamma_bottom else 0),
             "gamma_area": side ** (dim - 1) if gamma_bottom else 0.0}
    return DomainMesh(v, cells, faces, labels, sup, {"fixture": "kuhn_box", "n": n, "exact_measures": exact})


def unit_square(n: int = 10) -> DomainMesh:
    mesh = kuhn_box(n, 2)
    mesh.metadata["fixture"] = "unit_square"
    return mesh


# --- embedded surfaces -------------------------------------------------------

def _surface(v: np.ndarray, tris: np.ndarray, support: Support | None, meta: dict,
             tangents: np.ndarray | None = None, normals: np.ndarray | None = None,
             all_gamma: bool = False):
    from .surface import SurfaceMesh
    faces, labels = _label(v, tris, support)
    if all_gamma:
        labels = tuple(GAMMA for _ in labels)
    if len(faces) == 0:
        faces = np.zeros((0, tris.shape[1] - 1), dtype=int)
    return SurfaceMesh(v, tris, faces, labels, support, meta, tangents, normals)


def _coordinate_frames(V: int, ambient: int, n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(ambient)
    return np.broadcast_to(eye[:n], (V, n, ambient)).copy(), np.broadcast_to(eye[n:], (V, ambient - n, ambient)).copy()


def flat_half_disk_embedded(h: float = 0.05, ambient: int = 4, radius: float = 1.0):
    """Unit half-disk in the x1x2-plane of R^N; Gamma is the diameter on the
    hyperplane x2 = 0 bounding the support half-space {x2 < 0}."""
    if ambient < 3:
        raise ValueError("an embedded surface needs ambient dimension >= 3")
    planar = half_disk(h, radius)
    V = len(planar.vertices)
    v = np.zeros((V, ambient))
    v[:, :2] = planar.vertices
    normal = np.zeros(ambient)
    normal[1] = 1.0
    t, nu = _coordinate_frames(V, ambient)
    meta = {"fixture": "flat_half_disk_embedded", "h": h, "ambient": ambient,
            "exact_measures": {"area": math.pi * radius**2 / 2, "sigma_area": math.pi * radius,
                               "gamma_area": 2 * radius, "mean_curvature_integral": 0.0}}
    return _surface(v, planar.cells, Support.halfspace(normal), meta, t, nu)


def full_disk_embedded(h: float = 0.05, ambient: int = 4):
    planar = full_disk_closed(h)
    V = len(planar.vertices)
    v = np.zeros((V, ambient))
    v[:, :2] = planar.vertices
    t, nu = _coordinate_frames(V, ambient)
    meta = {"fixture": "full_disk_embedded", "h": h, "ambient": ambient,
            "exact_measures": {"area": math.pi, "sigma_area": 2 * math.pi, "gamma_area": 0.0,
                               "mean_curvature_integral": 0.0}}
    return _surface(v, planar.cells, None, meta, t, nu)


def _sphere_frames(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outward normal x/|x| and an orthonormal tangent pair, per point of R^3."""
    nrm = x / np.linalg.norm(x, axis=1, keepdims=True)
    helper = np.where(np.abs(nrm[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t1 = helper - np.sum(helper * nrm, axis=1, keepdims=True) * nrm
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(nrm, t1)
    return np.stack([t1, t2], axis=1), nrm[:, None, :]


def sphere_cap(h: float = 0.05, height: float = 0.5):
    """Half of the spherical cap {x1 >= height} of the unit sphere, cut by the
    plane x3 = 0.  Sigma is the cap rim, Gamma the great-circle arc on the
    plane x3 = 0, which bounds the support half-space {x3 < 0}; the sphere
    meets that plane orthogonally."""
    rim = math.acos(height)
    polar, tris = polar_sector(h / rim, math.pi)
    rho, phi = polar[:, 0] * rim, polar[:, 1]
    v = np.column_stack([np.cos(rho), np.sin(rho) * np.cos(phi), np.sin(rho) * np.sin(phi)])
    v[np.isclose(phi, 0.0) | np.isclose(phi, math.pi), 2] = 0.0
    t, nu = _sphere_frames(v)
    area = math.pi * (1 - height)
    meta = {"fixture": "sphere_cap", "h": h, "height": height, "analytic_mean_curvature": "-2x",
            "exact_measures": {"area": area, "sigma_area": math.pi * math.sin(rim), "gamma_area": 2 * rim,
                               "mean_curvature_integral": 2 * area}}
    return _surface(v, tris, Support.halfspace([0.0, 0.0, 1.0]), meta, t, nu)


def cylinder_patch(h: float = 0.05, radius: float = 1.0, height: float = 1.0, angle: float = math.pi / 2):
    """Patch of the cylinder x1^2 + x2^2 = r^2 over an arc and a height; all Sigma."""
    n_arc = max(2, math.ceil(radius * angle / h))
    n_z = max(2, math.ceil(height / h))
    grid = kuhn_box(max(n_arc, n_z), 2)
    s = grid.vertices[:, 0] * angle
    z = grid.vertices[:, 1] * height
    v = np.column_stack([radius * np.cos(s), radius * np.sin(s), z])
    nrm = np.column_stack([np.cos(s), np.sin(s), np.zeros_like(s)])
    t = np.stack([np.column_stack([-np.sin(s), np.cos(s), np.zeros_like(s)]),
                  np.tile([0.0, 0.0, 1.0], (len(s), 1))], axis=1)
    meta = {"fixture": "cylinder_patch", "h": h, "radius": radius, "principal_curvatures": [1 / radius, 0.0],
            "exact_measures": {"area": radius * angle * height, "mean_curvature_integral": angle * height}}
    return _surface(v, grid.cells, None, meta, t, nrm[:, None, :])


def unit_sphere(level: int = 3):
    """Icosphere: subdivided icosahedron projected to the unit sphere."""
    phi = (1 + math.sqrt(5)) / 2
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0), (0, -1, phi), (0, 1, phi),
             (0, -1, -phi), (0, 1, -phi), (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
             (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5),
             (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    pts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(level):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = pts[a] + pts[b]
                pts.append(m / np.linalg.norm(m))
                cache[key] = len(pts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(pts)
    t, nu = _sphere_frames(v)
    meta = {"fixture": "unit_sphere", "level": level, "analytic_mean_curvature": "-2x",
            "exact_measures": {"area": 4 * math.pi, "mean_curvature_integral": 8 * math.pi}}
    return _surface(v, np.array(faces, dtype=int), None, meta, t, nu)


def free_half_disk(h: float = 0.02, radius: float = 11.0, ambient: int = 3):
    """Flat free-boundary stand-in: a large half-disk whose diameter rests on
    the support hyperplane x2 = 0.  A compact flat surface cannot have its
    whole boundary on a convex support, so the far arc is a truncation: it
    is labelled Gamma (zero flux) and recorded as ``truncation_radius``.
    Test functions are chosen to be negligible there.  ``h`` is relative to
    the radius."""
    mesh = flat_half_disk_embedded(h * radius, ambient, radius)
    meta = dict(mesh.metadata)
    meta.update({"fixture": "free_half_disk", "truncation_radius": radius})
    return replace_surface(mesh, labels=tuple(GAMMA for _ in mesh.labels), metadata=meta)


def replace_surface(mesh, **changes):
    from dataclasses import replace as _replace
    return _replace(mesh, **changes)


def build(kind: str, h: float = 0.05, **kwargs):
    """Fixture by name."""
    table = {
        "half_disk": half_disk, "quarter_wedge": quarter_wedge, "quarter_disk": quarter_disk,
        "full_disk_closed": full_disk_closed, "flat_half_disk_embedded": flat_half_disk_embedded,
        "full_disk_embedded": full_disk_embedded, "sphere_cap": sphere_cap, "cylinder_patch": cylinder_patch,
        "free_half_disk": free_half_disk,
    }
    if kind == "perturbed_half_disk":
        return perturbed_half_disk(kwargs.pop("amplitude", 0.2), h)
    if kind == "unit_square":
        return unit_square(kwargs.pop("n", max(2, round(1 / h))))
    if kind == "unit_sphere":
        return unit_sphere(kwargs.pop("level", 3))
    if kind not in table:
        raise UnknownFixture(f"unknown fixture {kind!r}; known: {', '.join(KINDS)}")
    return table[kind](h, **kwargs)
