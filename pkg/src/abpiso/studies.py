"""Parameter sweeps shared by the CLI, the scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cones, domain, fixtures
from .euclid import SampleStream, sphere_area
from .mesh import lumped_masses, normalize_codim0


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    mesh_size: float
    vertices: int
    max_error: float


def quadratic_error(h: float, radius: float = 1.0) -> ConvergenceRow:
    """Max-norm distance between the half-disk solve and |x|^2/2, both with zero lumped mean."""
    mesh, _ = normalize_codim0(fixtures.half_disk(h, radius))
    u = domain.solve_mixed_neumann(mesh)
    exact = 0.5 * np.sum(mesh.vertices ** 2, axis=1)
    mass = lumped_masses(mesh.vertices, mesh.cells)
    exact -= mass @ exact / mass.sum()
    return ConvergenceRow(h, mesh.mesh_size, len(mesh.vertices), float(np.max(np.abs(u.values - exact))))


def convergence_study(hs=(0.04, 0.02, 0.01)) -> list[ConvergenceRow]:
    return [quadratic_error(h) for h in hs]


@dataclass(frozen=True)
class SweepRow:
    config: int
    dim: int
    points: int
    rho: float
    estimate: float
    standard_error: float
    half_sphere: float

    @property
    def margin(self) -> float:
        return self.estimate - self.half_sphere

    @property
    def holds(self) -> bool:
        return self.margin >= -3.0 * self.standard_error


def half_sphere_sweep(stream: SampleStream, configs: int = 100, samples: int = 20000,
                      rhos=(0.3, 1.0, 2.0)) -> list[SweepRow]:
    """Random convex configurations (5-20 points, dimension 2-4) against half the sphere area."""
    rows = []
    pick = stream.fork(0)
    dims = 2 + pick.integers(3, configs)
    counts = 5 + pick.integers(16, configs)
    for c in range(configs):
        pts = cones.random_convex_configuration(stream.fork(1 + c), int(dims[c]), int(counts[c]))
        for j, rho in enumerate(rhos):
            est = cones.restricted_union_measure(pts, rho, samples, stream.fork(1 + c).fork(10 + j))
            half = 0.5 * sphere_area(pts.dim) * rho ** (pts.dim - 1)
            rows.append(SweepRow(c, pts.dim, len(pts), float(rho), est.value, est.standard_error, half))
    return rows
