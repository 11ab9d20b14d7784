"""Mixed Neumann problem on codimension-0 domains and derivative fields.

Solves  Laplace(u) = N  in Omega,  du/dnu = 1 on Sigma,  du/dnu = 0 on Gamma,
with zero mean, on a mesh already scaled so that |Sigma| / |Omega| = N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .mesh import SIGMA, DomainMesh, PreconditionError, boundary_lumped, lumped_masses, measures

COMPAT_TOL = 1e-10


@dataclass(frozen=True)
class ScalarField:
    mesh: DomainMesh
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.values) != len(self.mesh.vertices):
            raise ValueError("one value per vertex required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite field values")


@dataclass(frozen=True)
class GradientField:
    cell: np.ndarray     # (C, N) piecewise constant
    vertex: np.ndarray   # (V, N) recovered


@dataclass(frozen=True)
class HessianField:
    values: np.ndarray   # (V, N, N)
    fallback: np.ndarray  # (V,) bool


def solve_mixed_neumann(mesh: DomainMesh) -> ScalarField:
    m = measures(mesh)
    n = mesh.dim
    if not m.sigma_area > 0:
        raise PreconditionError("Sigma must be nonempty")
    defect = abs(n * m.volume - m.sigma_area)
    if defect > COMPAT_TOL * max(1.0, m.sigma_area):
        raise PreconditionError(
            f"mesh is not normalized: N|Omega| - |Sigma| = {n * m.volume - m.sigma_area:.3e}; "
            "call normalize_codim0 first")
    K = fem.stiffness(mesh.vertices, mesh.cells)
    mass = lumped_masses(mesh.vertices, mesh.cells)
    flux = boundary_lumped(mesh.vertices, mesh.faces[mesh.label_mask(SIGMA)])
    # weak form: int grad u . grad v = int_Sigma v - N int v
    load = flux - n * mass
    sol = fem.solve_neumann_system(K, load, mass)
    if sol.linear_residual > 1e-10:
        raise fem.SolverError(f"linear residual {sol.linear_residual:.2e} exceeds 1e-10")
    return ScalarField(mesh, sol.values, {"compatibility_residual": defect,
                                          "linear_residual": sol.linear_residual})


def lumped_mean(mesh: DomainMesh, values: np.ndarray) -> float:
    mass = lumped_masses(mesh.vertices, mesh.cells)
    return float(mass @ values / mass.sum())


def gradient(f: ScalarField, fit: fem.QuadraticFit | None = None) -> GradientField:
    """Cell gradients and vertex gradients.

    Interior vertices average incident cell gradients by volume; boundary
    vertices take the gradient of the local quadratic fit, since the one-sided
    average is biased by O(h) there.
    """
    mesh = f.mesh
    cg = fem.cell_gradients(mesh.vertices, mesh.cells, f.values)
    vg = fem.averaged_vertex_gradients(mesh.vertices, mesh.cells, f.values)
    bnd = mesh.boundary_vertices()
    if bnd.any():
        if fit is None:
            fit = fem.recover_on_patches(mesh.vertices, mesh.cells, f.values)
        vg[bnd] = fit.gradient[bnd]
    return GradientField(cg, vg)


def hessian_recover(f: ScalarField) -> HessianField:
    fit = fem.recover_on_patches(f.mesh.vertices, f.mesh.cells, f.values)
    H = 0.5 * (fit.hessian + np.swapaxes(fit.hessian, 1, 2))
    return HessianField(H, fit.fallback)


def derivatives(f: ScalarField) -> tuple[GradientField, HessianField]:
    """Gradient and Hessian sharing one patch fit."""
    fit = fem.recover_on_patches(f.mesh.vertices, f.mesh.cells, f.values)
    H = 0.5 * (fit.hessian + np.swapaxes(fit.hessian, 1, 2))
    return gradient(f, fit), HessianField(H, fit.fallback)
