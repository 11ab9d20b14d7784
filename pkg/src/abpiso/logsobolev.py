"""Logarithmic Sobolev inequality on free boundary submanifolds.

For positive f on M with all of the boundary resting on the support,

    int f (log f + n + (n/2) log(4 pi) - |grad f|^2/f^2 - |H|^2)  <=  (int f) log(2 int f).

Gradients of log f are taken at vertices from the tangent-plane quadratic fit
(exact on quadratics), so that the Gaussian change of variables is an exact
algebraic identity between the two discrete evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .euclid import SampleStream
from .mesh import GAMMA, SIGMA, PreconditionError, boundary_lumped
from .surface import CurvatureData, SurfaceMesh, components, conormals, intrinsic_derivatives

COMPAT_TOL = 1e-8
TAIL = 1e-12
# Cells where the normalised f is below this fraction of its maximum carry no
# measurable weight; flooring them keeps the weighted stiffness invertible.
WEIGHT_FLOOR = 1e-12


def _check_free(mesh: SurfaceMesh) -> None:
    if mesh.label_mask(SIGMA).any():
        raise PreconditionError("free boundary submanifold required: Sigma must be empty")


def _check_positive(values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~(values > 0))
    if len(bad):
        raise PreconditionError(f"{name} must be positive; vertex {int(bad[0])} has {values[bad[0]]!r}")
    return values


def log_gradient_sq(mesh: SurfaceMesh, values: np.ndarray) -> np.ndarray:
    """|grad log v|^2 per vertex."""
    g = intrinsic_derivatives(mesh, np.log(values), fit_gradient=True).gradient
    return np.sum(g ** 2, axis=1)


@dataclass(frozen=True)
class LogSobProblem:
    mesh: SurfaceMesh
    curvature: CurvatureData
    f: np.ndarray              # original positive values
    mass: float                # int f dv
    alpha: float
    u: np.ndarray
    compatibility_residual: float
    linear_residual: float

    @property
    def f_unit(self) -> np.ndarray:
        return self.f / self.mass


def solve_weighted(mesh: SurfaceMesh, curv: CurvatureData, f) -> LogSobProblem:
    """f-weighted Neumann problem div(f grad u)/f = log f - |grad f|^2/f^2 - |H|^2 + alpha
    with zero flux on Gamma and zero mean, after scaling f to unit mass."""
    _check_free(mesh)
    f = _check_positive(f, "f")
    w = mesh.masses()
    total = float(w @ f)
    fu = f / total
    base = np.log(fu) - log_gradient_sq(mesh, fu) - curv.norms() ** 2
    alpha = -float(w @ (fu * base))
    rhs = base + alpha
    compat = float(w @ (fu * rhs))
    cell_f = fu[mesh.cells].mean(axis=1)
    cell_f = np.maximum(cell_f, WEIGHT_FLOOR * cell_f.max())
    K = fem.stiffness(mesh.vertices, mesh.cells, cell_f)
    sol = fem.solve_neumann_system(K, -w * fu * rhs, w)
    if abs(compat) > COMPAT_TOL:
        raise PreconditionError(f"weighted compatibility residual {compat:.3e}")
    return LogSobProblem(mesh, curv, f, total, alpha, sol.values, abs(compat), sol.linear_residual)


@dataclass(frozen=True)
class LogSobCheck:
    lhs: float
    rhs: float
    margin: float
    mass: float
    component_rhs: float       # sum over connected components of F_k log(2 F_k)


def logsob_terms(mesh: SurfaceMesh, curv: CurvatureData, f: np.ndarray) -> np.ndarray:
    n = mesh.n
    return np.log(f) + n + 0.5 * n * math.log(4 * math.pi) - log_gradient_sq(mesh, f) - curv.norms() ** 2


def logsob_values(mesh: SurfaceMesh, curv: CurvatureData, f) -> LogSobCheck:
    """Both sides for the given (unnormalised) f."""
    _check_free(mesh)
    f = _check_positive(f, "f")
    w = mesh.masses()
    total = float(w @ f)
    lhs = float(w @ (f * logsob_terms(mesh, curv, f)))
    rhs = total * math.log(2 * total)
    lab = components(mesh.cells, len(mesh.vertices))
    parts = np.bincount(lab, weights=w * f)
    comp = float(np.sum(parts * np.log(2 * parts)))
    return LogSobCheck(lhs, rhs, rhs - lhs, total, comp)


def logsob_check(problem: LogSobProblem) -> LogSobCheck:
    return logsob_values(problem.mesh, problem.curvature, problem.f)


def gaussian_weight(mesh: SurfaceMesh, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    n = mesh.n
    return (4 * math.pi) ** (-n / 2) * np.exp(-np.sum((mesh.vertices - x0) ** 2, axis=1) / 4)


@dataclass(frozen=True)
class GaussianCheck:
    lhs: float
    rhs: float                 # includes the boundary term
    boundary_term: float       # over support faces only
    truncation_term: float     # same integrand over truncation faces, reported apart
    margin: float
    mass: float
    # the second route: the unweighted statement for f = gaussian * phi, minus the
    # divergence term evaluated in the interior
    lhs_via_f: float
    divergence_term: float
    divergence_term_boundary: float

    @property
    def dual_path_gap(self) -> float:
        return abs(self.lhs - self.lhs_via_f)

    @property
    def integration_by_parts_defect(self) -> float:
        return abs(self.divergence_term - self.divergence_term_boundary)


def _support_boundary_faces(mesh: SurfaceMesh) -> tuple[np.ndarray, np.ndarray]:
    """Gamma faces on the support and Gamma faces on the truncation arc."""
    gamma = mesh.label_mask(GAMMA)
    faces = mesh.faces
    if mesh.support is None:
        return faces[:0], faces[gamma]
    lev = np.max(np.abs(np.stack([mesh.support.level(mesh.vertices[faces[:, j]]) for j in range(faces.shape[1])])),
                 axis=0) if len(faces) else np.zeros(0)
    scale = max(1.0, float(np.max(np.abs(mesh.vertices))))
    on = gamma & (lev <= 1e-9 * scale)
    return faces[on], faces[gamma & ~on]


def _support_normal(mesh: SurfaceMesh, pts: np.ndarray) -> np.ndarray:
    """Outer normal of S (pointing out of C) at points of S: the active facet normal."""
    sup = mesh.support
    k = np.argmax(pts @ sup.normals.T - sup.offsets[None, :], axis=1)
    return sup.normals[k]


def gaussian_corollary_eval(mesh: SurfaceMesh, curv: CurvatureData, phi, x0) -> GaussianCheck:
    """Gaussian-measure form with its boundary term, and the same quantity via f."""
    _check_free(mesh)
    phi = _check_positive(phi, "phi")
    x0 = np.asarray(x0, dtype=float)
    n = mesh.n
    w = mesh.masses()
    gauss = gaussian_weight(mesh, x0)
    mu = w * gauss
    d = mesh.vertices - x0
    perp = np.einsum("va,vak->vk", np.einsum("vk,vak->va", d, mesh.normals), mesh.normals)
    tang = d - perp
    H = curv.mean_curvature
    integrand = np.log(phi) - log_gradient_sq(mesh, phi) - np.sum((H + perp / 2) ** 2, axis=1)
    lhs = float(mu @ (phi * integrand))
    total = float(mu @ phi)

    on_s, trunc = _support_boundary_faces(mesh)
    nu = conormals(mesh, GAMMA)
    density = phi * gauss
    bterm = 0.0
    if len(on_s):
        nu_s = _support_normal(mesh, mesh.vertices)
        bterm = float(boundary_lumped(mesh.vertices, on_s) @ (density * np.einsum("vk,vk->v", d, nu_s)))
    # truncation faces have no support normal; the conormal plays its role
    tterm = float(boundary_lumped(mesh.vertices, trunc) @ (density * np.einsum("vk,vk->v", d, -nu)))
    rhs = total * math.log(2 * total) + bterm

    # second route
    f = gauss * phi
    glogf = intrinsic_derivatives(mesh, np.log(f), fit_gradient=True).gradient
    lhs_f = float(w @ (f * logsob_terms(mesh, curv, f)))
    div = n + np.einsum("vk,vk->v", H, d) + np.einsum("vk,vk->v", glogf, tang)
    div_term = float(w @ (f * div))
    # divergence theorem: int div(f x^T) = int_dM f <x^T, nu>, nu = -nu_S on Gamma
    lump = boundary_lumped(mesh.vertices, mesh.faces)
    div_bdry = float(lump @ (f * np.einsum("vk,vk->v", tang, nu)))
    return GaussianCheck(lhs, rhs, bterm, tterm, rhs - lhs, total, lhs_f - div_term, div_term, div_bdry)


# --- Jacobian bound for the weighted map ------------------------------------------

@dataclass(frozen=True)
class WeightedJacobianReport:
    samples: int
    gated: int
    delta: float
    violation_fraction: float
    lower_violations: int
    upper_violations: int
    rhs_min: float
    cutoff: float
    ratios: np.ndarray = field(repr=False)


def weighted_jacobian_samples(problem: LogSobProblem, samples: int, stream: SampleStream,
                          delta: float | None = None) -> WeightedJacobianReport:
    """Check 0 <= e^{-|Phi|^2/4} det(D^2u - <Pi, y>) <= f e^{-|2H + y|^2/4 + alpha - n}
    on positivity-gated samples, with f at unit mass."""
    mesh = problem.mesh
    if delta is None:
        delta = 10.0 * mesh.mesh_size
    derivs = intrinsic_derivatives(mesh, problem.u)
    w = mesh.masses()
    # base points are drawn from the f-weighted measure, the weight under which
    # the bound is integrated
    p = w * problem.f_unit
    x = stream.fork(0).choice(len(w), samples, p / p.sum())
    m = mesh.codim
    cutoff = 2.0 * math.sqrt(-math.log(TAIL))
    z = stream.fork(1).normal((samples, m))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    y = z * (cutoff * stream.fork(2).uniform(samples) ** (1.0 / m))[:, None]
    Pi = problem.curvature.second_form[x]
    A = derivs.hessian[x] - np.einsum("sa,saij->sij", y, Pi)
    lam = np.linalg.eigvalsh(A)
    gated = lam[:, 0] >= -delta
    det = np.prod(lam, axis=1)
    y_amb = np.einsum("sa,sak->sk", y, mesh.normals[x])
    phi = derivs.gradient[x] + y_amb
    lhs = np.exp(-np.sum(phi ** 2, axis=1) / 4) * det
    H = problem.curvature.mean_curvature[x]
    rhs = problem.f_unit[x] * np.exp(-np.sum((2 * H + y_amb) ** 2, axis=1) / 4 + problem.alpha - mesh.n)
    if not np.all(rhs > 0):
        raise ArithmeticError("right side of the Jacobian bound must be positive")
    lo = gated & (lhs < -delta * rhs)
    hi = gated & (lhs > (1 + delta) * rhs)
    cnt = int(gated.sum())
    ratio = lhs[gated] / rhs[gated]
    return WeightedJacobianReport(samples, cnt, float(delta), float((lo | hi).sum() / cnt) if cnt else 0.0,
                         int(lo.sum()), int(hi.sum()), float(rhs.min()), cutoff, ratio)


# --- spherical slices of the weighted image ----------------------------------------

@dataclass(frozen=True)
class SliceEstimate:
    rho: float
    fraction: float            # accepted share of the sphere of radius rho
    standard_error: float
    samples: int

    @property
    def holds(self) -> bool:
        return self.fraction >= 0.5 - 3.0 * self.standard_error


def image_slices(problem: LogSobProblem, rhos, samples: int, stream: SampleStream,
                 delta: float | None = None) -> list[SliceEstimate]:
    """Share of each sphere |xi| = rho hit by Phi on the gated set, against one half."""
    from .domain import ScalarField
    from .manifold import PHI_STATUSES, ACCEPT_FREE_BOUNDARY, ACCEPT_INTERIOR, PhiContext, SurfaceSolution, classify_phi
    mesh = problem.mesh
    sol = SurfaceSolution(mesh, problem.curvature, ScalarField(mesh, problem.u),
                          intrinsic_derivatives(mesh, problem.u))
    ctx = PhiContext.build(sol, delta=delta)
    ok = (PHI_STATUSES.index(ACCEPT_INTERIOR), PHI_STATUSES.index(ACCEPT_FREE_BOUNDARY))
    out = []
    for k, rho in enumerate(rhos):
        z = stream.fork(k).normal((samples, mesh.dim))
        xis = float(rho) * z / np.linalg.norm(z, axis=1, keepdims=True)
        code, *_ = classify_phi(ctx, xis)
        p = float(np.isin(code, ok).mean())
        out.append(SliceEstimate(float(rho), p, math.sqrt(p * (1 - p) / samples), samples))
    return out
