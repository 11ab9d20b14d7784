"""Submanifold side: the normalised Neumann problem, relative isoperimetric
quotients, the normal-bundle map Phi(x, y) = grad u(x) + y and its Jacobian,
the shell volume bound, and the Michael-Simon type evaluator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem
from .domain import ScalarField
from .euclid import (DomainError, SampleStream, ball_volume, brendle_constant, sample_shell_many,
                     shell_volume, sphere_area)
from .mesh import GAMMA, SIGMA, PreconditionError, boundary_lumped
from .surface import CurvatureData, IntrinsicDerivatives, SurfaceMesh, conormals, curvature, intrinsic_derivatives

COMPAT_TOL = 1e-8
RESIDUAL_C = 5.0
DELTA_C = 10.0
SAMPLE_CHUNK = 2048


@dataclass(frozen=True)
class SurfaceTotals:
    area: float
    sigma_length: float
    gamma_length: float
    mean_curvature_integral: float


def totals(mesh: SurfaceMesh, curv: CurvatureData) -> SurfaceTotals:
    mass = mesh.masses()
    lengths = mesh.face_areas()
    return SurfaceTotals(float(mass.sum()), float(lengths[mesh.label_mask(SIGMA)].sum()),
                         float(lengths[mesh.label_mask(GAMMA)].sum()), float(mass @ curv.norms()))


def normalize_submanifold(mesh: SurfaceMesh, curv: CurvatureData) -> tuple[SurfaceMesh, CurvatureData, float]:
    """Scale by s so that |Sigma| + int |H| = n |M|.

    Both terms on the left scale like s^(n-1) and |M| like s^n, so
    s = (|Sigma| + int |H|) / (n |M|).
    """
    t = totals(mesh, curv)
    left = t.sigma_length + t.mean_curvature_integral
    if not left > 0:
        raise PreconditionError("|Sigma| + int |H| vanishes; nothing to normalise")
    s = left / (mesh.n * t.area)
    return mesh.scaled(s), curv.scaled(s), s


@dataclass(frozen=True)
class SurfaceSolution:
    mesh: SurfaceMesh
    curvature: CurvatureData
    field: ScalarField
    derivatives: IntrinsicDerivatives

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def solve_submanifold_neumann(mesh: SurfaceMesh, curv: CurvatureData) -> SurfaceSolution:
    """P1 solve of Lap u = n - |H| with flux 1 on Sigma and 0 on Gamma, zero mean."""
    mass = mesh.masses()
    source = mesh.n - curv.norms()
    flux = boundary_lumped(mesh.vertices, mesh.faces[mesh.label_mask(SIGMA)])
    defect = float(mass @ source - flux.sum())
    if abs(defect) > COMPAT_TOL * max(1.0, float(flux.sum())):
        raise PreconditionError(f"compatibility defect int(n - |H|) - |Sigma| = {defect:.3e}; "
                                "normalise the mesh first")
    K = fem.stiffness(mesh.vertices, mesh.cells)
    sol = fem.solve_neumann_system(K, flux - mass * source, mass)
    if sol.linear_residual > 1e-10:
        raise fem.SolverError(f"linear residual {sol.linear_residual:.2e} exceeds 1e-10")
    f = ScalarField(mesh, sol.values, {"compatibility_residual": abs(defect), "linear_residual": sol.linear_residual})
    return SurfaceSolution(mesh, curv, f, intrinsic_derivatives(mesh, sol.values))


def prepare(mesh: SurfaceMesh) -> tuple[SurfaceSolution, float]:
    """Curvature, normalisation and solve in one step; returns the scale too."""
    curv = curvature(mesh)
    scaled, curv_s, s = normalize_submanifold(mesh, curv)
    return solve_submanifold_neumann(scaled, curv_s), s


# --- quotients ---------------------------------------------------------------

@dataclass(frozen=True)
class QuotientReport:
    lhs: float
    rhs: float
    ratio: float
    variant: str          # "relative" or "closed"
    minimal_lhs: float | None = None
    minimal_ratio: float | None = None


def quotient_report(mesh: SurfaceMesh, curv: CurvatureData, minimal_tol: float = 1e-8) -> QuotientReport:
    """(|Sigma| + int |H|)/|S^(n-1)| against (1/2)^(1/n) b_{n,m} (|M|/|B^n|)^((n-1)/n).

    Without free boundary the factor 1/2 is dropped.  For minimal meshes
    (max |H| below ``minimal_tol``) the |Sigma|-only form is also reported.
    """
    t = totals(mesh, curv)
    n, m = mesh.n, mesh.codim
    closed = not mesh.label_mask(GAMMA).any()
    half = 1.0 if closed else 0.5 ** (1.0 / n)
    rhs = half * brendle_constant(n, m) * (t.area / ball_volume(n)) ** ((n - 1) / n)
    lhs = (t.sigma_length + t.mean_curvature_integral) / sphere_area(n)
    min_lhs = min_ratio = None
    if float(np.max(curv.norms(), initial=0.0)) <= minimal_tol and m <= 2:
        min_lhs = t.sigma_length / sphere_area(n)
        min_ratio = min_lhs / (half * (t.area / ball_volume(n)) ** ((n - 1) / n))
    return QuotientReport(lhs, rhs, lhs / rhs, "closed" if closed else "relative", min_lhs, min_ratio)


# --- the normal-bundle map ---------------------------------------------------

ACCEPT_INTERIOR = "ACCEPT_INTERIOR"
ACCEPT_FREE_BOUNDARY = "ACCEPT_FREE_BOUNDARY"
REJECT_SIGMA = "REJECT_SIGMA"
REJECT_GRADIENT = "REJECT_GRADIENT"
REJECT_GATE = "REJECT_GATE"
AMBIGUOUS_CORNER = "AMBIGUOUS_CORNER"
PHI_STATUSES = (ACCEPT_INTERIOR, ACCEPT_FREE_BOUNDARY, REJECT_SIGMA, REJECT_GRADIENT, REJECT_GATE, AMBIGUOUS_CORNER)


def lift_solution(sol: SurfaceSolution) -> SurfaceSolution:
    """View a codimension-1 solution in one more dimension; u is unchanged."""
    mesh = sol.mesh.lifted()
    V = len(mesh.vertices)
    H = np.hstack([sol.curvature.mean_curvature, np.zeros((V, 1))])
    n = sol.mesh.n
    Pi = np.concatenate([sol.curvature.second_form, np.zeros((V, 1, n, n))], axis=1)
    curv = replace(sol.curvature, mean_curvature=H, second_form=Pi)
    d = sol.derivatives
    derivs = replace(d, gradient=np.hstack([d.gradient, np.zeros((V, 1))]))
    return SurfaceSolution(mesh, curv, ScalarField(mesh, sol.values, sol.field.info), derivs)


@dataclass(frozen=True)
class PhiContext:
    points: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    hessian: np.ndarray
    second_form: np.ndarray
    on_sigma: np.ndarray
    on_gamma: np.ndarray
    gamma_conormals: np.ndarray
    tol: float
    delta: float

    @classmethod
    def build(cls, sol: SurfaceSolution, tol: float | None = None, delta: float | None = None) -> "PhiContext":
        mesh = sol.mesh
        h = mesh.mesh_size
        return cls(mesh.vertices, sol.values, sol.derivatives.gradient, mesh.tangents, mesh.normals,
                   sol.derivatives.hessian, sol.curvature.second_form, mesh.vertices_with_label(SIGMA),
                   mesh.vertices_with_label(GAMMA), conormals(mesh, GAMMA),
                   RESIDUAL_C * h if tol is None else float(tol), DELTA_C * h if delta is None else float(delta))


def gate_matrix(hessian: np.ndarray, second_form: np.ndarray, y: np.ndarray) -> np.ndarray:
    """D^2 u(x) - <Pi_x, y> in the tangent frame; y in normal-frame coordinates."""
    return hessian - np.einsum("sa,saij->sij", y, second_form)


def classify_phi(ctx: PhiContext, xis: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Status codes (into PHI_STATUSES), witnesses, tangential residuals and normal parts.

    Same minimiser rules as the flat case: a Gamma witness where xi points
    out through the conormal is not critical; a Sigma witness with a small
    residual is admitted as a discretisation artefact; witnesses on the
    corners where Sigma meets Gamma are counted apart and never accepted.
    """
    xis = np.atleast_2d(xis)
    q = np.argmin(ctx.values[None, :] - xis @ ctx.points.T, axis=1)
    d = xis - ctx.grads[q]
    r = np.einsum("sk,sik->si", d, ctx.tangents[q])
    y = np.einsum("sk,sak->sa", xis, ctx.normals[q])
    resid = np.linalg.norm(r, axis=1)
    lam = np.linalg.eigvalsh(gate_matrix(ctx.hessian[q], ctx.second_form[q], y))[:, 0]
    close = resid <= ctx.tol
    gated = lam >= -ctx.delta
    gamma, sigma = ctx.on_gamma[q], ctx.on_sigma[q]
    outward = np.einsum("sk,sk->s", xis, ctx.gamma_conormals[q]) > 0
    code = np.full(len(xis), PHI_STATUSES.index(REJECT_GRADIENT))
    code[close & gated & ~gamma] = PHI_STATUSES.index(ACCEPT_INTERIOR)
    code[close & gated & gamma] = PHI_STATUSES.index(ACCEPT_FREE_BOUNDARY)
    code[close & ~gated] = PHI_STATUSES.index(REJECT_GATE)
    code[sigma & ~close] = PHI_STATUSES.index(REJECT_SIGMA)
    code[gamma & outward] = PHI_STATUSES.index(REJECT_GRADIENT)
    code[sigma & gamma] = PHI_STATUSES.index(AMBIGUOUS_CORNER)
    return code, q, resid, y


@dataclass(frozen=True)
class PhiVerdict:
    xi: np.ndarray
    status: str
    witness: int
    tangential_residual: float
    normal_part: np.ndarray

    @property
    def accepted(self) -> bool:
        return self.status in (ACCEPT_INTERIOR, ACCEPT_FREE_BOUNDARY)


def phi_membership(xi, sol: SurfaceSolution, t_gate: float = 0.0, ctx: PhiContext | None = None) -> PhiVerdict:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != sol.mesh.dim:
        raise DomainError(f"xi has dimension {xi.shape[0]}, ambient dimension is {sol.mesh.dim}")
    r = float(np.linalg.norm(xi))
    if not (t_gate <= r < 1.0):
        raise DomainError(f"phi_membership needs t_gate <= |xi| < 1, got |xi| = {r}")
    if ctx is None:
        ctx = PhiContext.build(sol)
    code, q, resid, y = classify_phi(ctx, xi[None, :])
    return PhiVerdict(xi, PHI_STATUSES[code[0]], int(q[0]), float(resid[0]), y[0])


@dataclass(frozen=True)
class VolumeBoundReport:
    t: float
    estimate: float
    standard_error: float
    lower: float              # 1/2 |B^N| (1 - t^N)
    upper: float              # (m/2)(1 - t^2)|B^m||M|
    area: float
    area_bound: float         # 1/2 N|B^N| / (m|B^m|), without the 1/2 when Gamma is empty
    area_margin: float
    counts: dict
    samples: int
    seed: int
    lifted: bool

    @property
    def lower_margin(self) -> float:
        return self.estimate - self.lower

    @property
    def upper_margin(self) -> float:
        return self.upper - self.estimate


def area_lower_bound(N: int, m: int, closed: bool = False) -> float:
    return (1.0 if closed else 0.5) * N * ball_volume(N) / (m * ball_volume(m))


def volume_bound_check(sol: SurfaceSolution, samples: int, stream: SampleStream, t: float,
                       ctx: PhiContext | None = None) -> VolumeBoundReport:
    """Monte Carlo measure of the image of Phi over the gradient shell t < |xi| < 1."""
    if not 0.0 <= t < 1.0:
        raise DomainError("t must lie in [0, 1)")
    lifted = sol.mesh.codim < 2
    if lifted:
        sol = lift_solution(sol)
        ctx = None
    if ctx is None:
        ctx = PhiContext.build(sol)
    mesh = sol.mesh
    N, m = mesh.dim, mesh.codim
    counts = np.zeros(len(PHI_STATUSES), dtype=int)
    for k, start in enumerate(range(0, samples, SAMPLE_CHUNK)):
        c = min(SAMPLE_CHUNK, samples - start)
        xis = sample_shell_many(N, t, 1.0, c, stream.fork(k))
        code, *_ = classify_phi(ctx, xis)
        counts += np.bincount(code, minlength=len(PHI_STATUSES))
    hits = int(counts[0] + counts[1])
    vol = shell_volume(N, t, 1.0)
    p = hits / samples
    area = float(mesh.masses().sum())
    closed = not mesh.label_mask(GAMMA).any()
    bound = area_lower_bound(N, m, closed)
    lower = (1.0 if closed else 0.5) * ball_volume(N) * (1 - t ** N)
    upper = 0.5 * m * (1 - t * t) * ball_volume(m) * area
    return VolumeBoundReport(t, vol * p, vol * math.sqrt(p * (1 - p) / samples), lower, upper, area, bound,
                             area - bound, dict(zip(PHI_STATUSES, counts.tolist())), samples, stream.seed, lifted)


# --- Jacobian of Phi ------------------------------------------------------------

@dataclass(frozen=True)
class JacobianReport:
    samples: int
    gated: int
    det_min: float
    det_max: float
    delta: float
    outside_fraction: float     # gated samples with det outside [-delta, 1 + delta]
    near_one_fraction: float    # gated samples with |det - 1| <= 0.05
    dets: np.ndarray = field(repr=False)


def sample_normal_bundle(sol: SurfaceSolution, samples: int, stream: SampleStream) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) pairs with x drawn by vertex area off Sigma where |grad u| < 1,
    and y uniform in the normal ball of radius sqrt(1 - |grad u(x)|^2)."""
    mesh = sol.mesh
    g2 = np.sum(sol.derivatives.gradient ** 2, axis=1)
    ok = (g2 < 1.0) & ~mesh.vertices_with_label(SIGMA)
    w = mesh.masses() * ok
    if not w.sum() > 0:
        raise PreconditionError("no vertex with |grad u| < 1 off Sigma")
    x = stream.fork(0).choice(len(w), samples, w / w.sum())
    m = mesh.codim
    z = stream.fork(1).normal((samples, m))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    rad = stream.fork(2).uniform(samples) ** (1.0 / m) * np.sqrt(1.0 - g2[x])
    return x, z * rad[:, None]


def jacobian_bound_samples(sol: SurfaceSolution, samples: int, stream: SampleStream,
                           delta: float | None = None) -> JacobianReport:
    if delta is None:
        delta = DELTA_C * sol.mesh.mesh_size
    x, y = sample_normal_bundle(sol, samples, stream)
    A = gate_matrix(sol.derivatives.hessian[x], sol.curvature.second_form[x], y)
    lam = np.linalg.eigvalsh(A)
    gated = lam[:, 0] >= -delta
    det = np.prod(lam, axis=1)[gated]
    outside = (det < -delta) | (det > 1 + delta)
    cnt = int(gated.sum())
    frac = float(outside.mean()) if cnt else 0.0
    near = float((np.abs(det - 1) <= 0.05).mean()) if cnt else 0.0
    return JacobianReport(samples, cnt, float(det.min(initial=np.inf)), float(det.max(initial=-np.inf)),
                          float(delta), frac, near, det)


# --- Michael-Simon type inequality ------------------------------------------------

@dataclass(frozen=True)
class MichaelSimonReport:
    lhs: float
    rhs: float
    ratio: float
    exact_zero: bool = False


def michael_simon_eval(mesh: SurfaceMesh, curv: CurvatureData, f: np.ndarray, sigma_tol: float = 1e-12) -> MichaelSimonReport:
    """int(|grad f| + |H| f)/|S^(n-1)| against (1/2)^(1/n) b_{n,m} (int f^(n/(n-1)) / |B^n|)^((n-1)/n)."""
    f = np.asarray(f, dtype=float)
    n = mesh.n
    if n < 2:
        raise DomainError("needs n >= 2")
    neg = np.flatnonzero(f < 0)
    if len(neg):
        raise PreconditionError(f"f is negative at vertex {int(neg[0])} ({f[neg[0]]:.3e})")
    on_sigma = np.flatnonzero(mesh.vertices_with_label(SIGMA) & (np.abs(f) > sigma_tol))
    if len(on_sigma):
        raise PreconditionError(f"f must vanish on Sigma; vertex {int(on_sigma[0])} has {f[on_sigma[0]]:.3e}")
    mass = mesh.masses()
    g = fem.cell_gradients(mesh.vertices, mesh.cells, f)
    vol = mesh.cell_volumes() if mesh.dim == n else _cell_measures(mesh)
    lhs = (float(np.linalg.norm(g, axis=1) @ vol) + float(mass @ (curv.norms() * f))) / sphere_area(n)
    closed = not mesh.label_mask(GAMMA).any()
    half = 1.0 if closed else 0.5 ** (1.0 / n)
    p = n / (n - 1)
    rhs = half * brendle_constant(n, mesh.codim) * (float(mass @ f ** p) / ball_volume(n)) ** ((n - 1) / n)
    if lhs == 0 and rhs == 0:
        return MichaelSimonReport(0.0, 0.0, 1.0, True)
    return MichaelSimonReport(lhs, rhs, lhs / rhs if rhs > 0 else math.inf)


def _cell_measures(mesh: SurfaceMesh) -> np.ndarray:
    from .mesh import simplex_measures
    return simplex_measures(mesh.vertices[mesh.cells])
