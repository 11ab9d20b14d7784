"""Lower contact sets, gradient images and the ABP chain on planar and
general-dimension domains.

The chain being checked is

    1/2 |B^N|  <=  |grad u(G)|  <=  int_G det D^2u  <=  int_G (Lap u / N)^N  <=  |Omega|

where G is the part of the lower contact set on which |grad u| < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import domain
from .domain import GradientField, HessianField, ScalarField
from .euclid import DomainError, SampleStream, ball_volume, sample_ball_many, sphere_area
from .mesh import GAMMA, SIGMA, DomainMesh, lumped_masses, measures, vertex_normals

INTERIOR_CONTACT = "INTERIOR_CONTACT"
FREE_BOUNDARY_CONTACT = "FREE_BOUNDARY_CONTACT"
REJECT_SIGMA = "REJECT_SIGMA"
REJECT_GRADIENT = "REJECT_GRADIENT"
ACCEPTED = (INTERIOR_CONTACT, FREE_BOUNDARY_CONTACT)
STATUSES = (INTERIOR_CONTACT, FREE_BOUNDARY_CONTACT, REJECT_SIGMA, REJECT_GRADIENT)

CONTACT_C = 1.0
RESIDUAL_C = 5.0
ROW_CHUNK = 1024
SAMPLE_CHUNK = 2048


@dataclass(frozen=True)
class ContactSet:
    mask: np.ndarray       # (V,) bool
    slack: np.ndarray      # (V,) min_y u(y) - u(x) - <g(x), y - x>
    epsilon: float

    @property
    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self) -> int:
        return int(self.mask.sum())


def default_epsilon(mesh: DomainMesh) -> float:
    return CONTACT_C * mesh.mesh_size ** 2


def default_residual_tol(mesh: DomainMesh) -> float:
    return RESIDUAL_C * mesh.mesh_size


def supporting_slack(points: np.ndarray, values: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """min over all points y of u(y) - u(x) - <g(x), y - x>, for every point x.

    Brute force over all pairs, chunked by rows.
    """
    out = np.empty(len(points))
    for start in range(0, len(points), ROW_CHUNK):
        g = grads[start:start + ROW_CHUNK]
        # u(y) - <g, y>, minimised over y, minus the same at x
        best = np.min(values[None, :] - g @ points.T, axis=1)
        here = values[start:start + ROW_CHUNK] - np.einsum("ij,ij->i", g, points[start:start + ROW_CHUNK])
        out[start:start + ROW_CHUNK] = best - here
    return out


def contact_set(mesh: DomainMesh, u: ScalarField, epsilon: float | None = None,
                grad: GradientField | None = None) -> ContactSet:
    if epsilon is None:
        epsilon = default_epsilon(mesh)
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    if grad is None:
        grad = domain.gradient(u)
    slack = supporting_slack(mesh.vertices, u.values, grad.vertex)
    return ContactSet(slack >= -epsilon, slack, float(epsilon))


def unit_gradient_set(mesh: DomainMesh, contact: ContactSet, grad: GradientField) -> np.ndarray:
    """Vertices of the contact set with |grad u| < 1, off the closure of Sigma.

    On Sigma the outward derivative is 1, so |grad u| >= 1 there and Sigma
    never meets this set in the continuum; dropping Sigma vertices avoids
    deciding membership from the sign of O(h) recovery noise.
    """
    small = np.linalg.norm(grad.vertex, axis=1) < 1.0
    return contact.mask & small & ~mesh.vertices_with_label(SIGMA)


# --- gradient image membership -----------------------------------------------

@dataclass(frozen=True)
class MembershipVerdict:
    xi: np.ndarray
    status: str
    witness: int
    gradient_residual: float

    @property
    def accepted(self) -> bool:
        return self.status in ACCEPTED


@dataclass(frozen=True)
class MembershipContext:
    """Everything the classifier needs, computed once per solved field."""
    points: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    on_sigma: np.ndarray
    on_gamma: np.ndarray
    gamma_normals: np.ndarray
    contact: np.ndarray
    tol: float

    @classmethod
    def build(cls, mesh: DomainMesh, u: ScalarField, contact: ContactSet | None = None,
              grad: GradientField | None = None, tol: float | None = None) -> "MembershipContext":
        if grad is None:
            grad = domain.gradient(u)
        if contact is None:
            contact = contact_set(mesh, u, grad=grad)
        return cls(mesh.vertices, u.values, grad.vertex, mesh.vertices_with_label(SIGMA),
                   mesh.vertices_with_label(GAMMA), vertex_normals(mesh, GAMMA), contact.mask,
                   default_residual_tol(mesh) if tol is None else float(tol))


def classify(ctx: MembershipContext, xis: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised membership: status codes (index into STATUSES), witnesses, residuals.

    The witness q minimises u - <xi, x> over vertices.  At a free-boundary
    vertex the outward derivative of that function is -<xi, nu> (zero flux),
    so <xi, nu> > 0 means the minimum sits on Gamma without being a critical
    point.  A Sigma witness with a small residual is a discretisation artefact
    (the continuum minimiser lies within a cell of Sigma) and is admitted.
    """
    xis = np.atleast_2d(xis)
    q = np.argmin(ctx.values[None, :] - xis @ ctx.points.T, axis=1)
    resid = np.linalg.norm(ctx.grads[q] - xis, axis=1)
    close = (resid <= ctx.tol) & ctx.contact[q]
    outward = np.einsum("ij,ij->i", xis, ctx.gamma_normals[q]) > 0
    gamma = ctx.on_gamma[q]
    sigma = ctx.on_sigma[q]
    code = np.full(len(xis), STATUSES.index(REJECT_GRADIENT))
    code[close & ~gamma] = STATUSES.index(INTERIOR_CONTACT)
    code[close & gamma] = STATUSES.index(FREE_BOUNDARY_CONTACT)
    code[sigma & ~close] = STATUSES.index(REJECT_SIGMA)
    code[gamma & outward] = STATUSES.index(REJECT_GRADIENT)
    return code, q, resid


def image_membership(xi, mesh: DomainMesh, u: ScalarField, ctx: MembershipContext | None = None) -> MembershipVerdict:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != mesh.dim:
        raise DomainError(f"xi has dimension {xi.shape[0]}, mesh has {mesh.dim}")
    if not np.linalg.norm(xi) < 1:
        raise DomainError("image_membership needs |xi| < 1")
    if ctx is None:
        ctx = MembershipContext.build(mesh, u)
    code, q, resid = classify(ctx, xi[None, :])
    return MembershipVerdict(xi, STATUSES[code[0]], int(q[0]), float(resid[0]))


@dataclass(frozen=True)
class ImageMeasure:
    value: float
    standard_error: float
    samples: int
    seed: int
    counts: dict
    tolerance: float
    sigma_radii: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    accepted_radii: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def image_measure(mesh: DomainMesh, u: ScalarField, samples: int, stream: SampleStream,
                  ctx: MembershipContext | None = None) -> ImageMeasure:
    """Monte Carlo measure of grad u(G) inside the unit ball."""
    if samples < 1:
        raise DomainError("samples must be positive")
    if ctx is None:
        ctx = MembershipContext.build(mesh, u)
    n = mesh.dim
    counts = np.zeros(len(STATUSES), dtype=int)
    acc_r, sig_r = [], []
    for k, start in enumerate(range(0, samples, SAMPLE_CHUNK)):
        m = min(SAMPLE_CHUNK, samples - start)
        xis = sample_ball_many(n, 1.0, m, stream.fork(k))
        code, _, _ = classify(ctx, xis)
        counts += np.bincount(code, minlength=len(STATUSES))
        r = np.linalg.norm(xis, axis=1)
        acc_r.append(r[code <= 1])
        sig_r.append(r[code == STATUSES.index(REJECT_SIGMA)])
    hits = int(counts[0] + counts[1])
    p = hits / samples
    scale = ball_volume(n)
    return ImageMeasure(scale * p, scale * math.sqrt(p * (1 - p) / samples), samples, stream.seed,
                        dict(zip(STATUSES, counts.tolist())), ctx.tol,
                        np.concatenate(sig_r), np.concatenate(acc_r))


def level_histogram(image: ImageMeasure, dim: int, bins: int = 10) -> dict:
    """Approximate |grad u(boundary of G^rho)| per radial bin.

    Accepted samples in a shell [a, b) estimate the image measure there;
    dividing by b - a gives a per-rho density to compare with half the sphere
    area at radius rho.  Binned, hence approximate.
    """
    edges = np.linspace(0.0, 1.0, bins + 1)
    hist, _ = np.histogram(image.accepted_radii, edges)
    per_sample = ball_volume(dim) / image.samples
    density = hist * per_sample / np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return {"edges": edges.tolist(), "density": density.tolist(),
            "half_sphere": (0.5 * sphere_area(dim) * mid ** (dim - 1)).tolist(), "approximate": True}


# --- the chain ---------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    name: str
    left: float
    right: float
    slack: float         # right - left; nonnegative when the link holds exactly
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.slack >= -self.tolerance


@dataclass(frozen=True)
class ABPReport:
    image_measure: float
    image_standard_error: float
    half_ball: float
    det_integral: float
    amgm_integral: float
    domain_volume: float
    unit_set_volume: float
    clamped: int
    amgm_pointwise_excess: float
    quotient_lhs: float
    quotient_rhs: float
    links: tuple[Link, ...]
    seed: int
    samples: int
    epsilon: float
    residual_tol: float

    @property
    def holds(self) -> bool:
        return all(link.holds for link in self.links)


def clamped_eigenvalues(hessian: HessianField, rows: np.ndarray) -> tuple[np.ndarray, int]:
    lam = np.linalg.eigvalsh(hessian.values[rows])
    neg = int(np.sum(np.any(lam < 0, axis=1)))
    return np.maximum(lam, 0.0), neg


def abp_chain(mesh: DomainMesh, u: ScalarField, contact: ContactSet, samples: int, stream: SampleStream,
              grad: GradientField | None = None, hessian: HessianField | None = None,
              image: ImageMeasure | None = None, rel_tol: float = 0.05) -> ABPReport:
    """Evaluate every link of the chain; each link passes within ``rel_tol``
    of its right-hand side plus three standard errors where sampling enters."""
    if grad is None or hessian is None:
        grad, hessian = domain.derivatives(u)
    n = mesh.dim
    if image is None:
        ctx = MembershipContext.build(mesh, u, contact, grad)
        image = image_measure(mesh, u, samples, stream, ctx)
    unit = unit_gradient_set(mesh, contact, grad)
    mass = lumped_masses(mesh.vertices, mesh.cells)
    lam, clamped = clamped_eigenvalues(hessian, unit)
    det = np.prod(lam, axis=1)
    amgm = np.mean(lam, axis=1) ** n
    det_int = float(mass[unit] @ det)
    amgm_int = float(mass[unit] @ amgm)
    vol = measures(mesh).volume
    half = 0.5 * ball_volume(n)
    q_lhs, q_rhs, _ = relative_quotient_codim0(mesh)
    se3 = 3 * image.standard_error
    links = (
        Link("half_ball <= image", half, image.value, image.value - half, rel_tol * half + se3),
        Link("image <= det_integral", image.value, det_int, det_int - image.value, rel_tol * det_int + se3),
        Link("det_integral <= amgm_integral", det_int, amgm_int, amgm_int - det_int, rel_tol * amgm_int),
        Link("amgm_integral <= volume", amgm_int, vol, vol - amgm_int, rel_tol * vol),
    )
    return ABPReport(image.value, image.standard_error, half, det_int, amgm_int, vol, float(mass[unit].sum()),
                     clamped, float(np.max(det - amgm, initial=0.0)), q_lhs, q_rhs, links,
                     image.seed, image.samples, contact.epsilon, image.tolerance)


def relative_quotient_codim0(mesh: DomainMesh) -> tuple[float, float, float]:
    """|Sigma| / |S^(N-1)| against (1/2)^(1/N) (|Omega| / |B^N|)^((N-1)/N)."""
    m = measures(mesh)
    n = mesh.dim
    lhs = m.sigma_area / sphere_area(n)
    rhs = 0.5 ** (1.0 / n) * (m.volume / ball_volume(n)) ** ((n - 1) / n)
    return lhs, rhs, lhs / rhs


def classical_quotient(mesh: DomainMesh) -> tuple[float, float, float]:
    """Closed-boundary isoperimetric quotient, |dOmega| / |S^(N-1)| against (|Omega| / |B^N|)^((N-1)/N)."""
    m = measures(mesh)
    n = mesh.dim
    lhs = (m.sigma_area + m.gamma_area) / sphere_area(n)
    rhs = (m.volume / ball_volume(n)) ** ((n - 1) / n)
    return lhs, rhs, lhs / rhs


# --- equality diagnostics -----------------------------------------------------

@dataclass(frozen=True)
class EqualityReport:
    hessian_deviation: float   # max over G of the spectral norm of D^2u - I
    unit_fraction: float       # |G| / |Omega|
    center: np.ndarray         # x0 minimising || u - |x - x0|^2/2 - c ||
    fit_residual: float        # rms of that fit
    vertices: int


def equality_diagnostics(mesh: DomainMesh, u: ScalarField, contact: ContactSet,
                         grad: GradientField | None = None, hessian: HessianField | None = None) -> EqualityReport:
    if grad is None or hessian is None:
        grad, hessian = domain.derivatives(u)
    unit = unit_gradient_set(mesh, contact, grad)
    mass = lumped_masses(mesh.vertices, mesh.cells)
    n = mesh.dim
    if unit.any():
        dev = np.linalg.eigvalsh(hessian.values[unit] - np.eye(n))
        worst = float(np.max(np.abs(dev)))
    else:
        worst = float("nan")
    # u - |x|^2/2 = -<x0, x> + c - x0^2/2: linear least squares, mass weighted
    x = mesh.vertices
    w = np.sqrt(mass)
    A = np.column_stack([-x, np.ones(len(x))]) * w[:, None]
    b = (u.values - 0.5 * np.sum(x ** 2, axis=1)) * w
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.sqrt(np.sum((A @ coef - b) ** 2) / mass.sum()))
    return EqualityReport(worst, float(mass[unit].sum() / mass.sum()), coef[:n], resid, int(unit.sum()))
