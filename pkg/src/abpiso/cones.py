"""Normal cones of finite labelled point sets.

Membership predicates for classical, generalized (u-shifted) and restricted
normal cones, the graph lift that turns generalized cones into classical
ones, and two independent evaluators of restricted-cone measures on a sphere
of radius rho: Monte Carlo in any dimension and exact arc arithmetic in the
plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .euclid import DomainError, SampleStream, sample_sphere_many, sphere_area

TIE_TOL = 1e-9
MEMBERSHIP_TOL = 1e-12
CHUNK = 4096


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPointSet:
    points: np.ndarray
    u: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        u = np.asarray(self.u, dtype=float).reshape(-1)
        if pts.shape[0] < 1:
            raise DomainError("a point set needs at least one point")
        if u.shape[0] != pts.shape[0]:
            raise DomainError("one u value per point required")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(u))):
            raise DomainError("non-finite coordinates or values")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "u", u)
        if self.sigma is not None:
            sig = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if sig.shape != pts.shape:
                raise DomainError("sigma must have one N-vector per point")
            bad = np.flatnonzero(np.abs(np.linalg.norm(sig, axis=1) - 1.0) > 1e-12)
            if bad.size:
                raise DomainError(f"sigma not unit at points {bad.tolist()}")
            object.__setattr__(self, "sigma", sig)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def lifted(self) -> np.ndarray:
        """Graph lift x -> (x, u(x)) in R^(N+1)."""
        return np.column_stack([self.points, self.u])


@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    standard_error: float
    samples: int
    seed: int


def _check_dim(pts: LabeledPointSet, xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != pts.dim:
        raise DomainError(f"direction has dimension {xi.shape[0]}, point set has {pts.dim}")
    return xi


def generalized_cone_contains(pts: LabeledPointSet, base: int, xi, tol: float = MEMBERSHIP_TOL) -> bool:
    """xi in N^{u,rho}_p X: <x - p, xi> <= u(x) - u(p) for all x (rho = |xi|)."""
    xi = _check_dim(pts, xi)
    p = pts.points[base]
    lhs = (pts.points - p) @ xi
    rhs = pts.u - pts.u[base]
    return bool(np.all(lhs <= rhs + tol))


def classical_cone_contains(points, base: int, xi, tol: float = MEMBERSHIP_TOL) -> bool:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xi = np.asarray(xi, dtype=float)
    return bool(np.all((points - points[base]) @ xi <= tol))


def lift_equivalence(pts: LabeledPointSet, base: int, xi, tol: float = MEMBERSHIP_TOL) -> bool:
    """Compare generalized membership of xi with classical membership of (xi, -1) in the lift."""
    xi = _check_dim(pts, xi)
    direct = generalized_cone_contains(pts, base, xi, tol)
    lifted = classical_cone_contains(pts.lifted(), base, np.append(xi, -1.0), tol)
    return direct == lifted


def sigma_validity(pts: LabeledPointSet, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Per point: does sigma(p) lie in the classical normal cone N_p X?

    The lifted vector (sigma(p), 0) has zero last coordinate, so the lifted
    condition is the planar one.
    """
    if pts.sigma is None:
        raise PreconditionError("sigma is required for restricted-cone operations")
    # <x - p, sigma(p)> for all x (rows) and p (columns)
    gram = pts.points @ pts.sigma.T - np.sum(pts.points * pts.sigma, axis=1)[None, :]
    return np.all(gram <= tol, axis=0)


def _require_valid_sigma(pts: LabeledPointSet) -> None:
    ok = sigma_validity(pts)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise PreconditionError(f"sigma({bad}) = {pts.sigma[bad].tolist()} is not in the normal cone at "
                                f"point {bad} = {pts.points[bad].tolist()}")


def argmin_contact(pts: LabeledPointSet, xi, tie_tol: float = TIE_TOL) -> tuple[int, bool]:
    xi = _check_dim(pts, xi)
    if not np.linalg.norm(xi) > 0:
        raise DomainError("xi must be nonzero")
    vals = pts.u - pts.points @ xi
    idx = int(np.argmin(vals))
    if len(pts) == 1:
        return idx, False
    second = np.partition(vals, 1)[1]
    return idx, bool(second - vals[idx] < tie_tol)


def _contact_values(pts: LabeledPointSet, xis: np.ndarray) -> np.ndarray:
    """Matrix of u(x) - <x, xi>, shape (samples, points)."""
    return pts.u[None, :] - xis @ pts.points.T


def _restricted_accept(pts: LabeledPointSet, xis: np.ndarray, tie_tol: float) -> tuple[np.ndarray, np.ndarray]:
    vals = _contact_values(pts, xis)
    vmin = vals.min(axis=1, keepdims=True)
    tied = vals - vmin < tie_tol
    half = xis @ pts.sigma.T >= 0.0
    accept = np.any(tied & half, axis=1)
    ties = tied.sum(axis=1) > 1
    return accept, ties


def _fraction_estimate(hits: int, total: int, scale: float, seed: int) -> MeasureEstimate:
    p = hits / total
    se = scale * math.sqrt(max(p * (1 - p), 0.0) / total)
    return MeasureEstimate(scale * p, se, total, seed)


def restricted_union_measure(pts: LabeledPointSet, rho: float, samples: int, stream: SampleStream,
                             tie_tol: float = TIE_TOL, allow_singleton: bool = True) -> MeasureEstimate:
    """Monte Carlo measure of N^u X / sigma on the sphere of radius rho."""
    if not rho > 0:
        raise DomainError("rho must be positive")
    if len(pts) == 1 and not allow_singleton:
        raise PreconditionError("singleton configuration not allowed")
    _require_valid_sigma(pts)
    hits = 0
    for k, start in enumerate(range(0, samples, CHUNK)):
        n = min(CHUNK, samples - start)
        xis = sample_sphere_many(pts.dim, rho, n, stream.fork(k))
        accept, _ = _restricted_accept(pts, xis, tie_tol)
        hits += int(accept.sum())
    return _fraction_estimate(hits, samples, sphere_area(pts.dim) * rho ** (pts.dim - 1), stream.seed)


def tie_fraction(pts: LabeledPointSet, rho: float, samples: int, stream: SampleStream,
                 tie_tol: float = TIE_TOL) -> tuple[float, float]:
    """(fraction of sampled xi with a tie, fraction where argmin succeeded).

    The second number checks that every direction has a contact point.
    """
    ties = 0
    found = 0
    for k, start in enumerate(range(0, samples, CHUNK)):
        n = min(CHUNK, samples - start)
        xis = sample_sphere_many(pts.dim, rho, n, stream.fork(k))
        vals = _contact_values(pts, xis)
        vmin = vals.min(axis=1, keepdims=True)
        found += int(np.isfinite(vmin).sum())
        ties += int(((vals - vmin < tie_tol).sum(axis=1) > 1).sum())
    return ties / samples, found / samples


@dataclass(frozen=True)
class HalfCheck:
    restricted: MeasureEstimate
    full: MeasureEstimate
    ratio: float
    ratio_se: float


def per_point_half_check(pts: LabeledPointSet, base: int, rho: float, samples: int,
                         stream: SampleStream, tol: float = MEMBERSHIP_TOL) -> HalfCheck:
    """Estimate |N^u_p X / sigma| and |N^u_p X| from one sample stream."""
    if pts.sigma is None:
        raise PreconditionError("sigma is required")
    if not sigma_validity(pts)[base]:
        raise PreconditionError(f"sigma({base}) is not in the normal cone at point {base}")
    p = pts.points[base]
    offsets = pts.points - p
    du = pts.u - pts.u[base]
    in_full = in_restr = 0
    for k, start in enumerate(range(0, samples, CHUNK)):
        n = min(CHUNK, samples - start)
        xis = sample_sphere_many(pts.dim, rho, n, stream.fork(k))
        member = np.all(xis @ offsets.T <= du[None, :] + tol, axis=1)
        half = xis @ pts.sigma[base] >= 0.0
        in_full += int(member.sum())
        in_restr += int((member & half).sum())
    area = sphere_area(pts.dim) * rho ** (pts.dim - 1)
    full = _fraction_estimate(in_full, samples, area, stream.seed)
    restr = _fraction_estimate(in_restr, samples, area, stream.seed)
    if in_full == 0:
        return HalfCheck(restr, full, float("nan"), float("nan"))
    q = in_restr / in_full
    return HalfCheck(restr, full, q, math.sqrt(q * (1 - q) / in_full))


# --- exact planar arcs -------------------------------------------------------

TWO_PI = 2.0 * math.pi


def _normalize_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sort and merge sub-intervals of [0, 2pi)."""
    out: list[tuple[float, float]] = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _arc(center: float, half_width: float) -> list[tuple[float, float]]:
    """Angles within half_width of center, as intervals in [0, 2pi)."""
    if half_width >= math.pi:
        return [(0.0, TWO_PI)]
    a = (center - half_width) % TWO_PI
    b = a + 2 * half_width
    if b <= TWO_PI:
        return [(a, b)]
    return [(a, TWO_PI), (0.0, b - TWO_PI)]


def _intersect(xs: list[tuple[float, float]], ys: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    for a, b in xs:
        for c, d in ys:
            lo, hi = max(a, c), min(b, d)
            if hi > lo:
                out.append((lo, hi))
    return _normalize_intervals(out)


def _constraint_arc(a: float, b: float, c: float) -> list[tuple[float, float]]:
    """Angles theta with a cos(theta) + b sin(theta) <= c."""
    r = math.hypot(a, b)
    if c >= r:
        return [(0.0, TWO_PI)]
    if c < -r:
        return []
    phi = math.atan2(b, a)
    # r cos(theta - phi) <= c  <=>  |theta - phi - pi| <= pi - arccos(c / r)
    return _arc(phi + math.pi, math.pi - math.acos(c / r))


def point_cone_arcs(pts: LabeledPointSet, base: int, rho: float) -> list[tuple[float, float]]:
    """Angles of the generalized normal cone N^{u,rho}_p X in the plane."""
    if pts.dim != 2:
        raise DomainError("exact arc oracle is planar only")
    p = pts.points[base]
    arcs = [(0.0, TWO_PI)]
    for j in range(len(pts)):
        if j == base:
            continue
        d = rho * (pts.points[j] - p)
        arcs = _intersect(arcs, _constraint_arc(d[0], d[1], pts.u[j] - pts.u[base]))
        if not arcs:
            break
    return arcs


def _measure(intervals: list[tuple[float, float]]) -> float:
    return sum(b - a for a, b in intervals)


def restricted_union_measure_exact_2d(pts: LabeledPointSet, rho: float) -> float:
    """Exact arc length of N^u X / sigma on the circle of radius rho."""
    if pts.sigma is None:
        raise PreconditionError("sigma is required")
    _require_valid_sigma(pts)
    union: list[tuple[float, float]] = []
    for i in range(len(pts)):
        s = pts.sigma[i]
        half = _constraint_arc(-s[0], -s[1], 0.0)
        union.extend(_intersect(point_cone_arcs(pts, i, rho), half))
    return rho * _measure(_normalize_intervals(union))


def point_cone_measure_exact_2d(pts: LabeledPointSet, base: int, rho: float, restricted: bool) -> float:
    arcs = point_cone_arcs(pts, base, rho)
    if restricted:
        s = pts.sigma[base]
        arcs = _intersect(arcs, _constraint_arc(-s[0], -s[1], 0.0))
    return rho * _measure(arcs)


# --- random configurations and file IO ---------------------------------------

def random_convex_configuration(stream: SampleStream, dim: int, count: int) -> LabeledPointSet:
    """Points on the unit sphere (hence in convex position), u uniform in [0, 1],
    sigma the outward radial direction, which lies in every N_p X."""
    pts = sample_sphere_many(dim, 1.0, count, stream.fork(0))
    u = stream.fork(1).uniform(count)
    return LabeledPointSet(pts, u, pts.copy())


def load_point_set(path: str | Path) -> LabeledPointSet:
    """Read ``N coords, u, N sigma`` per line (or ``N coords, u`` without sigma).

    The record length must agree across lines; with 2N+1 columns sigma is read.
    Records of length N+1 are accepted only with ``# dim: N`` in the header.
    """
    rows = []
    declared = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if line.startswith("#"):
            tag = line[1:].strip()
            if tag.startswith("dim:"):
                declared = int(tag.split(":", 1)[1])
            continue
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(t) for t in line.split()])
    if not rows:
        raise DomainError(f"{path}: no points")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DomainError(f"{path}: inconsistent record length")
    data = np.array(rows)
    if declared is not None and width == declared + 1:
        return LabeledPointSet(data[:, :declared], data[:, declared])
    if width % 2 == 0 or width < 3:
        raise DomainError(f"{path}: expected 2N+1 columns, got {width}")
    n = (width - 1) // 2
    sig = data[:, n + 1:]
    sig = sig / np.linalg.norm(sig, axis=1, keepdims=True)
    return LabeledPointSet(data[:, :n], data[:, n], sig)


def save_point_set(pts: LabeledPointSet, path: str | Path) -> None:
    lines = [f"# dim: {pts.dim}", "# coords..., u, sigma..."]
    for i in range(len(pts)):
        rec = list(pts.points[i]) + [pts.u[i]]
        if pts.sigma is not None:
            rec += list(pts.sigma[i])
        lines.append(" ".join(repr(float(v)) for v in rec))
    Path(path).write_text("\n".join(lines) + "\n")
