"""Euclidean constants and reproducible sampling on spheres, balls and shells."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n, pi^(n/2) / Gamma(n/2 + 1)."""
    if int(n) != n or n < 1:
        raise DomainError(f"ball_volume needs a positive integer dimension, got {n!r}")
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """(n-1)-measure of the unit sphere bounding the unit ball of R^n."""
    return n * ball_volume(n)


@dataclass(frozen=True)
class BallConstants:
    dim: int
    ball_volume: float
    sphere_area: float

    @classmethod
    def of(cls, dim: int) -> "BallConstants":
        v = ball_volume(dim)
        return cls(dim, v, dim * v)


def brendle_constant(n: int, m: int) -> float:
    """b_{n,m}: 1 for codimension m <= 2, otherwise the ball-volume ratio to the power 1/n."""
    if n < 1 or m < 1:
        raise DomainError(f"brendle_constant needs n, m >= 1, got ({n}, {m})")
    if m <= 2:
        return 1.0
    ratio = (n + m) * ball_volume(n + m) / (m * ball_volume(n) * ball_volume(m))
    return ratio ** (1.0 / n)


@dataclass
class SampleStream:
    """Counter-based (Philox) random stream keyed by ``(seed, stream_id)``.

    Equal keys give bitwise-equal sequences. ``fork`` derives child streams
    whose keys depend only on the parent key and the child index, so a Monte
    Carlo loop split into chunks is reproducible regardless of how the chunks
    are scheduled.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def _generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def fork(self, index: int) -> "SampleStream":
        child = (self.stream_id * 0x9E3779B97F4A7C15 + 2 * int(index) + 1) & _MASK64
        return SampleStream(self.seed, child)

    def normal(self, size) -> np.ndarray:
        out = self._generator().standard_normal(size)
        self.counter += out.size
        return out

    def uniform(self, size) -> np.ndarray:
        out = self._generator().random(size)
        self.counter += out.size
        return out

    def integers(self, high: int, size) -> np.ndarray:
        out = self._generator().integers(0, high, size)
        self.counter += np.size(out)
        return out

    def choice(self, n: int, size: int, p: np.ndarray) -> np.ndarray:
        out = self._generator().choice(n, size=size, p=p)
        self.counter += size
        return out


def sample_sphere_many(dim: int, radius: float, count: int, stream: SampleStream) -> np.ndarray:
    """``count`` points uniform on the sphere of given radius in R^dim (rows)."""
    if dim < 1:
        raise DomainError("dimension must be >= 1")
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    g = stream.normal((count, dim))
    norms = np.linalg.norm(g, axis=1)
    # a zero Gaussian vector has probability zero; guard anyway
    norms[norms == 0.0] = 1.0
    return radius * g / norms[:, None]


def sample_sphere(dim: int, radius: float, stream: SampleStream) -> np.ndarray:
    return sample_sphere_many(dim, radius, 1, stream)[0]


def sample_ball_many(dim: int, radius: float, count: int, stream: SampleStream) -> np.ndarray:
    """Uniform in the ball: sphere direction times radius * U^(1/dim)."""
    directions = sample_sphere_many(dim, 1.0, count, stream)
    r = radius * stream.uniform(count) ** (1.0 / dim)
    return directions * r[:, None]


def sample_shell_many(dim: int, inner: float, outer: float, count: int,
                      stream: SampleStream) -> np.ndarray:
    """Uniform in the shell inner <= |x| < outer."""
    if not 0 <= inner < outer:
        raise DomainError(f"need 0 <= inner < outer, got ({inner}, {outer})")
    directions = sample_sphere_many(dim, 1.0, count, stream)
    lo, hi = inner**dim, outer**dim
    r = (lo + (hi - lo) * stream.uniform(count)) ** (1.0 / dim)
    return directions * r[:, None]


def shell_volume(dim: int, inner: float, outer: float) -> float:
    return ball_volume(dim) * (outer**dim - inner**dim)
