import numpy as np
import pytest

from abpiso import abp, domain, fixtures, manifold
from abpiso.mesh import normalize_codim0
from abpiso.surface import curvature


class Solved:
    """A normalised codimension-0 fixture with its solve and derived data."""

    def __init__(self, mesh):
        self.mesh, self.scale = normalize_codim0(mesh)
        self.u = domain.solve_mixed_neumann(self.mesh)
        self.grad, self.hessian = domain.derivatives(self.u)
        self.contact = abp.contact_set(self.mesh, self.u, grad=self.grad)
        self.ctx = abp.MembershipContext.build(self.mesh, self.u, self.contact, self.grad)


@pytest.fixture(scope="session")
def half_disk_02():
    return Solved(fixtures.half_disk(0.02))


@pytest.fixture(scope="session")
def half_disk_05():
    return Solved(fixtures.half_disk(0.05))


@pytest.fixture(scope="session")
def flat_r4():
    return manifold.prepare(fixtures.flat_half_disk_embedded(0.02, 4))


@pytest.fixture(scope="session")
def cap():
    return manifold.prepare(fixtures.sphere_cap(0.02))


@pytest.fixture(scope="session")
def free_disk():
    mesh = fixtures.free_half_disk(0.02)
    return mesh, curvature(mesh)


def quadratic_exact(mesh):
    """|x|^2/2 with zero lumped mean."""
    from abpiso.mesh import lumped_masses
    e = 0.5 * np.sum(mesh.vertices ** 2, axis=1)
    m = lumped_masses(mesh.vertices, mesh.cells)
    return e - m @ e / m.sum()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
