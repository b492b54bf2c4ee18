import numpy as np
import pytest

import time

from exsteklov import audit, bem, functionals, imcf, mesh, tensors

ACCEPTANCE = {}


class Case:
    """Mesh with lazily computed geometry, BEM system and derived data."""

    def __init__(self, m):
        self.mesh = m
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def geometry(self):
        return self._get("geometry", lambda: mesh.compute_geometry(self.mesh))

    @property
    def flags(self):
        return self._get("flags", lambda: mesh.classify(self.mesh, self.geometry))

    @property
    def functionals(self):
        return self._get("functionals", lambda: functionals.functional_report(self.mesh, self.geometry, self.flags))

    @property
    def system(self):
        return self._get("system", lambda: bem.assemble(self.mesh, self.geometry))

    @property
    def spectrum(self):
        return self._get("spectrum", lambda: bem.solve_steklov(self.system, 4))

    @property
    def capacity(self):
        return self._get("capacity", lambda: bem.solve_capacity(self.system)[0])

    @property
    def tensors(self):
        return self._get("tensors", lambda: tensors.compute_tensors(self.system, self.mesh, self.geometry))

    @property
    def audit(self):
        return self._get("audit", lambda: audit.audit(self.mesh, self.geometry, self.flags, self.functionals,
                                                      self.spectrum, self.capacity, self.tensors))


_CASES = {}


def case(name, factory):
    if name not in _CASES:
        _CASES[name] = Case(factory())
    return _CASES[name]


def ellipsoid_case(a, b, c, s=3):
    if (a, b, c) == (1.0, 1.0, 1.0):
        return case(f"sphere{s}", lambda: mesh.make_icosphere(1.0, s))
    return case(f"ellipsoid{a:g},{b:g},{c:g}@{s}", lambda: mesh.make_ellipsoid(a, b, c, s))


@pytest.fixture(scope="session")
def sphere3():
    return case("sphere3", lambda: mesh.make_icosphere(1.0, 3))


@pytest.fixture(scope="session")
def sphere4():
    return case("sphere4", lambda: mesh.make_icosphere(1.0, 4))


@pytest.fixture(scope="session")
def sphere2():
    return case("sphere2", lambda: mesh.make_icosphere(1.0, 2))


@pytest.fixture(scope="session")
def ellipsoid211():
    return ellipsoid_case(2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def torus():
    return case("torus", lambda: mesh.make_torus(1.0, 0.4, 24, 12))


@pytest.fixture(scope="session")
def egg():
    return case("egg", lambda: mesh.make_egg(3))


def _timed_flow(m, T):
    t0 = time.perf_counter()
    trace = imcf.run_flow(m, T)
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sphere_flow():
    """Unit sphere flowed to T = 1; returns (trace, seconds)."""
    return _timed_flow(mesh.make_icosphere(1.0, 3), 1.0)


@pytest.fixture(scope="session")
def ellipsoid_flow():
    """Ellipsoid (1.5, 1, 1) flowed to T = 2; returns (trace, seconds)."""
    return _timed_flow(mesh.make_ellipsoid(1.5, 1.0, 1.0, 4), 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
