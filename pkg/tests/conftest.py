import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

# Reproducible property tests: the same examples on every run.
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")

from smallbody.kernels import assemble_double_layer, assemble_single_layer  # noqa: E402
from smallbody.mesh import TriMesh, generate_box, generate_ellipsoid, generate_sphere  # noqa: E402


@dataclass
class Body:
    mesh: TriMesh
    G: object
    Psi: object


def _body(mesh: TriMesh) -> Body:
    return Body(mesh, assemble_single_layer(mesh), assemble_double_layer(mesh))


@pytest.fixture(scope="session")
def sphere3() -> Body:
    return _body(generate_sphere(1.0, 3))


@pytest.fixture(scope="session")
def sphere4() -> Body:
    return _body(generate_sphere(1.0, 4))


@pytest.fixture(scope="session")
def ellipsoid3() -> Body:
    return _body(generate_ellipsoid(2.0, 1.0, 1.0, 3))


@pytest.fixture(scope="session")
def ellipsoid4() -> Body:
    return _body(generate_ellipsoid(2.0, 1.0, 1.0, 4))


@pytest.fixture(scope="session")
def cube() -> Body:
    return _body(generate_box(1.0, 16))


# Acceptance summary: tests/test_acceptance.py appends (criterion, ok, detail).
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []
SUITE_BUDGET_S = 300.0
_SESSION_START = [0.0]


def pytest_sessionstart(session):
    _SESSION_START[0] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    elapsed = time.perf_counter() - _SESSION_START[0]
    ok = elapsed < SUITE_BUDGET_S
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'}  suite runtime: {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)"
    )
