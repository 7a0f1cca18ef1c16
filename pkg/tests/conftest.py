import numpy as np
import pytest

from elastinv import ForceParams, MaterialModel, SimConfig, generate_mesh, signed_distance_circle
from elastinv.inverse import synthesize_data

CASE_A_TARGET = (0.5, 0.65)

_acceptance_lines = []


@pytest.fixture
def report():
    """Collects one line per acceptance criterion, echoed in the terminal summary."""
    def emit(criterion, ok, detail=""):
        _acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_model():
    return MaterialModel()


@pytest.fixture(scope="session")
def default_force():
    return ForceParams()


@pytest.fixture(scope="session")
def mesh20():
    return generate_mesh(20)


@pytest.fixture(scope="session")
def mesh40():
    return generate_mesh(40)


@pytest.fixture(scope="session")
def coarse_case(mesh20, default_model, default_force):
    """Case (a) on the 21x21 mesh with 50 steps: (initial level set, sim config, delta)."""
    cfg = SimConfig(h=3e-6, n_steps=50)
    target = signed_distance_circle(mesh20, CASE_A_TARGET, 0.1)
    init = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    return init, cfg, synthesize_data(target, default_model, default_force, cfg)


def smooth_vector_field(mesh, seed=0):
    rng = np.random.default_rng(seed)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    out = np.zeros((mesh.n_nodes, 2))
    for c in range(2):
        a, b = rng.uniform(0.5, 1.5, 2)
        out[:, c] = np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.02) * (a * np.cos(np.pi * x) + b * np.sin(np.pi * y))
    return out
