import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings, strategies as st

from elastinv import fem
from elastinv.levelset import LevelSet, signed_distance_circle
from elastinv.material import MaterialModel, Phase
from elastinv.mesh import Mesh, VectorField, boundary_nodes, generate_mesh
from elastinv.wave import (BoundaryRecord, ForceParams, SimConfig, Stepper, dilation, discrete_energy,
                           element_dilation, force_load_profile, immersed_dirichlet_force, immersed_profile,
                           implicit_step, initial_back_step, laser_force, run_adjoint, run_forward,
                           velocity_series)

from conftest import smooth_vector_field


def mirror_index(mesh):
    key = {tuple(np.round(p, 10)): i for i, p in enumerate(mesh.nodes)}
    return np.array([key[(round(1 - x, 10), round(y, 10))] for x, y in mesh.nodes])


# -- force ------------------------------------------------------------------


def test_force_quarter_period_zero(mesh20):
    p = ForceParams()
    f = laser_force(p, p.T / (4 * p.l_N), mesh20)
    assert np.abs(f.values).max() <= 1e-15 * p.A


def test_force_at_focus():
    mesh = generate_mesh(50)  # node (0.5, 0.98) exists
    p = ForceParams()
    f = laser_force(p, 0.0, mesh).values
    i = np.argmin(np.linalg.norm(mesh.nodes - [0.5, 0.98], axis=1))
    assert np.linalg.norm(f[i]) == pytest.approx(p.A)
    assert f[i] == pytest.approx([0.0, -p.A])


def test_force_envelope_halves():
    p = ForceParams()
    r = math.log(2) / p.l_width
    assert r == pytest.approx(5.332e-4, rel=1e-3)
    pts = np.array([[p.l_x + r, p.l_y], [p.l_x, p.l_y - r]])
    mesh = Mesh(np.vstack([pts, [[0.0, 0.0]]]), np.array([[0, 1, 2]]), np.zeros((0, 2), dtype=int), ())
    f = laser_force(p, 0.0, mesh).values
    assert np.linalg.norm(f[:2], axis=1) == pytest.approx([p.A / 2, p.A / 2])
    # full_angle: radial direction
    assert f[0] == pytest.approx([p.A / 2, 0.0], abs=1e-6 * p.A)
    assert f[1] == pytest.approx([0.0, -p.A / 2], abs=1e-6 * p.A)


def test_force_principal_arctan_folds_direction():
    p = ForceParams(direction_mode="principal_arctan", l_width=0.0)
    mesh = Mesh(np.array([[0.2, 0.98], [0.8, 0.98], [0.5, 0.0]]), np.array([[0, 1, 2]]),
                np.zeros((0, 2), dtype=int), ())
    f = laser_force(p, 0.0, mesh).values
    # left and right of the focus point the same way once angles are folded
    assert f[0] == pytest.approx(f[1], abs=1e-12 * p.A)
    full = laser_force(ForceParams(l_width=0.0), 0.0, mesh).values
    assert full[0] == pytest.approx(-full[1], abs=1e-12 * p.A)


def test_force_params_validation():
    with pytest.raises(ValueError):
        ForceParams(T=0)
    with pytest.raises(ValueError):
        ForceParams(l_width=-1)
    with pytest.raises(ValueError):
        ForceParams(direction_mode="polar")


@pytest.mark.parametrize("n", [20, 40])
def test_force_load_resolves_narrow_source(n):
    # for the linear field w = x - focus, sum_i F_i . w_i = int f . w = 4 pi / l^3
    # exactly; the source is far narrower than the cells
    mesh = generate_mesh(n)
    p = ForceParams()
    F = force_load_profile(mesh, p).reshape(-1, 2)
    w = mesh.nodes - [p.l_x, p.l_y]
    assert (F * w).sum() == pytest.approx(4 * math.pi / p.l_width ** 3, rel=5e-3)
    assert abs(F[:, 0].sum()) <= 1e-10 / p.l_width ** 2


# -- stepping ---------------------------------------------------------------


def test_initial_back_step(mesh20):
    u0 = VectorField(mesh20, smooth_vector_field(mesh20))
    zero = VectorField(mesh20, np.zeros((mesh20.n_nodes, 2)))
    assert np.array_equal(initial_back_step(u0, zero, 1e-3).values, u0.values)
    ones = VectorField(mesh20, np.tile([1.0, 0.0], (mesh20.n_nodes, 1)))
    assert initial_back_step(zero, ones, 1e-3).values == pytest.approx(np.tile([-1e-3, 0.0], (mesh20.n_nodes, 1)))
    d1 = u0.values - initial_back_step(u0, ones, 1e-3).values
    d2 = u0.values - initial_back_step(u0, ones, 2e-3).values
    assert d2 == pytest.approx(2 * d1)


def _two_triangle_mesh():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh(nodes, np.array([[0, 1, 2], [0, 2, 3]]), np.zeros((0, 2), dtype=int), ())


def test_implicit_step_dense_oracle():
    mesh = _two_triangle_mesh()
    rng = np.random.default_rng(5)
    M = fem.assemble_mass(mesh, 1.0 + rng.random(4))
    K = fem.assemble_stiffness(mesh, 1.0 + rng.random(4), 1.0 + rng.random(4))
    un, unm1, f = (VectorField(mesh, rng.normal(size=(4, 2))) for _ in range(3))
    h = 0.1
    out = implicit_step(M, K, un, unm1, f, h)
    A = (M + h * h * K).toarray()
    rhs = h * h * fem.load_vector(mesh, f) + M @ (2 * un.flat() - unm1.flat())
    ref = scipy.linalg.solve(A, rhs)
    assert np.abs(out.flat() - ref).max() <= 1e-8 * np.abs(ref).max()


def test_implicit_step_zero_and_translation(mesh20):
    rho = np.full(mesh20.n_nodes, 4e3)
    M = fem.assemble_mass(mesh20, rho)
    K = fem.assemble_stiffness(mesh20, np.full(mesh20.n_nodes, 7e10), np.full(mesh20.n_nodes, 7e10))
    zero = VectorField(mesh20, np.zeros((mesh20.n_nodes, 2)))
    assert not implicit_step(M, K, zero, zero, zero, 3e-6).values.any()
    c = VectorField(mesh20, np.tile([0.3, -0.7], (mesh20.n_nodes, 1)))
    out = implicit_step(M, K, c, c, zero, 3e-6)
    assert np.abs(out.values - c.values).max() <= 10 * 1e-10 * 0.7


def test_zero_input_fixed_point(mesh20, default_model):
    ls = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    ts, rec = run_forward(mesh20, ls, default_model, None, SimConfig(n_steps=10))
    assert not ts.displacements.any() and not rec.values.any()
    ts, rec = run_forward(mesh20, ls, default_model, ForceParams(A=0.0), SimConfig(n_steps=10))
    assert not rec.values.any()


def test_record_shape(mesh20, default_model, default_force):
    ls = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    ts, rec = run_forward(mesh20, ls, default_model, default_force, SimConfig(n_steps=7))
    assert ts.displacements.shape == (8, mesh20.n_nodes, 2)
    assert rec.values.shape == (8, 21)
    assert np.array_equal(rec.values, ts.displacements[:, boundary_nodes(mesh20, "Top"), 1])
    assert rec.times[-1] == pytest.approx(7 * 3e-6)


def test_dirichlet_sides_stay_fixed(mesh20, default_model, default_force):
    bc = {"Top": "neumann_zero", "Bottom": "dirichlet_zero", "Left": "dirichlet_zero", "Right": "neumann_zero"}
    ls = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    ts, _ = run_forward(mesh20, ls, default_model, default_force, SimConfig(n_steps=20, bc=bc))
    fixed = np.concatenate([boundary_nodes(mesh20, "Bottom"), boundary_nodes(mesh20, "Left")])
    assert not ts.displacements[:, fixed].any()
    assert np.abs(ts.displacements).max() > 0


def test_solver_failure_reports_step(mesh20, default_model, default_force, monkeypatch):
    ls = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    cfg = SimConfig(n_steps=5, tol=1e-14)
    capped = fem.solve_spd
    monkeypatch.setattr(fem, "solve_spd", lambda A, b, tol, x0: capped(A, b, tol=tol, max_iter=2, x0=x0))
    with pytest.raises(fem.SolverError, match="step 1"):
        run_forward(mesh20, ls, default_model, default_force, cfg)


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(h=0)
    with pytest.raises(ValueError):
        SimConfig(n_steps=0)
    with pytest.raises(ValueError):
        SimConfig(bc={"Top": "robin"})


def test_velocity_series(mesh20):
    h = 1e-3
    c = np.array([0.5, -2.0])
    frames = np.array([n * h * np.tile(c, (mesh20.n_nodes, 1)) for n in range(6)])
    from elastinv.wave import TimeSeries
    v = velocity_series(TimeSeries(mesh20, frames, h, np.tile(c, (mesh20.n_nodes, 1))))
    assert v == pytest.approx(np.broadcast_to(c, v.shape))
    const = TimeSeries(mesh20, np.ones((4, mesh20.n_nodes, 2)), h)
    assert not velocity_series(const)[1:].any()
    scaled = velocity_series(TimeSeries(mesh20, 3 * frames, h, None))
    assert scaled[1:] == pytest.approx(3 * velocity_series(TimeSeries(mesh20, frames, h, None))[1:])


def test_energy_non_increasing(mesh20, default_model):
    ls = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    u0 = smooth_vector_field(mesh20, 1) * 1e-6
    v0 = smooth_vector_field(mesh20, 2) * 1e-2
    cfg = SimConfig(n_steps=60, u0=u0, v0=v0)
    stepper = Stepper.from_layout(mesh20, ls, default_model, cfg)
    ts, _ = run_forward(mesh20, ls, default_model, None, cfg, stepper=stepper)
    E = discrete_energy(stepper, ts)
    assert np.all(E[1:] <= E[:-1] * (1 + 1e-8))
    assert E[-1] < E[0]


# -- dilation -----------------------------------------------------------------


def test_dilation_closed_forms(mesh20):
    x, y = mesh20.nodes.T
    stretch = VectorField(mesh20, np.column_stack([x, y]))
    assert np.abs(element_dilation(stretch) - math.sqrt(2)).max() <= 1e-9
    assert np.abs(dilation(stretch).values - math.sqrt(2)).max() <= 1e-9
    rot = VectorField(mesh20, np.column_stack([-y, x]))
    assert np.abs(dilation(rot).values).max() <= 1e-12
    zero = VectorField(mesh20, np.zeros((mesh20.n_nodes, 2)))
    assert not dilation(zero).values.any()


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_dilation_bounded(a, b, c, d):
    mesh = generate_mesh(4)
    x, y = mesh.nodes.T
    vals = element_dilation(VectorField(mesh, np.column_stack([a * x + b * y, c * x + d * y])))
    assert np.all(np.abs(vals) <= math.sqrt(2) + 1e-12)


# -- immersed force -------------------------------------------------------------


def test_immersed_profile_closed_forms():
    eps = 1 / 25
    assert immersed_profile(0.98, 0.98, eps) == pytest.approx(12.5)
    total = sum(scipy.integrate.quad(lambda y: immersed_profile(y, 0.98, eps), a, b, epsabs=1e-12)[0]
                for a, b in ((-np.inf, 0.98), (0.98, np.inf)))
    assert total == pytest.approx(1.0, abs=1e-6)


def test_immersed_force(mesh20):
    gamma = boundary_nodes(mesh20, "Top")
    x = mesh20.nodes[:, 0]
    u2 = np.sin(3 * x)
    delta = np.sin(3 * mesh20.nodes[gamma, 0])
    f = immersed_dirichlet_force(u2, delta, 0.98, 1 / 25, 1e-3, mesh20)
    assert not f.values.any()
    f = immersed_dirichlet_force(u2 + 1.0, delta, 0.98, 1 / 25, 1e-3, mesh20).values
    assert not f[:, 0].any()
    y = mesh20.nodes[:, 1]
    assert f[:, 1] == pytest.approx(2e3 * immersed_profile(y, 0.98, 1 / 25))
    with pytest.raises(ValueError):
        immersed_dirichlet_force(u2, delta, 0.98, 0.0, 1e-3, mesh20)


# -- adjoint ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def adjoint_setup(mesh20, default_model, default_force):
    cfg = SimConfig(n_steps=30)
    ls = signed_distance_circle(mesh20, (0.5, 0.5), 0.1)
    ts, rec = run_forward(mesh20, ls, default_model, default_force, cfg)
    return cfg, ls, ts, rec


@pytest.mark.parametrize("mode", ["discrete", "immersed", "immersed_reversed"])
def test_adjoint_zero_residual(mesh20, default_model, adjoint_setup, mode):
    cfg, ls, ts, rec = adjoint_setup
    zero = rec.with_values(np.zeros_like(rec.values))
    # the immersed force uses u2 - delta, so feed the forward field as its own data
    adj = run_adjoint(mesh20, ls, default_model, zero, cfg, mode=mode, forward=ts)
    if mode == "discrete":
        assert not adj.displacements.any()
    else:
        assert np.abs(adj.displacements).max() <= 1e-12


@pytest.mark.parametrize("mode", ["discrete", "immersed", "immersed_reversed"])
def test_adjoint_linearity(mesh20, default_model, adjoint_setup, mode):
    cfg, ls, ts, rec = adjoint_setup
    r = rec.with_values(rec.values * np.linspace(0, 1, rec.values.shape[1]))
    r2 = r.with_values(2 * r.values)
    # immersed modes take u2 from the forward series; scale it with the residual
    from elastinv.wave import TimeSeries
    fwd = TimeSeries(mesh20, np.zeros_like(ts.displacements), ts.h)
    fwd_r = TimeSeries(mesh20, fwd.displacements.copy(), ts.h)
    a = run_adjoint(mesh20, ls, default_model, r.with_values(-r.values), cfg, mode=mode, forward=fwd_r)
    b = run_adjoint(mesh20, ls, default_model, r2.with_values(-r2.values), cfg, mode=mode, forward=fwd_r)
    scale = np.abs(b.displacements).max()
    assert scale > 0
    assert np.abs(b.displacements - 2 * a.displacements).max() <= 1e-8 * scale


def test_adjoint_enters_from_gamma_band(mesh20):
    # homogeneous medium, residual localized on a few top nodes
    p = Phase(180e9, 0.26, 4e3)
    model = MaterialModel(p, p)
    ls = LevelSet(mesh20, np.ones(mesh20.n_nodes))
    cfg = SimConfig(n_steps=20)
    gamma = boundary_nodes(mesh20, "Top")
    vals = np.zeros((21, len(gamma)))
    vals[:, 8:13] = 1e-9
    res = BoundaryRecord(gamma, mesh20.nodes[gamma, 0], vals, cfg.h)
    from elastinv.wave import TimeSeries
    fwd = TimeSeries(mesh20, np.zeros((21, mesh20.n_nodes, 2)), cfg.h)
    eps = 1 / 25
    imm = run_adjoint(mesh20, ls, model, res.with_values(-vals), cfg, mode="immersed", forward=fwd)
    for k in (1, 2, 3):
        i = np.abs(imm.displacements[k]).max(axis=1).argmax()
        assert abs(mesh20.nodes[i, 1] - 0.98) <= 3 * eps
    disc = run_adjoint(mesh20, ls, model, res, cfg, mode="discrete")
    for k in (20, 19, 18):
        i = np.abs(disc.displacements[k]).max(axis=1).argmax()
        assert abs(mesh20.nodes[i, 1] - 0.98) <= 3 * eps


def test_adjoint_rejects_misaligned(mesh20, default_model, adjoint_setup):
    cfg, ls, ts, rec = adjoint_setup
    with pytest.raises(ValueError):
        run_adjoint(mesh20, ls, default_model, rec, SimConfig(n_steps=31))
    with pytest.raises(ValueError):
        run_adjoint(mesh20, ls, default_model, rec, cfg, mode="immersed")
    with pytest.raises(ValueError):
        run_adjoint(mesh20, ls, default_model, rec, cfg, mode="lagrange")


def test_inclusion_shows_in_dilation_difference(default_model, default_force):
    # homogeneous reference: the matrix phase everywhere (theta >= 0)
    mesh = generate_mesh(40)
    cfg = SimConfig(n_steps=133)  # T = 4e-4
    inc = signed_distance_circle(mesh, (0.5, 0.5), 0.1)
    hom = LevelSet(mesh, np.ones(mesh.n_nodes))
    ts1, _ = run_forward(mesh, inc, default_model, default_force, cfg)
    ts0, _ = run_forward(mesh, hom, default_model, default_force, cfg)
    diff = np.mean([np.abs(dilation(ts1.frame(n)).values - dilation(ts0.frame(n)).values)
                    for n in range(1, len(ts1))], axis=0)
    peak = mesh.nodes[diff.argmax()]
    assert np.linalg.norm(peak - 0.5) <= 0.2


def test_mirror_symmetry(mesh20, default_model, default_force):
    ls = signed_distance_circle(mesh20, (0.5, 0.4), 0.15)
    ts, _ = run_forward(mesh20, ls, default_model, default_force, SimConfig(n_steps=30))
    mi = mirror_index(mesh20)
    u = ts.displacements
    scale = np.abs(u).max()
    assert np.abs(u[:, mi, 0] + u[:, :, 0]).max() <= 1e-6 * scale
    assert np.abs(u[:, mi, 1] - u[:, :, 1]).max() <= 1e-6 * scale
