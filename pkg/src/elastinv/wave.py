"""Implicit time marching of the composite elastic wave equation and its adjoint.

Each step solves ``(M + h^2 K) u_{n+1} = h^2 F_n + M (2 u_n - u_{n-1})``,
a backward-Euler-type second difference that is first order in time and
unconditionally stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .levelset import LevelSet
from .material import MaterialModel
from .mesh import TAGS, Mesh, ScalarField, VectorField, boundary_nodes, element_gradients, node_average

BC_KINDS = ("neumann_zero", "dirichlet_zero")
DIRECTION_MODES = ("full_angle", "principal_arctan")
ADJOINT_MODES = ("discrete", "immersed", "immersed_reversed")


@dataclass(frozen=True)
class ForceParams:
    A: float = 1e10
    l_N: float = 4.0
    l_x: float = 0.5
    l_y: float = 0.98
    l_width: float = 1300.0
    T: float = 4e-4
    direction_mode: str = "full_angle"

    def __post_init__(self):
        if not math.isfinite(self.A):
            raise ValueError("force magnitude must be finite")
        if self.l_width < 0:
            raise ValueError("l_width must be non-negative")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.direction_mode not in DIRECTION_MODES:
            raise ValueError(f"direction_mode must be one of {DIRECTION_MODES}")

    def temporal(self, t: float) -> float:
        return self.A * math.cos(2.0 * math.pi * t * self.l_N / self.T)


@dataclass(frozen=True)
class SimConfig:
    h: float = 3e-6
    n_steps: int = 100
    bc: dict = field(default_factory=lambda: {tag: "neumann_zero" for tag in TAGS})
    u0: np.ndarray | None = None  # (N, 2); None means zero
    v0: np.ndarray | None = None
    tol: float = 1e-10

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        bad = {k: v for k, v in self.bc.items() if k not in TAGS or v not in BC_KINDS}
        if bad:
            raise ValueError(f"invalid boundary conditions {bad}")

    @property
    def final_time(self) -> float:
        return self.h * self.n_steps

    def initial_data(self, mesh: Mesh):
        zero = np.zeros((mesh.n_nodes, 2))
        u0 = zero if self.u0 is None else np.asarray(self.u0, dtype=float).reshape(mesh.n_nodes, 2)
        v0 = zero if self.v0 is None else np.asarray(self.v0, dtype=float).reshape(mesh.n_nodes, 2)
        return u0, v0


@dataclass(frozen=True, eq=False)
class TimeSeries:
    mesh: Mesh
    displacements: np.ndarray  # (n_steps + 1, N, 2)
    h: float
    initial_velocity: np.ndarray | None = None

    def __len__(self):
        return len(self.displacements)

    def frame(self, n: int) -> VectorField:
        return VectorField(self.mesh, self.displacements[n])


@dataclass(frozen=True, eq=False)
class BoundaryRecord:
    gamma_nodes: np.ndarray
    x: np.ndarray  # abscissae of the gamma nodes
    values: np.ndarray  # (n_steps + 1, |gamma|)
    h: float

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.gamma_nodes):
            raise ValueError("record values must be (n_frames, |gamma|)")

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(len(self.values))

    def space_weights(self) -> np.ndarray:
        """Trapezoid weights along gamma (lumped edge lengths)."""
        order = np.argsort(self.x, kind="stable")
        xs = self.x[order]
        w = np.zeros(len(xs))
        d = np.diff(xs)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        out = np.empty_like(w)
        out[order] = w
        return out

    def time_weights(self) -> np.ndarray:
        w = np.ones(len(self.values))
        w[0] = w[-1] = 0.5
        return w

    def with_values(self, values) -> "BoundaryRecord":
        return BoundaryRecord(self.gamma_nodes, self.x, np.asarray(values, dtype=float), self.h)


# ----------------------------------------------------------------------------
# outer force


def _direction(dx, dy, mode):
    r = np.hypot(dx, dy)
    if mode == "full_angle":
        psi = np.arctan2(dy, dx)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = np.arctan(dy / dx)
    c, s = np.cos(psi), np.sin(psi)
    at_focus = r == 0
    c = np.where(at_focus, 0.0, c)
    s = np.where(at_focus, -1.0, s)
    return r, c, s


def force_profile(points: np.ndarray, p: ForceParams) -> np.ndarray:
    """Spatial part ``exp(-l_width r) (cos psi, sin psi)`` at arbitrary points, (P, 2)."""
    r, c, s = _direction(points[:, 0] - p.l_x, points[:, 1] - p.l_y, p.direction_mode)
    env = np.exp(-p.l_width * r)
    return np.column_stack([env * c, env * s])


def laser_force(p: ForceParams, t: float, mesh: Mesh) -> VectorField:
    return VectorField(mesh, p.temporal(t) * force_profile(mesh.nodes, p))


def _subtriangle_rule(level: int):
    """Barycentric points/weights of a degree-2 rule on a uniform level x level split."""
    base = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    pts = []
    for i in range(level):
        for j in range(level - i):
            up = np.array([[i, j], [i + 1, j], [i, j + 1]], dtype=float) / level
            pts.append(base @ up)
            if i + j < level - 1:
                down = np.array([[i + 1, j], [i + 1, j + 1], [i, j + 1]], dtype=float) / level
                pts.append(base @ down)
    ab = np.concatenate(pts)  # (3 L^2, 2) in (xi, eta)
    bary = np.column_stack([1 - ab.sum(axis=1), ab])
    w = np.full(len(bary), 1.0 / len(bary))
    return bary, w


def force_load_profile(mesh: Mesh, p: ForceParams, max_level: int = 48) -> np.ndarray:
    """Load vector of the spatial force profile, flattened to 2N.

    Triangles are subdivided near the focus so the exponential envelope is
    resolved even when it is narrower than the mesh.
    """
    tri_pts = mesh.nodes[mesh.triangles]
    diam = np.max(np.linalg.norm(tri_pts - np.roll(tri_pts, 1, axis=1), axis=2), axis=1)
    dist = np.linalg.norm(tri_pts.mean(axis=1) - [p.l_x, p.l_y], axis=1) - diam
    levels = np.ones(mesh.n_triangles, dtype=int)
    near = dist * p.l_width < 40.0
    levels[near] = np.clip(np.ceil(diam[near] * p.l_width / 1.5), 1, max_level).astype(int)
    F = np.zeros((mesh.n_nodes, 2))
    for level in np.unique(levels):
        sel = np.nonzero(levels == level)[0]
        bary, w = _subtriangle_rule(int(level))
        pts = np.einsum("qa,tad->tqd", bary, tri_pts[sel])  # (t, q, 2)
        vals = force_profile(pts.reshape(-1, 2), p).reshape(len(sel), len(w), 2)
        contrib = mesh.areas[sel, None, None] * np.einsum("q,qa,tqc->tac", w, bary, vals)
        for a in range(3):
            np.add.at(F, mesh.triangles[sel, a], contrib[:, a])
    return F.reshape(-1)


# ----------------------------------------------------------------------------
# time stepping


def initial_back_step(u0: VectorField, v0: VectorField, h: float) -> VectorField:
    return VectorField(u0.mesh, u0.values - h * v0.values)


class Stepper:
    """Holds ``M`` and ``M + h^2 K`` restricted to the free dofs for one material layout."""

    def __init__(self, mesh: Mesh, M, K, h: float, bc: dict | None = None, tol: float = 1e-10):
        self.mesh, self.h, self.tol = mesh, h, tol
        fixed = np.zeros(2 * mesh.n_nodes, dtype=bool)
        for tag, kind in (bc or {}).items():
            if kind == "dirichlet_zero":
                nodes = boundary_nodes(mesh, tag)
                fixed[2 * nodes] = fixed[2 * nodes + 1] = True
        self.free = np.nonzero(~fixed)[0]
        self.fixed = fixed
        self.M_full, self.K_full = M, K
        if fixed.any():
            M = M[self.free][:, self.free]
            K = K[self.free][:, self.free]
        self.M = sp.csr_matrix(M)
        self.A = sp.csr_matrix(M + h * h * K)
        self.reports = []

    @classmethod
    def from_layout(cls, mesh, ls: LevelSet, model: MaterialModel, cfg: SimConfig, quadrature="centroid"):
        rho, lam, mu = model.coefficients(ls.values)
        M = fem.assemble_mass(mesh, rho, quadrature)
        K = fem.assemble_stiffness(mesh, lam, mu)
        return cls(mesh, M, K, cfg.h, cfg.bc, cfg.tol)

    def step(self, u_n: np.ndarray, u_nm1: np.ndarray, load: np.ndarray | None, step_index: int = -1):
        """One implicit step on flattened 2N vectors; ``load`` is the assembled F_n."""
        f = self.free
        rhs = self.M @ (2.0 * u_n[f] - u_nm1[f])
        if load is not None:
            rhs = rhs + self.h * self.h * load[f]
        x, rep = fem.solve_spd(self.A, rhs, tol=self.tol, x0=2.0 * u_n[f] - u_nm1[f])
        self.reports.append(rep)
        if not rep.converged:
            raise fem.SolverError(f"CG failed at step {step_index}: residual {rep.residual:.3e}")
        out = np.zeros_like(u_n)
        out[f] = x
        return out


def implicit_step(M, K, u_n: VectorField, u_nm1: VectorField, f_n: VectorField, h: float) -> VectorField:
    mesh = u_n.mesh
    stepper = Stepper(mesh, M, K, h)
    load = fem.load_vector(mesh, f_n)
    return VectorField(mesh, stepper.step(u_n.flat(), u_nm1.flat(), load).reshape(-1, 2))


def gamma_record(mesh: Mesh, frames: np.ndarray, h: float) -> BoundaryRecord:
    gamma = boundary_nodes(mesh, "Top")
    return BoundaryRecord(gamma, mesh.nodes[gamma, 0].copy(), frames[:, gamma, 1].copy(), h)


def march(stepper: Stepper, u0: np.ndarray, v0: np.ndarray, n_steps: int, loads) -> np.ndarray:
    """Forward march; ``loads(n)`` returns F_n (flattened) or None."""
    mesh = stepper.mesh
    h = stepper.h
    frames = np.zeros((n_steps + 1, mesh.n_nodes, 2))
    frames[0] = u0
    prev = (u0 - h * v0).reshape(-1)
    cur = u0.reshape(-1).copy()
    for n in range(n_steps):
        nxt = stepper.step(cur, prev, loads(n), step_index=n + 1)
        frames[n + 1] = nxt.reshape(-1, 2)
        prev, cur = cur, nxt
    return frames


def run_forward(mesh: Mesh, ls: LevelSet, model: MaterialModel, force: ForceParams | None, cfg: SimConfig,
                stepper: Stepper | None = None):
    """Solve the forward problem; returns ``(TimeSeries, BoundaryRecord)``."""
    stepper = stepper or Stepper.from_layout(mesh, ls, model, cfg)
    u0, v0 = cfg.initial_data(mesh)
    if force is None or force.A == 0:
        loads = lambda n: None  # noqa: E731
    else:
        profile = force_load_profile(mesh, force)
        loads = lambda n: force.temporal(n * cfg.h) * profile  # noqa: E731
    frames = march(stepper, u0, v0, cfg.n_steps, loads)
    ts = TimeSeries(mesh, frames, cfg.h, v0)
    return ts, gamma_record(mesh, frames, cfg.h)


def velocity_series(ts: TimeSeries) -> np.ndarray:
    """Backward-difference velocities, (n_frames, N, 2); frame 0 is the initial velocity."""
    u = ts.displacements
    vel = np.empty_like(u)
    vel[1:] = (u[1:] - u[:-1]) / ts.h
    vel[0] = 0.0 if ts.initial_velocity is None else ts.initial_velocity
    return vel


def discrete_energy(stepper: Stepper, ts: TimeSeries) -> np.ndarray:
    """``1/2 |(u_n - u_{n-1})/h|_M^2 + 1/2 |u_n|_K^2`` for n >= 1."""
    M, K = stepper.M_full, stepper.K_full
    u = ts.displacements.reshape(len(ts), -1)
    w = (u[1:] - u[:-1]) / ts.h
    kin = 0.5 * np.einsum("ni,ni->n", w, (M @ w.T).T)
    pot = 0.5 * np.einsum("ni,ni->n", u[1:], (K @ u[1:].T).T)
    return kin + pot


def dilation(u: VectorField, floor: float = 1e-14) -> ScalarField:
    """Node-averaged ``div u / |grad u|_F``; zero where the gradient is negligible."""
    mesh = u.mesh
    G = element_gradients(mesh, u.values)  # (T, 2, 2): G[t, c, d] = d u_c / d x_d
    div = G[:, 0, 0] + G[:, 1, 1]
    norm = np.sqrt(np.einsum("tcd,tcd->t", G, G))
    scale = norm.max() if len(norm) else 0.0
    ok = norm > floor * scale
    vals = np.zeros(mesh.n_triangles)
    vals[ok] = div[ok] / norm[ok]
    return ScalarField(mesh, node_average(mesh, vals))


def element_dilation(u: VectorField) -> np.ndarray:
    G = element_gradients(u.mesh, u.values)
    norm = np.sqrt(np.einsum("tcd,tcd->t", G, G))
    return np.where(norm > 0, (G[:, 0, 0] + G[:, 1, 1]) / np.where(norm > 0, norm, 1.0), 0.0)


# ----------------------------------------------------------------------------
# adjoint


def immersed_profile(y, l_y: float, eps: float):
    """Regularized delta ``sech^2((y - l_y)/eps) / (2 eps)``; integrates to one over y."""
    x = np.clip((np.asarray(y) - l_y) / eps, -300.0, 300.0)
    return 1.0 / np.cosh(x) ** 2 / (2.0 * eps)


def extrude_gamma(mesh: Mesh, gamma_x: np.ndarray, gamma_values: np.ndarray) -> np.ndarray:
    """Extend gamma samples to every node, constant in y, from the nearest gamma abscissa."""
    order = np.argsort(gamma_x, kind="stable")
    xs = gamma_x[order]
    x = mesh.nodes[:, 0]
    k = np.clip(np.searchsorted(xs, x), 1, len(xs) - 1)
    left_closer = (x - xs[k - 1]) <= (xs[k] - x)
    idx = np.where(left_closer, k - 1, k)
    return np.asarray(gamma_values)[order][idx]


def immersed_dirichlet_force(u2, delta_frame, l_y: float, eps: float, eps_tilde: float, mesh: Mesh,
                             gamma_x: np.ndarray | None = None) -> VectorField:
    """Band force ``(2/eps_tilde)(u2 - delta) sech^2((y-l_y)/eps)/(2 eps)`` on the second component.

    ``delta_frame`` holds one value per top-boundary node; it is extruded
    downwards in y.
    """
    if eps <= 0 or eps_tilde <= 0:
        raise ValueError("eps and eps_tilde must be positive")
    u2 = np.asarray(getattr(u2, "values", u2), dtype=float)
    if gamma_x is None:
        gamma_x = mesh.nodes[boundary_nodes(mesh, "Top"), 0]
    delta_ext = extrude_gamma(mesh, gamma_x, delta_frame)
    out = np.zeros((mesh.n_nodes, 2))
    out[:, 1] = (2.0 / eps_tilde) * (u2 - delta_ext) * immersed_profile(mesh.nodes[:, 1], l_y, eps)
    return VectorField(mesh, out)


def boundary_misfit_loads(residual: BoundaryRecord, eps_tilde: float, n_nodes: int) -> np.ndarray:
    """Derivative of the boundary misfit cost with respect to each frame, (n_frames, 2N)."""
    w_t = residual.time_weights()
    w_x = residual.space_weights()
    d = np.zeros((len(residual.values), n_nodes, 2))
    d[:, residual.gamma_nodes, 1] = (2.0 / eps_tilde) * residual.h * w_t[:, None] * w_x[None] * residual.values
    return d.reshape(len(residual.values), -1)


def run_adjoint(mesh: Mesh, ls: LevelSet, model: MaterialModel, residual: BoundaryRecord, cfg: SimConfig,
                eps_tilde: float = 1e-3, mode: str = "discrete", stepper: Stepper | None = None,
                forward: TimeSeries | None = None, band_center: float = 0.98, band_eps: float = 1 / 25,
                v0: np.ndarray | None = None) -> TimeSeries:
    """Adjoint field driven by the boundary residual ``u2 - delta``.

    ``discrete``: exact adjoint of the time-stepping scheme, marched backward
    from zero terminal data with the residual applied as a load on the top
    boundary.  With this field the gradient assembled in
    :func:`elastinv.inverse.gradient` is the exact derivative of the discrete
    cost.

    ``immersed`` / ``immersed_reversed``: the residual enters through the
    regularized band force, marched forward from ``v0`` (zero by default) or
    backward from zero.  These need the forward series for the nodal ``u2``.
    """
    if mode not in ADJOINT_MODES:
        raise ValueError(f"adjoint mode must be one of {ADJOINT_MODES}")
    if residual.n_steps != cfg.n_steps:
        raise ValueError(f"residual has {residual.n_steps} steps, config has {cfg.n_steps}")
    stepper = stepper or Stepper.from_layout(mesh, ls, model, cfg)
    h = cfg.h
    N = cfg.n_steps
    n = mesh.n_nodes

    if mode == "discrete":
        dE = boundary_misfit_loads(residual, eps_tilde, n)
        loads = lambda k: -dE[k] / h  # noqa: E731
    else:
        if forward is None:
            raise ValueError("immersed adjoint modes need the forward time series")
        gamma_x = residual.x
        delta = forward.displacements[:, residual.gamma_nodes, 1] - residual.values

        def loads(k):
            # minus sign: pairs with the exact theta-derivatives of the material model
            f = immersed_dirichlet_force(forward.displacements[k, :, 1], delta[k], band_center, band_eps,
                                         eps_tilde, mesh, gamma_x)
            return -fem.load_vector(mesh, f)

    if mode == "immersed":
        start = np.zeros((n, 2)) if v0 is None else np.asarray(v0, dtype=float).reshape(n, 2)
        frames = march(stepper, start, np.zeros((n, 2)), N, loads)
        return TimeSeries(mesh, frames, h, np.zeros((n, 2)))

    # backward in time from v_{N+1} = v_{N+2} = 0; frame 0 stays zero
    frames = np.zeros((N + 1, n, 2))
    nxt = np.zeros(2 * n)
    nxt2 = np.zeros(2 * n)
    for k in range(N, 0, -1):
        cur = stepper.step(nxt, nxt2, loads(k), step_index=k)
        frames[k] = cur.reshape(-1, 2)
        nxt2, nxt = nxt, cur
    return TimeSeries(mesh, frames, h, None)
