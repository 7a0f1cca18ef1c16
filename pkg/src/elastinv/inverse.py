"""Boundary misfit cost, adjoint gradient, and the level-set gradient flow."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .levelset import (LevelSet, count_components, evolve, inclusion_area_centroid,
                       reinitialize)
from .material import MaterialModel
from .mesh import ScalarField
from .wave import (ADJOINT_MODES, BoundaryRecord, ForceParams, SimConfig, Stepper, TimeSeries,
                   run_adjoint, run_forward, velocity_series)

log = logging.getLogger(__name__)

LINE_SEARCHES = ("fixed_tau", "backtracking")
LEVEL_SIGNS = ("descent", "literal")


@dataclass(frozen=True)
class InverseConfig:
    eps_tilde: float = 1e-3
    tau_star: float = 0.02
    max_outer_iters: int = 40
    line_search: str = "backtracking"
    reinit_every: int = 1
    convergence_tol: float = 1e-3
    cfl: float = 0.5
    max_halvings: int = 8
    # scale the speed to unit max-norm so tau_star is the largest interface move
    normalize_speed: bool = True
    adjoint_mode: str = "discrete"
    level_sign: str = "descent"
    band_center: float = 0.98
    band_eps: float = 1 / 25

    def __post_init__(self):
        if not self.eps_tilde > 0:
            raise ValueError("eps_tilde must be positive")
        if not self.tau_star > 0:
            raise ValueError("tau_star must be positive")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be non-negative")
        if self.line_search not in LINE_SEARCHES:
            raise ValueError(f"line_search must be one of {LINE_SEARCHES}")
        if self.adjoint_mode not in ADJOINT_MODES:
            raise ValueError(f"adjoint_mode must be one of {ADJOINT_MODES}")
        if self.level_sign not in LEVEL_SIGNS:
            raise ValueError(f"level_sign must be one of {LEVEL_SIGNS}")
        if self.reinit_every < 1:
            raise ValueError("reinit_every must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    theta: np.ndarray
    centroid: np.ndarray
    area: float
    components: int
    tau_accepted: float = 0.0


@dataclass
class InversionResult:
    history: list = field(default_factory=list)
    stalled: bool = False
    converged: bool = False
    reason: str = ""

    @property
    def final(self) -> IterationRecord:
        return self.history[-1]

    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.history])


def _check_compatible(a: BoundaryRecord, b: BoundaryRecord):
    if a.values.shape != b.values.shape:
        raise ValueError(f"record shapes differ: {a.values.shape} vs {b.values.shape}")
    if not np.array_equal(a.gamma_nodes, b.gamma_nodes):
        raise ValueError("records are sampled on different boundary nodes")
    if not np.isclose(a.h, b.h, rtol=1e-12):
        raise ValueError(f"records use different time steps: {a.h} vs {b.h}")


def cost(sim: BoundaryRecord, delta: BoundaryRecord, eps_tilde: float) -> float:
    """``(1/eps_tilde) * ||u2 - delta||^2`` over the top boundary and time, trapezoid rule in both."""
    _check_compatible(sim, delta)
    r2 = (sim.values - delta.values) ** 2
    return float(sim.h * (sim.time_weights() @ r2 @ sim.space_weights()) / eps_tilde)


def residual(sim: BoundaryRecord, delta: BoundaryRecord) -> BoundaryRecord:
    _check_compatible(sim, delta)
    return sim.with_values(sim.values - delta.values)


def _element_time_integrals(mesh, forward: TimeSeries, adjoint: TimeSeries, pairing: str):
    """Time-integrated elemental products entering the gradient.

    Returns ``S`` (T, 3, 3) with ``h sum_n u_t[i] . v_t[j]`` per element node pair,
    and per-element ``h sum_n (div u)(div v) |T|`` and ``h sum_n 2 e(u):e(v) |T|``.
    """
    h = forward.h
    ut = velocity_series(forward)
    v = adjoint.displacements
    if pairing == "staggered":
        # forward difference of the adjoint, with v_{N+1} = 0
        vt = np.empty_like(v)
        vt[:-1] = (v[1:] - v[:-1]) / h
        vt[-1] = -v[-1] / h
    else:
        vt = velocity_series(adjoint)
    tri = mesh.triangles
    S = np.zeros((mesh.n_triangles, 3, 3))
    div_div = np.zeros(mesh.n_triangles)
    eps_eps = np.zeros(mesh.n_triangles)
    G = mesh.basis_gradients  # (T, 3, 2)
    for n in range(len(forward)):
        a, b = ut[n][tri], vt[n][tri]  # (T, 3, 2)
        S += np.einsum("tic,tjc->tij", a, b)
        if n == 0:
            continue
        gu = np.einsum("tac,tad->tcd", forward.displacements[n][tri], G)  # du_c/dx_d
        gv = np.einsum("tac,tad->tcd", v[n][tri], G)
        div_div += (gu[:, 0, 0] + gu[:, 1, 1]) * (gv[:, 0, 0] + gv[:, 1, 1])
        su = 0.5 * (gu + gu.transpose(0, 2, 1))
        sv = 0.5 * (gv + gv.transpose(0, 2, 1))
        eps_eps += 2.0 * np.einsum("tcd,tcd->t", su, sv)
    area = mesh.areas
    return h * S, h * area * div_div, h * area * eps_eps


def gradient_derivative(ls: LevelSet, model: MaterialModel, forward: TimeSeries, adjoint: TimeSeries,
                        pairing: str = "staggered", quadrature: str = "centroid",
                        literal: bool = False) -> np.ndarray:
    """Nodal derivative vector dE/dtheta_j (before the L2 Riesz map).

    Per element, the time integral of ``-rho' u_t.v_t + lambda' div u div v
    + 2 mu' e(u):e(v)`` is split onto its nodes with the nodal coefficient
    derivatives.  ``literal`` flips the sign of the inertial term.
    """
    if forward.displacements.shape != adjoint.displacements.shape:
        raise ValueError("forward and adjoint series differ in shape")
    if not np.isclose(forward.h, adjoint.h, rtol=1e-12):
        raise ValueError("forward and adjoint series use different time steps")
    mesh = ls.mesh
    drho, dlam, dmu = model.coefficient_derivatives(ls.values)
    if not (drho.any() or dlam.any() or dmu.any()):
        return np.zeros(mesh.n_nodes)
    S, dd, ee = _element_time_integrals(mesh, forward, adjoint, pairing)
    W = fem.mass_weight_tensor(mesh, quadrature)  # (T, k, i, j)
    inertial = np.einsum("tkij,tij->tk", W, S)  # d(mass form)/d(rho_k)
    tri = mesh.triangles
    sign = 1.0 if literal else -1.0
    per_node = sign * drho[tri] * inertial + (dlam[tri] * dd[:, None] + dmu[tri] * ee[:, None]) / 3.0
    out = np.zeros(mesh.n_nodes)
    for a in range(3):
        np.add.at(out, tri[:, a], per_node[:, a])
    return out


def riesz_map(mesh, derivative: np.ndarray) -> np.ndarray:
    """Nodal L2 representative g with ``M g = derivative`` (consistent P1 mass)."""
    if not np.any(derivative):
        return np.zeros_like(derivative)
    g, rep = fem.solve_spd(fem.scalar_mass(mesh), derivative, tol=1e-12)
    if not rep.converged:
        raise fem.SolverError("mass solve for the gradient did not converge")
    return g


def gradient(ls: LevelSet, model: MaterialModel, forward_ts: TimeSeries, adjoint_ts: TimeSeries,
             pairing: str = "staggered", quadrature: str = "centroid", literal: bool = False) -> ScalarField:
    """L2(Omega) gradient of the cost with respect to the level set."""
    d = gradient_derivative(ls, model, forward_ts, adjoint_ts, pairing, quadrature, literal)
    return ScalarField(ls.mesh, riesz_map(ls.mesh, d))


def l2_inner(mesh, a, b) -> float:
    a = np.asarray(getattr(a, "values", a))
    b = np.asarray(getattr(b, "values", b))
    return float(a @ (fem.scalar_mass(mesh) @ b))


# ----------------------------------------------------------------------------
# pipelines


@dataclass
class Problem:
    """Everything an inversion needs apart from the level set."""

    model: MaterialModel
    force: ForceParams
    sim: SimConfig
    delta: BoundaryRecord
    inv: InverseConfig = field(default_factory=InverseConfig)

    def forward(self, ls: LevelSet):
        stepper = Stepper.from_layout(ls.mesh, ls, self.model, self.sim)
        ts, rec = run_forward(ls.mesh, ls, self.model, self.force, self.sim, stepper=stepper)
        return stepper, ts, rec

    def cost(self, ls: LevelSet) -> float:
        _, _, rec = self.forward(ls)
        return cost(rec, self.delta, self.inv.eps_tilde)

    def gradient(self, ls: LevelSet, state=None):
        """``(g, cost)`` at ``ls``; ``state`` may carry a forward solve already done at ``ls``."""
        stepper, ts, rec = state if state is not None else self.forward(ls)
        E = cost(rec, self.delta, self.inv.eps_tilde)
        if self.model.identical_phases:
            return ScalarField(ls.mesh, np.zeros(ls.mesh.n_nodes)), E
        inv = self.inv
        adj = run_adjoint(ls.mesh, ls, self.model, residual(rec, self.delta), self.sim,
                          eps_tilde=inv.eps_tilde, mode=inv.adjoint_mode, stepper=stepper, forward=ts,
                          band_center=inv.band_center, band_eps=inv.band_eps)
        pairing = "staggered" if inv.adjoint_mode != "immersed" else "same"
        g = gradient(ls, self.model, ts, adj, pairing=pairing, literal=inv.level_sign == "literal")
        return g, E


def synthesize_data(target_ls: LevelSet, model: MaterialModel, force: ForceParams, cfg: SimConfig) -> BoundaryRecord:
    _, rec = run_forward(target_ls.mesh, target_ls, model, force, cfg)
    return rec


def cost_profile(ls: LevelSet, problem: Problem, g, taus) -> list[tuple[float, float]]:
    """Cost at ``theta - tau g`` for each tau, without reinitialization."""
    gv = np.asarray(getattr(g, "values", g), dtype=float)
    out = []
    for tau in taus:
        tau = float(tau)
        if not np.isfinite(tau):
            raise ValueError("tau values must be finite")
        trial = LevelSet(ls.mesh, ls.values - tau * gv)
        out.append((tau, problem.cost(trial)))
    return out


def fd_gradient_check(ls: LevelSet, problem: Problem, direction, s: float, g=None):
    """Compare ``<g, direction>`` with a central difference of the cost.

    Returns ``(analytic, numeric, rel_error)``.
    """
    if s <= 0:
        raise ValueError("step s must be positive")
    d = np.asarray(getattr(direction, "values", direction), dtype=float)
    if not np.any(d):
        return 0.0, 0.0, 0.0
    if g is None:
        g, _ = problem.gradient(ls)
    analytic = l2_inner(ls.mesh, g, d)
    plus = problem.cost(LevelSet(ls.mesh, ls.values + s * d))
    minus = problem.cost(LevelSet(ls.mesh, ls.values - s * d))
    numeric = (plus - minus) / (2.0 * s)
    denom = max(abs(numeric), np.finfo(float).tiny)
    return analytic, numeric, abs(analytic - numeric) / denom


def smooth_direction(mesh, seed: int, n_modes: int = 3) -> np.ndarray:
    """Random smooth nodal field: a sum of low-order sinusoids with seeded coefficients."""
    rng = np.random.default_rng(seed)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    out = np.zeros(mesh.n_nodes)
    for _ in range(n_modes):
        kx, ky = rng.integers(1, 4, size=2)
        px, py = rng.uniform(0, 2 * np.pi, size=2)
        out += rng.normal() * np.sin(np.pi * kx * x + px) * np.sin(np.pi * ky * y + py)
    return out / np.abs(out).max()


# ----------------------------------------------------------------------------
# gradient flow


def _record(it, E, ls, tau):
    area, centroid = inclusion_area_centroid(ls)
    return IterationRecord(it, E, ls.values.copy(), centroid, area, count_components(ls), tau)


def _speed(g: ScalarField, inv: InverseConfig) -> ScalarField:
    gv = g.values
    if inv.normalize_speed:
        gv = gv / np.abs(gv).max()
    return ScalarField(g.mesh, gv)


def _move(ls, speed, tau, inv: InverseConfig, it: int):
    trial = evolve(ls, speed, tau, cfl=inv.cfl)
    if (it + 1) % inv.reinit_every == 0:
        trial = reinitialize(trial)
    return trial


def invert(delta: BoundaryRecord, initial_ls: LevelSet, model: MaterialModel, force: ForceParams,
           cfg: SimConfig, inv_cfg: InverseConfig | None = None, callback=None) -> InversionResult:
    """Level-set gradient flow of the boundary misfit, starting from ``initial_ls``."""
    inv = inv_cfg or InverseConfig()
    problem = Problem(model, force, cfg, delta, inv)
    result = InversionResult()
    ls = initial_ls
    state = problem.forward(ls)
    E = cost(state[2], delta, inv.eps_tilde)
    result.history.append(_record(0, E, ls, 0.0))
    if callback:
        callback(result.history[-1])
    # zero-cost threshold relative to the misfit of a silent record
    scale = cost(delta.with_values(np.zeros_like(delta.values)), delta, inv.eps_tilde)
    if scale == 0:
        scale = cfg.final_time / inv.eps_tilde
    for it in range(inv.max_outer_iters):
        if E <= 1e-10 * scale:
            result.converged, result.reason = True, "zero cost"
            break
        g, _ = problem.gradient(ls, state)
        if not np.any(g.values):
            result.stalled, result.reason = True, "zero gradient"
            break
        speed = _speed(g, inv)
        tau = inv.tau_star
        accepted = None
        for _ in range(inv.max_halvings + 1):
            trial = _move(ls, speed, tau, inv, it)
            trial_state = problem.forward(trial)
            E_trial = cost(trial_state[2], delta, inv.eps_tilde)
            if inv.line_search == "fixed_tau" or E_trial < E:
                accepted = (trial, trial_state, E_trial)
                break
            tau *= 0.5
        if accepted is None:
            if len(result.history) == 1:
                result.stalled, result.reason = True, "line search exhausted"
            else:
                result.converged, result.reason = True, "no further decrease along -g"
            break
        ls, state, E_new = accepted
        result.history.append(_record(it + 1, E_new, ls, tau))
        log.info("iter %d cost %.6e tau %.3e", it + 1, E_new, tau)
        if callback:
            callback(result.history[-1])
        E = E_new
        costs = result.costs()
        if len(costs) > 5 and (costs[-6] - costs[-1]) / costs[-6] < inv.convergence_tol:
            result.converged, result.reason = True, "relative decrease below tolerance"
            break
    else:
        result.reason = "max_outer_iters reached"
    if not result.reason:
        result.reason = "max_outer_iters reached"
    return result
