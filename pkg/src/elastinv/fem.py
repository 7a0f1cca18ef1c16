"""Vector P1 mass/stiffness assembly and a Jacobi-preconditioned CG solver.

Unknowns are node-major with interleaved components: dof ``2*i + c`` holds
component ``c`` of node ``i``.  Operators are plain ``scipy.sparse`` CSR
matrices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

QUADRATURES = ("centroid", "exact")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual: float
    converged: bool


def _cached(mesh: Mesh, key, build):
    cache = mesh._geom.setdefault("fem", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


def unit_mass_elements(mesh: Mesh) -> np.ndarray:
    """Scalar P1 mass element matrices for unit density, (T, 3, 3)."""
    def build():
        base = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return mesh.areas[:, None, None] * base[None]
    return _cached(mesh, "M1", build)


def mass_weight_tensor(mesh: Mesh, quadrature: str = "centroid") -> np.ndarray:
    """``W[t, k, i, j]`` such that the element mass is ``sum_k rho_k W[t, k, i, j]``."""
    if quadrature not in QUADRATURES:
        raise ValueError(f"unknown quadrature {quadrature!r}")

    def build():
        if quadrature == "centroid":
            w = np.broadcast_to(((np.ones((3, 3)) + np.eye(3)) / 36.0)[None], (3, 3, 3)).copy()
        else:
            # integral of phi_i phi_j phi_k over a triangle of unit area
            w = np.empty((3, 3, 3))
            for k in range(3):
                for i in range(3):
                    for j in range(3):
                        n_eq = len({i, j, k})
                        w[k, i, j] = {1: 1 / 10, 2: 1 / 30, 3: 1 / 60}[n_eq]
        return mesh.areas[:, None, None, None] * w[None]
    return _cached(mesh, ("W", quadrature), build)


def strain_matrices(mesh: Mesh) -> np.ndarray:
    """Voigt strain-displacement matrices (exx, eyy, 2exy) per triangle, (T, 3, 6)."""
    def build():
        G = mesh.basis_gradients
        B = np.zeros((mesh.n_triangles, 3, 6))
        B[:, 0, 0::2] = G[:, :, 0]
        B[:, 1, 1::2] = G[:, :, 1]
        B[:, 2, 0::2] = G[:, :, 1]
        B[:, 2, 1::2] = G[:, :, 0]
        return B
    return _cached(mesh, "B", build)


def unit_stiffness_elements(mesh: Mesh):
    """Element matrices ``(K_lambda, K_mu)`` for unit Lamé parameters, each (T, 6, 6)."""
    def build():
        B = strain_matrices(mesh)
        d_lam = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        d_mu = np.diag([2.0, 2.0, 1.0])
        a = mesh.areas[:, None, None]
        k_lam = a * np.einsum("tpa,pq,tqb->tab", B, d_lam, B)
        k_mu = a * np.einsum("tpa,pq,tqb->tab", B, d_mu, B)
        return k_lam, k_mu
    return _cached(mesh, "K1", build)


def _element_dofs(mesh: Mesh) -> np.ndarray:
    def build():
        t = mesh.triangles
        return np.stack([2 * t[:, 0], 2 * t[:, 0] + 1, 2 * t[:, 1], 2 * t[:, 1] + 1,
                         2 * t[:, 2], 2 * t[:, 2] + 1], axis=1)
    return _cached(mesh, "dofs", build)


def _assemble(index: np.ndarray, blocks: np.ndarray, size: int) -> sp.csr_matrix:
    n = index.shape[1]
    rows = np.repeat(index, n, axis=1).ravel()
    cols = np.tile(index, (1, n)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def scalar_mass(mesh: Mesh, rho: np.ndarray | None = None, quadrature: str = "centroid") -> sp.csr_matrix:
    """Scalar P1 mass matrix (N x N)."""
    if rho is None:
        blocks = unit_mass_elements(mesh)
    else:
        W = mass_weight_tensor(mesh, quadrature)
        blocks = np.einsum("tk,tkij->tij", np.asarray(rho)[mesh.triangles], W)
    return _assemble(mesh.triangles, blocks, mesh.n_nodes)


def assemble_mass(mesh: Mesh, rho, quadrature: str = "centroid") -> sp.csr_matrix:
    """Vector mass matrix (2N x 2N) for nodal density ``rho``."""
    rho = np.asarray(getattr(rho, "values", rho), dtype=float)
    if np.any(rho <= 0):
        raise ValueError("density must be positive at every node")
    ms = scalar_mass(mesh, rho, quadrature).tocoo()
    rows = np.concatenate([2 * ms.row, 2 * ms.row + 1])
    cols = np.concatenate([2 * ms.col, 2 * ms.col + 1])
    data = np.concatenate([ms.data, ms.data])
    n = 2 * mesh.n_nodes
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: Mesh, lam, mu) -> sp.csr_matrix:
    """Isotropic elasticity stiffness with centroid values of the P1 Lamé fields.

    The P1 coefficients enter through their element means, which is exact
    for the piecewise-constant strains of P1 displacements.
    """
    lam = np.asarray(getattr(lam, "values", lam), dtype=float)
    mu = np.asarray(getattr(mu, "values", mu), dtype=float)
    if np.any(mu <= 0):
        raise ValueError("shear modulus must be positive at every node")
    k_lam, k_mu = unit_stiffness_elements(mesh)
    lam_t = lam[mesh.triangles].mean(axis=1)
    mu_t = mu[mesh.triangles].mean(axis=1)
    blocks = lam_t[:, None, None] * k_lam + mu_t[:, None, None] * k_mu
    return _assemble(_element_dofs(mesh), blocks, 2 * mesh.n_nodes)


def load_vector(mesh: Mesh, f) -> np.ndarray:
    """Consistent P1 load of a nodal vector field, flattened to 2N."""
    f = np.asarray(getattr(f, "values", f), dtype=float)
    m1 = scalar_mass(mesh)
    return (m1 @ f).reshape(-1)


def solve_spd(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None):
    """Preconditioned conjugate gradients with a diagonal (Jacobi) preconditioner."""
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), LinearSolveReport(0, 0.0, True)
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, LinearSolveReport(0, res, True)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, LinearSolveReport(it, res, True)
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, LinearSolveReport(max_iter, res, False)
