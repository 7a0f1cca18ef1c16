"""Two-phase material model driven by a level set through a tanh sigmoid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .levelset import LevelSet
from .mesh import ScalarField


@dataclass(frozen=True)
class Phase:
    E: float
    nu: float
    rho: float

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        if not self.rho > 0:
            raise ValueError(f"density must be positive, got {self.rho}")

    @property
    def lame(self) -> tuple[float, float]:
        return lame_from_E_nu(self.E, self.nu)


# phase values used in the demo runs: steel-like and glass-like
STEEL = Phase(E=180e9, nu=0.26, rho=4e3)
GLASS = Phase(E=70e9, nu=0.25, rho=8e3)


def lame_from_E_nu(E: float, nu: float) -> tuple[float, float]:
    """Plane-strain Lamé parameters ``(lambda, mu)``."""
    if nu >= 0.5 or nu <= -1.0:
        raise ValueError(f"Poisson ratio {nu} outside (-1, 0.5)")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return lam, mu


def sigmoid(theta, eps):
    return 0.5 * (np.tanh(np.asarray(theta) / eps) + 1.0)


def sigmoid_prime(theta, eps):
    # cosh overflows past |x| ~ 710; sech^2 is far below double eps there anyway
    x = np.clip(np.asarray(theta) / eps, -300.0, 300.0)
    return 0.5 / eps / np.cosh(x) ** 2


@dataclass(frozen=True)
class MaterialModel:
    phase1: Phase = STEEL
    phase2: Phase = GLASS
    eps: float = 0.05

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"interpolation width must be positive, got {self.eps}")

    @property
    def lame1(self):
        return self.phase1.lame

    @property
    def lame2(self):
        return self.phase2.lame

    def _blend(self, theta, a1, a2):
        if a1 == a2:
            return np.full(np.shape(theta), float(a1))
        phi = sigmoid(theta, self.eps)
        return a1 * phi + a2 * (1.0 - phi)

    def _dblend(self, theta, a1, a2):
        # exact d/dtheta of _blend
        return (a1 - a2) * sigmoid_prime(theta, self.eps)

    def coefficients(self, theta: np.ndarray):
        """Nodal ``(rho, lambda, mu)`` arrays."""
        (l1, m1), (l2, m2) = self.lame1, self.lame2
        return (
            self._blend(theta, self.phase1.rho, self.phase2.rho),
            self._blend(theta, l1, l2),
            self._blend(theta, m1, m2),
        )

    def coefficient_derivatives(self, theta: np.ndarray):
        """Nodal ``(rho', lambda', mu')``, the theta-derivatives of :meth:`coefficients`."""
        (l1, m1), (l2, m2) = self.lame1, self.lame2
        return (
            self._dblend(theta, self.phase1.rho, self.phase2.rho),
            self._dblend(theta, l1, l2),
            self._dblend(theta, m1, m2),
        )

    @property
    def identical_phases(self) -> bool:
        return self.phase1 == self.phase2


def density_field(ls: LevelSet, model: MaterialModel) -> ScalarField:
    return ScalarField(ls.mesh, model.coefficients(ls.values)[0])


def stiffness_fields(ls: LevelSet, model: MaterialModel) -> tuple[ScalarField, ScalarField]:
    _, lam, mu = model.coefficients(ls.values)
    return ScalarField(ls.mesh, lam), ScalarField(ls.mesh, mu)


def density_derivative_field(ls: LevelSet, model: MaterialModel) -> ScalarField:
    return ScalarField(ls.mesh, model.coefficient_derivatives(ls.values)[0])


def stiffness_derivative_fields(ls: LevelSet, model: MaterialModel) -> tuple[ScalarField, ScalarField]:
    _, dlam, dmu = model.coefficient_derivatives(ls.values)
    return ScalarField(ls.mesh, dlam), ScalarField(ls.mesh, dmu)
