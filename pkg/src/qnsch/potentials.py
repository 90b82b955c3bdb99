"""Singular potential, its quadratic truncation, density-space pressures,
confinement potential and the logarithmic test functions.

The order parameter ``phi`` and the density ``rho`` are related by the
affine map ``phi = -ell * rho + ell - 1``; pure phases ``phi = 1`` and
``phi = -1`` correspond to ``rho = rho_lower`` and ``rho = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import ParameterError, SingularDomainError


@dataclass(frozen=True)
class Params:
    """Physical constants and regularisation parameters.

    Args:
        rho1: density of the light phase (the heavy phase has density 1).
        beta: exponent of the singular part ``(1 - r^2)^(-beta)``.
        omega: strength of the concave correction ``-omega r^2 / 2``.
        sigma: truncation distance from the pure phases.
        delta: strength of the higher-order regularisation.
        sigma0: largest admissible truncation distance.
    """

    rho1: float = 1.0 / 3.0
    beta: float = 1.5
    omega: float = 3.0
    sigma: float = 1e-2
    delta: float = 1e-3
    sigma0: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.rho1 < 1.0):
            raise ParameterError(f"rho1 must lie in (0, 1), got {self.rho1}")
        if self.beta <= 1.0:
            raise ParameterError(f"beta must exceed 1, got {self.beta}")
        if self.omega < 0.0:
            raise ParameterError(f"omega must be nonnegative, got {self.omega}")
        if not (0.0 <= self.sigma <= self.sigma0 < 1.0):
            raise ParameterError(f"need 0 <= sigma <= sigma0 < 1, got sigma={self.sigma}, sigma0={self.sigma0}")
        if self.delta < 0.0:
            raise ParameterError(f"delta must be nonnegative, got {self.delta}")

    def check_dim(self, dim: int):
        if dim == 3 and self.beta < 1.5:
            raise ParameterError(f"three-dimensional runs need beta >= 3/2, got {self.beta}")

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)

    @property
    def alpha(self) -> float:
        return (1.0 - self.rho1) / (1.0 + self.rho1)

    @property
    def ell(self) -> float:
        return (self.alpha + 1.0) / self.alpha

    @property
    def rho_lower(self) -> float:
        return 1.0 - 2.0 / self.ell

    @property
    def rho_mid(self) -> float:
        return (self.rho_lower + 1.0) / 2.0

    @property
    def theta(self) -> float:
        """Half of rho_lower; the confinement band is widened by theta / 2."""
        return self.rho_lower / 2.0


def _as_array(r):
    return np.asarray(r, dtype=float)


class PotentialPack:
    """All potential-type functions for a parameter set.

    Every method accepts scalars or arrays.  ``sigma=0`` selects the singular
    functions, which raise :class:`SingularDomainError` outside ``(-1, 1)``
    (or outside ``(rho_lower, 1)`` in density space).
    """

    def __init__(self, params: Params):
        self.params = params
        self.beta = params.beta
        self.omega = params.omega
        self.ell = params.ell
        self.rho_lower = params.rho_lower

    # affine maps ---------------------------------------------------------

    def phi_of_rho(self, rho):
        return -self.ell * _as_array(rho) + self.ell - 1.0

    def rho_of_phi(self, phi):
        return (self.ell - 1.0 - _as_array(phi)) / self.ell

    # singular convex part ------------------------------------------------

    def _fc_exact(self, r, deriv):
        b = self.beta
        s = (1.0 - r) * (1.0 + r)
        if deriv == 0:
            return s ** (-b)
        if deriv == 1:
            return 2.0 * b * r * s ** (-b - 1.0)
        if deriv == 2:
            return 2.0 * b * s ** (-b - 1.0) + 4.0 * b * (b + 1.0) * r * r * s ** (-b - 2.0)
        raise ValueError("deriv must be 0, 1 or 2")

    def Fc(self, r, deriv: int = 0, sigma: float = 0.0):
        """Convex part, exact (sigma = 0) or Taylor-extended beyond |r| = 1 - sigma."""
        r = _as_array(r)
        if sigma == 0.0:
            if np.any(np.abs(r) >= 1.0) or not np.all(np.isfinite(r)):
                raise SingularDomainError("singular potential evaluated outside (-1, 1)")
            return self._fc_exact(r, deriv)
        a = 1.0 - sigma
        rc = np.clip(r, -a, a)
        d = r - rc
        f0, f1, f2 = (self._fc_exact(rc, j) for j in range(3))
        if deriv == 0:
            return f0 + f1 * d + 0.5 * f2 * d * d
        if deriv == 1:
            return f1 + f2 * d
        if deriv == 2:
            return f2
        raise ValueError("deriv must be 0, 1 or 2")

    def F(self, r, deriv: int = 0, sigma: float = 0.0):
        r = _as_array(r)
        conc = (-0.5 * self.omega * r * r, -self.omega * r, -self.omega + 0.0 * r)[deriv]
        return self.Fc(r, deriv, sigma) + conc

    # density space -------------------------------------------------------

    def F_tilde(self, rho, deriv: int = 0, sigma: float = 0.0, convex_only: bool = False):
        phi = self.phi_of_rho(rho)
        base = self.Fc(phi, deriv, sigma) if convex_only else self.F(phi, deriv, sigma)
        return (-self.ell) ** deriv * base

    def P_tilde(self, rho, sigma: float = 0.0, convex_only: bool = False):
        """Pressure ``rho F~'(rho) - F~(rho)``."""
        rho = _as_array(rho)
        return rho * self.F_tilde(rho, 1, sigma, convex_only) - self.F_tilde(rho, 0, sigma, convex_only)

    def P_tilde_prime(self, rho, sigma: float = 0.0, convex_only: bool = False):
        rho = _as_array(rho)
        return rho * self.F_tilde(rho, 2, sigma, convex_only)

    def P_tilde_concave(self, rho):
        """Contribution of the concave correction to the pressure."""
        phi = self.phi_of_rho(rho)
        return self.omega * (self.ell * _as_array(rho) * phi + 0.5 * phi * phi)

    def rho_star(self, sigma: float = 0.0, tol: float = 1e-15) -> float:
        """Unique zero of the convex-part pressure inside (rho_lower, 1)."""
        lo = self.params.rho_mid
        hi = 1.0 - 1e-12
        f = lambda r: float(self.P_tilde(r, sigma, convex_only=True))
        if f(lo) >= 0.0 or f(hi) <= 0.0:
            raise ParameterError("convex pressure has no sign change in (rho_mid, 1)")
        while hi - lo > tol * max(1.0, abs(hi)):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if f(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        return lo if abs(f(lo)) <= abs(f(hi)) else hi

    def C_star(self, sigmas=None, samples: int = 20001) -> float:
        """Nonnegative constant with F~_sigma >= -C_star, uniform over ``sigmas``."""
        if sigmas is None:
            s0 = self.params.sigma0
            sigmas = [s0 * 10.0**-j for j in range(5)]
        lo = self.rho_lower - 2.0
        r = np.linspace(lo, 3.0, samples)
        worst = min(float(np.min(self.F_tilde(r, 0, s))) for s in sigmas)
        return max(0.0, -worst)

    # logarithmic test functions -------------------------------------------

    def chi(self, r, deriv: int = 0):
        r = _as_array(r)
        if np.any(r <= self.rho_lower) or np.any(r >= 1.0):
            raise SingularDomainError("log test function evaluated outside (rho_lower, 1)")
        if deriv == 0:
            return np.log((r - self.rho_lower) / (1.0 - r))
        if deriv == 1:
            return 1.0 / (r - self.rho_lower) + 1.0 / (1.0 - r)
        raise ValueError("deriv must be 0 or 1")

    def chi_sigma(self, r, sigma: float, deriv: int = 0):
        """Log test function frozen outside [rho_lower + sigma, 1 - sigma]."""
        r = _as_array(r)
        a, b = self.rho_lower + sigma, 1.0 - sigma
        rc = np.clip(r, a, b)
        if deriv == 0:
            return np.log((rc - self.rho_lower) / (1.0 - rc))
        inside = (r >= a) & (r <= b)
        return np.where(inside, 1.0 / (rc - self.rho_lower) + 1.0 / (1.0 - rc), 0.0)

    def growth_bounds(self, sample, p: float = 2.0) -> dict:
        """Smallest constants C with lhs <= C (rhs + 1) over ``sample``."""
        r = _as_array(sample)
        b = self.beta
        chi = np.abs(self.chi(r))
        dchi = np.abs(self.chi(r, 1))
        Ft = np.abs(self.F_tilde(r))
        Pt = np.abs(self.P_tilde(r))
        return {
            "chi_p_vs_F": float(np.max(chi**p / (Ft + 1.0))),
            "dchi_beta1_vs_P": float(np.max(dchi ** (b + 1.0) / (Pt + 1.0))),
            "P_vs_F_dchi": float(np.max(Pt / (Ft * dchi + 1.0))),
        }


@lru_cache(maxsize=4)
def holder_embedding_constant(dim: int, kmax: int | None = None) -> float:
    """Numerical bound for |f(x) - f(y)| <= C |x - y|^(1/2) ||f||_{H^2}.

    Uses |f(x)-f(y)| <= sum_k |c_k| min(2, 2 pi |k| r) and Cauchy-Schwarz
    against the H^2 weight, maximised over r.
    """
    kmax = kmax or (48 if dim == 2 else 16)
    ax = np.arange(-kmax, kmax + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    kk = np.sqrt(sum(g.astype(float) ** 2 for g in grids)).ravel()
    kk = kk[kk > 0]
    wt = (1.0 + (2.0 * math.pi * kk) ** 2) ** -2
    best = 0.0
    for r in np.logspace(-4, 0, 200):
        s = np.sum(np.minimum(2.0, 2.0 * math.pi * kk * r) ** 2 * wt)
        best = max(best, math.sqrt(s / r))
    return best


def _ball_volume(radius: float, dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim


@dataclass(frozen=True)
class ConfinementSpec:
    """Confinement potential: zero on [rho_lower, 1], quartic ramps outside.

    The ramp coefficient is chosen so that the potential reaches
    ``steep_level`` at distance ``theta / 2`` from the band.
    """

    rho_lower: float
    theta: float
    delta: float
    kappa: float
    big_r: float
    steep_level: float = field(init=False)
    coeff: float = field(init=False)

    def __post_init__(self):
        if self.delta <= 0 or self.kappa <= 0 or self.theta <= 0:
            raise ParameterError("confinement needs positive delta, kappa and theta")
        level = (self.big_r + 1.0) / (self.delta * self.kappa)
        object.__setattr__(self, "steep_level", level)
        object.__setattr__(self, "coeff", level / (0.5 * self.theta) ** 4)

    @classmethod
    def for_run(cls, params: Params, dim: int, energy0: float, horizon: float,
                mean_rho: float, kappa: float | None = None) -> "ConfinementSpec":
        """Build the spec from the initial energy and run length."""
        pack = PotentialPack(params)
        delta = params.delta
        grow = 2.0 * delta * params.omega * horizon
        big_r = (energy0 + pack.C_star()) * (1.0 + grow * math.exp(grow)) + 1.0
        if kappa is None:
            r_h2 = math.sqrt(mean_rho**2 + (1.0 + 1.0 / (4 * math.pi**2)) ** 2 * 2.0 * big_r / delta)
            radius = (params.theta / (2.0 * holder_embedding_constant(dim) * r_h2)) ** 2
            kappa = _ball_volume(min(radius, 0.5), dim)
        return cls(params.rho_lower, params.theta, delta, kappa, big_r)

    def W(self, r, deriv: int = 0):
        r = _as_array(r)
        below = np.maximum(self.rho_lower - r, 0.0)
        above = np.maximum(r - 1.0, 0.0)
        c = self.coeff
        if deriv == 0:
            return c * (below**4 + above**4)
        if deriv == 1:
            return 4.0 * c * (above**3 - below**3)
        if deriv == 2:
            return 12.0 * c * (above**2 + below**2)
        raise ValueError("deriv must be 0, 1 or 2")

    def H(self, r):
        """``r W'(r) - W(r)``, whose gradient equals ``r grad W'(r)``."""
        r = _as_array(r)
        return r * self.W(r, 1) - self.W(r)


def base_W(r, rho_lower: float):
    """Unregularised confinement: zero on the band, infinite outside."""
    r = _as_array(r)
    return np.where((r >= rho_lower) & (r <= 1.0), 0.0, np.inf)
