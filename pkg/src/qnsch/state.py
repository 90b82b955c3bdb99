"""Model state, reconstruction of derived fields and initial data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .errors import ConsistencyError, InitialDataError
from .potentials import Params, PotentialPack
from .spectral import Grid, MollifierSpec

INITIAL_KINDS = ("spinodal", "stratified", "bubble", "manufactured")


@dataclass
class State:
    time: float
    u: np.ndarray
    rho: np.ndarray

    def copy(self) -> "State":
        return State(self.time, self.u.copy(), self.rho.copy())


@dataclass
class DerivedFields:
    phi: np.ndarray
    mu: np.ndarray
    mu_p: np.ndarray
    p: np.ndarray


def reconstruct_derived(state: State, params: Params, grid: Grid, sigma: float | None = None) -> DerivedFields:
    """Recover order parameter, chemical potentials and pressure from (u, rho).

    ``mu_p`` is the zero-mean solution of ``alpha * lap(mu_p) = div u``.  With
    ``sigma=None`` the truncation from ``params`` is used; ``sigma=0`` uses the
    singular potential.
    """
    pack = PotentialPack(params)
    sigma = params.sigma if sigma is None else sigma
    phi = pack.phi_of_rho(state.rho)
    mu = -sp.laplacian(phi, grid) + pack.F(phi, 1, sigma)
    mu_p = sp.inv_laplacian_zero_mean(sp.zero_mean(sp.div(state.u, grid)), grid) / params.alpha
    p = (mu_p - mu) / params.alpha
    return DerivedFields(phi, mu, mu_p, p)


def check_consistency(state: State, derived: DerivedFields, params: Params, grid: Grid,
                      sigma: float = 0.0, tol: float = 1e-10):
    pack = PotentialPack(params)
    phi = pack.phi_of_rho(state.rho)
    scale = max(1.0, float(np.max(np.abs(phi))))
    if np.max(np.abs(derived.phi - phi)) > tol * scale:
        raise ConsistencyError("phi does not match the affine image of rho")
    mu = -sp.laplacian(phi, grid) + pack.F(phi, 1, sigma)
    if np.max(np.abs(derived.mu - mu)) > tol * max(1.0, float(np.max(np.abs(mu)))):
        raise ConsistencyError("mu does not match -lap(phi) + F'(phi)")


def _band_noise(grid: Grid, rng: np.random.Generator, kband: int) -> np.ndarray:
    coef = np.zeros(grid.spec_shape, dtype=complex)
    sel = np.ones(grid.spec_shape, dtype=bool)
    for k in grid.k:
        sel = sel & (np.abs(k) <= kband)
    sel[(0,) * grid.dim] = False
    draws = rng.standard_normal(grid.spec_shape) + 1j * rng.standard_normal(grid.spec_shape)
    coef[sel] = draws[sel]
    f = grid.ifft(coef)
    return f / np.max(np.abs(f))


def _periodic_distance(grid: Grid, center) -> np.ndarray:
    d2 = np.zeros(grid.shape)
    for i in range(grid.dim):
        d = np.abs(grid.coords[i] - center[i])
        d = np.minimum(d, 1.0 - d)
        d2 += d * d
    return np.sqrt(d2)


@dataclass
class InitialData:
    kind: str
    seed: int
    u0: np.ndarray
    rho0: np.ndarray


def manufactured_fields(grid: Grid, params: Params, amp_rho: float = 0.05, amp_u: float = 0.1):
    """Smooth two-mode velocity and density used by identity checks and oracles."""
    arg = 2 * np.pi * grid.coords
    rho = params.rho_mid + amp_rho * (np.cos(arg[0]) + 0.5 * np.sin(arg[0] + arg[1]))
    u = np.zeros((grid.dim,) + grid.shape)
    u[0] = amp_u * (np.sin(arg[1]) + 0.5 * np.cos(arg[0]))
    u[1] = amp_u * (np.cos(arg[0]) - 0.3 * np.sin(arg[0] + arg[1]))
    if grid.dim == 3:
        rho = rho + 0.5 * amp_rho * np.cos(arg[2])
        u[2] = amp_u * np.sin(arg[0] - arg[2])
    return u, rho


def build_initial_data(kind: str, grid: Grid, params: Params, seed: int = 0, amplitude: float | None = None,
                       velocity: float = 0.0, margin: float = 0.05, kband: int = 4) -> InitialData:
    """Initial (u0, rho0) of a named kind.

    ``amplitude`` scales the order-parameter perturbation (defaults: 1e-2 for
    spinodal noise, 0.8 for layered and bubble profiles).  ``velocity`` adds a
    smooth divergence-carrying flow plus a uniform drift of that size.
    """
    if kind not in INITIAL_KINDS:
        raise InitialDataError(f"unknown initial data kind {kind!r}; expected one of {INITIAL_KINDS}")
    pack = PotentialPack(params)
    rng = np.random.default_rng(seed)
    x = grid.coords
    u0 = np.zeros((grid.dim,) + grid.shape)
    if kind == "spinodal":
        amp = 1e-2 if amplitude is None else amplitude
        phi0 = amp * _band_noise(grid, rng, kband)
    elif kind == "stratified":
        amp = 0.8 if amplitude is None else amplitude
        phi0 = amp * np.tanh(np.cos(2 * np.pi * x[0]) / 0.3)
    elif kind == "bubble":
        amp = 0.8 if amplitude is None else amplitude
        r = _periodic_distance(grid, [0.5] * grid.dim)
        phi0 = amp * np.tanh((r - 0.25) / 0.06)
    else:
        amp = 0.05 if amplitude is None else amplitude
        u0, rho = manufactured_fields(grid, params, amp_rho=amp, amp_u=velocity or 0.1)
        phi0 = pack.phi_of_rho(rho)
    if kind != "manufactured" and velocity:
        arg = 2 * np.pi * x
        for i in range(grid.dim):
            u0[i] = velocity * (1.0 + np.sin(arg[(i + 1) % grid.dim]) + 0.5 * np.cos(arg[i]))
    if np.max(np.abs(phi0)) > 1.0 - margin:
        raise InitialDataError(
            f"initial order parameter reaches {np.max(np.abs(phi0)):.4f}, beyond the margin 1 - {margin}")
    rho0 = pack.rho_of_phi(phi0)
    return InitialData(kind, seed, u0, rho0)


def mollifier_width(delta: float) -> float:
    return delta**0.25


def mollified_initial_density(rho0: np.ndarray, delta: float, grid: Grid, profile: str = "bump") -> np.ndarray:
    """Density mollified at width delta^(1/4)."""
    if delta <= 0:
        return np.array(rho0, dtype=float)
    return sp.mollify(rho0, MollifierSpec(mollifier_width(delta), profile), grid)
