"""Right-hand sides and IMEX time stepping for the regularised system.

The prognostic variables are the density ``rho`` and the momentum
``m = rho u``.  Continuity is then linear, ``rho_t = -div m + delta lap rho``,
and is treated fully implicitly.  In the momentum equation the stiff linear
parts are frozen at a constant reference density ``rho_bar`` and treated
implicitly; the remainder is explicit.  Per Fourier mode the implicit problem
splits into a 2x2 system for (rho, longitudinal momentum) and a scalar
equation for the transverse momentum.

Every explicit momentum tendency is a divergence, a gradient or one of the
products ``rho grad lap rho``, ``rho grad lap^2 rho`` whose grid sums vanish by
skew-symmetry, so the mean momentum is conserved to round-off whenever the
``grad rho . grad u`` term is absent (``delta = 0``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral as sp
from .errors import ConfinementError, ConsistencyError, DivergenceError, HistoryError, ParameterError
from .potentials import ConfinementSpec, Params, PotentialPack
from .spectral import Grid
from .state import State

log = logging.getLogger(__name__)

LEVELS = ("sigma_delta", "delta_only", "target")
SCHEMES = ("imex_euler", "imex_bdf2")

MOMENTUM_TERMS = ("convection", "viscous", "pressure", "confinement", "capillary",
                  "damping", "hyper_rho", "cross", "hyper_u")
CONTINUITY_TERMS = ("flux", "diffusion")


class Model:
    """Grid, parameters and regularisation level bundled together.

    ``level`` selects the equations: ``"sigma_delta"`` (truncated potential
    and all delta terms), ``"delta_only"`` (singular potential, delta terms)
    or ``"target"`` (singular potential, no delta terms).
    """

    def __init__(self, grid: Grid, params: Params, level: str = "sigma_delta",
                 confinement: ConfinementSpec | None = None):
        if level not in LEVELS:
            raise ParameterError(f"unknown level {level!r}; expected one of {LEVELS}")
        params.check_dim(grid.dim)
        self.grid = grid
        self.params = params
        self.level = level
        self.pack = PotentialPack(params)
        self.sigma = params.sigma if level == "sigma_delta" else 0.0
        self.delta = 0.0 if level == "target" else params.delta
        self.confinement = confinement if self.delta > 0 else None

    @property
    def band(self) -> tuple[float, float]:
        """Open interval the density must stay in."""
        lo = self.params.rho_lower
        if self.sigma > 0:
            th = self.params.theta
            return lo - th, 1.0 + th
        return lo, 1.0

    def pressure(self, rho):
        return self.pack.P_tilde(rho, self.sigma)

    def F_tilde(self, rho, deriv=0):
        return self.pack.F_tilde(rho, deriv, self.sigma)


@dataclass
class SchemeConfig:
    dt: float = 1e-4
    scheme: str = "imex_euler"
    safety: float = 0.5
    retry_on_confinement: bool = False
    rho_bar: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")


@dataclass
class RhsTerms:
    momentum: dict = field(default_factory=dict)
    continuity: dict = field(default_factory=dict)

    @property
    def momentum_total(self) -> np.ndarray:
        return sum(self.momentum.values())

    @property
    def continuity_total(self) -> np.ndarray:
        return sum(self.continuity.values())


def _vec_fft(grid, v):
    return np.stack([grid.fft(c) for c in v])


def _vec_ifft(grid, vh):
    return np.stack([grid.ifft(c) for c in vh])


def _terms_hat(model: Model, u: np.ndarray, rho: np.ndarray) -> tuple[dict, dict]:
    """Dealiased spectral coefficients of every right-hand-side term."""
    g, prm = model.grid, model.params
    d, ik, mask = g.dim, g.ik, g.mask
    delta = model.delta
    rho_h = g.fft(rho)
    u_h = _vec_fft(g, u)
    du = [[g.ifft(ik[j] * u_h[i]) for j in range(d)] for i in range(d)]

    conv = np.zeros((d,) + g.spec_shape, dtype=complex)
    visc = np.zeros_like(conv)
    for i in range(d):
        for j in range(d):
            conv[i] -= ik[j] * g.fft(rho * u[i] * u[j])
            visc[i] += ik[j] * g.fft(0.5 * rho * (du[i][j] + du[j][i]))
    P_h = g.fft(model.pressure(rho))
    pres = np.stack([-m * P_h for m in ik])
    lap_rho_grad = [g.ifft(m * (-g.K2) * rho_h) for m in ik]
    cap = np.stack([prm.ell**2 * g.fft(rho * c) for c in lap_rho_grad])
    div_u = sum(ik[j] * u_h[j] for j in range(d))
    damp = np.stack([prm.alpha**-2 * m * g.inv_K2 * div_u for m in ik])

    mom = {"convection": conv, "viscous": visc, "pressure": pres, "capillary": cap, "damping": damp}
    cont = {"flux": -sum(ik[j] * g.fft(rho * u[j]) for j in range(d))}
    zero = np.zeros_like(conv)
    if delta > 0:
        conf = model.confinement
        if conf is not None:
            H_h = g.fft(conf.H(rho))
            mom["confinement"] = np.stack([-delta * m * H_h for m in ik])
        else:
            mom["confinement"] = zero
        bi_grad = [g.ifft(m * g.K2**2 * rho_h) for m in ik]
        mom["hyper_rho"] = np.stack([-delta * g.fft(rho * c) for c in bi_grad])
        grad_rho = [g.ifft(m * rho_h) for m in ik]
        mom["cross"] = np.stack([-delta * g.fft(sum(grad_rho[j] * du[i][j] for j in range(d))) for i in range(d)])
        mom["hyper_u"] = -delta * g.K2**2 * u_h
        cont["diffusion"] = -delta * g.K2 * rho_h
    else:
        for name in ("confinement", "hyper_rho", "cross", "hyper_u"):
            mom[name] = zero
        cont["diffusion"] = np.zeros_like(rho_h)
    mom = {k: mom[k] * mask for k in MOMENTUM_TERMS}
    cont = {k: cont[k] * mask for k in CONTINUITY_TERMS}
    return mom, cont


def eval_momentum_rhs(state: State, model: Model) -> RhsTerms:
    """All momentum and continuity tendencies as grid fields."""
    _check_state(state, model)
    mom, cont = _terms_hat(model, state.u, state.rho)
    g = model.grid
    return RhsTerms({k: _vec_ifft(g, v) for k, v in mom.items()},
                    {k: g.ifft(v) for k, v in cont.items()})


def eval_continuity_rhs(state: State, model: Model) -> np.ndarray:
    return eval_momentum_rhs(state, model).continuity_total


def hyper_rho_strong(rho: np.ndarray, grid: Grid) -> np.ndarray:
    """``rho grad lap^2 rho`` evaluated pointwise."""
    return rho * sp.grad(sp.bilaplacian(rho, grid), grid)


def hyper_rho_weak(rho: np.ndarray, test: np.ndarray, grid: Grid) -> float:
    """Integral of ``rho grad lap^2 rho . test`` after moving derivatives onto the test field.

    Uses the expansion with at most three derivatives on ``rho``:
    ``hess(rho):(grad lap rho (x) test) + (grad lap rho (x) grad rho):grad test
    + (grad rho . grad lap rho) div test + rho grad lap rho . grad div test``
    with ``(grad test)_ij = d_i test_j``.
    """
    d = grid.dim
    g_rho = sp.grad(rho, grid)
    g_lap = sp.grad(sp.laplacian(rho, grid), grid)
    hess = np.stack([sp.grad(g_rho[i], grid) for i in range(d)])
    g_test = np.stack([sp.grad(test[j], grid) for j in range(d)])  # g_test[j][i] = d_i test_j
    div_t = sp.div(test, grid)
    g_div = sp.grad(div_t, grid)
    total = np.zeros(grid.shape)
    for i in range(d):
        for j in range(d):
            total += hess[i][j] * g_lap[i] * test[j]
            total += g_lap[i] * g_rho[j] * g_test[j][i]
    total += np.sum(g_rho * g_lap, axis=0) * div_t
    total += rho * np.sum(g_lap * g_div, axis=0)
    return sp.integral(total, grid)


def _check_state(state: State, model: Model):
    g = model.grid
    if state.rho.shape != g.shape or state.u.shape != (g.dim,) + g.shape:
        raise ConsistencyError(
            f"state shapes u{state.u.shape}, rho{state.rho.shape} do not match {g}")


def check_finite(state: State):
    if not (np.all(np.isfinite(state.rho)) and np.all(np.isfinite(state.u))):
        raise DivergenceError(f"non-finite values in state at t={state.time:.6g}")


def check_band(state: State, model: Model):
    lo, hi = model.band
    rmin, rmax = float(np.min(state.rho)), float(np.max(state.rho))
    if rmin <= lo or rmax >= hi:
        raise ConfinementError(
            f"density range [{rmin:.6g}, {rmax:.6g}] left the band ({lo:.6g}, {hi:.6g}) at t={state.time:.6g}")


def project_state(state: State, grid: Grid) -> State:
    """Restrict density and momentum to the dealiased Fourier modes."""
    rho = sp.dealias(state.rho, grid)
    m = sp.dealias(state.rho * state.u, grid)
    return State(state.time, m / rho, rho)


Forcing = Callable[[float], tuple]


class Stepper:
    """IMEX stepper; keeps the history needed by the two-step scheme.

    Args:
        model: equations and grid.
        scheme: time-step settings.
        rho_bar: reference density for the implicit splitting.  Must be
            supplied explicitly (or through ``scheme.rho_bar``) so restarts
            reproduce it bit for bit.
        forcing: optional ``t -> (f_rho, f_m)`` added at the new time level.
    """

    def __init__(self, model: Model, scheme: SchemeConfig, rho_bar: float | None = None,
                 forcing: Forcing | None = None):
        self.model = model
        self.scheme = scheme
        rho_bar = scheme.rho_bar if rho_bar is None else rho_bar
        if rho_bar is None or rho_bar <= 0:
            raise ParameterError("a positive reference density rho_bar is required")
        self.rho_bar = float(rho_bar)
        self.forcing = forcing
        self.prev_state: State | None = None
        self._prev = None
        self._cache = None
        g = model.grid
        self._K = np.sqrt(g.K2)

    # history -------------------------------------------------------------

    def set_history(self, prev_state: State | None):
        if prev_state is not None:
            _check_state(prev_state, self.model)
        self.prev_state = prev_state
        self._prev = None if prev_state is None else self._prepare(prev_state)

    def reset_history(self):
        self.prev_state = None
        self._prev = None

    # pieces --------------------------------------------------------------

    def _apply_L(self, rho_h, m_h):
        g, prm, delta, rb = self.model.grid, self.model.params, self.model.delta, self.rho_bar
        ik, K2 = g.ik, g.K2
        div_m = sum(ik[j] * m_h[j] for j in range(g.dim))
        L_rho = -div_m - delta * K2 * rho_h
        coef_rho = -(prm.ell**2) * rb * K2 - delta * rb * K2**2
        L_m = np.stack([
            0.5 * (-K2 * m_h[i] + ik[i] * div_m)
            - (delta / rb) * K2**2 * m_h[i]
            + (prm.alpha**-2 / rb) * ik[i] * g.inv_K2 * div_m
            + ik[i] * coef_rho * rho_h
            for i in range(g.dim)])
        return L_rho, L_m

    def _prepare(self, state: State):
        if self._cache is not None and self._cache[0] is state:
            return self._cache[1]
        g = self.model.grid
        mom, cont = _terms_hat(self.model, state.u, state.rho)
        rho_h = g.fft(state.rho) * g.mask
        m_h = _vec_fft(g, state.rho * state.u) * g.mask
        L_rho, L_m = self._apply_L(rho_h, m_h)
        N_rho = (sum(cont.values()) - L_rho) * g.mask
        N_m = (sum(mom.values()) - L_m) * g.mask
        out = (rho_h, m_h, N_rho, N_m)
        self._cache = (state, out)
        return out

    def _solve(self, c0, b_rho, b_m):
        g, prm, delta, rb = self.model.grid, self.model.params, self.model.delta, self.rho_bar
        K2, K, kh = g.K2, self._K, g.khat
        b_L = sum(kh[i] * b_m[i] for i in range(g.dim))
        b_T = b_m - np.stack([kh[i] * b_L for i in range(g.dim)])
        damp = np.where(K2 > 0, prm.alpha**-2 / rb, 0.0)
        a11 = c0 + delta * K2
        a12 = 1j * K
        a21 = 1j * K * K2 * rb * (prm.ell**2 + delta * K2)
        a22 = c0 + K2 + (delta / rb) * K2**2 + damp
        det = a11 * a22 - a12 * a21
        rho_n = (a22 * b_rho - a12 * b_L) / det
        m_L = (a11 * b_L - a21 * b_rho) / det
        m_T = b_T / (c0 + 0.5 * K2 + (delta / rb) * K2**2)
        m_n = m_T + np.stack([kh[i] * m_L for i in range(g.dim)])
        return rho_n * g.mask, m_n * g.mask

    def _forcing_hat(self, t):
        g = self.model.grid
        f_rho, f_m = self.forcing(t)
        return g.fft(f_rho) * g.mask, _vec_fft(g, f_m) * g.mask

    def _advance(self, state: State, dt: float, allow_two_step: bool) -> State:
        g = self.model.grid
        cur = self._prepare(state)
        rho_h, m_h, N_rho, N_m = cur
        two_step = allow_two_step and self.scheme.scheme == "imex_bdf2" and self._prev is not None
        if two_step:
            prho, pm, pNr, pNm = self._prev
            c0 = 1.5 / dt
            b_rho = (2.0 * rho_h - 0.5 * prho) / dt + 2.0 * N_rho - pNr
            b_m = (2.0 * m_h - 0.5 * pm) / dt + 2.0 * N_m - pNm
        else:
            c0 = 1.0 / dt
            b_rho = rho_h / dt + N_rho
            b_m = m_h / dt + N_m
        t_new = state.time + dt
        if self.forcing is not None:
            fr, fm = self._forcing_hat(t_new)
            b_rho = b_rho + fr
            b_m = b_m + fm
        rho_n, m_n = self._solve(c0, b_rho, b_m)
        rho = g.ifft(rho_n)
        m = _vec_ifft(g, m_n)
        new = State(t_new, m / rho, rho)
        check_finite(new)
        return new

    def step(self, state: State, dt: float | None = None) -> State:
        """Advance one step; the returned state becomes the next history entry."""
        _check_state(state, self.model)
        dt = self.scheme.dt if dt is None else dt
        try:
            new = self._advance(state, dt, allow_two_step=True)
            check_band(new, self.model)
        except ConfinementError as exc:
            if not self.scheme.retry_on_confinement:
                log.error("confinement violated: %s", exc)
                raise
            log.warning("confinement violated (%s); retrying with two half steps", exc)
            half = self._advance(state, 0.5 * dt, allow_two_step=False)
            check_band(half, self.model)
            new = self._advance(half, 0.5 * dt, allow_two_step=False)
            check_band(new, self.model)
            self.reset_history()
            self._cache = None
            return new
        self._prev = self._prepare(state)
        self.prev_state = state
        return new

    def run(self, state: State, nsteps: int, callback=None) -> State:
        for k in range(nsteps):
            state = self.step(state)
            if callback is not None:
                callback(k + 1, state)
        return state


def step(state: State, model: Model, scheme: SchemeConfig, history: State | None = None,
         rho_bar: float | None = None) -> State:
    """Single step without a persistent stepper.

    ``history`` is the previous state, required by ``imex_bdf2`` except on the
    very first step (pass ``None`` there to start with one Euler step).
    """
    if rho_bar is None:
        rho_bar = scheme.rho_bar if scheme.rho_bar is not None else float(np.mean(state.rho))
    stepper = Stepper(model, scheme, rho_bar)
    if history is not None:
        if history.time >= state.time:
            raise HistoryError("history state must precede the current state")
        stepper.set_history(history)
    return stepper.step(state)


def stability_budget(state: State, model: Model, scheme: SchemeConfig, rho_bar: float | None = None) -> float:
    """Heuristic largest stable dt (already multiplied by ``scheme.safety``).

    Combines the advective CFL limit, the explicit pressure wave speed, and
    bounds that only bite when the frozen-coefficient splitting stops
    dominating the true coefficients (density more than twice ``rho_bar``).
    """
    g, prm, delta = model.grid, model.params, model.delta
    rb = rho_bar if rho_bar is not None else (scheme.rho_bar or float(np.mean(state.rho)))
    kmax = 2 * math.pi * (g.n // 3) * math.sqrt(g.dim)
    rho = state.rho
    limits = [1.0]
    umax = float(np.max(np.abs(state.u)))
    if umax > 0:
        limits.append(g.h / umax)
    c2 = model.pack.P_tilde_prime(rho, model.sigma)
    if model.confinement is not None:
        c2 = c2 + delta * rho * model.confinement.W(rho, 2)
    c2max = float(np.max(c2))
    if c2max > 0:
        limits.append(2.0 / (kmax * math.sqrt(c2max)))
    q = (float(np.max(rho)) - rb) / rb
    if q > 1.0:
        limits.append(2.0 / (kmax**2 * prm.ell * math.sqrt(rb * (q - 1.0))))
        if delta > 0:
            limits.append(2.0 / (math.sqrt(delta) * kmax**3 * math.sqrt(rb * (q - 1.0))))
    ratio = rb / float(np.min(rho))
    if ratio > 2.0:
        limits.append(2.0 / ((ratio - 2.0) * (kmax**2 + delta * kmax**4 / rb + prm.alpha**-2 / rb)))
    if delta > 0:
        grad_max = float(np.max(np.abs(sp.grad(rho, g))))
        if grad_max > 0:
            limits.append(g.h / (delta * grad_max * 2 * math.pi))
    return scheme.safety * min(limits)


def residual_original_vs_reformulated(u: np.ndarray, rho: np.ndarray, u_t: np.ndarray, p: np.ndarray,
                                      params: Params, grid: Grid, sigma: float = 0.0,
                                      phi: np.ndarray | None = None, mu: np.ndarray | None = None) -> dict:
    """Momentum residual in the original and in the reformulated form.

    The density rate is taken from continuity, so both residuals must agree
    for any (u, rho, u_t, p).  Optional ``phi``/``mu`` are checked against
    their definitions and rejected if inconsistent.
    """
    pack = PotentialPack(params)
    a, ell = params.alpha, params.ell
    phi_r = pack.phi_of_rho(rho)
    mu_r = -sp.laplacian(phi_r, grid) + pack.F(phi_r, 1, sigma)
    if phi is not None and np.max(np.abs(phi - phi_r)) > 1e-10:
        raise ConsistencyError("phi is not the affine image of rho")
    if mu is not None and np.max(np.abs(mu - mu_r)) > 1e-10 * max(1.0, float(np.max(np.abs(mu_r)))):
        raise ConsistencyError("mu does not match -lap(phi) + F'(phi)")
    mu_p = mu_r + a * p
    d = grid.dim
    rho_t = -sp.div(rho * u, grid)
    du = np.stack([sp.grad(u[i], grid) for i in range(d)])  # du[i][j] = d_j u_i
    sym = 0.5 * (du + du.transpose(1, 0, *range(2, 2 + d)))
    visc = np.stack([sum(sp.grad(rho * sym[i][j], grid)[j] for j in range(d)) for i in range(d)])
    adv = np.stack([sum(u[j] * du[i][j] for j in range(d)) for i in range(d)])
    flux = np.stack([sum(sp.grad(rho * u[i] * u[j], grid)[j] for j in range(d)) for i in range(d)])
    original = rho * u_t + u * rho_t + flux + sp.grad(p, grid) - visc + phi_r * sp.grad(mu_r, grid)
    capillary = ell**2 * rho * sp.grad(sp.laplacian(rho, grid), grid)
    reform = (rho * (u_t + adv) + sp.grad(pack.P_tilde(rho, sigma), grid) - visc - capillary
              + sp.grad(mu_p, grid) / a)
    original = sp.dealias(original, grid)
    reform = sp.dealias(reform, grid)
    n_o, n_r = sp.norm_l2(original, grid), sp.norm_l2(reform, grid)
    disc = sp.norm_l2(original - reform, grid) / max(n_o, n_r, 1e-300)
    return {"original": original, "reformulated": reform, "discrepancy": disc}


def capillary_identity_residual(rho: np.ndarray, params: Params, grid: Grid, sigma: float = 0.0) -> float:
    """Relative L^2 mismatch between phi grad mu and the divergence of the capillary stress."""
    pack = PotentialPack(params)
    phi = pack.phi_of_rho(rho)
    mu = -sp.laplacian(phi, grid) + pack.F(phi, 1, sigma)
    gphi = sp.grad(phi, grid)
    d = grid.dim
    lhs = phi * sp.grad(mu, grid)
    stress_div = np.stack([sum(sp.grad(gphi[i] * gphi[j], grid)[j] for j in range(d)) for i in range(d)])
    scalar = phi * mu - 0.5 * np.sum(gphi**2, axis=0)
    rhs = stress_div + sp.grad(scalar, grid) - pack.F(phi, 1, sigma) * gphi
    lhs, rhs = sp.dealias(lhs, grid), sp.dealias(rhs, grid)
    return sp.norm_l2(lhs - rhs, grid) / max(sp.norm_l2(lhs, grid), 1e-300)


def manufactured_forcing(model: Model, exact: Callable[[float], State],
                         exact_rate: Callable[[float], tuple]) -> Forcing:
    """Forcing that makes ``exact`` a solution of the semi-discrete system.

    ``exact_rate(t)`` returns the time derivatives ``(rho_t, m_t)``.
    """
    g = model.grid

    def forcing(t):
        st = exact(t)
        mom, cont = _terms_hat(model, st.u, st.rho)
        r_t, m_t = exact_rate(t)
        f_rho = r_t - g.ifft(sum(cont.values()))
        f_m = m_t - _vec_ifft(g, sum(mom.values()))
        return f_rho, f_m

    return forcing
