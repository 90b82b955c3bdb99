"""Energies, dissipation, BD entropy, pressure integrability and conservation audits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import spectral as sp
from .errors import HistoryError, ParameterError
from .solver import Model
from .state import State

TAIL_THRESHOLDS = (1.0, 10.0, 100.0, 1000.0)


@dataclass
class Energies:
    kinetic: float
    gradient: float
    potential: float
    hyper: float
    confinement: float
    ginzburg_landau: float
    total: float
    regularised: float


@dataclass
class Dissipation:
    viscous: float
    mu_p: float
    hyper_u: float
    grad_lap_rho: float
    lap_rho: float
    curvature: float
    inequality_bound: float

    @property
    def total(self) -> float:
        """Everything that appears on the dissipative side of the exact energy identity."""
        return self.viscous + self.mu_p + self.hyper_u + self.grad_lap_rho + self.lap_rho + self.curvature


def _sym_grad(u, grid):
    d = grid.dim
    du = np.stack([sp.grad(u[i], grid) for i in range(d)])
    return du, 0.5 * (du + np.swapaxes(du, 0, 1))


def _W(model: Model, rho, deriv=0):
    if model.confinement is None:
        return np.zeros_like(rho)
    return model.confinement.W(rho, deriv)


def compute_energies(state: State, model: Model) -> Energies:
    g, prm, delta = model.grid, model.params, model.delta
    rho, u = state.rho, state.u
    kin = sp.integral(0.5 * rho * np.sum(u * u, axis=0), g)
    grad_rho = sp.grad(rho, g)
    gradient = sp.integral(0.5 * prm.ell**2 * np.sum(grad_rho**2, axis=0), g)
    pot = sp.integral(model.F_tilde(rho), g)
    hyper = sp.integral(0.5 * delta * sp.laplacian(rho, g) ** 2, g) if delta > 0 else 0.0
    conf = sp.integral(delta * _W(model, rho), g) if delta > 0 else 0.0
    gl = gradient + pot
    return Energies(kin, gradient, pot, hyper, conf, gl, kin + gl, kin + gl + hyper + conf)


def compute_dissipation(state: State, model: Model) -> Dissipation:
    g, prm, delta = model.grid, model.params, model.delta
    rho, u = state.rho, state.u
    _, Du = _sym_grad(u, g)
    visc = sp.integral(rho * np.sum(Du * Du, axis=(0, 1)), g)
    bog = sp.bogovskii(sp.zero_mean(sp.div(u, g)), g)
    mup = prm.alpha**-2 * sp.integral(np.sum(bog**2, axis=0), g)
    grad_rho = sp.grad(rho, g)
    grad_sq = np.sum(grad_rho**2, axis=0)
    bound = delta * prm.omega * prm.ell**2 * sp.integral(grad_sq, g)
    if delta == 0:
        return Dissipation(visc, mup, 0.0, 0.0, 0.0, 0.0, 0.0)
    lap_u = np.stack([sp.laplacian(c, g) for c in u])
    lap_rho = sp.laplacian(rho, g)
    hyp_u = delta * sp.integral(np.sum(lap_u**2, axis=0), g)
    gl = delta**2 * sp.integral(np.sum(sp.grad(lap_rho, g) ** 2, axis=0), g)
    lr = delta * prm.ell**2 * sp.integral(lap_rho**2, g)
    curv = delta * sp.integral((model.F_tilde(rho, 2) + delta * _W(model, rho, 2)) * grad_sq, g)
    return Dissipation(visc, mup, hyp_u, gl, lr, curv, bound)


def compute_bd_entropy(state: State, model: Model, grouped: bool = True, with_log: bool = False) -> float:
    """BD entropy; ``grouped=False`` expands the square as an independent check."""
    g, prm, delta = model.grid, model.params, model.delta
    rho, u = state.rho, state.u
    grad_rho = sp.grad(rho, g)
    grad_log = grad_rho / rho
    if grouped:
        w = u + grad_log
        kin = sp.integral(0.5 * rho * np.sum(w * w, axis=0), g)
    else:
        kin = sp.integral(0.5 * rho * np.sum(u * u, axis=0)
                          + np.sum(u * grad_rho, axis=0)
                          + 0.5 * np.sum(grad_rho**2, axis=0) / rho, g)
    total = kin + sp.integral(0.5 * prm.ell**2 * np.sum(grad_rho**2, axis=0) + model.F_tilde(rho), g)
    if delta > 0:
        total += sp.integral(0.5 * delta * sp.laplacian(rho, g) ** 2 + delta * _W(model, rho), g)
    if with_log:
        total -= prm.alpha**-2 * sp.integral(np.log(rho), g)
    return total


def bd_dissipation(state: State, model: Model) -> dict:
    g, prm = model.grid, model.params
    rho, u = state.rho, state.u
    du, _ = _sym_grad(u, g)
    rot = du - np.swapaxes(du, 0, 1)
    bog = sp.bogovskii(sp.zero_mean(sp.div(u, g)), g)
    grad_sq = np.sum(sp.grad(rho, g) ** 2, axis=0)
    out = {
        "mu_p": prm.alpha**-2 * sp.integral(np.sum(bog**2, axis=0), g),
        "curvature": sp.integral(model.F_tilde(rho, 2) * grad_sq, g),
        "lap_rho": prm.ell**2 * sp.integral(sp.laplacian(rho, g) ** 2, g),
        "rotation": 0.25 * sp.integral(rho * np.sum(rot * rot, axis=(0, 1)), g),
    }
    out["total"] = sum(out.values())
    # the concave correction is the only sign-indefinite source
    out["concave_source"] = prm.omega * prm.ell**2 * sp.integral(grad_sq, g)
    return out


def energy_balance_residual(states: list[State], model: Model) -> dict:
    """Per-step defect of the discrete energy identity.

    ``defect[n] = E[n+1] - E[n] + dt * D[n+1]`` where ``D`` collects every
    dissipative and curvature term of the exact identity, so the defect
    vanishes at the order of the time scheme.  ``inequality[n]`` is the
    same quantity with only the viscous and pressure-potential dissipation
    and the ``delta omega ell^2 |grad rho|^2`` bound, i.e. the slack of the
    energy inequality (nonpositive up to the scheme error).
    """
    if len(states) < 2:
        raise HistoryError("need at least two states")
    E = np.array([compute_energies(s, model).regularised for s in states])
    D = [compute_dissipation(s, model) for s in states]
    t = np.array([s.time for s in states])
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise HistoryError("states must be strictly increasing in time")
    full = np.array([d.total for d in D])
    part = np.array([d.viscous + d.mu_p + d.hyper_u + d.grad_lap_rho + d.lap_rho for d in D])
    bound = np.array([d.inequality_bound for d in D])
    defect = np.diff(E) + dt * full[1:]
    ineq = np.diff(E) + dt * part[1:] - dt * bound[1:]
    return {"time": t, "energy": E, "dissipation": full, "defect": defect, "inequality": ineq, "dt": dt}


def bd_identity_residual(states: list[State], model: Model, forcing=None) -> dict:
    """Defect of the BD-entropy law along a target-level trajectory.

    Returns the interval defects ``d/dt B + dissipation`` (trapezoidal in
    time) next to the pairing of the momentum forcing with ``u + grad log rho``.
    """
    if model.delta != 0:
        raise ParameterError("the BD identity is audited at the target level only")
    if len(states) < 2:
        raise HistoryError("need at least two states")
    g = model.grid
    B = np.array([compute_bd_entropy(s, model, with_log=True) for s in states])
    Dd = np.array([bd_dissipation(s, model)["total"] for s in states])
    t = np.array([s.time for s in states])
    dt = np.diff(t)
    defect = np.diff(B) / dt + 0.5 * (Dd[1:] + Dd[:-1])
    pairing = np.zeros(len(states))
    if forcing is not None:
        for k, s in enumerate(states):
            _, f_m = forcing(s.time)
            w = s.u + sp.grad(s.rho, g) / s.rho
            pairing[k] = sp.integral(np.sum(f_m * w, axis=0), g)
    return {"time": t, "entropy": B, "defect": defect, "pairing": 0.5 * (pairing[1:] + pairing[:-1])}


def bd_budget(states: list[State], model: Model) -> dict:
    """Running BD-entropy budget ``B(t) + int_0^t D+ - B(0)``.

    ``D+`` is the BD dissipation with the concave correction moved to the
    source side, so every term in it is nonnegative.  The largest budget
    value is the constant a run needs on the right-hand side of the BD
    inequality.  ``lap_rho_integral`` is the accumulated
    ``ell^2 int int |lap rho|^2`` dissipation.
    """
    if len(states) < 2:
        raise HistoryError("need at least two states")
    t = np.array([s.time for s in states])
    B = np.array([compute_bd_entropy(s, model, with_log=True) for s in states])
    diss = [bd_dissipation(s, model) for s in states]
    total = np.array([d["total"] + d["concave_source"] for d in diss])
    source = np.array([d["concave_source"] for d in diss])
    lap = np.array([d["lap_rho"] for d in diss])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (total[1:] + total[:-1]) * np.diff(t))])
    budget = B + cum - B[0]
    return {"time": t, "entropy": B, "budget": budget, "c_run": float(np.max(budget)),
            "source_integral": _trapezoid(source, t), "lap_rho_integral": _trapezoid(lap, t)}


def _trapezoid(values, times):
    values, times = np.asarray(values, dtype=float), np.asarray(times, dtype=float)
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def window(times, m: int = 10) -> np.ndarray:
    """Trapezoid cut-off: ramps of length T/m at both ends, one in between."""
    t = np.asarray(times, dtype=float)
    t0, t1 = t[0], t[-1]
    ramp = (t1 - t0) / m
    if ramp <= 0:
        return np.ones_like(t)
    return np.clip(np.minimum(t - t0, t1 - t) / ramp, 0.0, 1.0)


def _chi(model: Model, rho):
    if model.sigma > 0:
        return model.pack.chi_sigma(rho, model.sigma)
    return model.pack.chi(rho)


def pressure_integrability(snapshots: list[State], model: Model, m: int = 10) -> dict:
    """Space-time L^1 norms of the pressure and the windowed pressure pairing."""
    if len(snapshots) < 2:
        raise HistoryError("need at least two snapshots")
    g = model.grid
    times = np.array([s.time for s in snapshots])
    psi = window(times, m)
    l1, l1_chi, pair, pair_c, pair_w = [], [], [], [], []
    for s in snapshots:
        P = model.pressure(s.rho)
        Pw = model.pack.P_tilde_concave(s.rho)
        rz = sp.zero_mean(s.rho)
        l1.append(sp.integral(np.abs(P), g))
        l1_chi.append(sp.integral(np.abs(P * _chi(model, s.rho)), g))
        pair.append(sp.integral(P * rz, g))
        pair_c.append(sp.integral((P - Pw) * rz, g))
        pair_w.append(sp.integral(Pw * rz, g))
    return {
        "P_L1": _trapezoid(l1, times),
        "P_chi_L1": _trapezoid(l1_chi, times),
        "pairing": _trapezoid(psi * np.array(pair), times),
        "pairing_convex": _trapezoid(psi * np.array(pair_c), times),
        "pairing_concave": _trapezoid(psi * np.array(pair_w), times),
    }


def tail_mass(rho, model: Model, M: float) -> float:
    P = np.abs(model.pressure(rho))
    return sp.integral(np.where(P >= M, P, 0.0), model.grid)


def equi_integrability_tail(snapshots: list[State], model: Model, thresholds=TAIL_THRESHOLDS) -> list[dict]:
    """Space-time measure and mass of {|P~| >= M} for each threshold."""
    g = model.grid
    times = np.array([s.time for s in snapshots])
    rows = []
    for M in thresholds:
        meas, mass = [], []
        for s in snapshots:
            P = np.abs(model.pressure(s.rho))
            hit = P >= M
            meas.append(float(np.mean(hit)))
            mass.append(sp.integral(np.where(hit, P, 0.0), g))
        rows.append({"M": float(M), "measure": _trapezoid(meas, times), "tail": _trapezoid(mass, times)})
    return rows


@dataclass
class DiagnosticsRecord:
    step: int
    time: float
    mass_rho: float
    mass_phi: float
    momentum: tuple
    E_total: float
    E_GL: float
    E_sigma_delta: float
    E_BD: float
    D_visc: float
    D_mup: float
    P_L1: float
    P_chi_L1: float
    rho_min: float
    rho_max: float
    energy_defect: float = float("nan")
    bd_lap_rho: float = 0.0
    bd_curvature: float = 0.0
    bd_rotation: float = 0.0
    tails: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "momentum":
                for axis, c in zip("xyz", v):
                    out[f"momentum_{axis}"] = c
            elif f.name == "tails":
                for M, c in v.items():
                    out[f"tail_{M:g}"] = c
            else:
                out[f.name] = v
        return out


def make_record(step: int, state: State, model: Model, energy_defect: float = float("nan"),
                thresholds=TAIL_THRESHOLDS) -> DiagnosticsRecord:
    g = model.grid
    rho = state.rho
    en = compute_energies(state, model)
    dis = compute_dissipation(state, model)
    bd = bd_dissipation(state, model)
    phi = model.pack.phi_of_rho(rho)
    P = model.pressure(rho)
    return DiagnosticsRecord(
        step=step,
        time=state.time,
        mass_rho=sp.integral(rho, g),
        mass_phi=sp.integral(phi, g),
        momentum=tuple(sp.integral(rho * c, g) for c in state.u),
        E_total=en.total,
        E_GL=en.ginzburg_landau,
        E_sigma_delta=en.regularised,
        E_BD=compute_bd_entropy(state, model),
        D_visc=dis.viscous,
        D_mup=dis.mu_p,
        P_L1=sp.integral(np.abs(P), g),
        P_chi_L1=sp.integral(np.abs(P * _chi(model, rho)), g),
        rho_min=float(np.min(rho)),
        rho_max=float(np.max(rho)),
        energy_defect=energy_defect,
        bd_lap_rho=bd["lap_rho"],
        bd_curvature=bd["curvature"],
        bd_rotation=bd["rotation"],
        tails={M: tail_mass(rho, model, M) for M in thresholds},
    )


def conservation_drift(records: list[DiagnosticsRecord]) -> dict:
    """Largest relative drift of mean density, mean order parameter and momentum."""
    if not records:
        raise HistoryError("empty record list")
    r0 = records[0]
    rho_scale = abs(r0.mass_rho)
    phi_scale = max(abs(r0.mass_phi), 1.0)
    mom0 = np.array(r0.momentum)
    mom_scale = float(np.linalg.norm(mom0)) or 1.0
    drift_rho = max(abs(r.mass_rho - r0.mass_rho) for r in records) / rho_scale
    drift_phi = max(abs(r.mass_phi - r0.mass_phi) for r in records) / phi_scale
    drift_m = max(float(np.linalg.norm(np.array(r.momentum) - mom0)) for r in records) / mom_scale
    return {"mass_rho": drift_rho, "mass_phi": drift_phi, "momentum": drift_m}
