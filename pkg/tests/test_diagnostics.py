import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnsch import diagnostics as dg
from qnsch import spectral as sp
from qnsch.errors import HistoryError, ParameterError
from qnsch.potentials import Params
from qnsch.solver import Model, SchemeConfig, Stepper, manufactured_forcing, project_state
from qnsch.spectral import Grid
from qnsch.state import State, build_initial_data, manufactured_fields
from qnsch.verify import _exact_trajectory

G = Grid(2, 32)
P = Params()


def _flat(rho_value, params=P, grid=G):
    return State(0.0, np.zeros((2,) + grid.shape), np.full(grid.shape, rho_value))


def test_uniform_energy_equals_potential_value():
    model = Model(G, P.with_(omega=0.0), "target")
    e = dg.compute_energies(_flat(P.rho_mid), model)
    assert e.total == pytest.approx(1.0)
    assert e.kinetic == 0 and e.gradient == 0


def test_gradient_energy_of_single_mode():
    a = 0.3
    x = G.coords
    phi = a * np.cos(2 * np.pi * x[0])
    model = Model(G, P, "target")
    rho = model.pack.rho_of_phi(phi)
    e = dg.compute_energies(State(0.0, np.zeros((2,) + G.shape), rho), model)
    assert e.gradient == pytest.approx(a**2 * math.pi**2, rel=1e-12)


def test_regularised_energy_adds_hyper_term():
    u, rho = manufactured_fields(G, P)
    s = State(0.0, u, rho)
    e = dg.compute_energies(s, Model(G, P))
    assert e.hyper == pytest.approx(0.5 * P.delta * sp.integral(sp.laplacian(rho, G) ** 2, G))
    assert e.regularised == pytest.approx(e.total + e.hyper + e.confinement)
    assert e.regularised >= -P.omega  # C* is zero for the default potential


def test_bd_entropy_cancellation_and_uniform_value():
    model = Model(G, P, "target")
    _, rho = manufactured_fields(G, P)
    u = -sp.grad(rho, G) / rho
    val = dg.compute_bd_entropy(State(0.0, u, rho), model)
    rest = sp.integral(0.5 * P.ell**2 * np.sum(sp.grad(rho, G) ** 2, axis=0) + model.F_tilde(rho), G)
    assert val == pytest.approx(rest, rel=1e-12)
    assert dg.compute_bd_entropy(_flat(0.7), model) == pytest.approx(float(model.F_tilde(0.7)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 5000))
def test_bd_regrouping_identity(seed):
    rng = np.random.default_rng(seed)
    rho = build_initial_data("spinodal", G, P, seed=seed, amplitude=0.5).rho0
    u = 0.3 * rng.standard_normal((2,) + G.shape)
    s = State(0.0, u, rho)
    model = Model(G, P)
    a, b = dg.compute_bd_entropy(s, model), dg.compute_bd_entropy(s, model, grouped=False)
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 5000))
def test_dissipation_terms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    rho = build_initial_data("spinodal", G, P, seed=seed, amplitude=0.5).rho0
    s = State(0.0, rng.standard_normal((2,) + G.shape), rho)
    model = Model(G, P)
    d = dg.compute_dissipation(s, model)
    for v in (d.viscous, d.mu_p, d.hyper_u, d.grad_lap_rho, d.lap_rho, d.inequality_bound):
        assert v >= 0
    bd = dg.bd_dissipation(s, model)
    assert bd["rotation"] >= 0 and bd["lap_rho"] >= 0 and bd["mu_p"] >= 0


def test_energy_defect_vanishes_on_equilibrium():
    model = Model(G, P)
    states = [State(t, np.zeros((2,) + G.shape), np.full(G.shape, P.rho_mid)) for t in (0.0, 0.1, 0.2)]
    out = dg.energy_balance_residual(states, model)
    assert np.max(np.abs(out["defect"])) < 1e-14
    with pytest.raises(HistoryError):
        dg.energy_balance_residual(states[:1], model)
    with pytest.raises(HistoryError):
        dg.energy_balance_residual(states[::-1], model)


def test_energy_defect_is_first_order():
    model = Model(G, P)
    u, rho = manufactured_fields(G, P, amp_rho=0.03)
    s0 = project_state(State(0.0, u, rho), G)
    peaks = []
    for dt in (2e-4, 1e-4):
        st_ = Stepper(model, SchemeConfig(dt=dt), rho_bar=float(np.mean(s0.rho)))
        traj = [s0]
        for _ in range(int(round(2e-3 / dt))):
            traj.append(st_.step(traj[-1]))
        peaks.append(np.max(np.abs(dg.energy_balance_residual(traj, model)["defect"])) / dt)
    assert peaks[0] / peaks[1] == pytest.approx(2.0, rel=0.2)


def test_bd_identity_requires_target_level():
    with pytest.raises(ParameterError):
        dg.bd_identity_residual([_flat(0.7), _flat(0.7)], Model(G, P))
    model = Model(G, P, "target")
    states = [State(t, np.zeros((2,) + G.shape), np.full(G.shape, 0.7)) for t in (0.0, 0.1)]
    out = dg.bd_identity_residual(states, model)
    assert np.max(np.abs(out["defect"])) < 1e-14


def test_bd_identity_matches_injected_forcing():
    g = Grid(2, 32)
    model = Model(g, P, "target")
    exact, rate = _exact_trajectory(g, P.rho_mid)
    forcing = manufactured_forcing(model, exact, rate)
    st_ = Stepper(model, SchemeConfig(dt=1e-4, scheme="imex_bdf2"), rho_bar=P.rho_mid, forcing=forcing)
    traj = [exact(0.0)]
    for _ in range(60):
        traj.append(st_.step(traj[-1]))
    out = dg.bd_identity_residual(traj, model, forcing)
    tail = slice(20, None)
    mismatch = np.max(np.abs(out["defect"][tail] - out["pairing"][tail]))
    assert mismatch <= 0.05 * np.max(np.abs(out["pairing"][tail]))


def test_window_shape():
    t = np.linspace(0, 1, 101)
    w = dg.window(t, 10)
    assert w[0] == 0 and w[-1] == 0 and w[50] == 1
    assert np.all((w >= 0) & (w <= 1))
    assert w[5] == pytest.approx(0.5)


def test_pressure_integrability_of_uniform_symmetric_state():
    model = Model(G, P.with_(omega=0.0), "target")
    snaps = [State(t, np.empty(0), np.full(G.shape, P.rho_mid)) for t in np.linspace(0, 0.5, 6)]
    out = dg.pressure_integrability(snaps, model)
    assert out["P_L1"] == pytest.approx(0.5)
    assert out["pairing"] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(HistoryError):
        dg.pressure_integrability(snaps[:1], model)


def test_entropy_zero_gives_no_convex_pressure():
    model = Model(G, P, "target")
    rs = model.pack.rho_star()
    assert abs(float(model.pack.P_tilde(rs, convex_only=True))) < 1e-12


def test_tail_table_monotone_and_growth_domination():
    model = Model(G, P)
    rho = build_initial_data("bubble", G, P, amplitude=0.94).rho0
    snaps = [State(t, np.empty(0), rho) for t in (0.0, 1.0)]
    rows = dg.equi_integrability_tail(snaps, model)
    tails = [r["tail"] for r in rows]
    meas = [r["measure"] for r in rows]
    assert all(a >= b for a, b in zip(tails, tails[1:]))
    assert all(a >= b for a, b in zip(meas, meas[1:]))
    # Chebyshev: the level-set measure never exceeds tail / M
    for r in rows:
        assert r["measure"] <= r["tail"] / r["M"] + 1e-15
    Pabs = np.abs(model.pressure(rho))
    # above the largest pressure the tail is empty
    assert dg.tail_mass(rho, model, 2 * Pabs.max()) == 0.0


def test_records_and_conservation_drift():
    model = Model(G, P)
    data = build_initial_data("spinodal", G, P, velocity=0.1)
    s = project_state(State(0.0, data.u0, data.rho0), G)
    st_ = Stepper(model, SchemeConfig(dt=1e-4), rho_bar=float(np.mean(s.rho)))
    recs = [dg.make_record(0, s, model)]
    for k in range(1, 4):
        s = st_.step(s)
        recs.append(dg.make_record(k, s, model))
    row = recs[-1].row()
    assert {"momentum_x", "momentum_y", "tail_1", "tail_1000", "E_BD"} <= set(row)
    assert all(math.isfinite(v) for k, v in row.items() if k != "energy_defect")
    drift = dg.conservation_drift(recs)
    assert drift["mass_rho"] <= 1e-14
    with pytest.raises(HistoryError):
        dg.conservation_drift([])


def test_bd_budget_reports_finite_constants():
    model = Model(G, P)
    u, rho = manufactured_fields(G, P)
    s = project_state(State(0.0, u, rho), G)
    states = [s]
    st_ = Stepper(model, SchemeConfig(dt=1e-4), rho_bar=float(np.mean(s.rho)))
    for _ in range(10):
        states.append(st_.step(states[-1]))
    out = dg.bd_budget(states, model)
    assert out["c_run"] >= 0 and math.isfinite(out["source_integral"]) and out["lap_rho_integral"] > 0
    assert out["budget"][0] == 0.0
