import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnsch import spectral as sp
from qnsch.errors import ConsistencyError, InitialDataError
from qnsch.potentials import Params, PotentialPack
from qnsch.spectral import Grid
from qnsch.state import (INITIAL_KINDS, State, build_initial_data, check_consistency, manufactured_fields,
                         mollified_initial_density, mollifier_width, reconstruct_derived)

G = Grid(2, 32)
P = Params()


@pytest.mark.parametrize("kind", INITIAL_KINDS)
def test_initial_data_inside_band(kind):
    data = build_initial_data(kind, G, P, seed=4)
    assert data.rho0.shape == G.shape and data.u0.shape == (2,) + G.shape
    assert P.rho_lower < data.rho0.min() and data.rho0.max() < 1.0


def test_initial_data_is_seeded():
    a = build_initial_data("spinodal", G, P, seed=1).rho0
    b = build_initial_data("spinodal", G, P, seed=1).rho0
    c = build_initial_data("spinodal", G, P, seed=2).rho0
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_spinodal_noise_keeps_mean():
    data = build_initial_data("spinodal", G, P, amplitude=0.05)
    assert np.mean(data.rho0) == pytest.approx(P.rho_mid, abs=1e-14)


def test_initial_data_errors():
    with pytest.raises(InitialDataError):
        build_initial_data("vortex", G, P)
    with pytest.raises(InitialDataError):
        build_initial_data("bubble", G, P, amplitude=0.99)


def test_velocity_option_gives_nonzero_momentum():
    data = build_initial_data("spinodal", G, P, velocity=0.1)
    mom = [sp.integral(data.rho0 * c, G) for c in data.u0]
    assert min(abs(m) for m in mom) > 1e-3


def test_reconstruction_relations():
    u, rho = manufactured_fields(G, P)
    der = reconstruct_derived(State(0.0, u, rho), P, G)
    pk = PotentialPack(P)
    assert np.allclose(der.phi, pk.phi_of_rho(rho))
    assert np.allclose(P.alpha * sp.laplacian(der.mu_p, G), sp.div(u, G), atol=1e-12)
    assert sp.mean(der.mu_p) == pytest.approx(0.0, abs=1e-15)
    # mu + alpha p = mu_p
    assert np.allclose(der.mu + P.alpha * der.p, der.mu_p, atol=1e-12)
    check_consistency(State(0.0, u, rho), der, P, G, sigma=P.sigma)


def test_consistency_check_detects_tampering():
    u, rho = manufactured_fields(G, P)
    der = reconstruct_derived(State(0.0, u, rho), P, G)
    der.phi = der.phi + 1e-3
    with pytest.raises(ConsistencyError):
        check_consistency(State(0.0, u, rho), der, P, G)


def test_uniform_state_has_trivial_potentials():
    rho = np.full(G.shape, P.rho_mid)
    der = reconstruct_derived(State(0.0, np.zeros((2,) + G.shape), rho), P.with_(omega=0.0), G)
    assert np.allclose(der.phi, 0.0) and np.allclose(der.mu, 0.0) and np.allclose(der.mu_p, 0.0)


def test_mollifier_width_scaling():
    assert mollifier_width(1e-4) == pytest.approx(0.1)
    assert mollifier_width(1e-1) == pytest.approx(10**-0.25)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([1e-1, 1e-2, 1e-3, 1e-4]))
def test_mollified_density_stays_in_band(seed, delta):
    rho0 = build_initial_data("spinodal", G, P, seed=seed, amplitude=0.9).rho0
    rho = mollified_initial_density(rho0, delta, G)
    assert np.mean(rho) == pytest.approx(np.mean(rho0), abs=1e-14)
    assert rho.min() >= rho0.min() - 1e-14 and rho.max() <= rho0.max() + 1e-14


def test_zero_delta_leaves_density_alone():
    rho0 = build_initial_data("bubble", G, P).rho0
    assert np.array_equal(mollified_initial_density(rho0, 0.0, G), rho0)


def test_state_copy_is_deep():
    u, rho = manufactured_fields(G, P)
    s = State(0.5, u, rho)
    c = s.copy()
    c.rho[0, 0] = -1
    assert s.rho[0, 0] != -1 and c.time == 0.5
