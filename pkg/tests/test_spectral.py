import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from qnsch import spectral as sp
from qnsch.errors import GridError, NonZeroMeanError
from qnsch.spectral import Grid, MollifierSpec

G32 = Grid(2, 32)


def _trig(grid, kx, ky, phase=0.0):
    x = grid.coords
    return np.cos(2 * np.pi * (kx * x[0] + ky * x[1]) + phase)


def _random_band(grid, seed, kmax=5):
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.spec_shape, dtype=complex)
    sel = np.ones(grid.spec_shape, dtype=bool)
    for k in grid.k:
        sel &= np.abs(k) <= kmax
    c[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    return grid.ifft(c)


def test_grid_rejects_bad_sizes():
    with pytest.raises(GridError):
        Grid(2, 7)
    with pytest.raises(GridError):
        Grid(4, 16)


def test_single_mode_derivatives():
    f = _trig(G32, 2, 1)
    x = G32.coords
    arg = 2 * np.pi * (2 * x[0] + x[1])
    g = sp.grad(f, G32)
    assert np.allclose(g[0], -4 * np.pi * np.sin(arg), atol=1e-11)
    assert np.allclose(g[1], -2 * np.pi * np.sin(arg), atol=1e-11)
    assert np.allclose(sp.laplacian(f, G32), -(2 * np.pi) ** 2 * 5 * f, atol=1e-10)
    lam2 = ((2 * np.pi) ** 2 * 5) ** 2
    assert np.max(np.abs(sp.bilaplacian(f, G32) - lam2 * f)) <= 1e-11 * lam2


def test_integral_and_norm_of_constant():
    one = np.ones(G32.shape)
    assert sp.integral(one, G32) == pytest.approx(1.0)
    assert sp.norm_l2(3 * one, G32) == pytest.approx(3.0)
    assert sp.integral(_trig(G32, 1, 0) ** 2, G32) == pytest.approx(0.5)


def test_inverse_laplacian_requires_zero_mean():
    with pytest.raises(NonZeroMeanError):
        sp.inv_laplacian_zero_mean(np.ones(G32.shape), G32)
    with pytest.raises(NonZeroMeanError):
        sp.bogovskii(1.0 + _trig(G32, 1, 0), G32)


def test_bogovskii_of_gradient_mode():
    f = _trig(G32, 1, 2)
    b = sp.bogovskii(f, G32)
    assert np.max(np.abs(sp.div(b, G32) - f)) < 1e-13
    # B g is a gradient: its curl vanishes
    curl = sp.grad(b[1], G32)[0] - sp.grad(b[0], G32)[1]
    assert np.max(np.abs(curl)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_div_grad_is_laplacian(seed):
    f = _random_band(G32, seed)
    assert np.allclose(sp.div(sp.grad(f, G32), G32), sp.laplacian(f, G32), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_inverse_laplacian_roundtrip(seed):
    f = sp.zero_mean(_random_band(G32, seed))
    back = sp.laplacian(sp.inv_laplacian_zero_mean(f, G32), G32)
    assert sp.norm_l2(back - f, G32) <= 1e-12 * sp.norm_l2(f, G32)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_parseval(seed):
    f = np.random.default_rng(seed).standard_normal(G32.shape)
    spec = float(np.sum(G32.weights * np.abs(G32.fft(f)) ** 2))
    assert spec == pytest.approx(float(np.mean(f * f)), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_dealias_is_projection(seed):
    f = np.random.default_rng(seed).standard_normal(G32.shape)
    once = sp.dealias(f, G32)
    assert np.allclose(sp.dealias(once, G32), once, atol=1e-14)
    assert sp.mean(once) == pytest.approx(sp.mean(f), abs=1e-14)


def test_sobolev_norm_of_single_mode():
    f = _trig(G32, 1, 0)
    k2 = (2 * np.pi) ** 2
    assert sp.sobolev_norm(f, 1, G32) == pytest.approx(math.sqrt(0.5 * (1 + k2)))
    assert sp.sobolev_norm(f, 2, G32) == pytest.approx(math.sqrt(0.5) * (1 + k2))


def test_mollifier_width_validation():
    with pytest.raises(GridError):
        MollifierSpec(0.0)
    with pytest.raises(GridError):
        MollifierSpec(1.5)
    with pytest.raises(GridError):
        MollifierSpec(0.1, "tophat")


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_gaussian_multiplier_matches_continuous_transform(eps):
    g = Grid(2, 64)
    mult = sp.mollifier_multiplier(MollifierSpec(eps, "gaussian"), g)
    exact = np.exp(-2 * np.pi**2 * eps**2 * (g.k[0] ** 2 + g.k[1] ** 2))
    assert np.max(np.abs(mult - exact)) < 1e-12


def _bump_transform(eps, kabs):
    """Continuous 2D transform of the normalised radial bump, by quadrature."""
    bump = lambda r: math.exp(-1.0 / (1.0 - (r / eps) ** 2)) if r < eps else 0.0
    mass = integrate.quad(lambda r: bump(r) * 2 * math.pi * r, 0, eps, limit=200)[0]
    val = integrate.quad(lambda r: bump(r) * special.j0(2 * math.pi * kabs * r) * 2 * math.pi * r,
                         0, eps, limit=200)[0]
    return val / mass


@pytest.mark.parametrize("eps", [0.2, 0.4])
def test_bump_multiplier_matches_quadrature(eps):
    g = Grid(2, 128)
    mult = sp.mollifier_multiplier(MollifierSpec(eps, "bump"), g)
    for kx, ky in [(0, 0), (1, 0), (2, 1), (3, 3), (5, 0)]:
        assert mult[kx, ky] == pytest.approx(_bump_transform(eps, math.hypot(kx, ky)), abs=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.02, 1.0), st.sampled_from(["gaussian", "bump"]))
def test_mollifier_mean_and_maximum_principle(seed, eps, profile):
    f = np.random.default_rng(seed).uniform(0.4, 0.9, G32.shape)
    m = sp.mollify(f, MollifierSpec(eps, profile), G32)
    assert sp.mean(m) == pytest.approx(sp.mean(f), abs=1e-14)
    assert m.min() >= f.min() - 1e-13 and m.max() <= f.max() + 1e-13


def test_vector_fields_are_handled_componentwise():
    v = np.stack([_trig(G32, 1, 0), _trig(G32, 0, 2)])
    assert sp.dealias(v, G32).shape == v.shape
    assert sp.mollify(v, MollifierSpec(0.1), G32).shape == v.shape
    assert sp.div(v, G32).shape == G32.shape
