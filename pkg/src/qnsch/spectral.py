"""Fourier calculus on the periodic unit torus.

Fields are plain ``numpy`` arrays of shape ``(n,) * dim``; vector fields carry
a leading component axis, ``(dim,) + (n,) * dim``.  Spectral coefficients use
the real-FFT half layout along the last axis and are normalised so that the
zero mode equals the spatial mean.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridError, NonZeroMeanError

TWO_PI = 2.0 * math.pi
MEAN_TOL = 1e-12


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("QNSCH_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MollifierSpec:
    """Periodised convolution kernel of width ``epsilon``.

    ``profile`` is ``"gaussian"`` (periodised Gaussian, standard deviation
    ``epsilon``) or ``"bump"`` (radial ``exp(-1/(1-|x|^2))`` bump supported
    in the ball of radius ``epsilon``).
    """

    epsilon: float
    profile: str = "gaussian"

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise GridError(f"mollifier width must lie in (0, 1], got {self.epsilon}")
        if self.profile not in ("gaussian", "bump"):
            raise GridError(f"unknown mollifier profile {self.profile!r}")


class Grid:
    """Uniform ``n**dim`` grid on the unit torus with cached wavenumbers."""

    def __init__(self, dim: int = 2, n: int = 128):
        if dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {dim}")
        if n < 8 or n % 2:
            raise GridError(f"n must be even and >= 8, got {n}")
        self.dim = dim
        self.n = n
        self.shape = (n,) * dim
        self.size = n**dim
        self.h = 1.0 / n
        self.axes = tuple(range(-dim, 0))

        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.fft.rfftfreq(n, 1.0 / n)
        ks, kds = [], []
        for i in range(dim):
            k = half if i == dim - 1 else full
            view = [1] * dim
            view[i] = k.size
            k = k.reshape(view)
            kd = np.where(np.abs(k) == n // 2, 0.0, k)
            ks.append(k)
            kds.append(kd)
        self.k = tuple(ks)
        self.kd = tuple(kds)
        self.spec_shape = self.shape[:-1] + (n // 2 + 1,)

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.dim, self.n) == (other.dim, other.n)

    def __hash__(self):
        return hash((self.dim, self.n))

    # cached multipliers -------------------------------------------------

    @cached_property
    def K2(self) -> np.ndarray:
        """|2 pi k|^2 on the half spectrum."""
        return sum((TWO_PI * k) ** 2 for k in self.k) + np.zeros(self.spec_shape)

    @cached_property
    def ik(self) -> tuple:
        """First-derivative multipliers 2 pi i k with the Nyquist mode removed."""
        return tuple(1j * TWO_PI * kd + np.zeros(self.spec_shape) for kd in self.kd)

    @cached_property
    def khat(self) -> tuple:
        """Unit wavevectors (zero at k = 0 and where a component is Nyquist)."""
        norm = np.sqrt(sum(kd**2 for kd in self.kd) + np.zeros(self.spec_shape))
        safe = np.where(norm > 0, norm, 1.0)
        return tuple(np.where(norm > 0, kd / safe, 0.0) for kd in self.kd)

    @cached_property
    def inv_K2(self) -> np.ndarray:
        out = np.zeros(self.spec_shape)
        np.divide(1.0, self.K2, out=out, where=self.K2 > 0)
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with every |k_i| <= n // 3."""
        cut = self.n // 3
        keep = np.ones(self.spec_shape, dtype=bool)
        for k in self.k:
            keep = keep & (np.abs(k) <= cut)
        return keep

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each stored half-spectrum mode in the full spectrum."""
        kl = self.k[-1]
        w = np.where((kl == 0) | (kl == self.n // 2), 1.0, 2.0)
        return w + np.zeros(self.spec_shape)

    @cached_property
    def coords(self) -> np.ndarray:
        x = np.arange(self.n) / self.n
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # transforms ----------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self.axes, workers=_workers()) / self.size

    def ifft(self, c: np.ndarray) -> np.ndarray:
        return sfft.irfftn(c * self.size, s=self.shape, axes=self.axes, workers=_workers())

    def _check(self, f, vector=False):
        f = np.asarray(f, dtype=float)
        want = ((self.dim,) if vector else ()) + self.shape
        if f.shape != want:
            raise GridError(f"expected array of shape {want}, got {f.shape}")
        return f


def forward_transform(f: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.fft(grid._check(f))


def inverse_transform(c: np.ndarray, grid: Grid) -> np.ndarray:
    c = np.asarray(c)
    if c.shape != grid.spec_shape:
        raise GridError(f"expected spectrum of shape {grid.spec_shape}, got {c.shape}")
    return grid.ifft(c)


def mean(f: np.ndarray, grid: Grid | None = None) -> float:
    return float(np.mean(f))


def integral(f: np.ndarray, grid: Grid) -> float:
    """Integral over the unit torus of a scalar field."""
    return float(np.sum(f)) / grid.size


def norm_l2(f: np.ndarray, grid: Grid) -> float:
    return math.sqrt(float(np.sum(np.square(f))) / grid.size)


def grad(f: np.ndarray, grid: Grid) -> np.ndarray:
    fh = grid.fft(grid._check(f))
    return np.stack([grid.ifft(m * fh) for m in grid.ik])


def div(v: np.ndarray, grid: Grid) -> np.ndarray:
    v = grid._check(v, vector=True)
    return grid.ifft(sum(m * grid.fft(vi) for m, vi in zip(grid.ik, v)))


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.ifft(-grid.K2 * grid.fft(grid._check(f)))


def bilaplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.ifft(grid.K2**2 * grid.fft(grid._check(f)))


def _require_zero_mean(g: np.ndarray, tol: float):
    m = float(np.mean(g))
    scale = math.sqrt(float(np.mean(np.square(g))))
    if abs(m) > tol * max(scale, 1e-300) and abs(m) > 0.0:
        raise NonZeroMeanError(f"field mean {m:.3e} exceeds tolerance {tol:g} relative to rms {scale:.3e}")


def inv_laplacian_zero_mean(g: np.ndarray, grid: Grid, tol: float = MEAN_TOL) -> np.ndarray:
    """Zero-mean solution of lap(psi) = g; g must have (near) zero mean."""
    g = grid._check(g)
    _require_zero_mean(g, tol)
    return grid.ifft(-grid.inv_K2 * grid.fft(g))


def bogovskii(g: np.ndarray, grid: Grid, tol: float = MEAN_TOL) -> np.ndarray:
    """Right inverse of the divergence, grad(lap^{-1} g), on zero-mean data."""
    g = grid._check(g)
    _require_zero_mean(g, tol)
    gh = -grid.inv_K2 * grid.fft(g)
    return np.stack([grid.ifft(m * gh) for m in grid.ik])


def dealias(f: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape == grid.shape:
        return grid.ifft(grid.mask * grid.fft(f))
    return np.stack([dealias(fi, grid) for fi in f])


def sobolev_norm(f: np.ndarray, s: float, grid: Grid) -> float:
    """H^s norm with weight (1 + |2 pi k|^2)^s; vector fields summed over components."""
    f = np.asarray(f, dtype=float)
    comps = [f] if f.shape == grid.shape else list(f)
    w = grid.weights * (1.0 + grid.K2) ** s
    total = sum(float(np.sum(w * np.abs(grid.fft(c)) ** 2)) for c in comps)
    return math.sqrt(total)


def zero_mean(f: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f - np.mean(f)


def _kernel_1d_gaussian(eps: float, n: int) -> np.ndarray:
    x = np.arange(n) / n
    x = np.where(x > 0.5, x - 1.0, x)
    images = int(math.ceil(10.0 * eps + 0.5))
    m = np.arange(-images, images + 1)[:, None]
    return np.exp(-((x[None, :] + m) ** 2) / (2.0 * eps * eps)).sum(axis=0)


def _bump(r2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


_MULTIPLIER_CACHE: dict = {}


def mollifier_multiplier(spec: MollifierSpec, grid: Grid) -> np.ndarray:
    """Discrete Fourier multiplier of the sampled, normalised periodic kernel.

    Sampling a nonnegative kernel and normalising its grid sum to one makes
    the discrete convolution an average, so it preserves the mean and obeys
    the maximum principle exactly.
    """
    key = (spec, grid.dim, grid.n)
    if key in _MULTIPLIER_CACHE:
        return _MULTIPLIER_CACHE[key]
    n, eps = grid.n, spec.epsilon
    if spec.profile == "gaussian":
        k1 = _kernel_1d_gaussian(eps, n)
        k1 = k1 / k1.sum()
        full = np.fft.fft(k1).real
        half = np.fft.rfft(k1).real
        mult = np.ones(grid.spec_shape)
        for i in range(grid.dim):
            view = [1] * grid.dim
            factor = half if i == grid.dim - 1 else full
            view[i] = factor.size
            mult = mult * factor.reshape(view)
    else:
        x = np.arange(n) / n
        x = np.where(x > 0.5, x - 1.0, x)
        images = int(math.ceil(eps + 0.5))
        kern = np.zeros(grid.shape)
        shifts = np.arange(-images, images + 1)
        for shift in np.array(np.meshgrid(*([shifts] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T:
            r2 = np.zeros(grid.shape)
            for i in range(grid.dim):
                view = [1] * grid.dim
                view[i] = n
                r2 = r2 + ((x + shift[i]) / eps).reshape(view) ** 2
            kern += _bump(r2)
        if kern.sum() <= 0.0:
            kern.flat[0] = 1.0
        kern /= kern.sum()
        mult = sfft.rfftn(kern, axes=grid.axes).real
    _MULTIPLIER_CACHE[key] = mult
    return mult


def mollify(f: np.ndarray, spec: MollifierSpec, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    mult = mollifier_multiplier(spec, grid)
    if f.shape == grid.shape:
        return grid.ifft(mult * grid.fft(f))
    return np.stack([grid.ifft(mult * grid.fft(fi)) for fi in f])
