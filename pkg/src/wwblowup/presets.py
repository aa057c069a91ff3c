"""Named initial conditions."""

from __future__ import annotations

import math

import numpy as np

from .dynamics import SurfaceState
from .spectral import SpectralGrid, fourier_multiplier


def _amp(cfg, default):
    a = cfg["initial.amplitude"]
    return default if math.isnan(a) else a


def _mode(grid: SpectralGrid, k: int) -> np.ndarray:
    return np.cos(2 * np.pi * k * grid.x[0] / grid.lengths[0])


def rest(grid, cfg):
    z = np.zeros(grid.shape)
    return SurfaceState(z, z.copy())


def _linear(k_default):
    def make(grid, cfg):
        k = k_default if k_default is not None else cfg["initial.wavenumber"]
        return SurfaceState(_amp(cfg, 1e-6) * _mode(grid, k), np.zeros(grid.shape))
    return make


def steep_gaussian(grid, cfg):
    """Zero-mean Gaussian hump with a right-going linear potential."""
    L = grid.lengths[0]
    w = cfg["initial.width"]
    r = grid.x[0] - L / 2
    eta = _amp(cfg, 0.45) * np.exp(-(r / w) ** 2)
    eta = eta - grid.mean(eta)
    g, H = cfg["physics.g"], cfg["physics.depth"]
    omega = np.sqrt(g * grid.kabs * np.tanh(grid.kabs * H))
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(grid.kabs > 0, -1j * np.sign(grid.k_odd[0]) * g / np.where(omega > 0, omega, 1.0), 0.0)
    psi = fourier_multiplier(grid, eta, m)
    return SurfaceState(eta, psi)


def from_file(grid, cfg):
    data = np.load(cfg["initial.file"])
    eta = np.asarray(data["eta"], dtype=float)
    psi = np.asarray(data["psi"], dtype=float)
    if eta.shape != grid.shape or psi.shape != grid.shape:
        raise ValueError(f"initial.file: arrays must have shape {grid.shape}")
    return SurfaceState(eta, psi)


PRESETS = {
    "rest": rest,
    "linear": _linear(None),
    "linear-k1": _linear(1),
    "linear-k2": _linear(2),
    "linear-k4": _linear(4),
    "steep-gaussian": steep_gaussian,
    "file": from_file,
}


def initial_state(grid: SpectralGrid, cfg) -> SurfaceState:
    return PRESETS[cfg["initial.preset"]](grid, cfg)
