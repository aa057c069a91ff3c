"""Periodic spectral toolkit: transforms, multipliers, dyadic blocks and norms.

All transforms are taken over one period of a ``dim``-dimensional torus.  The
spectral coefficients returned by :meth:`SpectralGrid.fft` are normalized so
that Parseval holds with the L2 inner product over one period, i.e.
``sum(|fft(u)|**2) == integral(|u|**2)``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence, Union

import numpy as np

# Frozen Littlewood-Paley cutoff constants: block -1 is supported in
# |xi| <= 4/3 and block j >= 0 in [3/4 * 2**j, 8/3 * 2**j].
LP_INNER = 0.75
LP_OUTER = 4.0 / 3.0

Multiplier = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], float]


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(tc > 0, np.exp(-1.0 / np.where(tc > 0, tc, 1.0)), 0.0)
        f1 = np.where(tc < 1, np.exp(-1.0 / np.where(tc < 1, 1.0 - tc, 1.0)), 0.0)
    return f0 / (f0 + f1)


def lp_chi(r):
    """Low-pass profile: 1 for r <= 3/4, 0 for r >= 4/3."""
    return smooth_step((LP_OUTER - np.asarray(r, dtype=float)) / (LP_OUTER - LP_INNER))


def lp_phi(r, j: int):
    """Dyadic block profile phi_j evaluated at |xi| = r."""
    r = np.asarray(r, dtype=float)
    if j < -1:
        raise ValueError("block index must be >= -1")
    if j == -1:
        return lp_chi(r)
    return lp_chi(r / 2.0 ** (j + 1)) - lp_chi(r / 2.0**j)


class SpectralGrid:
    """Uniform periodic grid on a ``dim``-torus with equal resolution per axis."""

    def __init__(self, n: int, length: Union[float, Sequence[float]] = 2 * np.pi, dim: int = 1):
        if dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if n <= 0 or n % 2:
            raise ValueError("points per axis must be a positive even integer")
        lengths = (float(length),) * dim if np.isscalar(length) else tuple(float(v) for v in length)
        if len(lengths) != dim or min(lengths) <= 0:
            raise ValueError("need one positive length per axis")
        self.dim = dim
        self.n = n
        self.lengths = lengths
        self.shape = (n,) * dim
        self.volume = float(np.prod(lengths))
        self.npoints = n**dim
        self.dx = tuple(L / n for L in lengths)

        axes_x = [np.arange(n) * L / n for L in lengths]
        axes_k = [2 * np.pi * np.fft.fftfreq(n, d=L / n) for L in lengths]
        self.x = np.array(np.meshgrid(*axes_x, indexing="ij"))
        self.k = np.array(np.meshgrid(*axes_k, indexing="ij"))
        # Odd-order derivatives drop the unpaired Nyquist mode.
        nyq = np.zeros(self.shape, dtype=bool)
        for ax in range(dim):
            idx = [slice(None)] * dim
            idx[ax] = n // 2
            nyq[tuple(idx)] = True
        self.nyquist = nyq
        self.k_odd = np.where(nyq[None], 0.0, self.k)
        self.kabs = np.sqrt(np.sum(self.k**2, axis=0))
        self.kjap = np.sqrt(1.0 + self.kabs**2)
        self.kmax = float(np.max(self.kabs))
        self.knyq = min(np.pi * n / L for L in lengths)
        self._norm = math.sqrt(self.volume) / self.npoints
        self.jmax = self._max_block()

    def __eq__(self, other):
        return (
            isinstance(other, SpectralGrid)
            and other.dim == self.dim
            and other.n == self.n
            and other.lengths == self.lengths
        )

    def __hash__(self):
        return hash((self.dim, self.n, self.lengths))

    def __repr__(self):
        return f"SpectralGrid(n={self.n}, length={self.lengths}, dim={self.dim})"

    def _max_block(self) -> int:
        j = -1
        while LP_INNER * 2.0 ** (j + 1) < self.kmax:
            j += 1
        return j

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    # transforms -------------------------------------------------------
    def fft(self, u: np.ndarray) -> np.ndarray:
        """Unitary spectrum over the trailing ``dim`` axes."""
        return np.fft.fftn(u, axes=self.axes) * self._norm

    def ifft(self, uh: np.ndarray, real: bool = False) -> np.ndarray:
        u = np.fft.ifftn(uh / self._norm, axes=self.axes)
        return u.real if real else u

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape[-self.dim :] != self.shape:
            raise ValueError(f"field shape {u.shape} does not match grid {self.shape}")
        return u

    # calculus ---------------------------------------------------------
    def grad(self, u: np.ndarray) -> np.ndarray:
        """Spectral gradient; output has a leading axis of length ``dim``."""
        uh = np.fft.fftn(u, axes=self.axes)
        out = np.empty((self.dim,) + np.shape(u), dtype=float)
        for i in range(self.dim):
            out[i] = np.fft.ifftn(1j * self.k_odd[i] * uh, axes=self.axes).real
        return out

    def div(self, vec: np.ndarray) -> np.ndarray:
        vh = np.fft.fftn(vec, axes=self.axes)
        acc = sum(1j * self.k_odd[i] * vh[i] for i in range(self.dim))
        return np.fft.ifftn(acc, axes=self.axes).real

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        uh = np.fft.fftn(u, axes=self.axes)
        return np.fft.ifftn(-(self.kabs**2) * uh, axes=self.axes).real

    def mean(self, u: np.ndarray) -> float:
        return float(np.mean(u, axis=self.axes))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """L2 inner product over one period (trapezoid = spectral quadrature)."""
        return float(np.sum(u * v)) * self.volume / self.npoints

    # resampling -------------------------------------------------------
    def resample(self, u: np.ndarray, m: int) -> np.ndarray:
        """Trigonometric interpolant of ``u`` sampled on ``m`` points per axis."""
        uh = np.fft.fftn(u, axes=self.axes)
        out = _resize_spectrum(uh, self.n, m, self.dim)
        scale = (m / self.n) ** self.dim
        res = np.fft.ifftn(out, axes=self.axes) * scale
        return res.real if np.isrealobj(u) else res

    def padded(self) -> "SpectralGrid":
        """The 3/2-padded grid used for dealiased products."""
        m = 3 * self.n // 2
        m += m % 2
        return SpectralGrid(m, self.lengths, self.dim)


def _resize_spectrum(uh: np.ndarray, n: int, m: int, dim: int) -> np.ndarray:
    """Copy modes with |index| < min(n, m)/2 into an m-sized spectrum (Nyquist dropped)."""
    lead = uh.shape[:-dim]
    out = np.zeros(lead + (m,) * dim, dtype=complex)
    c = min(n, m) // 2
    keep_src = np.r_[0:c, n - c + 1 : n]
    keep_dst = np.r_[0:c, m - c + 1 : m]
    src = uh
    for ax in range(dim):
        src = np.take(src, keep_src, axis=len(lead) + ax)
    idx = np.ix_(*([np.arange(s) for s in lead] + [keep_dst] * dim)) if lead else np.ix_(*([keep_dst] * dim))
    out[idx] = src
    return out


# ----------------------------------------------------------------------
# multipliers


def _eval_multiplier(grid: SpectralGrid, m: Multiplier) -> np.ndarray:
    if callable(m):
        vals = np.asarray(m(grid.k), dtype=complex)
    else:
        vals = np.asarray(m, dtype=complex)
    return np.broadcast_to(vals, grid.shape)


def _hermitian(grid: SpectralGrid, vals: np.ndarray) -> bool:
    flipped = vals
    for ax in range(grid.dim):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return bool(np.allclose(flipped, np.conj(vals), rtol=0, atol=1e-14 * (1 + np.max(np.abs(vals)))))


def fourier_multiplier(grid: SpectralGrid, u: np.ndarray, m: Multiplier) -> np.ndarray:
    """Apply the Fourier multiplier ``m(xi)`` to ``u``.

    ``m`` may be a scalar, an array on the wavenumber grid, or a callable
    receiving the wavevector array ``grid.k`` of shape ``(dim, *shape)``.
    Real input with a Hermitian-symmetric multiplier gives real output.
    """
    u = grid.check(u)
    vals = _eval_multiplier(grid, m)
    if not np.all(np.isfinite(vals)):
        raise ValueError("multiplier is not finite at every grid wavenumber")
    out = np.fft.ifftn(np.fft.fftn(u, axes=grid.axes) * vals, axes=grid.axes)
    if np.isrealobj(u) and _hermitian(grid, vals):
        return out.real
    return out


def japanese(grid: SpectralGrid, u: np.ndarray, s: float) -> np.ndarray:
    """<D>^s u."""
    return fourier_multiplier(grid, u, grid.kjap**s)


def poisson_smooth(grid: SpectralGrid, u: np.ndarray, t: float, b: float = 1.0) -> np.ndarray:
    """exp(-b t <D>) u."""
    if t < 0 or b <= 0:
        raise ValueError("need t >= 0 and b > 0")
    return fourier_multiplier(grid, u, np.exp(-b * t * grid.kjap))


# ----------------------------------------------------------------------
# dealiasing


def dealiased(grid: SpectralGrid, fn: Callable[..., np.ndarray], *fields: np.ndarray) -> np.ndarray:
    """Evaluate a pointwise expression on the 3/2-padded grid and truncate back.

    Exact for quadratic expressions of band-limited fields; for other
    nonlinearities it removes the aliased part of the quadratic interactions.
    """
    m = grid.padded().n
    up = [grid.resample(np.asarray(f), m) for f in fields]
    val = np.asarray(fn(*up))
    vh = np.fft.fftn(val, axes=grid.axes)
    out = np.fft.ifftn(_resize_spectrum(vh, m, grid.n, grid.dim), axes=grid.axes) * (grid.n / m) ** grid.dim
    return out.real if np.isrealobj(val) else out


def product(grid: SpectralGrid, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return dealiased(grid, np.multiply, u, v)


# ----------------------------------------------------------------------
# Littlewood-Paley blocks and norms


def block_profile(grid: SpectralGrid, j: int) -> np.ndarray:
    return lp_phi(grid.kabs, j)


def dyadic_block(grid: SpectralGrid, u: np.ndarray, j: int) -> np.ndarray:
    """Delta_j u; blocks beyond the resolvable range are identically zero."""
    u = grid.check(u)
    if j > grid.jmax:
        return np.zeros_like(u)
    return fourier_multiplier(grid, u, block_profile(grid, j))


def dyadic_blocks(grid: SpectralGrid, u: np.ndarray) -> np.ndarray:
    """All resolvable blocks stacked along a new leading axis (j = -1 first)."""
    uh = np.fft.fftn(grid.check(u), axes=grid.axes)
    prof = np.array([block_profile(grid, j) for j in range(-1, grid.jmax + 1)])
    out = np.fft.ifftn(prof * uh[None], axes=grid.axes)
    return out.real if np.isrealobj(u) else out


def sup_norm(grid: SpectralGrid, u: np.ndarray, points: int | None = None) -> float:
    """Max modulus, optionally of the trigonometric interpolant on a finer grid."""
    u = np.asarray(u)
    if points is not None and points != grid.n:
        u = grid.resample(u, points)
    return float(np.max(np.abs(u))) if u.size else 0.0


def zygmund_norm(grid: SpectralGrid, u: np.ndarray, s: float, points: int | None = None) -> float:
    """sup_j 2^(j s) ||Delta_j u||_inf over resolvable blocks (block -1 has weight 2^-s)."""
    blocks = dyadic_blocks(grid, u)
    if points is not None and points != grid.n:
        blocks = grid.resample(blocks, points)
    sup = np.max(np.abs(blocks).reshape(blocks.shape[0], -1), axis=1)
    weights = 2.0 ** (s * np.arange(-1, grid.jmax + 1))
    return float(np.max(weights * sup))


def holder_norm(grid: SpectralGrid, u: np.ndarray, r: float, points: int | None = None) -> float:
    """||u||_inf + Zygmund norm of order r (r must not be an integer)."""
    if r <= 0 or float(r).is_integer():
        raise ValueError("Hölder exponent must be positive and non-integer")
    return sup_norm(grid, u, points) + zygmund_norm(grid, u, r, points)


def sobolev_norm(grid: SpectralGrid, u: np.ndarray, s: float) -> float:
    """(sum <xi>^(2s) |u_hat|^2)^(1/2); s = 0 is the L2 norm over one period."""
    uh = grid.fft(grid.check(u))
    return float(np.sqrt(np.sum(grid.kjap ** (2 * s) * np.abs(uh) ** 2)))


def embedding_constant(grid: SpectralGrid, s0: float) -> float:
    """Smallest C with ||u||_{C_*^(s0 - d/2)} <= C ||u||_{H^s0} on this grid.

    Cauchy-Schwarz per block, evaluated exactly on the grid wavenumbers.
    """
    r = s0 - grid.dim / 2.0
    best = 0.0
    for j in range(-1, grid.jmax + 1):
        phi = block_profile(grid, j)
        c = math.sqrt(float(np.sum(phi**2 * grid.kjap ** (-2 * s0)))) / math.sqrt(grid.volume)
        best = max(best, 2.0 ** (j * r) * c)
    return best
