"""Paraproducts, paradifferential quantization and the water-wave symbols.

Cutoffs (frozen):

* ``chi(theta, eta) = 1`` for ``|theta| <= 0.1 |eta|`` and ``0`` for
  ``|theta| >= 0.2 |eta|``, smooth in the ratio ``|theta|/|eta|``;
* ``psi(eta) = 0`` for ``|eta| <= 1`` and ``1`` for ``|eta| >= 2``.

Products are formed on the 3/2-padded grid, so the output frequency
``theta + eta`` never wraps around the torus; modes at or beyond the
Nyquist index of the input grid are discarded.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import SpectralGrid, _resize_spectrum, holder_norm, japanese, product, smooth_step, sup_norm

EPS1 = 0.1
EPS2 = 0.2


class RayleighTaylorError(ValueError):
    """The Taylor coefficient is not positive somewhere on the grid."""


class EllipticityError(ValueError):
    """A decoupling symbol lost its ellipticity."""


def chi_ratio(ratio):
    return 1.0 - smooth_step((np.asarray(ratio, dtype=float) - EPS1) / (EPS2 - EPS1))


def psi_cut(r):
    return smooth_step(np.asarray(r, dtype=float) - 1.0)


@dataclass(frozen=True)
class Symbol:
    """Symbol ``a(x, xi)`` of order ``order``.

    ``evaluate(xi)`` takes wavevectors of shape ``(dim, M)`` and returns the
    symbol on the spatial sample set, shape ``(M, *xshape)``.  ``hermitian``
    records ``a(x, -xi) = conj(a(x, xi))`` so that the quantization maps real
    fields to real fields.
    """

    order: float
    evaluate: Callable[[np.ndarray], np.ndarray]
    regularity: float = 0.0
    name: str = ""
    hermitian: bool = True

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(xi, dtype=float))


@dataclass(frozen=True)
class SymbolSeminorm:
    m: float
    rho: float
    value: float


@dataclass(frozen=True)
class GoodUnknowns:
    U_s: np.ndarray
    theta_s: np.ndarray
    zeta_s: np.ndarray
    s: float


# ----------------------------------------------------------------------
# quantization


def _flat_k(grid: SpectralGrid) -> np.ndarray:
    return grid.k.reshape(grid.dim, -1)


def _index_vectors(grid: SpectralGrid) -> np.ndarray:
    """Integer frequency indices, shape (dim, npoints)."""
    axes = [np.fft.fftfreq(grid.n, 1.0 / grid.n).astype(int)] * grid.dim
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(grid.dim, -1)


def _shift_sum(grid: SpectralGrid, coef: np.ndarray, low: np.ndarray, active: np.ndarray, chunk: int) -> np.ndarray:
    """sum over active input modes eta of coef[eta] * e^{i eta x} * low[eta](x), padded grid."""
    pg = grid.padded()
    kflat = _flat_k(grid)
    xp = pg.x.reshape(grid.dim, -1)
    acc = np.zeros(pg.npoints, dtype=complex)
    for start in range(0, active.size, chunk):
        sel = active[start : start + chunk]
        lowp = _resize_spectrum(low[start : start + chunk], grid.n, pg.n, grid.dim)
        lowx = np.fft.ifftn(lowp, axes=grid.axes).reshape(sel.size, -1) * pg.npoints
        phase = np.exp(1j * (kflat[:, sel].T @ xp))
        acc += np.einsum("m,mx->x", coef[sel], phase * lowx)
    return acc.reshape(pg.shape)


def _finish(grid: SpectralGrid, acc: np.ndarray, real: bool) -> np.ndarray:
    pg = grid.padded()
    vh = np.fft.fftn(acc)
    out = np.fft.ifftn(_resize_spectrum(vh, pg.n, grid.n, grid.dim)) * (grid.n / pg.n) ** grid.dim
    return out.real if real else out


def _rel_ratio(grid: SpectralGrid, eta_abs: np.ndarray) -> np.ndarray:
    """|theta| / |eta| for all theta on the grid and the given eta moduli: (M, *shape)."""
    return grid.kabs[None] / eta_abs.reshape((-1,) + (1,) * grid.dim)


def paraproduct(grid: SpectralGrid, a: np.ndarray, u: np.ndarray, chunk: int = 256) -> np.ndarray:
    """T_a u.

    Input modes are grouped by their modulus |eta|; within a group the
    low-pass of ``a`` is shared, so the cost is one transform per distinct
    modulus.
    """
    a = grid.check(a)
    u = grid.check(u)
    uh = np.fft.fftn(u, axes=grid.axes) / grid.npoints
    ah = np.fft.fftn(a, axes=grid.axes) / grid.npoints
    kabs = grid.kabs.ravel()
    psi = psi_cut(kabs)
    psi[grid.nyquist.ravel()] = 0.0
    active = np.nonzero(psi > 0)[0]
    if active.size == 0:
        return np.zeros(grid.shape)
    radii, inverse = np.unique(np.round(kabs[active], 12), return_inverse=True)
    lows = chi_ratio(_rel_ratio(grid, radii)) * ah[None]
    coef = psi * uh.ravel()
    pg = grid.padded()
    xp = pg.x.reshape(grid.dim, -1)
    kflat = _flat_k(grid)
    acc = np.zeros(pg.npoints, dtype=complex)
    for start in range(0, radii.size, chunk):
        stop = min(start + chunk, radii.size)
        lowp = _resize_spectrum(lows[start:stop], grid.n, pg.n, grid.dim)
        lowx = np.fft.ifftn(lowp, axes=grid.axes).reshape(stop - start, -1) * pg.npoints
        mask = (inverse >= start) & (inverse < stop)
        sel = active[mask]
        phase = np.exp(1j * (kflat[:, sel].T @ xp)) * coef[sel][:, None]
        acc += np.einsum("mx,mx->x", phase, lowx[inverse[mask] - start])
    real = np.isrealobj(a) and np.isrealobj(u)
    return _finish(grid, acc.reshape(pg.shape), real)


def remainder(grid: SpectralGrid, a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Bony remainder R(a, u) = a u - T_a u - T_u a with a dealiased product."""
    return product(grid, a, u) - paraproduct(grid, a, u) - paraproduct(grid, u, a)


def paradiff_apply(grid: SpectralGrid, sym: Symbol, u: np.ndarray, chunk: int = 256) -> np.ndarray:
    """T_sym u for an x-dependent symbol.

    The symbol is sampled at each active input wavevector eta; its
    x-dependence is transformed and low-passed with chi(., eta) before being
    multiplied back onto the input mode.
    """
    u = grid.check(u)
    uh = np.fft.fftn(u, axes=grid.axes).ravel() / grid.npoints
    kflat = _flat_k(grid)
    kabs = grid.kabs.ravel()
    psi = psi_cut(kabs)
    psi[grid.nyquist.ravel()] = 0.0
    active = np.nonzero((psi > 0) & (np.abs(uh) > 0))[0]
    pg = grid.padded()
    acc = np.zeros(pg.shape, dtype=complex)
    for start in range(0, active.size, chunk):
        sel = active[start : start + chunk]
        vals = np.asarray(sym(kflat[:, sel]), dtype=complex)
        if vals.shape != (sel.size,) + grid.shape:
            raise ValueError("symbol must be sampled on the surface grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("symbol is not finite at an active wavenumber")
        sh = np.fft.fftn(vals, axes=grid.axes) / grid.npoints
        sh = sh * chi_ratio(_rel_ratio(grid, kabs[sel]))
        coef = np.zeros(uh.size, dtype=complex)
        coef[sel] = psi[sel] * uh[sel]
        acc += _shift_sum(grid, coef, sh, sel, chunk)
    real = np.isrealobj(u) and sym.hermitian
    return _finish(grid, acc, real)


def paradiff_apply_dense(grid: SpectralGrid, sym: Symbol, u: np.ndarray) -> np.ndarray:
    """Reference double sum over (theta, eta) pairs; only for small grids."""
    u = grid.check(u)
    N = grid.npoints
    uh = np.fft.fftn(u, axes=grid.axes).ravel() / N
    idx = _index_vectors(grid)
    kflat = _flat_k(grid)
    half = grid.n // 2
    out = np.zeros(N, dtype=complex)
    lookup = {tuple(idx[:, m]): m for m in range(N)}
    for e in range(N):
        if not uh[e] or grid.nyquist.ravel()[e]:
            continue
        ke = kflat[:, e]
        r = float(np.sqrt(np.sum(ke**2)))
        w = float(psi_cut(r))
        if w == 0.0:
            continue
        sh = np.fft.fftn(np.asarray(sym(ke[:, None]))[0], axes=grid.axes).ravel() / N
        for t in range(N):
            kt = kflat[:, t]
            c = float(chi_ratio(np.sqrt(np.sum(kt**2)) / r))
            if c == 0.0:
                continue
            xi = idx[:, t] + idx[:, e]
            if np.any(np.abs(xi) >= half):
                continue
            out[lookup[tuple(xi)]] += c * sh[t] * w * uh[e]
    res = np.fft.ifftn(out.reshape(grid.shape) * N, axes=grid.axes)
    return res.real if (np.isrealobj(u) and sym.hermitian) else res


def multiplier_symbol(grid: SpectralGrid, fn: Callable[[np.ndarray], np.ndarray], order: float, name: str = "") -> Symbol:
    """x-independent symbol from a function of the wavevector array (dim, M)."""

    def evaluate(xi):
        vals = np.asarray(fn(xi))
        return np.broadcast_to(vals.reshape((-1,) + (1,) * grid.dim), (xi.shape[1],) + grid.shape)

    return Symbol(order, evaluate, np.inf, name)


def field_symbol(grid: SpectralGrid, a: np.ndarray, name: str = "") -> Symbol:
    """Order-zero symbol a(x) independent of xi (so that T_sym = T_a)."""
    a = grid.check(a)

    def evaluate(xi):
        return np.broadcast_to(a, (xi.shape[1],) + a.shape)

    return Symbol(0.0, evaluate, 0.0, name)


# ----------------------------------------------------------------------
# water-wave symbols


def _dot(vec: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """vec (dim, *X) against xi (dim, M) -> (M, *X)."""
    return np.tensordot(xi.T, vec, axes=(1, 0))


def _bcast(v: np.ndarray, ndim_x: int) -> np.ndarray:
    return v.reshape((-1,) + (1,) * ndim_x)


def dn_symbol(grid: SpectralGrid, eta: np.ndarray) -> Symbol:
    """Principal symbol sqrt((1+|grad eta|^2)|xi|^2 - (grad eta . xi)^2)."""
    zeta = grid.grad(grid.check(eta))
    zz = np.sum(zeta**2, axis=0)

    def evaluate(xi):
        xi2 = _bcast(np.sum(xi**2, axis=0), grid.dim)
        val = (1.0 + zz[None]) * xi2 - _dot(zeta, xi) ** 2
        return np.sqrt(np.maximum(val, 0.0))

    return Symbol(1.0, evaluate, 0.0, "lambda")


def symmetrizer_symbols(grid: SpectralGrid, a: np.ndarray, lam: Symbol) -> tuple[Symbol, Symbol]:
    """Symbols sqrt(a lambda) (order 1/2) and sqrt(a / lambda) (order -1/2)."""
    a = grid.check(a)
    amin = float(np.min(a))
    if not amin > 0:
        raise RayleighTaylorError(f"Taylor coefficient not positive (min {amin:.3e})")

    def gam(xi):
        return np.sqrt(a[None] * lam(xi))

    def q(xi):
        return np.sqrt(a[None] / lam(xi))

    return Symbol(0.5, gam, lam.regularity, "gamma"), Symbol(-0.5, q, lam.regularity, "q")


def good_unknowns(grid: SpectralGrid, V: np.ndarray, B: np.ndarray, eta: np.ndarray, a: np.ndarray, s: float) -> GoodUnknowns:
    """U_s = <D>^s V + T_zeta <D>^s B and theta_s = T_q <D>^s zeta, zeta = grad eta.

    ``V`` carries a leading axis of length ``dim``; so do the outputs.
    """
    V = np.asarray(V).reshape((grid.dim,) + grid.shape)
    zeta = grid.grad(eta)
    _, q = symmetrizer_symbols(grid, a, dn_symbol(grid, eta))
    Bs = japanese(grid, B, s)
    U = np.array([japanese(grid, V[i], s) + paraproduct(grid, zeta[i], Bs) for i in range(grid.dim)])
    zeta_s = np.array([japanese(grid, zeta[i], s) for i in range(grid.dim)])
    theta = np.array([paradiff_apply(grid, q, zeta_s[i]) for i in range(grid.dim)])
    return GoodUnknowns(U, theta, zeta_s, s)


def decoupling_symbols(alpha: np.ndarray, beta: np.ndarray) -> tuple[Symbol, Symbol, float]:
    """Factorization symbols of the flattened operator.

    ``alpha`` has shape ``X`` (any strip sample set) and ``beta`` shape
    ``(dim, *X)``.  Returns ``(a, A, c)`` with
    ``a = (-i beta.xi - sqrt(4 alpha |xi|^2 - (beta.xi)^2)) / 2``,
    ``A = (-i beta.xi + sqrt(...)) / 2`` and ``c`` the ellipticity constant,
    ``Re(-a) = Re(A) >= c |xi|``.  These are the two roots of
    ``X^2 + i (beta.xi) X - alpha |xi|^2``, so ``(d_z - a)(d_z - A)`` has the
    principal symbol of ``d_z^2 + alpha Delta + beta.grad d_z``.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    nd = alpha.ndim
    # min over unit xi of 4 alpha - (beta.xi)^2 is 4 alpha - |beta|^2
    disc_unit = 4 * alpha - np.sum(beta**2, axis=0)
    if not np.all(disc_unit > 0):
        raise EllipticityError("nonpositive discriminant in the flattened operator")
    c = float(np.min(np.sqrt(disc_unit))) / 2.0

    def parts(xi):
        xi2 = _bcast(np.sum(xi**2, axis=0), nd)
        bx = _dot(beta, xi)
        disc = 4 * alpha[None] * xi2 - bx**2
        if np.any(disc[xi2.reshape(-1) > 0] <= 0):
            raise EllipticityError("nonpositive discriminant in the flattened operator")
        return 1j * bx, np.sqrt(np.maximum(disc, 0.0))

    def a_minus(xi):
        ib, root = parts(xi)
        return 0.5 * (-ib - root)

    def a_plus(xi):
        ib, root = parts(xi)
        return 0.5 * (-ib + root)

    return Symbol(1.0, a_minus, 0.0, "a"), Symbol(1.0, a_plus, 0.0, "A"), c


# ----------------------------------------------------------------------
# seminorm


def symbol_seminorm(grid: SpectralGrid, sym: Symbol, rho: float = 0.0, xi_samples: np.ndarray | None = None,
                    rel_step: float = 1e-2, points: int | None = None) -> SymbolSeminorm:
    """M^m_rho: sup over |alpha| <= 3d/2 + 1 + rho and |xi| >= 1/2 of
    ||(1+|xi|)^(|alpha|-m) d_xi^alpha sym(., xi)||_{W^{rho,inf}}.

    xi-derivatives use nested centered differences with step
    ``rel_step * |xi|``.  The default sample set is every grid wavevector
    with |xi| >= 1/2 together with |xi| = 1/2 along each axis.
    """
    d = grid.dim
    if xi_samples is None:
        kf = _flat_k(grid)
        kf = kf[:, np.sqrt(np.sum(kf**2, axis=0)) >= 0.5]
        extra = 0.5 * np.eye(d)
        xi_samples = np.concatenate([kf, extra, -extra], axis=1)
    xi_samples = np.asarray(xi_samples, dtype=float)
    max_order = int(np.floor(1.5 * d + 1 + rho))
    norms = np.sqrt(np.sum(xi_samples**2, axis=0))
    steps = rel_step * norms
    best = 0.0
    for order in range(max_order + 1):
        for alpha in itertools.combinations_with_replacement(range(d), order):
            deriv = _centered(sym, xi_samples, steps, list(alpha))
            weight = (1.0 + norms) ** (order - sym.order)
            for m in range(xi_samples.shape[1]):
                f = weight[m] * deriv[m]
                if rho == 0:
                    val = sup_norm(grid, f, points)
                else:
                    val = holder_norm(grid, np.real(f), rho, points) + holder_norm(grid, np.imag(f), rho, points)
                best = max(best, val)
    return SymbolSeminorm(sym.order, rho, best)


def _centered(sym: Symbol, xi: np.ndarray, steps: np.ndarray, alpha: list) -> np.ndarray:
    if not alpha:
        return np.asarray(sym(xi))
    ax = alpha[0]
    shift = np.zeros_like(xi)
    shift[ax] = steps
    plus = _centered(sym, xi + shift, steps, alpha[1:])
    minus = _centered(sym, xi - shift, steps, alpha[1:])
    return (plus - minus) / (2 * steps).reshape((-1,) + (1,) * (plus.ndim - 1))
