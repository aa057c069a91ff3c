"""Straightening of the fluid layer onto a fixed strip.

The upper strip ``z in [-1, 0]`` is mapped by

    rho(x, z) = (1 + z) exp(delta z <D>) eta(x) - z eta_star(x),

where ``eta_star = -h/4 + exp(-nu <D>) eta`` is a smoothed copy of the
surface lying inside the fluid.  Below ``z = -1`` an affine block
``z in [-1 - Zl, -1]`` reaches the flat bottom ``y = -H``:

    rho(x, z) = eta_star(x) + (z + 1) (eta_star(x) + H) / Zl,
    Zl = min_x (eta_star + H),

so that ``d_z rho >= 1`` there and the bottom is the fixed node ``z = -1 - Zl``.
Derivatives of ``rho`` in ``z`` are exact (closed form); in ``x`` spectral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralGrid, fourier_multiplier, sup_norm

# Layer fractions used by the construction; not tunable.
STAR_OFFSET = 0.25      # eta - eta_star = h/4 + O(h/5)
SMOOTHING_BUDGET = 0.2  # nu ||eta||_{W^{1,inf}} <= h/5
JACOBIAN_FLOOR = 0.2    # d_z rho >= min(1, h/5)
DELTA_BASE = 0.1
MAX_HALVINGS = 8


class FlatteningError(ValueError):
    """The straightening map could not be built (surface too close to the bottom)."""


def cheb_nodes(n: int) -> np.ndarray:
    """Chebyshev-Gauss-Lobatto nodes on [-1, 1], decreasing from 1."""
    return np.cos(np.pi * np.arange(n) / (n - 1))


def cheb_diff(n: int) -> np.ndarray:
    """Collocation derivative matrix on the decreasing Gauss-Lobatto nodes."""
    t = cheb_nodes(n)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    dt = t[:, None] - t[None, :]
    D = np.outer(c, 1.0 / c) / (dt + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return D


def w1inf_norm(grid: SpectralGrid, eta: np.ndarray) -> float:
    g = grid.grad(eta)
    return float(np.max(np.abs(eta)) + np.max(np.sqrt(np.sum(g**2, axis=0))))


def default_nu(grid: SpectralGrid, eta: np.ndarray, h: float) -> float:
    return min(SMOOTHING_BUDGET * h / max(w1inf_norm(grid, eta), np.finfo(float).eps), 1.0)


def build_eta_star(grid: SpectralGrid, eta: np.ndarray, h: float, depth: float | None = None,
                   nu: float | None = None) -> tuple[np.ndarray, float]:
    """Smoothed interior boundary eta_star = -h/4 + exp(-nu <D>) eta."""
    if h <= 0:
        raise FlatteningError(f"strip width must be positive (h = {h:.3e})")
    if nu is None:
        nu = default_nu(grid, eta, h)
    for _ in range(MAX_HALVINGS + 1):
        star = -STAR_OFFSET * h + fourier_multiplier(grid, eta, np.exp(-nu * grid.kjap))
        gap = sup_norm(grid, eta - star - STAR_OFFSET * h)
        ok_gap = gap <= SMOOTHING_BUDGET * h
        ok_bottom = depth is None or float(np.min(star)) > -depth
        if ok_gap and ok_bottom:
            return star, nu
        nu *= 0.5
    raise FlatteningError("no smoothing parameter keeps eta_star between surface and bottom")


@dataclass(frozen=True)
class FlattenedDomain:
    """Strip samples of the straightening map and the flattened coefficients.

    Arrays on the strip have shape ``(nz, *grid.shape)``; vector quantities
    carry a leading axis of length ``dim``.  Rows ``0..n_upper-1`` form the
    upper block (z from 0 down to -1), the remaining rows the lower block
    (z from -1 down to the bottom); the interface appears in both blocks.
    """

    grid: SpectralGrid
    z: np.ndarray
    n_upper: int
    zl: float
    h: float
    depth: float
    delta: float
    nu: float
    eta: np.ndarray
    eta_star: np.ndarray
    rho: np.ndarray
    rho_z: np.ndarray
    rho_zz: np.ndarray
    grad_rho: np.ndarray
    grad_rho_z: np.ndarray
    lap_rho: np.ndarray
    dz: np.ndarray
    alpha: np.ndarray = field(default=None)
    beta: np.ndarray = field(default=None)
    gamma: np.ndarray = field(default=None)
    floor: float = 0.0
    jump: float = 0.0

    @property
    def nz(self) -> int:
        return self.z.size

    @property
    def upper(self) -> slice:
        return slice(0, self.n_upper)

    @property
    def lower(self) -> slice:
        return slice(self.n_upper, self.nz)

    def d_z(self, v: np.ndarray) -> np.ndarray:
        """Blockwise collocation derivative in z (one-sided at the interface)."""
        flat = v.reshape(self.nz, -1)
        return (self.dz @ flat).reshape(v.shape)

    def lambda1(self, v: np.ndarray) -> np.ndarray:
        """(1/d_z rho) d_z: the vertical physical derivative."""
        return self.d_z(v) / self.rho_z

    def lambda2(self, v: np.ndarray) -> np.ndarray:
        """grad_x - (grad_x rho / d_z rho) d_z: horizontal physical derivatives."""
        vz = self.d_z(v)
        return self.grid.grad(v) - self.grad_rho * (vz / self.rho_z)[None]


def _z_nodes(n_upper: int, n_lower: int, zl: float):
    tu = cheb_nodes(n_upper)
    tl = cheb_nodes(n_lower)
    zu = (tu - 1.0) / 2.0
    zlow = -1.0 + (tl - 1.0) / 2.0 * zl
    du = 2.0 * cheb_diff(n_upper)
    dl = (2.0 / zl) * cheb_diff(n_lower)
    dz = np.zeros((n_upper + n_lower,) * 2)
    dz[:n_upper, :n_upper] = du
    dz[n_upper:, n_upper:] = dl
    return np.concatenate([zu, zlow]), dz


def build_rho(grid: SpectralGrid, eta: np.ndarray, eta_star: np.ndarray, delta: float | None, depth: float,
              h: float, n_upper: int = 48, n_lower: int = 32, nu: float = float("nan")) -> FlattenedDomain:
    """Sample the two-piece map on the strip, halving delta until d_z rho >= min(1, h/5)."""
    eta = grid.check(eta)
    if delta is None:
        delta = DELTA_BASE / max(1.0, w1inf_norm(grid, eta))
    floor = min(1.0, JACOBIAN_FLOOR * h)
    w = eta_star + depth
    zl = float(np.min(w))
    if zl <= 0:
        raise FlatteningError("eta_star reaches the bottom")
    z, dz = _z_nodes(n_upper, n_lower, zl)
    zu = z[:n_upper].reshape((-1,) + (1,) * grid.dim)
    s = (z[n_upper:] + 1.0).reshape((-1,) + (1,) * grid.dim)

    eh = np.fft.fftn(eta, axes=grid.axes)
    ks = grid.kjap
    grad_star = grid.grad(eta_star)
    lap_star = grid.laplacian(eta_star)
    # lower block does not depend on delta
    rho_l = eta_star[None] + s * w[None] / zl
    rho_z_l = np.broadcast_to(w[None] / zl, rho_l.shape)
    grad_l = grad_star[:, None] * (1.0 + s / zl)[None]
    grad_z_l = np.broadcast_to(grad_star[:, None] / zl, grad_l.shape)
    lap_l = lap_star[None] * (1.0 + s / zl)

    for _ in range(MAX_HALVINGS + 1):
        mult = np.exp(delta * zu * ks[None])
        shat = mult * eh[None]
        E = np.fft.ifftn(shat, axes=grid.axes).real
        Ez = np.fft.ifftn(delta * ks * shat, axes=grid.axes).real
        Ezz = np.fft.ifftn((delta * ks) ** 2 * shat, axes=grid.axes).real
        rho_z_u = E + (1 + zu) * Ez - eta_star[None]
        if np.min(rho_z_u) >= floor:
            break
        delta *= 0.5
    else:
        raise FlatteningError(f"d_z rho falls below {floor:.3e} after {MAX_HALVINGS} halvings")

    rho_u = (1 + zu) * E - zu * eta_star[None]
    rho_zz_u = 2 * Ez + (1 + zu) * Ezz
    gE = np.array([np.fft.ifftn(1j * grid.k_odd[i] * shat, axes=grid.axes).real for i in range(grid.dim)])
    gEz = np.array([np.fft.ifftn(1j * grid.k_odd[i] * delta * ks * shat, axes=grid.axes).real
                    for i in range(grid.dim)])
    lapE = np.fft.ifftn(-(grid.kabs**2) * shat, axes=grid.axes).real
    grad_u = (1 + zu)[None] * gE - zu[None] * grad_star[:, None]
    grad_z_u = gE + (1 + zu)[None] * gEz - grad_star[:, None]
    lap_u = (1 + zu) * lapE - zu * lap_star[None]

    rho = np.concatenate([rho_u, rho_l])
    rho_z = np.concatenate([rho_z_u, rho_z_l])
    if np.min(rho_z) < floor:
        raise FlatteningError(f"d_z rho falls below {floor:.3e}")
    jump = float(np.max(np.abs(rho_z_u[-1] - rho_z_l[0])))
    return FlattenedDomain(
        grid=grid, z=z, n_upper=n_upper, zl=zl, h=h, depth=depth, delta=delta, nu=nu,
        eta=eta, eta_star=eta_star, rho=rho, rho_z=rho_z,
        rho_zz=np.concatenate([rho_zz_u, np.zeros_like(rho_l)]),
        grad_rho=np.concatenate([grad_u, grad_l], axis=1),
        grad_rho_z=np.concatenate([grad_z_u, grad_z_l], axis=1),
        lap_rho=np.concatenate([lap_u, lap_l]),
        dz=dz, floor=floor, jump=jump,
    )


def elliptic_coefficients(dom: FlattenedDomain) -> FlattenedDomain:
    """alpha = rho_z^2/(1+|grad rho|^2), beta = -2 rho_z grad rho/(1+|grad rho|^2),
    gamma = (rho_zz + alpha lap rho + beta . grad rho_z) / rho_z."""
    q = 1.0 + np.sum(dom.grad_rho**2, axis=0)
    alpha = dom.rho_z**2 / q
    beta = -2.0 * dom.rho_z[None] * dom.grad_rho / q[None]
    gamma = (dom.rho_zz + alpha * dom.lap_rho + np.sum(beta * dom.grad_rho_z, axis=0)) / dom.rho_z
    if not np.all(alpha > 0):
        raise FlatteningError("flattened operator is not elliptic")
    return _replace(dom, alpha=alpha, beta=beta, gamma=gamma)


def _replace(dom: FlattenedDomain, **kw) -> FlattenedDomain:
    from dataclasses import replace

    return replace(dom, **kw)


def flatten(grid: SpectralGrid, eta: np.ndarray, depth: float, n_upper: int = 48, n_lower: int = 32) -> FlattenedDomain:
    """Full construction: h = H + min eta, eta_star, rho and coefficients.

    If the Jacobian floor cannot be met by shrinking delta alone, the
    surface smoothing nu is halved as well (the default nu only bounds the
    gap by h/5, which does not by itself imply the floor).
    """
    eta = grid.check(np.asarray(eta, dtype=float))
    h = depth + float(np.min(eta))
    if not h > 0:
        raise FlatteningError(f"surface touches the bottom (h = {h:.3e})")
    nu = default_nu(grid, eta, h)
    last = None
    for _ in range(MAX_HALVINGS + 1):
        star, nu = build_eta_star(grid, eta, h, depth, nu)
        try:
            dom = build_rho(grid, eta, star, None, depth, h, n_upper, n_lower, nu)
            return elliptic_coefficients(dom)
        except FlatteningError as err:
            last = err
            nu *= 0.5
    raise FlatteningError(str(last))


def harmonicity_residual(dom: FlattenedDomain) -> float:
    """max |(Lambda1^2 + Lambda2^2) rho| over the upper strip (rho is y, hence harmonic)."""
    l1 = dom.lambda1(dom.rho)
    l2 = dom.lambda2(dom.rho)
    total = dom.lambda1(l1) + sum(dom.lambda2(l2[i])[i] for i in range(dom.grid.dim))
    return float(np.max(np.abs(total[dom.upper])))
