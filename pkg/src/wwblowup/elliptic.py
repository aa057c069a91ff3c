"""Flattened Laplace problem on the strip and the operators built from it.

Unknowns are collocation values on ``z_nodes x grid``.  Rows of the
discrete system:

* ``z = 0``: Dirichlet data ``v = f``;
* interior nodes of each block: ``v_zz + alpha lap v + beta . grad v_z - gamma v_z = F0``;
* interface (upper side): ``v_up = v_low``;
* interface (lower side): ``v_z / rho_z`` continuous (conormal flux, since
  ``grad rho`` and ``grad v`` are continuous across ``z = -1``);
* bottom: ``v_z = bottom_flux`` (homogeneous for the potential; ``grad rho``
  vanishes on the flat bottom so this is the conormal condition).

The system is solved by GMRES on the left-preconditioned operator; the
preconditioner is the same operator with x-averaged coefficients.  It is
diagonal in the horizontal wavenumber, and after eliminating the boundary
rows a single eigendecomposition in z inverts it for every wavenumber.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .flattening import FlattenedDomain
from .paradiff import dn_symbol, paradiff_apply
from .spectral import SpectralGrid


class EllipticBreakdown(RuntimeError):
    """The strip solve failed or its residual exceeds tolerance."""

    def __init__(self, msg: str, residual: float = float("nan")):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class StripSolution:
    values: np.ndarray
    trace: np.ndarray
    v_z: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    residual: float
    iterations: int


class StripSolver:
    """Reusable solver for one flattened domain."""

    def __init__(self, dom: FlattenedDomain, tol: float = 1e-10, maxiter: int = 400):
        self.dom = dom
        self.tol = tol
        self.maxiter = maxiter
        grid = dom.grid
        self.grid = grid
        self.raxes = tuple(range(-grid.dim, 0))
        # half-spectrum wavevectors matching rfftn over the grid axes
        kr = [k[..., : grid.n // 2 + 1] for k in grid.k_odd]
        self.k_odd_r = np.array(kr)
        self.k2_r = (grid.kabs**2)[..., : grid.n // 2 + 1]
        self.dzz = dom.dz @ dom.dz
        self._boundary_rows()
        self._build_preconditioner()

    # ------------------------------------------------------------------
    def _boundary_rows(self):
        d = self.dom
        self.top = 0
        self.iface_up = d.n_upper - 1
        self.iface_low = d.n_upper
        self.bottom = d.nz - 1
        interior = np.ones(d.nz, dtype=bool)
        interior[[self.top, self.iface_up, self.iface_low, self.bottom]] = False
        self.interior = interior

    def _build_preconditioner(self):
        """x-averaged operator, diagonalized once in z.

        With the boundary rows eliminated (they do not depend on the
        horizontal wavenumber) the averaged operator reads ``A - |k|^2 D``
        with ``D = diag(mean alpha)`` on interior rows, so one eigen
        decomposition of ``D^-1 A`` serves every wavenumber.  The averaged
        ``beta`` drift is left out; GMRES absorbs it.
        """
        d = self.dom
        axes = tuple(range(1, 1 + self.grid.dim))
        a = d.alpha.mean(axis=axes)
        c = d.gamma.mean(axis=axes)
        rz = d.rho_z.mean(axis=axes)
        dz, dzz = d.dz, self.dzz
        nz = d.nz
        A = dzz - c[:, None] * dz
        A[self.top] = 0
        A[self.top, self.top] = 1
        A[self.iface_up] = 0
        A[self.iface_up, self.iface_up] = 1
        A[self.iface_up, self.iface_low] = -1
        A[self.iface_low] = dz[self.iface_up] / rz[self.iface_up] - dz[self.iface_low] / rz[self.iface_low]
        A[self.bottom] = dz[self.bottom]
        bnd = ~self.interior
        ii = np.nonzero(self.interior)[0]
        bb = np.nonzero(bnd)[0]
        Bb_inv = np.linalg.inv(A[np.ix_(bb, bb)])
        Bi = A[np.ix_(bb, ii)]
        Aib = A[np.ix_(ii, bb)]
        S = A[np.ix_(ii, ii)] - Aib @ Bb_inv @ Bi
        Dinv = 1.0 / a[ii]
        lam, W = np.linalg.eig(Dinv[:, None] * S)
        self._pc = dict(ii=ii, bb=bb, Bb_inv=Bb_inv, Bi=Bi, Aib=Aib, Dinv=Dinv, lam=lam, W=W,
                        Winv=np.linalg.inv(W))

    # ------------------------------------------------------------------
    def _rfft(self, v):
        return np.fft.rfftn(v, axes=self.raxes)

    def _irfft(self, vh):
        return np.fft.irfftn(vh, s=self.grid.shape, axes=self.raxes)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Discrete operator including boundary rows."""
        d = self.dom
        vz = d.d_z(v)
        vzz = (self.dzz @ v.reshape(d.nz, -1)).reshape(v.shape)
        vh = self._rfft(v)
        vzh = self._rfft(vz)
        lap = self._irfft(-self.k2_r * vh)
        out = vzz + d.alpha * lap - d.gamma * vz
        for i in range(self.grid.dim):
            out += d.beta[i] * self._irfft(1j * self.k_odd_r[i] * vzh)
        out[self.top] = v[self.top]
        out[self.iface_up] = v[self.iface_up] - v[self.iface_low]
        out[self.iface_low] = vz[self.iface_up] / d.rho_z[self.iface_up] - vz[self.iface_low] / d.rho_z[self.iface_low]
        out[self.bottom] = vz[self.bottom]
        return out

    def precondition(self, r: np.ndarray) -> np.ndarray:
        pc = self._pc
        nz = self.dom.nz
        rh = self._rfft(r).reshape(nz, -1)
        rb = pc["Bb_inv"] @ rh[pc["bb"]]
        ri = pc["Dinv"][:, None] * (rh[pc["ii"]] - pc["Aib"] @ rb)
        yi = pc["Winv"] @ ri
        yi /= pc["lam"][:, None] - self.k2_r.reshape(1, -1)
        xi = pc["W"] @ yi
        out = np.empty_like(rh)
        out[pc["ii"]] = xi
        out[pc["bb"]] = rb - pc["Bb_inv"] @ (pc["Bi"] @ xi)
        return self._irfft(out.reshape((nz,) + self.k2_r.shape))

    def rhs(self, f, F0=None, bottom_flux=None) -> np.ndarray:
        d = self.dom
        shape = (d.nz,) + self.grid.shape
        b = np.zeros(shape) if F0 is None else np.array(np.broadcast_to(F0, shape), dtype=float)
        b[self.top] = f
        b[self.iface_up] = 0.0
        b[self.iface_low] = 0.0
        b[self.bottom] = 0.0 if bottom_flux is None else bottom_flux
        return b

    def solve(self, f: np.ndarray, F0: np.ndarray | None = None, bottom_flux: np.ndarray | None = None) -> StripSolution:
        d = self.dom
        f = self.grid.check(np.asarray(f, dtype=float))
        if not np.all(np.isfinite(f)):
            raise EllipticBreakdown("non-finite Dirichlet data")
        b = self.rhs(f, F0, bottom_flux)
        shape = b.shape
        pb = self.precondition(b)
        x0 = pb.copy()
        scale = np.linalg.norm(pb)
        if scale == 0.0:
            v = np.zeros(shape)
            return self._package(v, 0.0, 0)

        op = LinearOperator((b.size, b.size), matvec=lambda x: self.precondition(self.apply(x.reshape(shape))).ravel(),
                            dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = gmres(op, pb.ravel(), x0=x0.ravel(), rtol=self.tol, atol=0.0, restart=60,
                        maxiter=self.maxiter, callback=cb, callback_type="pr_norm")
        v = x.reshape(shape)
        res = float(np.linalg.norm(self.precondition(b - self.apply(v))) / scale)
        if info != 0 or not np.isfinite(res) or res > 10 * self.tol:
            raise EllipticBreakdown(f"strip solve did not converge (residual {res:.3e})", res)
        return self._package(v, res, count[0])

    def _package(self, v, res, its) -> StripSolution:
        d = self.dom
        vz = d.d_z(v)
        lam1 = vz / d.rho_z
        lam2 = self.grid.grad(v) - d.grad_rho * lam1[None]
        return StripSolution(v, v[0].copy(), vz, lam1, lam2, res, its)


# ----------------------------------------------------------------------


def solve_strip(dom: FlattenedDomain, f, F0=None, tol: float = 1e-10) -> StripSolution:
    return StripSolver(dom, tol).solve(f, F0)


def dn_from_solution(dom: FlattenedDomain, sol: StripSolution, zero_mean: bool = True) -> np.ndarray:
    """G f = [(1 + |grad rho|^2)/rho_z v_z - grad rho . grad v] at z = 0.

    The exact operator has mean-zero range; the collocation defect in the
    mean (spectrally small) is removed when ``zero_mean`` is set.
    """
    grid = dom.grid
    gr = dom.grad_rho[:, 0]
    q = 1.0 + np.sum(gr**2, axis=0)
    gv = grid.grad(sol.trace)
    G = q * sol.v_z[0] / dom.rho_z[0] - np.sum(gr * gv, axis=0)
    if zero_mean:
        G = G - G.mean()
    return G


def dirichlet_neumann(dom: FlattenedDomain, f, solver: StripSolver | None = None, tol: float = 1e-10,
                      zero_mean: bool = True) -> np.ndarray:
    solver = solver or StripSolver(dom, tol)
    return dn_from_solution(dom, solver.solve(f), zero_mean)


@dataclass(frozen=True)
class MaxPrincipleReport:
    interior_max: float
    boundary_max: float
    overshoot: float
    passed: bool


def max_principle_check(dom: FlattenedDomain, f, solver: StripSolver | None = None, tol: float = 1e-6,
                        oversample: int = 8) -> MaxPrincipleReport:
    """Compare max |v| on the strip nodes with sup |f| of the trigonometric interpolant."""
    solver = solver or StripSolver(dom)
    sol = solver.solve(f)
    vmax = float(np.max(np.abs(sol.values)))
    fmax = float(np.max(np.abs(dom.grid.resample(np.asarray(f, dtype=float), oversample * dom.grid.n))))
    over = vmax - fmax
    return MaxPrincipleReport(vmax, fmax, over, over <= tol)


def paralinearization_remainder(dom: FlattenedDomain, eta, f, solver: StripSolver | None = None) -> np.ndarray:
    """R(eta) f = G(eta) f - T_lambda f."""
    G = dirichlet_neumann(dom, f, solver)
    return G - paradiff_apply(dom.grid, dn_symbol(dom.grid, eta), np.asarray(f, dtype=float))


# ----------------------------------------------------------------------
# pressure


def _hessian_phi(dom: FlattenedDomain, sol: StripSolution):
    """Physical Hessian blocks of the potential: (H_xx (d,d,...), H_xy (d,...), H_yy)."""
    grid = dom.grid
    u = sol.lam2
    w = sol.lam1
    hxx = np.array([dom.lambda2(u[j]) for j in range(grid.dim)])  # [j][i] = d_i u_j
    hxx = 0.5 * (hxx + np.swapaxes(hxx, 0, 1))
    hxy = 0.5 * (dom.lambda2(w) + np.array([dom.lambda1(u[i]) for i in range(grid.dim)]))
    hyy = -np.einsum("ii...->...", hxx)
    return hxx, hxy, hyy


def _frob(hxx, hxy, hyy, kxx, kxy, kyy):
    return np.einsum("ij...,ij...->...", hxx, kxx) + 2 * np.sum(hxy * kxy, axis=0) + hyy * kyy


def _cube_trace(hxx, hxy, hyy):
    d = hxx.shape[0]
    n = d + 1
    full = np.zeros((n, n) + hyy.shape)
    full[:d, :d] = hxx
    full[:d, d] = hxy
    full[d, :d] = hxy
    full[d, d] = hyy
    return np.einsum("ij...,jk...,ki...->...", full, full, full)


@dataclass(frozen=True)
class PressureSolution:
    values: np.ndarray  # shifted pressure P + g rho on the strip
    a: np.ndarray
    solution: StripSolution
    hessian_phi: tuple


def pressure_solve(dom: FlattenedDomain, phi: StripSolution, eta, g: float,
                   solver: StripSolver | None = None) -> PressureSolution:
    """Shifted pressure P + g rho and the Taylor coefficient a = g - Lambda1(P + g rho)|_{z=0}."""
    solver = solver or StripSolver(dom)
    hxx, hxy, hyy = _hessian_phi(dom, phi)
    F0 = -dom.alpha * _frob(hxx, hxy, hyy, hxx, hxy, hyy)
    sol = solver.solve(g * np.asarray(eta, dtype=float), F0)
    a = g - sol.lam1[0]
    return PressureSolution(sol.values, a, sol, (hxx, hxy, hyy))


def convective_pressure_solve(dom: FlattenedDomain, phi: StripSolution, pres: PressureSolution, V, g: float,
                              solver: StripSolver | None = None) -> np.ndarray:
    """Da = a div V - d_y (d_t + grad phi . grad) P at the surface.

    Q = (d_t + grad phi . grad) P vanishes on the surface, satisfies
    Delta Q = 4 Hess(phi):Hess(P) + 2 tr(Hess(phi)^3) and d_y Q = g lap_x phi
    on the flat bottom.
    """
    solver = solver or StripSolver(dom)
    grid = dom.grid
    hxx, hxy, hyy = pres.hessian_phi
    Pv = pres.values
    pu = dom.lambda2(Pv)
    pw = dom.lambda1(Pv)
    kxx = np.array([dom.lambda2(pu[j]) for j in range(grid.dim)])
    kxx = 0.5 * (kxx + np.swapaxes(kxx, 0, 1))
    kxy = 0.5 * (dom.lambda2(pw) + np.array([dom.lambda1(pu[i]) for i in range(grid.dim)]))
    frob_phi = _frob(hxx, hxy, hyy, hxx, hxy, hyy)
    kyy = -frob_phi - np.einsum("ii...->...", kxx)
    F0 = dom.alpha * (4 * _frob(hxx, hxy, hyy, kxx, kxy, kyy) + 2 * _cube_trace(hxx, hxy, hyy))
    lap_x_phi = np.einsum("ii...->...", hxx)[-1]
    flux = dom.rho_z[-1] * g * lap_x_phi
    sol = solver.solve(np.zeros(grid.shape), F0, flux)
    V = np.asarray(V).reshape((grid.dim,) + grid.shape)
    return pres.a * grid.div(V) - sol.lam1[0]


def flat_dn_multiplier(grid: SpectralGrid, depth: float) -> np.ndarray:
    return grid.kabs * np.tanh(depth * grid.kabs)
