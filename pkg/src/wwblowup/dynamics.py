"""Zakharov/Craig-Sulem evolution of (eta, psi) over a flat bottom.

    d_t eta = G(eta) psi
    d_t psi = -g eta - |grad psi|^2 / 2 + (grad eta . grad psi + G(eta) psi)^2 / (2 (1 + |grad eta|^2))

G is evaluated through the flattened strip solve; nonlinear products use the
3/2-padded grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .elliptic import (PressureSolution, StripSolution, StripSolver, convective_pressure_solve, dn_from_solution,
                       pressure_solve)
from .flattening import FlattenedDomain, flatten
from .spectral import SpectralGrid, dealiased, fourier_multiplier


class NonFiniteState(FloatingPointError):
    """A step produced NaN or infinite values."""


@dataclass(frozen=True)
class SurfaceState:
    eta: np.ndarray
    psi: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class TraceFields:
    V: np.ndarray      # (dim, *shape)
    B: np.ndarray
    zeta: np.ndarray   # grad eta, (dim, *shape)
    a: np.ndarray | None = None
    Da: np.ndarray | None = None

    @property
    def c_min(self) -> float:
        return float(np.min(self.a)) if self.a is not None else float("nan")


@dataclass
class Evaluation:
    """Everything computed from one state: domain, solver, potential and DN."""

    state: SurfaceState
    dom: FlattenedDomain
    solver: StripSolver
    phi: StripSolution
    dn: np.ndarray
    _pressure: PressureSolution | None = field(default=None, repr=False)


def surface_velocities(grid: SpectralGrid, state: SurfaceState, dn: np.ndarray) -> TraceFields:
    """B = (grad eta . grad psi + G psi)/(1 + |grad eta|^2), V = grad psi - B grad eta."""
    ge = grid.grad(state.eta)
    gp = grid.grad(state.psi)
    B = (np.sum(ge * gp, axis=0) + dn) / (1.0 + np.sum(ge**2, axis=0))
    V = gp - B[None] * ge
    return TraceFields(V=V, B=B, zeta=ge)


def trace_defect(ev: "Evaluation", tr: TraceFields) -> float:
    """Largest gap between the surface formulas for (V, B) and the strip-solution traces."""
    dB = np.max(np.abs(tr.B - ev.phi.lam1[0]))
    dV = np.max(np.abs(tr.V - ev.phi.lam2[:, 0]))
    return float(max(dB, dV))


class WaterWaveModel:
    """Spatial discretization plus time stepping for the surface system."""

    def __init__(self, grid: SpectralGrid, g: float = 9.81, depth: float = 1.0, nz_upper: int = 48,
                 nz_lower: int = 32, tol: float = 1e-10, integrating_factor: bool = False,
                 filter_on: bool = False, cfl: float = 2.0):
        self.grid = grid
        self.g = float(g)
        self.depth = float(depth)
        self.nz_upper = nz_upper
        self.nz_lower = nz_lower
        self.tol = tol
        self.integrating_factor = integrating_factor
        self.filter_on = filter_on
        self.cfl = cfl
        self.K = grid.kabs * np.tanh(self.depth * grid.kabs)
        self.omega = np.sqrt(self.g * self.K)
        self._filter = self._filter_profile()

    # ------------------------------------------------------------------
    def dt_max(self) -> float:
        k = self.grid.kmax
        return self.cfl / np.sqrt(self.g * k * np.tanh(k * self.depth))

    def _filter_profile(self) -> np.ndarray:
        kc = self.grid.kmax * 5.0 / 6.0
        r = np.clip((self.grid.kabs - kc) / (self.grid.kmax - kc), 0.0, None)
        return np.exp(-36.0 * r**8)

    def evaluate(self, state: SurfaceState) -> Evaluation:
        if not (np.all(np.isfinite(state.eta)) and np.all(np.isfinite(state.psi))):
            raise NonFiniteState("state is not finite")
        dom = flatten(self.grid, state.eta, self.depth, self.nz_upper, self.nz_lower)
        solver = StripSolver(dom, self.tol)
        phi = solver.solve(state.psi)
        dn = dn_from_solution(dom, phi)
        return Evaluation(state, dom, solver, phi, dn)

    def dn(self, eta: np.ndarray, f: np.ndarray) -> np.ndarray:
        dom = flatten(self.grid, eta, self.depth, self.nz_upper, self.nz_lower)
        solver = StripSolver(dom, self.tol)
        return dn_from_solution(dom, solver.solve(f))

    def rhs(self, state: SurfaceState, ev: Evaluation | None = None) -> tuple[np.ndarray, np.ndarray]:
        ev = ev or self.evaluate(state)
        grid = self.grid
        ge = grid.grad(state.eta)
        gp = grid.grad(state.psi)

        def nonlinear(dn, *comps):
            d = grid.dim
            e, p = comps[:d], comps[d:]
            ep = sum(ei * pi for ei, pi in zip(e, p))
            pp = sum(pi * pi for pi in p)
            ee = sum(ei * ei for ei in e)
            return -0.5 * pp + 0.5 * (ep + dn) ** 2 / (1.0 + ee)

        psi_t = -self.g * state.eta + dealiased(grid, nonlinear, ev.dn, *ge, *gp)
        return ev.dn, psi_t

    def hamiltonian(self, state: SurfaceState, dn: np.ndarray | None = None) -> float:
        if dn is None:
            dn = self.dn(state.eta, state.psi)
        return 0.5 * self.grid.inner(state.psi, dn) + 0.5 * self.g * self.grid.inner(state.eta, state.eta)

    # ------------------------------------------------------------------
    def pressure(self, ev: Evaluation) -> PressureSolution:
        if ev._pressure is None:
            ev._pressure = pressure_solve(ev.dom, ev.phi, ev.state.eta, self.g, ev.solver)
        return ev._pressure

    def traces(self, ev: Evaluation, with_pressure: bool = True, exact_da: bool = False) -> TraceFields:
        tr = surface_velocities(self.grid, ev.state, ev.dn)
        if not with_pressure:
            return tr
        pres = self.pressure(ev)
        Da = None
        if exact_da:
            Da = convective_pressure_solve(ev.dom, ev.phi, pres, tr.V, self.g, ev.solver)
        return replace(tr, a=pres.a, Da=Da)

    # ------------------------------------------------------------------
    def _linear_propagate(self, eh: np.ndarray, ph: np.ndarray, tau: float):
        """Exact flow of d_t eta = K psi, d_t psi = -g eta on spectra."""
        w = self.omega
        c = np.cos(w * tau)
        s = np.sin(w * tau)
        with np.errstate(invalid="ignore", divide="ignore"):
            s_over = np.where(w > 0, s / np.where(w > 0, w, 1.0), tau)
        return c * eh + self.K * s_over * ph, -self.g * s_over * eh + c * ph

    def _lin(self, u, tau):
        grid = self.grid
        e, p = self._linear_propagate(grid.fft(u[0]), grid.fft(u[1]), tau)
        return np.array([grid.ifft(e, real=True), grid.ifft(p, real=True)])

    def _F(self, u, t, ev=None):
        et, pt = self.rhs(SurfaceState(u[0], u[1], t), ev)
        return np.array([et, pt])

    def _N(self, u, t, ev=None):
        """Nonlinear remainder F(u) - L u."""
        grid = self.grid
        F = self._F(u, t, ev)
        Ku = fourier_multiplier(grid, u[1], self.K)
        return F - np.array([Ku, -self.g * u[0]])

    def step(self, state: SurfaceState, dt: float, check_cfl: bool = True,
             ev: Evaluation | None = None) -> SurfaceState:
        """One classical RK4 step (Lawson integrating factor when enabled).

        ``ev`` may carry an existing evaluation of ``state`` to reuse for the first stage.
        """
        if dt == 0:
            return state
        if check_cfl and abs(dt) > self.dt_max() * (1 + 1e-12):
            raise ValueError(f"dt = {dt:.4e} exceeds the stability bound {self.dt_max():.4e}")
        u = np.array([state.eta, state.psi])
        t = state.t
        h = dt
        if self.integrating_factor:
            k1 = self._N(u, t, ev)
            u2 = self._lin(u + 0.5 * h * k1, 0.5 * h)
            k2 = self._N(u2, t + 0.5 * h)
            u3 = self._lin(u, 0.5 * h) + 0.5 * h * k2
            k3 = self._N(u3, t + 0.5 * h)
            u4 = self._lin(u, h) + h * self._lin(k3, 0.5 * h)
            k4 = self._N(u4, t + h)
            new = self._lin(u + h / 6 * k1, h) + h / 6 * (2 * self._lin(k2 + k3, 0.5 * h) + k4)
        else:
            k1 = self._F(u, t, ev)
            k2 = self._F(u + 0.5 * h * k1, t + 0.5 * h)
            k3 = self._F(u + 0.5 * h * k2, t + 0.5 * h)
            k4 = self._F(u + h * k3, t + h)
            new = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if self.filter_on:
            new = np.array([fourier_multiplier(self.grid, new[i], self._filter) for i in range(2)])
        if not np.all(np.isfinite(new)):
            raise NonFiniteState(f"non-finite state after step at t = {t + dt:.6g}")
        return SurfaceState(new[0], new[1], t + dt)


# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    zeta: float
    psi: float
    gamma_prime: float
    B: float
    V: float


def transport_residuals(model: WaterWaveModel, window: Sequence[tuple[SurfaceState, TraceFields]]) -> ResidualReport:
    """Residuals of the transport identities at the middle of three equally spaced states.

    Uses centered differences in time and spectral gradients; reported as
    max norms.  ``zeta`` and ``gamma_prime`` contain the bottom contribution
    (not a discretization error) in finite depth.
    """
    if len(window) < 3:
        raise ValueError("need at least three consecutive states")
    (s0, t0), (s1, t1), (s2, tr2) = window[-3:]
    dt = 0.5 * (s2.t - s0.t)
    grid = model.grid

    def conv(q_prev, q_next, q_mid):
        qt = (q_next - q_prev) / (2 * dt)
        return qt + np.sum(t1.V * grid.grad(q_mid), axis=0)

    G = lambda f: model.dn(s1.eta, f)  # noqa: E731
    d = grid.dim
    zeta_res = np.array([
        conv(t0.zeta[i], tr2.zeta[i], t1.zeta[i]) - G(t1.V[i]) - t1.zeta[i] * G(t1.B) for i in range(d)
    ])
    psi_res = conv(s0.psi, s2.psi, s1.psi) - (-model.g * s1.eta + 0.5 * np.sum(t1.V**2, axis=0) + 0.5 * t1.B**2)
    gprime = G(t1.B) + grid.div(t1.V)
    B_res = conv(t0.B, tr2.B, t1.B) - (t1.a - model.g)
    V_res = np.array([conv(t0.V[i], tr2.V[i], t1.V[i]) + t1.a * t1.zeta[i] for i in range(d)])
    m = lambda v: float(np.max(np.abs(v)))  # noqa: E731
    return ResidualReport(m(zeta_res), m(psi_res), m(gprime), m(B_res), m(V_res))
