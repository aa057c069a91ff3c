import math

import numpy as np
import pytest

from wwblowup.dynamics import NonFiniteState, SurfaceState, WaterWaveModel, surface_velocities, transport_residuals
from wwblowup.spectral import SpectralGrid

G = 9.81


def model(n=32, **kw):
    kw.setdefault("tol", 1e-12)
    return WaterWaveModel(SpectralGrid(n), G, 1.0, 24, 16, **kw)


def linear_wave(m, amp, k=1):
    x = m.grid.x[0]
    om = math.sqrt(G * k * math.tanh(k))
    return SurfaceState(amp * np.cos(k * x), amp * G / om * np.sin(k * x)), om


def test_rest_is_stationary():
    m = model(16)
    st = SurfaceState(np.zeros(16), np.zeros(16))
    out = m.step(st, 0.01)
    assert np.all(out.eta == 0) and np.all(out.psi == 0)
    assert out.t == pytest.approx(0.01)
    assert m.hamiltonian(st) == 0


def test_cfl_bound_enforced():
    m = model(32)
    st = SurfaceState(np.zeros(32), np.zeros(32))
    k = m.grid.kmax
    assert m.dt_max() == pytest.approx(2.0 / math.sqrt(G * k * math.tanh(k)))
    with pytest.raises(ValueError):
        m.step(st, 1.01 * m.dt_max())


def test_nonfinite_state_rejected():
    m = model(16)
    eta = np.zeros(16)
    eta[2] = np.inf
    with pytest.raises(NonFiniteState):
        m.evaluate(SurfaceState(eta, np.zeros(16)))


def test_gamma_prime_on_flat_surface():
    # eta = 0, psi = cos kx: B = k tanh k cos kx, V = -k sin kx, so
    # G(B) + div V = -k^2 sech^2(k) cos kx exactly
    m = model(32)
    x = m.grid.x[0]
    for k in (1, 2, 3):
        st = SurfaceState(np.zeros(32), np.cos(k * x))
        ev = m.evaluate(st)
        tr = surface_velocities(m.grid, st, ev.dn)
        gp = m.dn(st.eta, tr.B) + m.grid.div(tr.V)
        assert np.allclose(gp, -(k / math.cosh(k)) ** 2 * np.cos(k * x), atol=1e-9)


def test_small_wave_follows_linear_dispersion():
    m = model(32, integrating_factor=True)
    st, om = linear_wave(m, 1e-6)
    period = 2 * math.pi / om
    n = 20
    for _ in range(n):
        st = m.step(st, period / n)
    x = m.grid.x[0]
    # after one period the linear solution returns to its initial data
    assert np.max(np.abs(st.eta - 1e-6 * np.cos(x))) < 1e-11


def test_integrating_factor_and_rk4_agree():
    a = model(32)
    b = model(32, integrating_factor=True)
    st, _ = linear_wave(a, 0.05)
    dt = 0.2 * a.dt_max()
    sa = sb = st
    for _ in range(5):
        sa = a.step(sa, dt)
        sb = b.step(sb, dt)
    assert np.max(np.abs(sa.eta - sb.eta)) < 1e-6
    assert np.max(np.abs(sa.psi - sb.psi)) < 1e-6


def test_energy_nearly_conserved():
    m = model(32, integrating_factor=True)
    st, om = linear_wave(m, 0.05)
    H0 = m.hamiltonian(st)
    dt = 0.05
    for _ in range(20):
        st = m.step(st, dt)
    assert abs(m.hamiltonian(st) - H0) < 1e-8 * H0


def test_transport_identities_hold_along_the_flow():
    m = model(32, integrating_factor=True)
    st, _ = linear_wave(m, 0.05)
    dt = 1e-3
    window = []
    for _ in range(3):
        ev = m.evaluate(st)
        window.append((st, m.traces(ev)))
        st = m.step(st, dt, ev=ev)
    rep = transport_residuals(m, window)
    assert rep.B < 1e-4
    assert rep.V < 1e-4
    assert rep.psi < 1e-4
    # the bottom keeps gamma' away from zero in finite depth
    assert rep.gamma_prime > 1e-3


def test_two_dimensional_rest_and_step():
    g = SpectralGrid(8, dim=2)
    m = WaterWaveModel(g, G, 1.0, 12, 8)
    x, y = g.x
    st = SurfaceState(1e-3 * np.cos(x) * np.cos(y), np.zeros(g.shape))
    out = m.step(st, 0.1 * m.dt_max())
    assert out.eta.shape == (8, 8)
    assert np.max(np.abs(out.psi)) > 0


def test_surface_formulas_match_strip_traces():
    from wwblowup.dynamics import trace_defect

    m = model(64)
    x = m.grid.x[0]
    st = SurfaceState(0.2 * np.cos(x) + 0.1 * np.sin(2 * x), 0.3 * np.sin(x))
    ev = m.evaluate(st)
    assert trace_defect(ev, m.traces(ev, with_pressure=False)) < 1e-9
