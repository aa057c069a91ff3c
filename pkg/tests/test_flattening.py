import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from wwblowup.flattening import (FlatteningError, build_eta_star, cheb_diff, cheb_nodes, flatten,
                                 harmonicity_residual)
from wwblowup.spectral import SpectralGrid, sup_norm


def test_chebyshev_derivative_exact_on_polynomials():
    t = cheb_nodes(9)
    D = cheb_diff(9)
    assert t[0] == 1 and t[-1] == -1
    assert np.allclose(D @ t**5, 5 * t**4, atol=1e-11)
    assert np.allclose(D @ np.ones(9), 0, atol=1e-12)


def test_eta_star_examples():
    g = SpectralGrid(32)
    star, nu = build_eta_star(g, np.zeros(32), 0.8)
    assert np.allclose(star, -0.2)
    star, _ = build_eta_star(g, np.full(32, 0.3), 1.0, nu=0.5)
    # constant surface: <D> = 1 on the mean, so the smoothed copy is 0.3 e^{-0.5}
    assert np.allclose(star, -0.25 + 0.3 * math.exp(-0.5), atol=1e-14)
    eta = 0.1 * np.cos(3 * g.x[0])
    star, nu = build_eta_star(g, eta, 1.0, nu=0.2)
    assert np.allclose(star, -0.25 + math.exp(-0.2 * math.sqrt(10)) * eta, atol=1e-14)
    assert sup_norm(g, eta - star - 0.25) <= 0.2


def test_boundary_traces_of_map():
    g = SpectralGrid(32)
    eta = 0.1 * np.cos(g.x[0]) + 0.05 * np.sin(2 * g.x[0])
    dom = flatten(g, eta, 1.0, 24, 16)
    assert np.allclose(dom.rho[0], eta, atol=1e-12)
    assert np.allclose(dom.rho[dom.n_upper - 1], dom.eta_star, atol=1e-12)
    assert np.allclose(dom.rho[dom.n_upper], dom.eta_star, atol=1e-12)
    assert np.allclose(dom.rho[-1], -1.0, atol=1e-12)
    assert dom.z[-1] == pytest.approx(-1 - dom.zl)


def test_flat_surface_coefficients():
    g = SpectralGrid(16)
    depth = 2.0
    dom = flatten(g, np.zeros(16), depth, 12, 8)
    h = depth
    zu = dom.z[: dom.n_upper, None]
    assert np.allclose(dom.rho[dom.upper], zu * h / 4, atol=1e-14)
    assert np.allclose(dom.alpha[dom.upper], h**2 / 16, atol=1e-14)
    assert np.allclose(dom.beta, 0, atol=1e-14)
    assert np.allclose(dom.gamma, 0, atol=1e-14)
    # upper block has d_z rho = h/4, the stretched lower block d_z rho = 1
    assert dom.jump == pytest.approx(abs(h / 4 - 1), abs=1e-14)


def test_alpha_on_slice_with_flat_gradient():
    g = SpectralGrid(64)
    x = g.x[0]
    dom = flatten(g, 0.1 * np.cos(x), 1.0, 16, 8)
    # grad rho vanishes at x = 0 (node 0) for every z
    assert np.allclose(dom.grad_rho[0, :, 0], 0, atol=1e-12)
    assert np.allclose(dom.alpha[:, 0], dom.rho_z[:, 0] ** 2, rtol=1e-12)
    assert np.allclose(dom.beta[0, :, 0], 0, atol=1e-12)


def test_coefficients_against_symbolic_map():
    g = SpectralGrid(32)
    A = 0.01
    dom = flatten(g, A * np.cos(g.x[0]), 1.0, 20, 12)
    X, Z = sp.symbols("x z", real=True)
    r2 = sp.sqrt(2)
    star = -sp.Rational(1, 4) * dom.h + sp.exp(-dom.nu * r2) * A * sp.cos(X)
    rho = (1 + Z) * sp.exp(dom.delta * r2 * Z) * A * sp.cos(X) - Z * star
    rz, rx = sp.diff(rho, Z), sp.diff(rho, X)
    q = 1 + rx**2
    alpha = rz**2 / q
    beta = -2 * rz * rx / q
    gamma = (sp.diff(rho, Z, 2) + alpha * sp.diff(rho, X, 2) + beta * sp.diff(rx, Z)) / rz
    xs, zs = np.meshgrid(g.x[0], dom.z[dom.upper])
    for expr, arr in ((rho, dom.rho), (alpha, dom.alpha), (beta, dom.beta[0]), (gamma, dom.gamma)):
        f = sp.lambdify((X, Z), expr, "numpy")
        assert np.allclose(np.broadcast_to(f(xs, zs), xs.shape), arr[dom.upper], atol=1e-8)


def test_gamma_consistency():
    g = SpectralGrid(64)
    dom = flatten(g, 0.2 * np.cos(g.x[0]) + 0.1 * np.sin(3 * g.x[0]), 1.0, 24, 16)
    lhs = dom.gamma * dom.rho_z
    rhs = dom.rho_zz + dom.alpha * dom.lap_rho + dom.beta[0] * dom.grad_rho_z[0]
    assert np.allclose(lhs, rhs, atol=1e-12)
    # z-derivatives in closed form agree with collocation inside each block
    assert np.allclose(dom.d_z(dom.rho)[dom.upper], dom.rho_z[dom.upper], atol=1e-8)
    assert np.allclose(dom.d_z(dom.rho)[dom.lower], dom.rho_z[dom.lower], atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.floats(min_value=0.05, max_value=0.4))
def test_map_properties_random_surfaces(seed, amp):
    g = SpectralGrid(32)
    rng = np.random.default_rng(seed)
    eta = sum(rng.normal() * np.cos(k * g.x[0] + rng.uniform(0, 6.3)) / k**2 for k in range(1, 6))
    eta = amp * eta / np.max(np.abs(eta))
    depth = 1.0
    dom = flatten(g, eta, depth, 24, 16)
    h = depth + eta.min()
    assert dom.h == pytest.approx(h)
    assert np.min(dom.rho_z) >= min(1.0, h / 5) - 1e-12
    assert np.all(dom.alpha > 0)
    gap = sup_norm(g, eta - dom.eta_star - h / 4)
    assert gap <= h / 5 + 1e-12
    assert np.all(dom.eta_star > -depth)
    # rho is increasing in z, so the map is one-to-one on each vertical line
    assert np.all(np.diff(dom.rho, axis=0) <= 1e-14)


def test_upper_map_is_harmonic_in_physical_variables():
    g = SpectralGrid(64)
    dom = flatten(g, 0.15 * np.cos(g.x[0]), 1.0, 32, 16)
    assert harmonicity_residual(dom) < 1e-6


def test_surface_touching_bottom_raises():
    g = SpectralGrid(16)
    with pytest.raises(FlatteningError):
        flatten(g, -1.2 * np.ones(16), 1.0)
    with pytest.raises(FlatteningError):
        build_eta_star(g, np.zeros(16), 0.0)


def test_two_dimensional_map():
    g = SpectralGrid(16, dim=2)
    x, y = g.x
    eta = 0.1 * np.cos(x) * np.cos(y)
    dom = flatten(g, eta, 1.0, 16, 8)
    assert dom.rho.shape == (24, 16, 16)
    assert dom.beta.shape == (2, 24, 16, 16)
    assert np.allclose(dom.rho[0], eta, atol=1e-12)
    assert np.min(dom.rho_z) >= dom.floor
