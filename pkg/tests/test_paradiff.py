import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wwblowup.paradiff import (EllipticityError, RayleighTaylorError, chi_ratio, decoupling_symbols, dn_symbol,
                               field_symbol, good_unknowns, multiplier_symbol, paradiff_apply, paradiff_apply_dense,
                               paraproduct, psi_cut, remainder, symbol_seminorm, symmetrizer_symbols)
from wwblowup.spectral import SpectralGrid, dealiased, japanese, sobolev_norm


def rand_field(grid, rng, modes=None):
    n = grid.n
    uh = rng.normal(size=n) + 1j * rng.normal(size=n)
    if modes is not None:
        k = np.abs(np.fft.fftfreq(n, 1.0 / n))
        uh[k > modes] = 0
    uh[n // 2] = 0
    return np.fft.ifft(uh).real * n


def test_cutoff_profiles():
    assert chi_ratio(0.1) == 1 and chi_ratio(0.2) == 0
    assert psi_cut(1.0) == 0 and psi_cut(2.0) == 1


def test_paraproduct_matches_dense_double_sum():
    g = SpectralGrid(32)
    rng = np.random.default_rng(3)
    a, u = rand_field(g, rng), rand_field(g, rng)
    fast = paraproduct(g, a, u)
    dense = paradiff_apply_dense(g, field_symbol(g, a), u)
    assert np.isrealobj(fast)
    assert np.max(np.abs(fast - dense)) < 1e-12 * np.max(np.abs(dense))


def test_paradiff_apply_matches_dense_for_lambda():
    g = SpectralGrid(32)
    x = g.x[0]
    rng = np.random.default_rng(4)
    eta = 0.2 * np.cos(x) + 0.1 * np.sin(3 * x)
    u = rand_field(g, rng)
    sym = dn_symbol(g, eta)
    assert np.max(np.abs(paradiff_apply(g, sym, u) - paradiff_apply_dense(g, sym, u))) < 1e-11


def test_two_dimensional_quantization_matches_dense():
    g = SpectralGrid(8, dim=2)
    rng = np.random.default_rng(5)
    x, y = g.x
    eta = 0.2 * np.cos(x) * np.sin(y)
    u = rng.normal(size=g.shape)
    sym = dn_symbol(g, eta)
    assert np.allclose(paradiff_apply(g, sym, u), paradiff_apply_dense(g, sym, u), atol=1e-12)


def test_low_high_paraproduct_is_the_product():
    g = SpectralGrid(64)
    x = g.x[0]
    a = np.cos(x)            # |theta| = 1
    u = np.sin(20 * x)       # |eta| = 20, ratio 0.05 <= 0.1
    assert np.allclose(paraproduct(g, a, u), a * u, atol=1e-13)
    # the reverse ordering is cut off by psi, so the Bony remainder vanishes
    assert np.allclose(paraproduct(g, u, a), 0.0, atol=1e-14)
    assert np.allclose(remainder(g, a, u), 0.0, atol=1e-12)


def test_paraproduct_with_one_is_psi_of_d():
    g = SpectralGrid(64)
    rng = np.random.default_rng(6)
    u = rand_field(g, rng)
    k = np.abs(np.fft.fftfreq(64, 1 / 64))
    expected = np.fft.ifft(psi_cut(k) * np.fft.fft(u)).real
    assert np.allclose(paraproduct(g, np.ones(64), u), expected, atol=1e-12)


def test_remainder_of_zero_and_bony_identity():
    g = SpectralGrid(32)
    rng = np.random.default_rng(7)
    a, u = rand_field(g, rng), rand_field(g, rng)
    assert np.allclose(remainder(g, np.zeros(32), u), 0.0)
    total = paraproduct(g, a, u) + paraproduct(g, u, a) + remainder(g, a, u)
    assert np.allclose(total, dealiased(g, np.multiply, a, u), atol=1e-11)


def test_remainder_of_comparable_modes_by_convolution():
    g = SpectralGrid(64)
    x = g.x[0]
    a, u = np.cos(6 * x), np.cos(5 * x)
    # |theta|/|eta| = 1.2 or 5/6: both paraproducts vanish, so R(a,u) = a u = (cos x + cos 11x)/2
    assert np.allclose(remainder(g, a, u), 0.5 * (np.cos(x) + np.cos(11 * x)), atol=1e-12)


def test_x_independent_symbol_is_a_multiplier():
    g = SpectralGrid(64)
    rng = np.random.default_rng(8)
    u = rand_field(g, rng)
    sym = multiplier_symbol(g, lambda xi: np.sqrt(1 + np.sum(xi**2, axis=0)) ** 1.5, 1.5)
    k = np.abs(np.fft.fftfreq(64, 1 / 64))
    expected = np.fft.ifft(psi_cut(k) * (1 + k**2) ** 0.75 * np.fft.fft(u)).real
    assert np.allclose(paradiff_apply(g, sym, u), expected, atol=1e-10)


def test_lambda_flat_is_abs_d():
    g = SpectralGrid(32)
    rng = np.random.default_rng(9)
    u = rand_field(g, rng)
    k = np.abs(np.fft.fftfreq(32, 1 / 32))
    expected = np.fft.ifft(psi_cut(k) * k * np.fft.fft(u)).real
    assert np.allclose(paradiff_apply(g, dn_symbol(g, np.zeros(32)), u), expected, atol=1e-11)


def test_lambda_examples():
    g2 = SpectralGrid(8, dim=2)
    lam = dn_symbol(g2, np.sin(g2.x[0]))   # grad eta = (1, 0) at the node x = y = 0
    val = lam(np.array([[0.0], [1.0]]))
    assert val[0, 0, 0] == pytest.approx(math.sqrt(2))
    g1 = SpectralGrid(16)
    lam1 = dn_symbol(g1, np.cos(g1.x[0]))
    # x = 0 is node 0 and eta'(0) = 0; in one dimension lambda = |xi| everywhere anyway
    assert np.allclose(lam1(np.array([[-3.0, 7.0]]))[:, 0], [3.0, 7.0])


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.1, max_value=10), st.floats(min_value=-5, max_value=5).filter(lambda v: abs(v) > 0.5),
       st.floats(min_value=-5, max_value=5))
def test_homogeneity(c, xi1, xi2):
    g = SpectralGrid(8, dim=2)
    x, y = g.x
    eta = 0.3 * np.sin(x) + 0.2 * np.cos(x + y)
    a = 9.81 + np.cos(y)
    lam = dn_symbol(g, eta)
    gam, q = symmetrizer_symbols(g, a, lam)
    alpha = 1.0 + 0.3 * np.cos(x)
    beta = np.array([0.2 * np.sin(y), 0.1 * np.cos(x)])
    sa, sA, _ = decoupling_symbols(alpha, beta)
    xi = np.array([[xi1], [xi2]])
    for sym in (lam, gam, q, sa, sA):
        assert np.allclose(sym(c * xi), c**sym.order * sym(xi), rtol=1e-12, atol=1e-12)


def test_symmetrizer_identities_and_error():
    g = SpectralGrid(16, dim=2)
    rng = np.random.default_rng(10)
    x, y = g.x
    eta = 0.3 * np.sin(x + 2 * y)
    a = 9.81 * (1 + 0.2 * np.cos(x))
    lam = dn_symbol(g, eta)
    gam, q = symmetrizer_symbols(g, a, lam)
    xi = rng.normal(size=(2, 20)) * 5
    assert np.allclose(gam(xi) * q(xi), a[None], rtol=1e-12)
    assert np.allclose(gam(xi) / q(xi), lam(xi), rtol=1e-12)
    flat = SpectralGrid(16)
    g0, q0 = symmetrizer_symbols(flat, np.full(16, 9.81), dn_symbol(flat, np.zeros(16)))
    assert np.allclose(g0(np.array([[4.0]])), math.sqrt(9.81 * 4))
    assert np.allclose(q0(np.array([[4.0]])), math.sqrt(9.81 / 4))
    with pytest.raises(RayleighTaylorError):
        symmetrizer_symbols(flat, np.full(16, -1.0), dn_symbol(flat, np.zeros(16)))


def test_good_unknowns_flat_and_rest():
    g = SpectralGrid(32)
    x = g.x[0]
    z = np.zeros(32)
    gu = good_unknowns(g, z[None], z, z, np.full(32, 9.81), 2.0)
    assert np.all(gu.U_s == 0) and np.all(gu.theta_s == 0)
    V = np.sin(3 * x)[None]
    B = np.cos(2 * x)
    gu = good_unknowns(g, V, B, z, np.full(32, 9.81), 2.0)
    assert np.allclose(gu.U_s[0], japanese(g, V[0], 2.0), atol=1e-12)


def test_good_unknowns_against_dense_compositions():
    g = SpectralGrid(24)
    x = g.x[0]
    eta = 0.05 * np.cos(x)
    V = (0.1 * np.sin(x) + 0.02 * np.cos(4 * x))[None]
    B = 0.1 * np.cos(x) + 0.03 * np.sin(5 * x)
    a = 9.81 - 0.3 * np.cos(x)
    s = 1.5
    gu = good_unknowns(g, V, B, eta, a, s)
    zeta = g.grad(eta)[0]
    U = japanese(g, V[0], s) + paradiff_apply_dense(g, field_symbol(g, zeta), japanese(g, B, s))
    _, q = symmetrizer_symbols(g, a, dn_symbol(g, eta))
    theta = paradiff_apply_dense(g, q, japanese(g, zeta, s))
    assert np.allclose(gu.U_s[0], U, atol=1e-12)
    assert np.allclose(gu.theta_s[0], theta, atol=1e-12)


def test_decoupling_examples():
    h = 0.8
    alpha = np.full(5, h**2 / 16)
    beta = np.zeros((1, 5))
    a, A, c = decoupling_symbols(alpha, beta)
    xi = np.array([[3.0]])
    assert np.allclose(a(xi), -(h / 4) * 3.0) and np.allclose(A(xi), (h / 4) * 3.0)
    assert c == pytest.approx(h / 4)
    with pytest.raises(EllipticityError):
        decoupling_symbols(np.full(3, 0.1), np.full((1, 3), 1.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_decoupling_factorizes_and_is_elliptic(seed):
    rng = np.random.default_rng(seed)
    rz = rng.uniform(0.2, 2.0, size=6)
    grad = rng.normal(size=(2, 6))
    n2 = np.sum(grad**2, axis=0)
    alpha = rz**2 / (1 + n2)
    beta = -2 * rz * grad / (1 + n2)
    a, A, c = decoupling_symbols(alpha, beta)
    xi = rng.normal(size=(2, 4)) * 3
    bx = np.tensordot(xi.T, beta, axes=(1, 0))
    xi2 = np.sum(xi**2, axis=0)[:, None]
    closed = 4 * rz**2 * ((1 + n2) * xi2 - np.tensordot(xi.T, grad, axes=(1, 0)) ** 2) / (1 + n2) ** 2
    disc = 4 * alpha * xi2 - bx**2
    assert np.all(closed > 0)
    assert np.allclose(disc, closed, rtol=1e-10)
    assert np.allclose(a(xi) + A(xi), -1j * bx, atol=1e-12)
    assert np.allclose(a(xi) * A(xi), -alpha * xi2, rtol=1e-10)
    assert np.all(np.real(A(xi)) >= c * np.sqrt(xi2) * (1 - 1e-12))
    assert np.all(np.real(-a(xi)) >= c * np.sqrt(xi2) * (1 - 1e-12))


def test_seminorm_of_simple_symbols():
    g = SpectralGrid(16)
    # order-zero field symbol: only alpha = 0 contributes, giving sup |a|
    a = 2.0 + np.cos(g.x[0])
    sn = symbol_seminorm(g, field_symbol(g, a))
    assert sn.value == pytest.approx(3.0)
    # |xi| on the 1D grid: (1+|xi|)^(-1)|xi| < 1, first derivative sign(xi) weighted by (1+|xi|)^0 = 1
    lam = dn_symbol(g, np.zeros(16))
    assert symbol_seminorm(g, lam).value == pytest.approx(1.0, rel=1e-9)


def _weighted_operator_norm(grid, sym, mu):
    """Exact ||T||_{H^mu -> H^(mu - m)} on the grid from the assembled matrix."""
    n = grid.n
    cols = [paradiff_apply(grid, sym, np.eye(n)[j]) for j in range(n)]
    F = np.fft.fft(np.eye(n), axis=0)
    T = F @ np.array(cols).T @ np.linalg.inv(F)
    k = grid.kjap
    M = np.diag(k ** (mu - sym.order)) @ T @ np.diag(k ** (-mu))
    return float(np.linalg.svd(M, compute_uv=False)[0])


def test_operator_norm_ratio_bounded_under_refinement():
    from wwblowup.paradiff import Symbol

    ratios = {}
    for n in (32, 64):
        g = SpectralGrid(n)
        x = g.x[0]
        vals = []
        for amp in (0.1, 0.5, 0.9):
            coef = 1.0 + amp * np.cos(x) + 0.1 * amp * np.sin(3 * x)
            sym = Symbol(1.0, lambda xi, c=coef: np.abs(xi[0])[:, None] * c[None], 0.0, "a|xi|")
            vals.append(_weighted_operator_norm(g, sym, 0.5) / symbol_seminorm(g, sym).value)
        ratios[n] = max(vals)
    assert all(np.isfinite(v) and v > 0 for v in ratios.values())
    assert ratios[64] <= 1.1 * ratios[32]
