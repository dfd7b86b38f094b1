import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from liqdecay import linear_symbol as ls
from liqdecay import _kernels


@st.composite
def admissible_params(draw):
    mu = draw(st.floats(0.05, 5.0))
    lam = draw(st.floats(-2 * mu / 3, 1.99 * mu))
    gam = draw(st.floats(1.0, 3.0))
    return ls.FluidParams(mu, lam, gam)


def _g_matrix(p, r):
    return np.array([[0, r, 0], [-p.p_prime * r, p.nu * r * r, 0], [0, 0, r * r]])


def test_params_validation():
    with pytest.raises(ls.SymbolError):
        ls.FluidParams(0.0, 0.0, 2.0)
    with pytest.raises(ls.SymbolError):
        ls.FluidParams(1.0, -1.0, 2.0)  # 2 mu + 3 lambda < 0
    with pytest.raises(ls.SymbolError):
        ls.FluidParams(1.0, 2.0, 2.0)  # mu <= lambda / 2
    with pytest.raises(ls.SymbolError):
        ls.FluidParams(1.0, 0.0, 0.5)
    p = ls.FluidParams(1.0, 0.5, 1.4)
    assert p.p_prime == pytest.approx(1.4)
    assert p.nu == pytest.approx(2.5)


def test_assemble_symbol_shape():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    g = ls.assemble_symbol(p, 0.0)
    assert np.all(g.full() == 0)
    g = ls.assemble_symbol(p, 1.0)
    assert np.array_equal(g.full(), _g_matrix(p, 1.0))
    with pytest.raises(ls.SymbolError):
        ls.assemble_symbol(p, -1.0)


def test_char_coeffs_unit_frequency():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    assert ls.char_coeffs(p, 1.0) == pytest.approx((3.0, 4.0, 2.0))
    assert ls.lienard_chipart(p, 1.0)
    with pytest.raises(ls.SymbolError):
        ls.lienard_chipart(p, 0.0)


def test_double_root():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    r = ls.discriminant_root(p)
    assert r == pytest.approx(np.sqrt(2.0))
    bp, bm, bh = ls.eigenvalues(p, r)
    # the discriminant vanishes only up to round-off, amplified by the sqrt
    assert bp == pytest.approx(2.0, abs=1e-7)
    assert bm == pytest.approx(2.0, abs=1e-7)
    bp, bm, _ = ls.eigenvalues(p, 1.0)
    assert bp == pytest.approx(1 + 1j)
    assert bm == pytest.approx(1 - 1j)


@settings(max_examples=200, deadline=None)
@given(admissible_params(), st.floats(1e-4, 50.0))
def test_eigenvalues_satisfy_vieta(p, r):
    # elementary symmetric functions of the roots recover the coefficients,
    # which stays well conditioned even at a triple root
    a1, a2, a3 = ls.char_coeffs(p, r)
    bp, bm, bh = ls.eigenvalues(p, r)
    assert (bp + bm + bh).real == pytest.approx(a1, rel=1e-12)
    assert (bp * bm + bp * bh + bm * bh).real == pytest.approx(a2, rel=1e-12)
    assert (bp * bm * bh).real == pytest.approx(a3, rel=1e-10)
    assert abs((bp + bm).imag) < 1e-12 * a1


@settings(max_examples=300, deadline=None)
@given(admissible_params(), st.floats(1e-3, 100.0))
def test_lienard_chipart_matches_spectrum(p, r):
    ev = np.linalg.eigvals(_g_matrix(p, r))
    assert ls.lienard_chipart(p, r) == bool(np.all(ev.real > 0))


@settings(max_examples=150, deadline=None)
@given(admissible_params(), st.floats(0.0, 20.0), st.floats(0.0, 30.0))
def test_propagator_matches_expm(p, r, t):
    ref = expm(-t * _g_matrix(p, r))
    ours = ls.semigroup_matrix(p, r, t)
    assert np.allclose(ours, ref, rtol=1e-9, atol=1e-12)


def test_propagator_at_special_points():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    rstar = ls.discriminant_root(p)
    for r in (0.0, 1e-9, rstar, rstar * (1 + 1e-9), rstar * (1 - 1e-9), 1e3):
        for t in (0.0, 1e-3, 1.0, 10.0):
            ref = expm(-t * _g_matrix(p, r))
            assert np.allclose(ls.semigroup_matrix(p, r, t), ref, rtol=1e-9, atol=1e-13)
    # no overflow at long times and high frequency
    m = ls.semigroup_matrix(p, 50.0, 1e4)
    assert np.all(np.isfinite(m))


def test_semigroup_apply_and_group_property():
    p = ls.FluidParams(0.7, 0.2, 1.5)
    rng = np.random.default_rng(0)
    r = rng.uniform(0.01, 5, 40)
    v = rng.standard_normal((3, 40)) + 1j * rng.standard_normal((3, 40))
    one = ls.semigroup_apply(p, r, 0.4, ls.semigroup_apply(p, r, 0.6, v))
    both = ls.semigroup_apply(p, r, 1.0, v)
    assert np.allclose(np.array(one), np.array(both), atol=1e-13)
    ident = ls.semigroup_apply(p, r, 0.0, v)
    assert np.allclose(np.array(ident), v)
    with pytest.raises(ls.SymbolError):
        ls.semigroup_apply(p, 1.0, -1.0, (1, 0, 0))


def test_kernel_backends_agree():
    rng = np.random.default_rng(1)
    xi = np.concatenate([rng.uniform(0, 10, 500), [0.0, np.sqrt(2.0)]])
    t = rng.uniform(0, 5, xi.size)
    a = _kernels.fluid_propagator_np(xi, t, 2.0, 2.0)
    b = _kernels.fluid_propagator_nb(xi, t, 2.0, 2.0)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-14, atol=1e-15)


def test_incompressible_factor():
    p = ls.FluidParams(2.0, 0.0, 2.0)
    assert ls.pincompressible_factor(p, 1.0, 0.5) == pytest.approx(np.exp(-1.0))
    with pytest.raises(ls.SymbolError):
        ls.pincompressible_factor(p, 1.0, -0.1)


def test_lyapunov_weights_and_equivalence():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    w = ls.LyapunovWeights.default(p)
    assert w.delta1 == pytest.approx(0.5)
    w.check(p)
    with pytest.raises(ls.SymbolError):
        ls.LyapunovWeights(0.6).check(p)
    rng = np.random.default_rng(2)
    r0 = ls.default_r0(p)
    r = rng.uniform(0, r0, 200)
    v = rng.standard_normal((3, 200)) + 1j * rng.standard_normal((3, 200))
    lyap = ls.lyapunov_low(p, w, r, v)
    plain = ls.plain_quadratic(p, v)
    # the cross term is small against the plain quadratic form
    assert np.all(lyap >= 0.5 * plain) and np.all(lyap <= 1.5 * plain)
    with pytest.raises(ls.SymbolError):
        ls.lyapunov_low(p, w, r0 * 1.5, (1, 1, 1))


def test_lyapunov_is_nonincreasing():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    w = ls.LyapunovWeights.default(p)
    rng = np.random.default_rng(3)
    r = rng.uniform(1e-3, ls.default_r0(p), 50)
    v = rng.standard_normal((3, 50)) + 1j * rng.standard_normal((3, 50))
    prev = ls.lyapunov_low(p, w, r, v)
    for t in np.linspace(0.05, 20, 200):
        cur = ls.lyapunov_low(p, w, r, ls.semigroup_apply(p, r, t, v))
        assert np.all(cur <= prev * (1 + 1e-12))
        prev = cur


def test_medium_band_kappa_and_envelope():
    p = ls.FluidParams(1.0, 0.0, 2.0)
    kappa = ls.medium_band_kappa(p, 0.5, 4.0)
    assert kappa == pytest.approx(0.25, rel=1e-6)
    rng = np.random.default_rng(4)
    xi = rng.uniform(0.5, 4.0, 500)
    t = rng.uniform(0, 20, 500)
    v = rng.standard_normal((500, 3))
    count, worst = ls.envelope_violations(p, xi, t, v, kappa)
    assert count == 0 and worst <= 3.0
    with pytest.raises(ls.SymbolError):
        ls.medium_band_kappa(p, 2.0, 1.0)
