import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from euler_shell.sphere import (FOUR_PI, SolvabilityError, SphereGrid, TangentForm,
                                div_curl_solve, form_vector_convert, index, read_coeffs_csv,
                                vector_form_convert, write_coeffs_csv)


@pytest.fixture(scope="module")
def s():
    return SphereGrid(8)


def _random_coeffs(s, rng, mean_zero=False):
    c = rng.standard_normal(s.ncoef)
    if mean_zero:
        c[0] = 0.0
    return c


def test_constant_analysis(s):
    c = s.analyze(np.ones(s.size))
    assert c[0] == pytest.approx(np.sqrt(FOUR_PI), abs=1e-13)
    assert np.abs(c[1:]).max() < 1e-13


def test_roundtrip(s, rng):
    c = _random_coeffs(s, rng)
    f = s.synthesize(c)
    assert np.abs(s.synthesize(s.analyze(f)) - f).max() < 1e-12


def test_y32_against_explicit_legendre(s):
    # real Y_32 without Condon-Shortley phase: sqrt2 N P_3^2(cos th) cos(2 phi)
    x = np.cos(s.theta)
    N = np.sqrt(7 / FOUR_PI / 120.0)
    f = np.sqrt(2) * N * 15 * x * (1 - x * x) * np.cos(2 * s.phi)
    c = s.analyze(f)
    e = np.zeros(s.ncoef)
    e[index(3, 2)] = 1.0
    assert np.abs(c - e).max() < 1e-13


def test_laplacian_eigen(s):
    f = np.sqrt(3 / FOUR_PI) * np.cos(s.theta)
    assert np.abs(s.laplacian(f) + 2 * f).max() < 1e-13
    assert np.abs(s.laplacian(np.ones(s.size))).max() < 1e-12


def test_laplacian_matches_fd_order_two(s, rng):
    c = _random_coeffs(s, rng)
    th0, ph0 = 1.1, 0.7
    exact = s.evaluate(-s.eig * c, th0, ph0)[0]

    def fd(h):
        f = lambda t, p: s.evaluate(c, t, p)[0]
        st = np.sin
        dth = (st(th0 + h / 2) * (f(th0 + h, ph0) - f(th0, ph0))
               - st(th0 - h / 2) * (f(th0, ph0) - f(th0 - h, ph0))) / (h * h * st(th0))
        dph = (f(th0, ph0 + h) - 2 * f(th0, ph0) + f(th0, ph0 - h)) / (h * h * st(th0) ** 2)
        return dth + dph

    e1, e2 = abs(fd(0.02) - exact), abs(fd(0.01) - exact)
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_div_curl_zero(s):
    w = div_curl_solve(s, np.zeros(s.size), np.zeros(s.size))
    assert np.abs(w.W).max() == 0


def test_div_curl_gradient_case(s):
    u10 = np.sqrt(3 / FOUR_PI) * np.cos(s.theta)
    w = div_curl_solve(s, np.zeros(s.size), 2 * u10)
    expect = -np.sqrt(3 / FOUR_PI) * np.sin(s.theta)[:, None] * s.e_theta
    assert np.abs(w.W - expect).max() < 1e-13


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_div_curl_roundtrip(seed):
    s = SphereGrid(6)
    rng = np.random.default_rng(seed)
    chi = s.synthesize(_random_coeffs(s, rng, True))
    psi = s.synthesize(_random_coeffs(s, rng, True))
    w = div_curl_solve(s, chi, psi)
    assert np.abs(w.d() - chi).max() < 1e-10 * max(1, np.abs(chi).max())
    assert np.abs(w.codifferential() - psi).max() < 1e-10 * max(1, np.abs(psi).max())


def test_div_curl_solvability(s):
    with pytest.raises(SolvabilityError):
        div_curl_solve(s, np.zeros(s.size), np.ones(s.size))
    with pytest.raises(SolvabilityError):
        div_curl_solve(s, np.ones(s.size), np.zeros(s.size))


def test_form_vector_roundtrip_and_metric(s, rng):
    W = s.grad(s.synthesize(_random_coeffs(s, rng))) + s.rotgrad_coeffs(_random_coeffs(s, rng))
    form = TangentForm(s, W)
    vt, vp = form_vector_convert(form, 1.7)
    back = vector_form_convert(s, vt, vp, 1.7)
    assert np.abs(back.W - W).max() < 1e-14 * max(1, np.abs(W).max()) * 10
    # |v|^2 in the scaled metric equals scale^2 times the unit-sphere norm of v
    st2 = np.sin(s.theta) ** 2
    norm_G = 1.7 ** 2 * (vt ** 2 + st2 * vp ** 2)
    wt, wp = form.components
    g_unit = (wt * wt + wp * wp / st2) / 1.7 ** 4
    assert np.allclose(norm_G, 1.7 ** 2 * g_unit, rtol=1e-13)


def test_conversion_commutes_with_rotation(s, rng):
    f = s.synthesize(_random_coeffs(s, rng))
    form = TangentForm(s, s.grad(f))
    vt, vp = form_vector_convert(form)
    fr = s.rotate_longitudes(f, 3)
    vtr, vpr = form_vector_convert(TangentForm(s, s.grad(fr)))
    assert np.allclose(vtr, s.rotate_longitudes(vt, 3), atol=1e-12)
    assert np.allclose(vpr, s.rotate_longitudes(vp, 3), atol=1e-12)


def test_coeffs_csv_roundtrip(tmp_path, s, rng):
    c = _random_coeffs(s, rng)
    write_coeffs_csv(tmp_path / "c.csv", c, s.L)
    back, L = read_coeffs_csv(tmp_path / "c.csv")
    assert L == s.L and np.array_equal(back, c)


def test_bad_index():
    with pytest.raises(ValueError):
        index(2, 3)
