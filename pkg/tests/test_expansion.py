import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import zeta

from cnmc.expansion import kappa_constants, nonconstancy_certificate, phi_profiles, predicted_shape
from cnmc.lattice import make_lattice, weighted_sum
from cnmc.linop import dh0_solve
from cnmc.nmc import g_total
from cnmc.specfun import FracParams, lambda_k, sphere_area
from cnmc.sphere import EvenShape, analyze, build_grid, synthesize

P2 = FracParams(2, 0.5)

ORACLE_SET = [
    ([[1.0]], 2),
    ([[1.0, 0.0], [0.0, 1.0]], 2),
    ([[1.0, 0.0], [0.0, 2.0]], 2),
    ([[1.0]], 3),
]


def _targets(N, n=8, seed=0):
    v = np.random.default_rng(seed).standard_normal((n, N))
    return v / np.linalg.norm(v, axis=1)[:, None]


def test_phi0_closed_form(z2):
    phi0, _ = phi_profiles(P2, z2)
    assert phi0 == pytest.approx(-0.5 * math.pi * weighted_sum(z2, 2.5).value, rel=1e-14)


@pytest.mark.parametrize("basis,N", ORACLE_SET)
def test_phi2_second_difference_oracle(basis, N):
    P = FracParams(N, 0.5)
    L = make_lattice(basis, N)
    th = _targets(N)
    z = EvenShape.zeros(N, 4)
    g0 = g_total(0.0, z, th, L, P, tol=1e-13)

    def d2(h):
        return 2.0 * (g_total(h, z, th, L, P, tol=1e-13) - g0) / h**2

    rich = (4.0 * d2(5e-3) - d2(1e-2)) / 3.0
    _, phi2 = phi_profiles(P, L)
    ref = phi2(th)
    assert np.max(np.abs(rich - ref)) <= 1e-4 * np.max(np.abs(ref))


def test_phi2_perpendicular_direction(z1):
    _, phi2 = phi_profiles(P2, z1)
    N, a = 2, 0.5
    a1 = a * (N + a) * (N - a) * sphere_area(N) / (N * (N + 2))
    assert phi2(np.array([0.0, 1.0]))[0] == pytest.approx(a1 * weighted_sum(z1, 4.5).value, rel=1e-13)


def test_kappa_values(z1, z2):
    d1 = kappa_constants(P2, z1)
    assert d1.kappa0 == pytest.approx(2 * math.pi / (2 * lambda_k(P2, 1)) * 2 * zeta(2.5), rel=1e-10)
    d2 = kappa_constants(P2, z2)
    assert d2.kappa_tilde1 == pytest.approx(d2.kappa1 / 2 * weighted_sum(z2, 4.5).value, rel=1e-12)
    for d in (d1, d2):
        assert d.kappa0 > 0 and d.kappa1 > 0 and d.kappa2 > 0
    # a one-dimensional lattice is trivially square
    assert d1.kappa_tilde1 == pytest.approx(d1.kappa1 * weighted_sum(z1, 4.5).value, rel=1e-12)
    assert d2.mu[0] == pytest.approx(d2.mu[1])
    assert kappa_constants(P2, make_lattice([[1.0, 0.0], [0.0, 2.0]], 2)).kappa_tilde1 is None


def test_taylor_convention_triples_second_order(z1):
    a = kappa_constants(P2, z1)
    b = kappa_constants(P2, z1, convention="taylor")
    assert b.kappa0 == a.kappa0
    assert b.kappa1 == pytest.approx(3 * a.kappa1) and b.kappa2 == pytest.approx(3 * a.kappa2)
    with pytest.raises(ValueError):
        kappa_constants(P2, z1, convention="other")


@pytest.mark.parametrize("basis", [[[1.0]], [[1.0, 0.0], [0.0, 2.0]]])
def test_diagonal_inversion_identities(basis):
    L = make_lattice(basis, 2)
    d = kappa_constants(P2, L)
    lam1, lam2 = lambda_k(P2, 1), lambda_k(P2, 2)
    assert d.kappa0 * (-P2.alpha * lam1) == pytest.approx(d.Phi0, rel=1e-12)
    g = build_grid(2, 16)
    phi2, _ = analyze(g, d.Phi2(g.nodes), 4)
    psi2, _ = analyze(g, 6 * d.kappa2 - 6 * d.kappa1 * d.f_tilde(g.nodes), 4)
    lhs = P2.alpha * (lam2 - lam1) * psi2.degree_part(2)
    assert np.allclose(lhs, phi2.degree_part(2), atol=1e-10)
    assert np.allclose(dh0_solve(phi2, P2).coeffs, psi2.coeffs, atol=1e-10)


def test_predicted_shape_structure(z1, z2):
    d = kappa_constants(P2, z1)
    x = predicted_shape(40.0, P2, z1, d, 8)
    assert all(c == 0.0 for c, (k, _) in zip(x.coeffs, x.index) if k > 2)
    assert np.max(np.abs(x.degree_part(2))) > 0
    d2 = kappa_constants(P2, z2)
    y = predicted_shape(40.0, P2, z2, d2, 8)
    assert np.max(np.abs(y.degree_part(2))) <= 1e-15 * abs(y.coefficient(0, 0))


@given(st.floats(20.0, 400.0))
def test_predicted_mean(r):
    L = make_lattice([[1.0, 0.0], [0.0, 2.0]], 2)
    d = kappa_constants(P2, L)
    x = predicted_shape(r, P2, L, d, 8)
    g = build_grid(2, 32)
    mean_f = float(np.mean(d.f_tilde(g.nodes)))
    expected = -d.kappa0 * r**-2.5 + r**-4.5 * (d.kappa1 * mean_f - d.kappa2)
    assert x.coefficient(0, 0) / math.sqrt(2 * math.pi) == pytest.approx(expected, rel=1e-12)


def test_predicted_shape_scaling(z2):
    d = kappa_constants(P2, z2)
    a = predicted_shape(200.0, P2, z2, d, 8).coefficient(0, 0)
    b = predicted_shape(400.0, P2, z2, d, 8).coefficient(0, 0)
    assert b / a == pytest.approx(2**-2.5, rel=1e-3)


def test_nonconstancy_certificate(z1, z2):
    fpar, fperp, ok = nonconstancy_certificate(z1, P2)
    assert fperp == 0.0 and fpar > 0 and ok
    fpar, fperp, ok = nonconstancy_certificate(z2, P2)
    assert fpar == pytest.approx(fperp, rel=1e-12) and not ok
    d = kappa_constants(P2, make_lattice([[1.0, 0.0], [0.0, 3.0]], 2))
    f = d.f_tilde(np.eye(2))
    assert abs(f[0] - f[1]) > 1e-3


def test_predicted_shape_synthesis_matches_formula(z1):
    d = kappa_constants(P2, z1)
    r = 30.0
    x = predicted_shape(r, P2, z1, d, 8)
    th = _targets(2)
    ref = r**-2.5 * (-d.kappa0 + r**-2 * (d.kappa1 * d.f_tilde(th) - d.kappa2))
    assert np.allclose(synthesize(x, th), ref, rtol=1e-12, atol=1e-18)
