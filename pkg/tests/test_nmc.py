import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnmc.lattice import make_lattice, weighted_sum
from cnmc.nmc import (
    QuadratureError,
    TauTooLargeError,
    g_single,
    g_total,
    h_nmc,
    kernel_triple,
    script_h,
)
from cnmc.specfun import FracParams, ball_volume, lambda_k
from cnmc.sphere import EvenShape, analyze, build_grid, rotate_shape, synthesize, synthesize_with_gradient

from conftest import random_even_shape

P2 = FracParams(2, 0.5)


def test_h_sphere_n2():
    vals = h_nmc(EvenShape.zeros(2, 8), build_grid(2, 64), P2, 1e-12)
    assert np.max(np.abs(vals - lambda_k(P2, 1))) < 1e-11


def test_h_sphere_n3():
    P = FracParams(3, 0.5)
    vals = h_nmc(EvenShape.zeros(3, 4), build_grid(3, 8), P)
    assert np.max(np.abs(vals - lambda_k(P, 1))) < 1e-6


@settings(max_examples=6)
@given(st.floats(-0.5, 0.5))
def test_dilation_law(c):
    vals = h_nmc(EvenShape.constant(2, 8, c), build_grid(2, 16), P2, 1e-11)
    assert np.max(np.abs(vals - (1 + c) ** -0.5 * lambda_k(P2, 1))) < 1e-9


@pytest.mark.parametrize("seed", [1, 2])
def test_rotation_equivariance(seed):
    x = random_even_shape(2, 8, 0.2, seed)
    a = 0.37 + seed
    R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    y = rotate_shape(x, R)
    pts = build_grid(2, 16).nodes
    tol = 1e-10
    hy = h_nmc(y, pts, P2, tol)
    hx = h_nmc(x, pts @ R, P2, tol)  # rows are R^-1 theta
    assert np.max(np.abs(hy - hx)) <= 2 * tol


def test_h_full_output_and_failure():
    x = random_even_shape(2, 8, 0.3, 4)
    vals, info = h_nmc(x, build_grid(2, 16), P2, 1e-9, full_output=True)
    assert info["error"] <= 1e-9 and info["kbar_min"] > 0
    with pytest.raises(QuadratureError):
        h_nmc(x, build_grid(2, 16), P2, 1e-30, n_max=32)


def test_lambda1_kernel_vanishes_quadratically():
    x = random_even_shape(2, 8, 0.3, 7)
    t0 = 0.4
    th = np.array([math.cos(t0), math.sin(t0)])
    ratios = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        sg = np.array([math.cos(t0 + eps), math.sin(t0 + eps)])
        (pt, ps), (_, gs) = synthesize(x, np.stack([th, sg])), synthesize_with_gradient(x, sg[None])
        lam1, _, kbar = kernel_triple(1 + pt, 1 + ps, gs[0], th, sg, P2.s)
        ratios.append(abs(lam1) / np.sum((th - sg) ** 2))
        assert kbar > 0
    assert max(ratios) < 2 * min(ratios) + 1e-12


@pytest.mark.parametrize("N", [2, 3])
def test_g_single_at_zero(N):
    P = FracParams(N, 0.5)
    p = np.zeros(N)
    p[0] = 2.0
    g = g_single(0.0, EvenShape.zeros(N, 4), p, np.eye(N), P)
    assert np.allclose(g, -0.5 * ball_volume(N) * 2.0 ** -P.s, rtol=1e-13)


def test_g_single_pair_symmetry():
    x = random_even_shape(2, 8, 0.2, 3)
    p = np.array([2.0, 1.0])
    pts = build_grid(2, 16).nodes
    a = g_single(0.1, x, p, pts, P2)
    b = g_single(-0.1, x, -p, pts, P2)
    assert np.allclose(a, b, rtol=1e-14, atol=0)


def test_g_single_monotone_in_p():
    vals = [g_single(0.0, EvenShape.zeros(2, 4), [k, 0.0], np.eye(2), P2)[0] for k in (1, 2, 3, 5)]
    assert all(abs(a) > abs(b) for a, b in zip(vals, vals[1:]))


def test_g_single_second_order():
    # even part in tau against the closed second derivative at tau = 0
    p = np.array([5.0, 0.0])
    pts = build_grid(2, 8).nodes
    s, B, N = P2.s, math.pi, 2
    tau = 0.01
    z = EvenShape.zeros(2, 4)
    even = 0.5 * (g_single(tau, z, p, pts, P2) + g_single(-tau, z, p, pts, P2))
    pp = p @ p
    tp = pts @ p
    gpp = B * (s * (s + 2) * pp ** (-s / 2 - 2) * (pp / (N + 2) + tp**2) - s * pp ** (-s / 2 - 1) * (N / (N + 2) + 1))
    expected = -0.5 * B * pp ** (-s / 2) - 0.5 * 0.5 * tau**2 * gpp
    assert np.max(np.abs(even - expected)) < 1e-9


def test_g_total_at_zero(z2):
    vals = g_total(0.0, EvenShape.zeros(2, 8), build_grid(2, 16), z2, P2)
    expected = -0.5 * math.pi * weighted_sum(z2, 2.5).value
    assert np.allclose(vals, expected, rtol=1e-10)


@pytest.mark.parametrize("tau", [0.02, 0.05])
def test_g_total_even_in_tau(z2, tau):
    x = random_even_shape(2, 8, 0.1, 1)
    g = build_grid(2, 16)
    a = g_total(tau, x, g, z2, P2)
    b = g_total(-tau, x, g, z2, P2)
    assert np.max(np.abs(a - b)) <= 1e-14 * np.max(np.abs(a))


def test_g_total_directional(z1):
    e = np.eye(2)
    v = g_total(0.05, EvenShape.zeros(2, 8), e, z1, P2)
    assert abs(v[0] - v[1]) > 1e-6


def test_tau_limit(z2):
    with pytest.raises(TauTooLargeError):
        g_total(0.3, EvenShape.zeros(2, 8), np.eye(2), z2, P2)


def test_script_h_at_zero_is_h(z2):
    x = random_even_shape(2, 8, 0.2, 5)
    g = build_grid(2, 16)
    assert np.array_equal(script_h(0.0, x, g, None, P2, 1e-10), h_nmc(x, g, P2, 1e-10))


def test_script_h_mean_shift(z2):
    r = 50.0
    g = build_grid(2, 32)
    vals = script_h(1 / r, EvenShape.zeros(2, 8), g, z2, P2, 1e-12)
    phi0 = -0.5 * (2 * math.pi / 2) * weighted_sum(z2, 2.5).value
    shift = np.mean(vals) - lambda_k(P2, 1)
    assert shift == pytest.approx(r**-2.5 * phi0, rel=1e-2)


@settings(max_examples=4)
@given(st.integers(0, 1000), st.floats(-0.1, 0.1).filter(lambda t: abs(t) > 1e-3))
def test_script_h_even_in_tau_and_even_output(seed, tau):
    L = make_lattice(np.eye(2), 2)
    x = random_even_shape(2, 8, 0.1, seed)
    g = build_grid(2, 32)
    a = script_h(tau, x, g, L, P2, 1e-10)
    b = script_h(-tau, x, g, L, P2, 1e-10)
    assert np.max(np.abs(a - b)) <= 1e-14 * np.max(np.abs(a))
    shape_all, _ = analyze(g, a, 14, "all")
    odd_coeffs = [c for c, (k, _) in zip(shape_all.coeffs, shape_all.index) if k % 2]
    assert max(abs(c) for c in odd_coeffs) <= 1e-10
