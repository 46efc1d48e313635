import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnmc.quadrature import gauss_legendre, periodic_rule, singular_rule


@given(st.floats(0.05, 0.95), st.integers(0, 20))
def test_singular_rule_monomials(alpha, j):
    t, w = singular_rule(16, 2.0, alpha)
    exact = 2.0 ** (j + 1 - alpha) / (j + 1 - alpha)
    assert np.dot(w, t**j) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("n", [32, 128, 256])
def test_singular_rule_large_n(n):
    t, w = singular_rule(n, math.pi, 0.5)
    assert np.sum(w) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-12)
    assert np.all(w > 0) and np.all((t > 0) & (t < math.pi))


def test_gauss_legendre_interval():
    x, w = gauss_legendre(8, 1.0, 3.0)
    assert np.dot(w, x**15) == pytest.approx((3**16 - 1) / 16, rel=1e-13)


def test_periodic_rule_exactness():
    t, w = periodic_rule(16)
    assert np.dot(w, np.cos(7 * t) ** 2) == pytest.approx(math.pi, rel=1e-14)
    assert abs(np.dot(w, np.cos(15 * t))) < 1e-13
