"""One-dimensional Gauss rules used by the singular and radial integrals."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def _jacobi_eval(n: int, a: float, b: float, x: np.ndarray):
    """P_n^{(a,b)}(x) and P_{n-1}^{(a,b)}(x) by the three-term recurrence."""
    p0 = np.ones_like(x)
    p1 = 0.5 * (a - b + (a + b + 2.0) * x)
    if n == 0:
        return p0, np.zeros_like(x)
    for k in range(2, n + 1):
        c = 2.0 * k + a + b
        a1 = 2.0 * k * (k + a + b) * (c - 2.0)
        a2 = (c - 1.0) * (a * a - b * b)
        a3 = (c - 2.0) * (c - 1.0) * c
        a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c
        p0, p1 = p1, ((a2 + a3 * x) * p1 - a4 * p0) / a1
    return p1, p0


def _jacobi_deriv(n: int, a: float, b: float, x: np.ndarray):
    pn, pm = _jacobi_eval(n, a, b, x)
    c = 2.0 * n + a + b
    # (c)(1 - x^2) P_n' = n (a - b - c x) P_n + 2 (n + a)(n + b) P_{n-1}
    d = (n * (a - b - c * x) * pn + 2.0 * (n + a) * (n + b) * pm) / (c * (1.0 - x * x))
    return pn, d


@lru_cache(maxsize=64)
def _jacobi_ref(n: int, b: float):
    """Gauss-Jacobi rule for weight (1 + x)^b on [-1, 1], Newton-polished."""
    a = 0.0
    x, _ = roots_jacobi(n, a, b)
    for _ in range(3):
        pn, d = _jacobi_deriv(n, a, b, x)
        x = x - pn / d
    _, d = _jacobi_deriv(n, a, b, x)
    logc = (
        (a + b + 1.0) * math.log(2.0)
        + math.lgamma(n + a + 1.0)
        + math.lgamma(n + b + 1.0)
        - math.lgamma(n + a + b + 1.0)
        - math.lgamma(n + 1.0)
    )
    w = math.exp(logc) / ((1.0 - x * x) * d * d)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def singular_rule(n: int, length: float, alpha: float):
    """Nodes/weights for int_0^length t^(-alpha) g(t) dt ~ sum w_j g(t_j).

    Gauss-Jacobi with the algebraic endpoint weight built in, so that the
    rule converges spectrally when g is smooth on [0, length].
    """
    x, w = _jacobi_ref(int(n), -float(alpha))
    half = 0.5 * length
    return half * (1.0 + x), w * half ** (1.0 - alpha)


@lru_cache(maxsize=64)
def _legendre_ref(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0):
    x, w = _legendre_ref(int(n))
    half = 0.5 * (b - a)
    return a + half * (1.0 + x), w * half


def periodic_rule(n: int, offset: float = 0.0):
    """Trapezoid rule on [0, 2 pi); exact for trigonometric degree < n."""
    t = offset + 2.0 * np.pi * np.arange(n) / n
    return t, np.full(n, 2.0 * np.pi / n)
