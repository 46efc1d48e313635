"""Gamma function, the NMC normalising constant and the eigenvalues of L_alpha."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FracParams",
    "GammaPoleError",
    "gamma",
    "log_abs_gamma",
    "gamma_ratio",
    "d_coeff",
    "lambda_k",
    "lambda_asymptotic_constant",
    "classical_limit_gap",
    "sphere_area",
    "ball_volume",
]


class GammaPoleError(ValueError):
    """Raised when Gamma is evaluated at a non-positive integer."""


@dataclass(frozen=True)
class FracParams:
    """Global problem parameters.

    N is the ambient dimension (2 or 3), alpha the fractional order and
    beta the Hölder index, which is only carried along for bookkeeping.
    """

    N: int
    alpha: float
    beta: float | None = None

    def __post_init__(self):
        if self.N not in (2, 3):
            raise ValueError(f"N must be 2 or 3, got {self.N}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta is None:
            object.__setattr__(self, "beta", 0.5 * (1.0 + self.alpha))
        if not self.alpha < self.beta < 1.0:
            raise ValueError(f"beta must lie in (alpha, 1), got {self.beta}")

    @property
    def s(self) -> float:
        """Kernel exponent N + alpha."""
        return self.N + self.alpha

    def to_dict(self):
        return {"N": self.N, "alpha": self.alpha, "beta": self.beta}


# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _check_pole(x: float) -> None:
    if x <= 0 and x == math.floor(x):
        raise GammaPoleError(f"Gamma has a pole at x = {x}")


def _sinpi(x: float) -> float:
    # sin(pi x) with the argument reduced exactly before multiplying by pi
    n = round(x)
    r = x - n
    return math.sin(math.pi * r) * (-1.0 if n % 2 else 1.0)


def _lanczos_series(z: float) -> float:
    # z = x - 1 with x >= 0.5
    a = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        a += _LANCZOS_COEF[i] / (z + i)
    return a


def log_abs_gamma(x: float) -> tuple[float, float]:
    """Return ``(log|Gamma(x)|, sign(Gamma(x)))``."""
    x = float(x)
    _check_pole(x)
    if x < 0.5:
        # Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        s = _sinpi(x)
        lg, _ = log_abs_gamma(1.0 - x)
        return math.log(math.pi / abs(s)) - lg, math.copysign(1.0, s)
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    lg = 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * math.log(t) - t + math.log(_lanczos_series(z))
    return lg, 1.0


def gamma(x: float) -> float:
    """Gamma function for real x, including negative non-integer arguments."""
    x = float(x)
    _check_pole(x)
    if x < 0.5:
        return math.pi / (_sinpi(x) * gamma(1.0 - x))
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    if x > 140.0:
        lg, sign = log_abs_gamma(x)
        return sign * math.exp(lg)
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * _lanczos_series(z)


def gamma_ratio(a: float, b: float) -> float:
    """Gamma(a) / Gamma(b), evaluated in log space to avoid overflow."""
    la, sa = log_abs_gamma(a)
    lb, sb = log_abs_gamma(b)
    return sa * sb * math.exp(la - lb)


def sphere_area(N: int) -> float:
    """|S^{N-1}|, the surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


def ball_volume(N: int) -> float:
    """|B^N| = |S^{N-1}| / N."""
    return sphere_area(N) / N


def d_coeff(params: FracParams) -> float:
    """Normalising constant d_{N,alpha} of the fractional mean curvature."""
    N, a = params.N, params.alpha
    return (1.0 - a) * gamma((N + 1) / 2.0) / ((N - 1) * math.pi ** ((N - 1) / 2.0))


def lambda_asymptotic_constant(params: FracParams) -> float:
    """Prefactor of the eigenvalue formula; also lim lambda_k / k^(1+alpha)."""
    N, a = params.N, params.alpha
    return (
        math.pi ** ((N - 1) / 2.0)
        * gamma((1.0 - a) / 2.0)
        / ((1.0 + a) * 2.0**a * gamma((N + a) / 2.0))
    )


def lambda_k(params: FracParams, k: int) -> float:
    """Eigenvalue of L_alpha on spherical harmonics of degree k.

    ``lambda_k(params, 0)`` is exactly zero.
    """
    k = int(k)
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return 0.0
    N, a = params.N, params.alpha
    r_k = gamma_ratio((2 * k + N + a) / 2.0, (2 * k + N - a - 2) / 2.0)
    r_0 = gamma_ratio((N + a) / 2.0, (N - a - 2) / 2.0)
    return lambda_asymptotic_constant(params) * (r_k - r_0)


def lambda_table(params: FracParams, kmax: int) -> np.ndarray:
    return np.array([lambda_k(params, k) for k in range(kmax + 1)])


def classical_limit_gap(params: FracParams, k: int) -> float:
    """2 d_{N,alpha} lambda_k minus the classical Jacobi value k(k+N-2)/(N-1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    N = params.N
    return 2.0 * d_coeff(params) * lambda_k(params, k) - k * (k + N - 2) / (N - 1)
