"""Closed-form large-r expansion data of the constant-NMC branch.

With f(theta) = sum_p (theta . p)^2 |p|^-(N+alpha+4) the branch behaves like

    phi_r = r^-(N+alpha) (-kappa0 + r^-2 (kappa1 f - kappa2)) + o(r^-(N+alpha+2)).

``Phi2`` is stored through the moment matrix sum p p^T |p|^-(N+alpha+4), which
carries all of its degree-2 information, so evaluation never needs per-point
lattice sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lattice as lat
from .linop import dh0_solve
from .specfun import FracParams, lambda_k, sphere_area
from .sphere import EvenShape, analyze, build_grid, synthesize

__all__ = [
    "Phi2Profile",
    "ExpansionData",
    "phi_profiles",
    "kappa_constants",
    "predicted_shape",
    "directional_profile",
    "nonconstancy_certificate",
    "ConsistencyError",
    "CONVENTIONS",
]


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Phi2Profile:
    """Phi2(theta) = unit_part - dir_coeff * theta^T moment theta."""

    unit_part: float
    dir_coeff: float
    moment: np.ndarray

    def __call__(self, theta) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        return self.unit_part - self.dir_coeff * np.einsum("ti,ij,tj->t", th, self.moment, th)


def _a_coeffs(params: FracParams):
    N, a = params.N, params.alpha
    S = sphere_area(N)
    a1 = a * (N + a) * (N - a) * S / (N * (N + 2))
    a2 = a * (N + a) * (N + a + 2) * S / N
    return a1, a2


def _sums(L: lat.Lattice, params: FracParams, tol: float):
    s = params.s
    return (
        lat.weighted_sum(L, s, tol=tol),
        lat.weighted_sum(L, s + 2.0, tol=tol),
        lat.moment_matrix(L, s + 4.0, tol=tol),
    )


def phi_profiles(params: FracParams, L: lat.Lattice, tol: float = 1e-10):
    """(Phi0, Phi2) where Phi0 is a constant and Phi2 a ``Phi2Profile``."""
    if L.N != params.N:
        raise ValueError("lattice and params must share N")
    S0, S2, M4 = _sums(L, params, tol)
    a1, a2 = _a_coeffs(params)
    phi0 = -params.alpha * sphere_area(params.N) / params.N * S0.value
    return phi0, Phi2Profile(a1 * S2.value, a2, M4.value)


@dataclass
class ExpansionData:
    params: FracParams
    lattice: dict
    a1: float
    a2: float
    Phi0: float
    Phi2: Phi2Profile
    kappa0: float
    kappa1: float
    kappa2: float
    moment: np.ndarray
    mu: list | None = None
    kappa_tilde1: float | None = None
    sums: dict = field(default_factory=dict)
    convention: str = "printed"

    def f_tilde(self, theta) -> np.ndarray:
        """sum_p (theta . p)^2 |p|^-(N+alpha+4)."""
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        return np.einsum("ti,ij,tj->t", th, self.moment, th)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "lattice": self.lattice,
            "a1": self.a1,
            "a2": self.a2,
            "Phi0": self.Phi0,
            "Phi2": {"unit_part": self.Phi2.unit_part, "dir_coeff": self.Phi2.dir_coeff, "moment": self.Phi2.moment.tolist()},
            "kappa0": self.kappa0,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "moment": self.moment.tolist(),
            "mu": self.mu,
            "kappa_tilde1": self.kappa_tilde1,
            "sums": self.sums,
            "convention": self.convention,
        }


def _psi2_check(params, phi2: Phi2Profile, psi2_unit, psi2_dir, tol):
    """Re-derive Psi2 by inverting Dh(0) on the harmonic expansion of Phi2."""
    N = params.N
    grid = build_grid(N, 16 if N == 2 else 8)
    shape, _ = analyze(grid, phi2(grid.nodes), 2)
    inv = dh0_solve(shape, params)

    direct = psi2_unit - psi2_dir * np.einsum("ti,ij,tj->t", grid.nodes, phi2.moment, grid.nodes)
    err = float(np.max(np.abs(synthesize(inv, grid.nodes) - direct)))
    scale = max(1.0, float(np.max(np.abs(direct))))
    if err > tol * scale:
        raise ConsistencyError(f"Psi2 closed form disagrees with the diagonal inverse by {err:g}")
    return err


CONVENTIONS = {"printed": 1.0, "taylor": 3.0}


def kappa_constants(params: FracParams, L: lat.Lattice, tol: float = 1e-10, convention: str = "printed") -> ExpansionData:
    """All expansion constants with the lattice-sum diagnostics attached.

    ``convention="printed"`` weights the second-order term Psi2 by 1/6.
    ``"taylor"`` uses 1/2 = 1/2!, the coefficient of a second-order Taylor
    expansion in tau; it triples kappa1 and kappa2 and is what the solved
    branches follow numerically.
    """
    if L.N != params.N:
        raise ValueError("lattice and params must share N")
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {sorted(CONVENTIONS)}")
    N, a = params.N, params.alpha
    S = sphere_area(N)
    lam1, lam2 = lambda_k(params, 1), lambda_k(params, 2)
    S0, S2, M4 = _sums(L, params, tol)
    a1, a2 = _a_coeffs(params)
    phi0 = -a * S / N * S0.value
    phi2 = Phi2Profile(a1 * S2.value, a2, M4.value)

    kappa0 = S / (N * lam1) * S0.value
    kappa1 = S * (N + a) * (N + a + 2) / (6 * N * (lam2 - lam1))
    kappa2 = (S / 6.0) * (
        (N + a) * (N + a + 2) / (N**2 * (lam2 - lam1))
        + 2.0 / lam1 * (N + a) * (N + 1) * (a + 2) / (N**2 * (N + 2))
    ) * S2.value

    # Psi0 = Dh(0)^-1 Phi0 and the Psi2 closed form, cross-checked diagonally
    psi0 = -phi0 / (a * lam1)
    if abs(psi0 - kappa0) > 1e-10 * max(1.0, abs(kappa0)):
        raise ConsistencyError("Psi0 and kappa0 disagree")
    _psi2_check(params, phi2, 6.0 * kappa2, 6.0 * kappa1, 1e-10)
    kappa1 *= CONVENTIONS[convention]
    kappa2 *= CONVENTIONS[convention]

    mu = None
    kt1 = None
    if L.is_rectangular:
        mu = [float(v) for v in lat.mu_coefficients(L, params, tol)]
    if L.is_square:
        kt1 = kappa1 / L.M * S2.value
    return ExpansionData(
        params=params,
        lattice=L.to_dict(),
        a1=a1,
        a2=a2,
        Phi0=phi0,
        Phi2=phi2,
        kappa0=kappa0,
        kappa1=kappa1,
        kappa2=kappa2,
        moment=M4.value,
        mu=mu,
        kappa_tilde1=kt1,
        convention=convention,
        sums={
            "S_s": S0.to_dict(),
            "S_s_plus_2": S2.to_dict(),
            "moment_s_plus_4": M4.to_dict(),
        },
    )


def directional_profile(data: ExpansionData, K: int) -> EvenShape:
    """Harmonic coefficients of theta -> theta^T moment theta (degrees 0 and 2)."""
    N = data.params.N
    grid = build_grid(N, max(16, 2 * (K + 2)) if N == 2 else max(8, K + 4))
    shape, _ = analyze(grid, data.f_tilde(grid.nodes), K)
    c = shape.coeffs.copy()
    for j, (k, _) in enumerate(shape.index):
        if k > 2:
            c[j] = 0.0
    return shape.with_coeffs(c)


def predicted_shape(r: float, params: FracParams, L: lat.Lattice | None, data: ExpansionData, K: int) -> EvenShape:
    """Two-term expansion of phi_r projected onto even harmonics of degree <= K."""
    if r <= 0:
        raise ValueError("r must be positive")
    N, s = params.N, params.s
    f = directional_profile(data, K)
    const = EvenShape.zeros(N, K).with_coeffs(
        [np.sqrt(sphere_area(N)) if k == 0 else 0.0 for k, _ in EvenShape.zeros(N, K).index]
    )
    shape = const * (-data.kappa0 * r**-s - data.kappa2 * r ** (-s - 2)) + f * (data.kappa1 * r ** (-s - 2))
    return shape


def nonconstancy_certificate(L: lat.Lattice, params: FracParams, tol: float = 1e-10):
    """(f(e_1), f(e_N), certified) where f(theta) = sum (theta . p)^2 |p|^-(N+alpha+4).

    ``certified`` is True only when M <= N - 1, where f(e_N) = 0 < f(e_1)
    proves that f, and hence the branch, is non-constant.  For M = N no
    claim is made and the flag is False.
    """
    Mm = lat.moment_matrix(L, params.s + 4.0, tol).value
    f_par = float(Mm[0, 0])
    f_perp = float(Mm[-1, -1])
    certified = bool(L.M <= L.N - 1 and f_perp == 0.0 and f_par > 0.0)
    return f_par, f_perp, certified
