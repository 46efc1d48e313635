"""Bravais lattices embedded in R^N and convergent power sums over them.

Two summation routes are provided.

``direct``
    Partial sum over ``|p| <= R`` with a rigorous tail bound.  Every lattice
    point owns the parallelepiped cell ``p + {sum t_i a_i : |t_i| <= 1/2}``,
    whose points lie within ``d = (1/2) sum |a_i|`` of ``p``; for a decreasing
    radial weight ``f`` this gives
    ``sum_{|p|>R} f(|p|) <= covol^{-1} int_{|x|>R-d} f(|x|-d) dx``.
``smooth``
    Smoothly truncated sum ``sum f(p) chi(|p|/R)`` plus the exact continuum
    integral of ``f (1 - chi(|x|/R))``.  By Poisson summation the error is a
    sum of Fourier coefficients of a C^infinity function and decays faster
    than any power of R, which makes sums with ``s - M`` close to zero
    tractable.  Its tail estimate is a-posteriori (difference of successive
    radii), not a certified bound.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .specfun import FracParams, sphere_area

__all__ = [
    "Lattice",
    "LatticeSumResult",
    "Directional",
    "DegenerateBasisError",
    "NonconvergentSumError",
    "NotRectangularError",
    "make_lattice",
    "lattice_from_json",
    "enumerate_shell",
    "half_shell",
    "weighted_sum",
    "moment_matrix",
    "moment_tensor4",
    "partial_sums",
    "certified_tail",
    "mu_coefficients",
]

_ORTHO_TOL = 1e-12


class DegenerateBasisError(ValueError):
    pass


class NonconvergentSumError(ValueError):
    pass


class NotRectangularError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Lattice:
    """M-dimensional lattice spanned by ``basis`` inside R^N (zero padded)."""

    N: int
    basis: np.ndarray  # (M, M)
    c0: float
    is_rectangular: bool
    is_square: bool

    @property
    def M(self) -> int:
        return self.basis.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        """Basis vectors embedded in R^N, shape (M, N)."""
        out = np.zeros((self.M, self.N))
        out[:, : self.M] = self.basis
        return out

    @property
    def gram(self) -> np.ndarray:
        return self.basis @ self.basis.T

    @property
    def covolume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @property
    def cell_radius(self) -> float:
        return 0.5 * float(np.sum(np.linalg.norm(self.basis, axis=1)))

    def to_dict(self) -> dict:
        return {"N": self.N, "basis": self.basis.tolist()}


def make_lattice(basis, N: int) -> Lattice:
    """Build a lattice from M basis vectors of R^M, embedded in R^N."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    M = B.shape[0]
    if not 1 <= M <= N:
        raise ValueError(f"need 1 <= M <= N, got M={M}, N={N}")
    if B.shape[1] != M:
        raise ValueError(f"basis vectors must have dimension M={M}")
    norms = np.linalg.norm(B, axis=1)
    G = B @ B.T
    if np.any(norms == 0) or np.linalg.det(G) <= 1e-12 * np.prod(norms**2):
        raise DegenerateBasisError("basis vectors are (nearly) linearly dependent")
    off = G - np.diag(np.diag(G))
    rect = bool(np.all(np.abs(off) <= _ORTHO_TOL * np.outer(norms, norms)))
    square = rect and bool(np.all(np.abs(norms - norms[0]) <= _ORTHO_TOL * norms[0]))
    proto = Lattice(N, B, float("nan"), rect, square)
    pts = enumerate_shell(proto, float(norms.min()) * (1 + 1e-12))
    c0 = float(np.min(np.linalg.norm(pts, axis=1)))
    return Lattice(N, B, c0, rect, square)


def lattice_from_json(text_or_dict) -> Lattice:
    d = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
    return make_lattice(d["basis"], int(d["N"]))


def _coordinate_bounds(L: Lattice, R: float) -> np.ndarray:
    # |k_i| <= R sqrt((G^-1)_ii) for every lattice point k.B with |k.B| <= R
    Ginv = np.linalg.inv(L.gram)
    return np.floor(R * np.sqrt(np.diag(Ginv)) + 1e-9).astype(int)


def _iter_slabs(L: Lattice, R: float, max_block: int = 2_000_000):
    """Yield arrays of integer coordinate vectors covering the search box."""
    kmax = _coordinate_bounds(L, R)
    M = L.M
    if M == 1:
        yield np.arange(-kmax[0], kmax[0] + 1)[:, None]
        return
    inner = [np.arange(-k, k + 1) for k in kmax[1:]]
    tail = np.stack(np.meshgrid(*inner, indexing="ij"), axis=-1).reshape(-1, M - 1)
    per = max(1, max_block // max(1, tail.shape[0]))
    firsts = np.arange(-kmax[0], kmax[0] + 1)
    for start in range(0, firsts.size, per):
        block = firsts[start : start + per]
        k = np.empty((block.size * tail.shape[0], M), dtype=np.int64)
        k[:, 0] = np.repeat(block, tail.shape[0])
        k[:, 1:] = np.tile(tail, (block.size, 1))
        yield k


def _iter_points(L: Lattice, R: float):
    """Yield blocks of nonzero lattice points (embedded) with |p| <= R."""
    B = L.vectors
    for k in _iter_slabs(L, R):
        p = k @ B
        r2 = np.einsum("ij,ij->i", p, p)
        keep = (r2 <= R * R) & (r2 > 0)
        if np.any(keep):
            yield p[keep]


def enumerate_shell(L: Lattice, R: float) -> np.ndarray:
    """All p in L \\ {0} with |p| <= R, sorted by norm (ties by coordinates)."""
    if R <= 0:
        raise ValueError("R must be positive")
    blocks = list(_iter_points(L, R))
    if not blocks:
        return np.zeros((0, L.N))
    p = np.concatenate(blocks)
    r = np.linalg.norm(p, axis=1)
    order = np.lexsort(tuple(p[:, ::-1].T) + (np.round(r, 12),))
    return p[order]


def half_shell(L: Lattice, R: float) -> np.ndarray:
    """One representative of each pair {p, -p} with |p| <= R."""
    p = enumerate_shell(L, R)
    if p.size == 0:
        return p
    # first nonzero coordinate positive
    nz = np.argmax(p != 0, axis=1)
    sign = p[np.arange(p.shape[0]), nz] > 0
    return p[sign]


# ---------------------------------------------------------------------------
# sums


@dataclass(frozen=True)
class Directional:
    """Weight (theta . p)^2 for a unit vector theta."""

    theta: tuple

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if abs(np.linalg.norm(t) - 1.0) > 1e-12:
            raise ValueError("theta must be a unit vector")
        object.__setattr__(self, "theta", tuple(t.tolist()))


@dataclass(frozen=True)
class LatticeSumResult:
    value: float | np.ndarray
    truncation_radius: float
    tail_bound: float
    terms_used: int
    method: str = "direct"
    certified: bool = True

    def to_dict(self) -> dict:
        v = self.value
        return {
            "value": v.tolist() if isinstance(v, np.ndarray) else float(v),
            "truncation_radius": self.truncation_radius,
            "tail_bound": self.tail_bound,
            "terms_used": self.terms_used,
            "method": self.method,
            "certified": self.certified,
        }


def certified_tail(L: Lattice, s_eff: float, R: float) -> float:
    """Upper bound on sum_{p in L, |p| > R} |p|^(-s_eff); needs R > 2 d."""
    M, d = L.M, L.cell_radius
    if s_eff <= M:
        raise NonconvergentSumError(f"sum of |p|^-{s_eff} diverges in dimension {M}")
    a = R - 2.0 * d
    if a <= 0:
        return math.inf
    # covol^-1 |S^{M-1}| int_{a}^inf (u + d)^{M-1} u^{-s} du
    tot = 0.0
    for j in range(M):
        tot += math.comb(M - 1, j) * d ** (M - 1 - j) * a ** (j + 1 - s_eff) / (s_eff - j - 1)
    return sphere_area(M) / L.covolume * tot


def _moment(w: np.ndarray, pts: np.ndarray, order: int):
    if order == 0:
        return float(np.sum(w))
    if order == 2:
        return np.einsum("i,ij,ik->jk", w, pts, pts)
    return np.einsum("i,ij,ik,il,im->jklm", w, pts, pts, pts, pts)


def _zero(N: int, order: int):
    return 0.0 if order == 0 else np.zeros((N,) * order)


def partial_sums(L: Lattice, s: float, R: float, order: int = 0, pts=None):
    """Plain truncated sums over 0 < |p| <= R.

    order 0 returns sum |p|^-s, order 2 the N x N matrix sum p p^T |p|^-s,
    order 4 the N^4 tensor sum p (x) p (x) p (x) p |p|^-s.
    """
    if pts is None:
        pts = enumerate_shell(L, R) if R > 0 else np.zeros((0, L.N))
    if pts.shape[0] == 0:
        return _zero(L.N, order), 0
    r = np.linalg.norm(pts, axis=1)
    return _moment(r ** (-s), pts, order), pts.shape[0]


def _isotropic(N: int, M: int, order: int):
    """int_{S^{M-1}} sigma^{(x) order} dV / |S^{M-1}|, embedded in R^N."""
    if order == 0:
        return 1.0
    P = np.zeros((N, N))
    P[:M, :M] = np.eye(M)
    if order == 2:
        return P / M
    T = (np.einsum("ij,kl->ijkl", P, P) + np.einsum("ik,jl->ijkl", P, P) + np.einsum("il,jk->ijkl", P, P))
    return T / (M * (M + 2))


# smooth cutoff chi(u) = 1 on [0, a], 0 on [1, inf)
_CHI_A = 0.2


def _chi(u):
    u = np.asarray(u, dtype=float)
    x = (u - _CHI_A) / (1.0 - _CHI_A)
    out = np.where(x <= 0, 1.0, 0.0)
    m = (x > 0) & (x < 1)
    xm = x[m]
    f1 = np.exp(-1.0 / (1.0 - xm))
    f0 = np.exp(-1.0 / xm)
    out[m] = f1 / (f1 + f0)
    return out


@lru_cache(maxsize=128)
def _continuum_moment(power: float) -> float:
    """int_0^inf u^power (1 - chi(u)) du for power < -1."""
    x, w = np.polynomial.legendre.leggauss(400)
    u = _CHI_A + 0.5 * (1.0 - _CHI_A) * (1.0 + x)
    body = 0.5 * (1.0 - _CHI_A) * np.sum(w * u**power * (1.0 - _chi(u)))
    return float(body - 1.0 / (power + 1.0))


def _smooth_estimate(L: Lattice, s: float, R: float, order: int):
    M = L.M
    acc = _zero(L.N, order)
    n = 0
    for p in _iter_points(L, R):
        r = np.linalg.norm(p, axis=1)
        acc = acc + _moment(r ** (-s) * _chi(r / R), p, order)
        n += p.shape[0]
    area = sphere_area(M) / L.covolume
    cont = area * R ** (M + order - s) * _continuum_moment(M - 1 + order - s)
    return acc + cont * _isotropic(L.N, M, order), n


def _lattice_sum(L: Lattice, s: float, order: int, tol: float, method: str, max_terms: int):
    s_eff = s - order
    if s_eff <= L.M:
        raise NonconvergentSumError(
            f"effective exponent {s_eff} must exceed the lattice dimension {L.M}"
        )
    if tol <= 0:
        raise ValueError("tol must be positive")
    est_terms = lambda R: math.pi ** (L.M / 2) / math.gamma(L.M / 2 + 1) * (R + L.cell_radius) ** L.M / L.covolume

    if method in ("auto", "direct"):
        R = 8.0 * L.c0
        while certified_tail(L, s_eff, R) > tol:
            R *= 2.0
            if est_terms(R) > max_terms:
                break
        if certified_tail(L, s_eff, R) <= tol:
            val, n = partial_sums(L, s, R, order)
            return LatticeSumResult(val, R, certified_tail(L, s_eff, R), n, "direct", True)
        if method == "direct":
            raise NonconvergentSumError(
                f"direct truncation needs more than {max_terms} terms for tol={tol}"
            )
    R = 8.0 * L.c0
    prev, _ = _smooth_estimate(L, s, R, order)
    while True:
        R *= 2.0
        if est_terms(R) > max_terms:
            raise NonconvergentSumError(f"smoothed sum did not reach tol={tol} within {max_terms} terms")
        cur, n = _smooth_estimate(L, s, R, order)
        diff = float(np.max(np.abs(np.asarray(cur) - np.asarray(prev))))
        if diff <= tol:
            return LatticeSumResult(cur, R, diff, n, "smooth", False)
        prev = cur


def weighted_sum(
    L: Lattice,
    s: float,
    weight="unit",
    tol: float = 1e-10,
    method: str = "auto",
    max_terms: int = 5_000_000,
) -> LatticeSumResult:
    """sum_{p in L*} w(p) |p|^-s with w = 1 or w = (theta . p)^2.

    ``method`` is ``"direct"``, ``"smooth"`` or ``"auto"`` (direct when the
    certified truncation fits in ``max_terms`` points, smooth otherwise).
    """
    if isinstance(weight, str):
        if weight != "unit":
            raise ValueError(f"unknown weight {weight!r}")
        return _lattice_sum(L, s, 0, tol, method, max_terms)
    if not isinstance(weight, Directional):
        raise TypeError("weight must be 'unit' or Directional(theta)")
    th = np.asarray(weight.theta)
    if th.shape[0] != L.N:
        raise ValueError("theta must live in R^N")
    res = _lattice_sum(L, s, 2, tol, method, max_terms)
    return LatticeSumResult(float(th @ res.value @ th), res.truncation_radius, res.tail_bound, res.terms_used, res.method, res.certified)


def moment_matrix(L: Lattice, s: float, tol: float = 1e-10, method: str = "auto", max_terms: int = 5_000_000) -> LatticeSumResult:
    """N x N matrix sum_{p in L*} p p^T |p|^-s."""
    return _lattice_sum(L, s, 2, tol, method, max_terms)


def moment_tensor4(L: Lattice, s: float, tol: float = 1e-10, method: str = "auto", max_terms: int = 5_000_000) -> LatticeSumResult:
    """N^4 tensor sum_{p in L*} p (x) p (x) p (x) p |p|^-s."""
    return _lattice_sum(L, s, 4, tol, method, max_terms)


def mu_coefficients(L: Lattice, params: FracParams, tol: float = 1e-10) -> np.ndarray:
    """mu_j = sum p_j^2 / |p|^(N+alpha+4), j = 1..M, in the frame of the basis."""
    if not L.is_rectangular:
        raise NotRectangularError("mu coefficients are defined for rectangular lattices")
    Mm = moment_matrix(L, params.N + params.alpha + 4.0, tol).value
    U = L.vectors / np.linalg.norm(L.vectors, axis=1, keepdims=True)
    return np.einsum("ij,jk,ik->i", U, Mm, U)
