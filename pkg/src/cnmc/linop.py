"""The linearised operator Dh(0) = alpha (L_alpha - lambda_1) and related checks."""
from __future__ import annotations

import numpy as np

from .nmc import _local_rule, _refine, _rotations, _targets, default_h_tol, script_h
from .parallel import map_ordered
from .specfun import FracParams, lambda_k
from .sphere import EvenShape, Shape, analyze, chord_differences

__all__ = [
    "OddContentError",
    "l_alpha_pv",
    "dh0_diagonal",
    "dh0_apply",
    "dh0_solve",
    "jacobian_fd",
    "linearization_spectrum",
]


class OddContentError(ValueError):
    """A right-hand side carries odd-degree content outside the even space."""


def l_alpha_pv(shape: Shape, theta, params: FracParams, tol: float = 1e-10, n0: int = 16, n_max: int | None = None):
    """PV integral of (phi(theta) - phi(sigma)) |theta - sigma|^-(N+alpha) dV(sigma).

    Mirror nodes are combined as 2 phi(theta) - phi(sigma) - phi(sigma'),
    computed from exact chord differences, so the integrand is O(t^-alpha)
    and free of cancellation.
    """
    N = shape.N
    pts = _targets(N, theta)
    n_max = n_max or (256 if N == 2 else 128)
    s = params.s
    _, _, radial = chord_differences(shape, pts, np.zeros_like(pts))
    R = _rotations(pts)

    def fn(n):
        L, D, chord, W = _local_rule(N, float(params.alpha), int(n))
        h = L.shape[0] // 2
        eps = -np.einsum("tij,qj->tqi", R, D)
        _, d2, _ = chord_differences(shape, np.broadcast_to(pts[:, None, :], eps.shape), eps)
        # first-order parts of the mirror pair add up to -radial * 4 sin^2(t/2)
        pair = -(d2[:, :h] + d2[:, h:]) + radial[:, None] * chord[:h] ** 2
        return (pair * chord[:h] ** (-s)) @ W[:h], 0.0

    (vals, _), _, _ = _refine(fn, n0, n_max, tol)
    return float(vals[0]) if np.ndim(theta) == 1 else vals


def dh0_diagonal(params: FracParams, K: int) -> np.ndarray:
    """alpha (lambda_k - lambda_1) for every even basis function of degree <= K."""
    lam1 = lambda_k(params, 1)
    idx = EvenShape.zeros(params.N, K).index
    return np.array([params.alpha * (lambda_k(params, k) - lam1) for k, _ in idx])


def dh0_apply(shape: EvenShape, params: FracParams) -> EvenShape:
    return shape.with_coeffs(dh0_diagonal(params, shape.K) * shape.coeffs)


def dh0_solve(rhs: Shape, params: FracParams, odd_tol: float = 1e-10, odd_residual: float = 0.0) -> EvenShape:
    """Inverse of Dh(0) on the even space.

    ``rhs`` may be a general Shape; its odd coefficients (and an externally
    measured ``odd_residual``) must not exceed ``odd_tol``.
    """
    if odd_residual > odd_tol:
        raise OddContentError(f"odd residual {odd_residual:g} exceeds {odd_tol:g}")
    if not isinstance(rhs, EvenShape):
        odd = [abs(c) for c, (k, _) in zip(rhs.coeffs, rhs.index) if k % 2]
        if odd and max(odd) > odd_tol:
            raise OddContentError(f"odd coefficients up to {max(odd):g} exceed {odd_tol:g}")
        K = rhs.K - (rhs.K % 2)
        rhs = EvenShape(rhs.N, K, [rhs.coefficient(k, m) for k, m in EvenShape.zeros(rhs.N, K).index])
    return rhs.with_coeffs(rhs.coeffs / dh0_diagonal(params, rhs.K))


def jacobian_fd(tau: float, shape: EvenShape, grid, L, params: FracParams, fd_step: float = 1e-4, tol: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of x -> analyze(H(tau, x)) over the even basis."""
    if not 1e-6 <= fd_step <= 1e-2:
        raise ValueError("fd_step should lie in [1e-6, 1e-2]")
    tol = tol if tol is not None else 1e-13
    n = shape.coeffs.size

    def coeffs(c):
        vals = script_h(tau, shape.with_coeffs(c), grid, L, params, tol)
        return analyze(grid, vals, shape.K)[0].coeffs

    def column(j):
        e = np.zeros(n)
        e[j] = fd_step
        return (coeffs(shape.coeffs + e) - coeffs(shape.coeffs - e)) / (2.0 * fd_step)

    return np.stack(map_ordered(column, range(n)), axis=1)


def linearization_spectrum(tau: float, shape: EvenShape, grid, L, params: FracParams, fd_step: float = 1e-4, tol: float | None = None) -> np.ndarray:
    """Sorted real parts of the eigenvalues of the finite-difference Jacobian."""
    J = jacobian_fd(tau, shape, grid, L, params, fd_step, tol)
    return np.sort(np.linalg.eigvals(J).real)
