"""Nonlocal mean curvature of a perturbed sphere and its lattice interaction.

``h_nmc`` evaluates the curvature of S_phi = {(1 + phi(s)) s} through the
regularised three-term integral representation in which every integrand is
absolutely integrable and behaves like |theta - sigma|^(-alpha) near the
diagonal.  Each target is rotated to the pole; the polar/arc offset then
carries an algebraic endpoint weight which is integrated exactly by a
Gauss-Jacobi rule, so convergence is spectral in the number of nodes.

``g_total`` sums the interactions G_p over the lattice: pairs {p, -p} with
|p| <= R_near are integrated exactly (ball in polar coordinates, sphere grid
times Gauss-Legendre in the radius), the remaining far field is replaced by
its second-order multipole expansion, with R_near chosen so that the
fourth-order remainder bound is below the requested tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lattice as lat
from .parallel import map_ordered
from .quadrature import gauss_legendre, singular_rule
from .specfun import FracParams, ball_volume
from .sphere import (
    Shape,
    SphereGrid,
    build_grid,
    check_admissible,
    chord_differences,
    rotation_to,
    synthesize,
    synthesize_with_gradient,
)

__all__ = [
    "QuadratureError",
    "TauTooLargeError",
    "SurfaceFrame",
    "surface_frame",
    "kernel_triple",
    "h_nmc",
    "g_single",
    "g_total",
    "script_h",
    "default_h_tol",
]


class QuadratureError(RuntimeError):
    """Refinement did not reach the requested tolerance."""


class TauTooLargeError(ValueError):
    pass


def default_h_tol(N: int) -> float:
    return 1e-8 if N == 2 else 1e-5


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class SurfaceFrame:
    position: np.ndarray
    gradient: np.ndarray
    normal: np.ndarray
    area_element: np.ndarray


def surface_frame(shape: Shape, points) -> SurfaceFrame:
    """Position, tangential gradient, outer normal and area element of S_phi."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    phi, grad = synthesize_with_gradient(shape, pts)
    psi = 1.0 + phi
    root = np.sqrt(psi**2 + np.sum(grad**2, axis=-1))
    normal = (psi[:, None] * pts - grad) / root[:, None]
    J = psi ** (shape.N - 2) * root
    return SurfaceFrame(psi[:, None] * pts, grad, normal, J)


def kernel_triple(psi_t, psi_s, grad_s, theta, sigma, s: float):
    """(Lambda_1, Lambda_2, Kbar) for psi = 1 + phi at a node pair.

    ``s`` is the kernel exponent N + alpha.
    """
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = theta - sigma
    d = psi_t - psi_s
    lam1 = d - np.sum(diff * grad_s, axis=-1)
    lam2 = d * d
    chord2 = np.sum(diff * diff, axis=-1)
    kbar = (lam2 / chord2 + psi_s * psi_t) ** (-0.5 * s)
    return lam1, lam2, kbar


# ---------------------------------------------------------------------------
# local rules around the pole


@lru_cache(maxsize=32)
def _local_rule(N: int, alpha: float, n: int):
    """Pole-centred rule on S^{N-1} for integrands ~ |theta - sigma|^-alpha.

    Returns local points L (Q, N), accurate differences D = e_N - L, chord
    lengths and weights that already include the area factor and the
    compensation for the Gauss-Jacobi weight.  The node set is split into
    two mirror halves (t <-> -t for N = 2, beta <-> beta + pi for N = 3).
    """
    t, w = singular_rule(n, math.pi, alpha)
    comp = w * t**alpha
    half_sin = np.sin(0.5 * t)
    if N == 2:
        st, ct = np.sin(t), np.cos(t)
        L = np.concatenate([np.stack([st, ct], -1), np.stack([-st, ct], -1)])
        D = np.concatenate([np.stack([-st, 2 * half_sin**2], -1), np.stack([st, 2 * half_sin**2], -1)])
        chord = np.concatenate([2 * half_sin, 2 * half_sin])
        W = np.concatenate([comp, comp])
    else:
        nb = 2 * n
        beta = 2 * math.pi * np.arange(nb // 2) / nb
        beta = np.concatenate([beta, beta + math.pi])
        om, be = np.meshgrid(t, beta, indexing="ij")
        so = np.sin(om)
        L = np.stack([so * np.cos(be), so * np.sin(be), np.cos(om)], -1)
        D = np.stack([-L[..., 0], -L[..., 1], 2 * np.sin(0.5 * om) ** 2], -1)
        chord = 2 * np.sin(0.5 * om)
        W = (comp[:, None] * so) * (2 * math.pi / nb) * np.ones_like(be)
        # order: first half beta in [0, pi), then the mirrored half
        h = nb // 2
        L = np.concatenate([L[:, :h].reshape(-1, 3), L[:, h:].reshape(-1, 3)])
        D = np.concatenate([D[:, :h].reshape(-1, 3), D[:, h:].reshape(-1, 3)])
        chord = np.concatenate([chord[:, :h].ravel(), chord[:, h:].ravel()])
        W = np.concatenate([W[:, :h].ravel(), W[:, h:].ravel()])
    for a in (L, D, chord, W):
        a.setflags(write=False)
    return L, D, chord, W


def _rotations(pts: np.ndarray) -> np.ndarray:
    return np.stack([rotation_to(p) for p in pts])


def _targets(N: int, where) -> np.ndarray:
    if isinstance(where, SphereGrid):
        return where.nodes
    pts = np.atleast_2d(np.asarray(where, dtype=float))
    if pts.shape[-1] != N:
        raise ValueError(f"targets must have {N} components")
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _chunks(T: int, Q: int, budget: int = 400_000):
    step = max(1, budget // max(1, Q))
    return [slice(i, min(T, i + step)) for i in range(0, T, step)]


def _h_fixed(shape: Shape, pts: np.ndarray, s: float, alpha: float, n: int):
    N = shape.N
    L, D, chord, W = _local_rule(N, float(alpha), int(n))
    phi_t = synthesize(shape, pts)

    def block(sl):
        P = pts[sl]
        R = _rotations(P)
        sig = np.einsum("tij,qj->tqi", R, L)
        diff = np.einsum("tij,qj->tqi", R, D)
        dphi, d2, radial = chord_differences(shape, sig, diff)
        pt = phi_t[sl][:, None]
        psi_t = 1.0 + pt
        psi_s = psi_t - dphi
        lam2 = dphi * dphi
        # tangential remainder: d2 + radial (sigma . (theta - sigma)), sigma . diff = -chord^2 / 2
        lam1 = d2 - 0.5 * radial * chord**2
        kbar = (lam2 / chord**2 + psi_s * psi_t) ** (-0.5 * s)
        cs = chord ** (-s)
        pw = psi_s ** (N - 2)
        f = (lam2 - psi_t * lam1) * cs * pw * kbar + 0.5 * psi_t * psi_s ** (N - 1) * kbar * chord ** (2 - s)
        return f @ W, float(kbar.min())

    out = map_ordered(block, _chunks(pts.shape[0], L.shape[0]))
    return np.concatenate([o[0] for o in out]), min(o[1] for o in out)


def _refine(fn, n0: int, n_max: int, tol: float):
    n = n0
    prev = fn(n)
    while True:
        n *= 2
        if n > n_max:
            raise QuadratureError(f"singular quadrature did not reach tol={tol:g} with {n // 2} nodes")
        cur = fn(n)
        err = float(np.max(np.abs(cur[0] - prev[0])))
        if err <= tol:
            return cur, err, n
        prev = cur


def h_nmc(
    shape: Shape,
    where,
    params: FracParams,
    tol: float | None = None,
    n0: int | None = None,
    n_max: int | None = None,
    full_output: bool = False,
):
    """Values of h(phi) at the nodes of a grid (or at explicit unit vectors).

    Refinement doubles the number of radial nodes until successive values
    differ by at most ``tol`` in sup norm.  With ``full_output`` a dict with
    the error estimate, node count and the smallest Kbar encountered is
    returned as well.
    """
    N = shape.N
    if N != params.N:
        raise ValueError("shape and params disagree on N")
    check_admissible(shape)
    tol = default_h_tol(N) if tol is None else tol
    n0 = n0 or (16 if N == 2 else 8)
    n_max = n_max or (256 if N == 2 else 128)
    pts = _targets(N, where)
    (vals, kmin), err, n = _refine(lambda m: _h_fixed(shape, pts, params.s, params.alpha, m), n0, n_max, tol)
    if full_output:
        return vals, {"error": err, "nodes": n, "kbar_min": kmin}
    return vals


# ---------------------------------------------------------------------------
# lattice interaction


def _sigma_resolution(shape: Shape) -> int:
    if shape.N == 2:
        res = max(64, 4 * shape.K + 16)
    else:
        res = max(16, ((shape.N + 3) * shape.K + 8) // 2)
    return res + res % 2


@dataclass(frozen=True)
class _Body:
    """Polar-coordinate quadrature of the ball B_phi."""

    y: np.ndarray  # (P, N)
    w: np.ndarray  # (P,)
    m0: float
    m1: np.ndarray
    m2: np.ndarray
    sup_phi: float


def _ball_rule(shape: Shape, radial_order: int, sigma_resolution: int | None = None) -> _Body:
    N = shape.N
    g = build_grid(N, sigma_resolution or _sigma_resolution(shape))
    psi = 1.0 + synthesize(shape, g.nodes)
    rho, wr = gauss_legendre(radial_order, 0.0, 1.0)
    y = (rho[None, :, None] * psi[:, None, None] * g.nodes[:, None, :]).reshape(-1, N)
    w = (g.weights * psi**N)[:, None] * (wr * rho ** (N - 1))[None, :]
    m0 = float(np.sum(g.weights * psi**N) / N)
    m1 = (g.weights * psi ** (N + 1) / (N + 1)) @ g.nodes
    m2 = np.einsum("i,ij,ik->jk", g.weights * psi ** (N + 2) / (N + 2), g.nodes, g.nodes)
    sup_phi = float(np.max(np.abs(psi - 1.0)))
    return _Body(y, w.ravel(), m0, m1, m2, sup_phi)


def _check_tau(tau: float, L: lat.Lattice | None, c0: float | None = None):
    c0 = L.c0 if L is not None else c0
    if not abs(tau) < 0.25 * c0:
        raise TauTooLargeError(f"|tau| = {abs(tau):g} must be below c0/4 = {0.25 * c0:g}")


def _pair_sums(body: _Body, x: np.ndarray, tau: float, P: np.ndarray, s: float, block: int = 32):
    """sum over the rows p of P of int_B (|tau(y-x)+p|^-s + |tau(y-x)-p|^-s) dy."""
    T = x.shape[0]
    out = np.zeros(T)
    if P.shape[0] == 0:
        return out

    def chunk(sl):
        w = body.y[None, :, :] - x[sl][:, None, :]  # (t, P, N)
        a0 = tau * tau * np.einsum("tpi,tpi->tp", w, w)
        acc = np.zeros(w.shape[0])
        for b in range(0, P.shape[0], block):
            pb = P[b : b + block]
            a = a0[:, :, None] + np.einsum("ij,ij->i", pb, pb)[None, None, :]
            c = 2.0 * tau * np.einsum("tpi,bi->tpb", w, pb)
            v = (a + c) ** (-0.5 * s) + (a - c) ** (-0.5 * s)
            acc += np.einsum("tpb,p->t", v, body.w)
        return acc

    parts = map_ordered(chunk, _chunks(T, body.y.shape[0] * min(block, P.shape[0]), 2_000_000))
    return np.concatenate(parts)


def g_single(
    tau: float,
    shape: Shape,
    p,
    where,
    params: FracParams,
    radial_order: int = 16,
    sigma_resolution: int | None = None,
    c0: float | None = None,
) -> np.ndarray:
    """G_p(tau, phi) at the targets, by direct polar quadrature of the ball."""
    p = np.asarray(p, dtype=float)
    if not np.any(p):
        raise ValueError("p must be a nonzero lattice point")
    _check_tau(tau, None, c0 if c0 is not None else float(np.linalg.norm(p)))
    pts = _targets(shape.N, where)
    body = _ball_rule(shape, radial_order, sigma_resolution)
    x = (1.0 + synthesize(shape, pts))[:, None] * pts
    w = body.y[None, :, :] - x[:, None, :]
    d = tau * w + p
    val = np.einsum("tp,p->t", np.einsum("tpi,tpi->tp", d, d) ** (-0.5 * params.s), body.w)
    return -params.alpha * val


_SUM_TOL = 1e-12


@lru_cache(maxsize=64)
def _lattice_totals(N: int, basis_key: bytes, M: int, s: float):
    L = lat.make_lattice(np.frombuffer(basis_key).reshape(M, M), N)
    return (
        lat.weighted_sum(L, s, tol=_SUM_TOL).value,
        lat.weighted_sum(L, s + 2.0, tol=_SUM_TOL).value,
        lat.moment_matrix(L, s + 4.0, tol=_SUM_TOL).value,
        lat.weighted_sum(L, s + 4.0, tol=_SUM_TOL).value,
        lat.moment_matrix(L, s + 6.0, tol=_SUM_TOL).value,
        lat.moment_tensor4(L, s + 8.0, tol=_SUM_TOL).value,
    )


def lattice_totals(L: lat.Lattice, s: float):
    """Whole-lattice sums feeding the multipole far field.

    Returns (S0, S2, M4, S4, M6, T8) with S_k = sum |p|^-(s+k),
    M_k = sum p p^T |p|^-(s+k) and T8 = sum p^{(x)4} |p|^-(s+8).
    """
    key = np.ascontiguousarray(L.basis, dtype=float).tobytes()
    return _lattice_totals(L.N, key, L.M, float(s))


def _far_sums(L: lat.Lattice, s: float, near_pts: np.ndarray):
    tot = lattice_totals(L, s)
    terms = [(0.0, 0), (2.0, 0), (4.0, 2), (4.0, 0), (6.0, 2), (8.0, 4)]
    return [t - lat.partial_sums(L, s + k, 0.0, order, pts=near_pts)[0] for t, (k, order) in zip(tot, terms)]


def near_radius(L: lat.Lattice, tau: float, body_volume: float, sup_phi: float, s: float, alpha: float, tol: float) -> float:
    """Radius beyond which the fourth-order multipole error is <= tol.

    The pair sum |p + z|^-s + |p - z|^-s differs from its Taylor polynomial
    of degree 4 by at most 2 (s)_6 / 6! |z|^6 (|p| - |z|)^-(s+6)
    (Gegenbauer bound), with |z| <= 2 |tau| (1 + sup|phi|).
    """
    if tau == 0.0:
        return 0.0
    zmax = 2.0 * abs(tau) * (1.0 + sup_phi)
    poch = math.prod(s + i for i in range(6))
    R = 2.0 * L.cell_radius + 2.0 * L.c0
    for _ in range(80):
        tail = lat.certified_tail(L, s + 6.0, R)
        bound = alpha * body_volume * poch / 720.0 * zmax**6 * (1.0 - zmax / R) ** (-s - 6.0) * tail
        if bound <= tol:
            return R
        R *= 1.25
    raise QuadratureError("could not bound the far-field remainder")  # pragma: no cover


def _far_field(body: _Body, x: np.ndarray, tau: float, s: float, sums):
    S0, S2, M4, S4, M6, T8 = sums
    lam = 0.5 * s
    c4a = (2.0 / 3.0) * lam * (lam + 1) * (lam + 2) * (lam + 3)
    c4b = 2.0 * lam * (lam + 1) * (lam + 2)
    c4c = 0.5 * lam * (lam + 1)
    t2 = tau * tau

    def chunk(sl):
        w = body.y[None, :, :] - x[sl][:, None, :]
        r2 = np.einsum("tpi,tpi->tp", w, w)
        q4 = np.einsum("tpi,ij,tpj->tp", w, M4, w)
        q6 = np.einsum("tpi,ij,tpj->tp", w, M6, w)
        w2 = np.einsum("tpi,tpj->tpij", w, w)
        t8 = np.einsum("tpij,ijkl,tpkl->tp", w2, T8, w2)
        second = -0.5 * s * S2 * r2 + 0.5 * s * (s + 2.0) * q4
        fourth = c4a * t8 - c4b * r2 * q6 + c4c * S4 * r2 * r2
        return S0 * body.w.sum() + (t2 * second + t2 * t2 * fourth) @ body.w

    parts = map_ordered(chunk, _chunks(x.shape[0], body.y.shape[0], 200_000))
    return np.concatenate(parts)


def g_total(
    tau: float,
    shape: Shape,
    where,
    L: lat.Lattice,
    params: FracParams,
    tol: float = 1e-10,
    radial_order: int = 16,
    sigma_resolution: int | None = None,
    full_output: bool = False,
):
    """G(tau, phi) = sum_p G_p(tau, phi) at the targets (even in tau)."""
    if L.N != shape.N or params.N != shape.N:
        raise ValueError("lattice, shape and params must share N")
    _check_tau(tau, L)
    s, a = params.s, params.alpha
    pts = _targets(shape.N, where)
    body = _ball_rule(shape, radial_order, sigma_resolution)
    psi_t = 1.0 + synthesize(shape, pts)
    x = psi_t[:, None] * pts

    R = near_radius(L, tau, body.m0, body.sup_phi, s, a, tol)
    half = lat.half_shell(L, R) if R > 0 else np.zeros((0, shape.N))
    near = _pair_sums(body, x, tau, half, s)
    far = _far_field(body, x, tau, s, _far_sums(L, s, np.concatenate([half, -half])))
    vals = -a * (near + far)
    if full_output:
        return vals, {"near_radius": R, "near_pairs": int(half.shape[0])}
    return vals


def script_h(
    tau: float,
    shape: Shape,
    where,
    L: lat.Lattice | None,
    params: FracParams,
    tol: float | None = None,
    h_values=None,
):
    """H(tau, phi) = h(phi) + |tau|^(N+alpha) G(tau, phi).

    ``tol`` bounds the h quadrature error; G is computed to tol / |tau|^(N+alpha)
    so that both contributions carry comparable absolute error.  At tau = 0
    the lattice is not needed and the result is h(phi) itself.
    """
    tol = default_h_tol(shape.N) if tol is None else tol
    if tau != 0.0:
        if L is None:
            raise ValueError("a lattice is required for tau != 0")
        _check_tau(tau, L)
    h = h_nmc(shape, where, params, tol) if h_values is None else np.asarray(h_values, dtype=float)
    if tau == 0.0:
        return np.array(h, copy=True)
    w = abs(tau) ** params.s
    G = g_total(tau, shape, where, L, params, tol=min(1e-6, tol / w))
    return h + w * G
