"""Quadrature grids on S^{N-1} and a real orthonormal spherical-harmonic basis.

Harmonics are represented as polynomials in the Cartesian coordinates of the
evaluation point, which gives values and tangential gradients at arbitrary
unit vectors without any coordinate singularity:

* N = 2: ``Re (x + i y)^k / sqrt(pi)`` (m = k) and ``Im (x + i y)^k / sqrt(pi)``
  (m = -k), plus the constant ``1 / sqrt(2 pi)``.
* N = 3: ``c_lm P_l^{(m)}(z) Re (x + i y)^m`` for m >= 0 and the ``Im`` part
  for m < 0, where ``P_l^{(m)}`` is the m-th derivative of the Legendre
  polynomial.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .specfun import FracParams, sphere_area

__all__ = [
    "SphereGrid",
    "Shape",
    "EvenShape",
    "CutoffError",
    "basis_index",
    "build_grid",
    "harmonic_eval",
    "harmonic_matrix",
    "analyze",
    "synthesize",
    "synthesize_with_gradient",
    "chord_differences",
    "rotation_to",
    "rotate_shape",
    "sup_norm",
    "check_admissible",
    "OutsideDomainError",
]


class CutoffError(ValueError):
    """Requested degree cutoff is not resolved by the grid."""


class OutsideDomainError(ValueError):
    """The perturbation does not satisfy sup|phi| < 1."""


def basis_index(N: int, K: int, parity: str = "even") -> list[tuple[int, int]]:
    """List of (degree, index) pairs for degrees <= K.

    parity is ``"even"``, ``"odd"`` or ``"all"``.
    """
    out = []
    for k in range(K + 1):
        if parity == "even" and k % 2:
            continue
        if parity == "odd" and k % 2 == 0:
            continue
        if N == 2:
            out.extend([(0, 0)] if k == 0 else [(k, k), (k, -k)])
        elif N == 3:
            out.extend((k, m) for m in range(-k, k + 1))
        else:
            raise ValueError(f"unsupported dimension N={N}")
    return out


def _check_index(N: int, k: int, m: int) -> None:
    if k < 0:
        raise ValueError("degree must be non-negative")
    if N == 2:
        ok = (m == 0) if k == 0 else (abs(m) == k)
    else:
        ok = abs(m) <= k
    if not ok:
        raise ValueError(f"invalid harmonic index (k={k}, m={m}) for N={N}")


@lru_cache(maxsize=512)
def _legendre_derivative(k: int, m: int) -> np.ndarray:
    c = np.zeros(k + 1)
    c[k] = 1.0
    return np.polynomial.legendre.legder(c, m) if m else c


def _norm3(k: int, m: int) -> float:
    am = abs(m)
    c = math.sqrt((2 * k + 1) / (4.0 * math.pi) * math.factorial(k - am) / math.factorial(k + am))
    return c * math.sqrt(2.0) if m else c


def _eval_one(N: int, k: int, m: int, x: np.ndarray, grad: bool):
    """Value (and R^N gradient of the polynomial extension) of one harmonic."""
    npts = x.shape[0]
    if N == 2:
        if k == 0:
            v = np.full(npts, 1.0 / math.sqrt(2.0 * math.pi))
            return v, (np.zeros((npts, 2)) if grad else None)
        c = 1.0 / math.sqrt(math.pi)
        w = x[:, 0] + 1j * x[:, 1]
        zk = w**k
        v = c * (zk.real if m > 0 else zk.imag)
        if not grad:
            return v, None
        zk1 = k * w ** (k - 1)
        if m > 0:
            g = np.stack([zk1.real, -zk1.imag], axis=1)
        else:
            g = np.stack([zk1.imag, zk1.real], axis=1)
        return v, c * g
    am = abs(m)
    c = _norm3(k, m)
    z = x[:, 2]
    P = np.polynomial.legendre.legval(z, _legendre_derivative(k, am))
    if am == 0:
        A = np.ones(npts)
    else:
        wm = (x[:, 0] + 1j * x[:, 1]) ** am
        A = wm.real if m > 0 else wm.imag
    v = c * P * A
    if not grad:
        return v, None
    g = np.zeros((npts, 3))
    if am:
        w1 = am * (x[:, 0] + 1j * x[:, 1]) ** (am - 1)
        if m > 0:
            g[:, 0], g[:, 1] = w1.real, -w1.imag
        else:
            g[:, 0], g[:, 1] = w1.imag, w1.real
        g[:, :2] *= (c * P)[:, None]
    if k > am:
        dP = np.polynomial.legendre.legval(z, _legendre_derivative(k, am + 1))
        g[:, 2] = c * dP * A
    return v, g


def _line_terms(N: int, k: int, m: int, x: np.ndarray, d: np.ndarray):
    """Taylor coefficients a_j (j = 1..k) of u -> P(x + u d) for one harmonic.

    P is the polynomial extension used by ``_eval_one``; the coefficients are
    exact binomial/derivative expressions, so sums of them carry no
    cancellation even when |d| is tiny.
    """
    if k == 0:
        return []
    if N == 2:
        c = 1.0 / math.sqrt(math.pi)
        zx = x[:, 0] + 1j * x[:, 1]
        zd = d[:, 0] + 1j * d[:, 1]
        terms = [math.comb(k, j) * zx ** (k - j) * zd**j for j in range(1, k + 1)]
        return [c * (t.real if m > 0 else t.imag) for t in terms]
    am = abs(m)
    c = _norm3(k, m)
    Q = _legendre_derivative(k, am)
    zx, zd = x[:, 2], d[:, 2]
    q = [np.polynomial.legendre.legval(zx, np.polynomial.legendre.legder(Q, j)) / math.factorial(j) * zd**j
         if j else np.polynomial.legendre.legval(zx, Q)
         for j in range(k - am + 1)]
    wx = x[:, 0] + 1j * x[:, 1]
    wd = d[:, 0] + 1j * d[:, 1]
    b = [math.comb(am, j) * wx ** (am - j) * wd**j for j in range(am + 1)]
    out = []
    for n in range(1, k + 1):
        e = 0.0
        for i in range(max(0, n - am), min(n, k - am) + 1):
            e = e + q[i] * b[n - i]
        e = np.asarray(e, dtype=complex) * np.ones(x.shape[0])
        out.append(c * (e.real if m >= 0 else e.imag))
    return out


def chord_differences(shape: "Shape", base, delta):
    """Cancellation-free differences of ``shape`` along chords.

    Returns ``(d1, d2, radial)`` with d1 = phi(base + delta) - phi(base),
    d2 = d1 - gradP(base) . delta (ambient gradient of the polynomial
    extension) and radial = base . gradP(base).  For unit ``base`` and
    ``base + delta`` the tangential first-order remainder is
    ``d2 + radial * (base . delta)``.
    """
    x = np.asarray(base, dtype=float)
    dl = np.asarray(delta, dtype=float)
    lead = x.shape[:-1]
    x = x.reshape(-1, shape.N)
    dl = np.broadcast_to(dl, lead + (shape.N,)).reshape(-1, shape.N)
    d1 = np.zeros(x.shape[0])
    d2 = np.zeros(x.shape[0])
    radial = np.zeros(x.shape[0])
    for c, (k, m) in zip(shape.coeffs, shape.index):
        if c == 0.0 or k == 0:
            continue
        terms = _line_terms(shape.N, k, m, x, dl)
        rest = sum(terms[1:]) if len(terms) > 1 else 0.0
        d1 += c * (terms[0] + rest)
        d2 += c * rest
        _, g = _eval_one(shape.N, k, m, x, True)
        radial += c * np.sum(x * g, axis=1)
    return d1.reshape(lead), d2.reshape(lead), radial.reshape(lead)


def _tangential(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g - x * np.sum(x * g, axis=1, keepdims=True)


def harmonic_eval(N: int, k: int, m: int, theta) -> np.ndarray | float:
    """Evaluate the real orthonormal harmonic (k, m) at unit vector(s) theta."""
    _check_index(N, k, m)
    th = np.asarray(theta, dtype=float)
    single = th.ndim == 1
    th = np.atleast_2d(th)
    if th.shape[1] != N:
        raise ValueError(f"points must have {N} components")
    v, _ = _eval_one(N, k, m, th, False)
    return float(v[0]) if single else v


def harmonic_matrix(N: int, index, points: np.ndarray) -> np.ndarray:
    """Matrix Y[i, j] = Y_j(points[i]) for the harmonics in ``index``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    Y = np.empty((points.shape[0], len(index)))
    for j, (k, m) in enumerate(index):
        Y[:, j], _ = _eval_one(N, k, m, points, False)
    return Y


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature nodes on S^{N-1}.

    N = 2 grids are uniform in angle; N = 3 grids are Gauss-Legendre in
    cos(polar angle) times uniform in azimuth.
    """

    N: int
    nodes: np.ndarray
    weights: np.ndarray
    max_exact_degree: int
    resolution: int
    angles: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values) -> float | np.ndarray:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def antipode_index(self) -> np.ndarray:
        """Index permutation i -> j with nodes[j] = -nodes[i]."""
        n = self.size
        if self.N == 2:
            return (np.arange(n) + n // 2) % n
        nt, nphi = self.resolution, 2 * self.resolution
        it, ip = np.divmod(np.arange(n), nphi)
        return (nt - 1 - it) * nphi + (ip + nphi // 2) % nphi


def build_grid(params: FracParams | int, resolution: int) -> SphereGrid:
    """Quadrature grid on the unit sphere.

    For N = 2, ``resolution`` angles (exact to trigonometric degree
    resolution - 1).  For N = 3, ``resolution`` Gauss-Legendre polar nodes
    times ``2 * resolution`` azimuths (exact to degree 2 * resolution - 1).
    """
    N = params if isinstance(params, int) else params.N
    resolution = int(resolution)
    if resolution < 8 or resolution % 2:
        raise ValueError("resolution must be an even integer >= 8")
    if N == 2:
        t = 2.0 * np.pi * np.arange(resolution) / resolution
        nodes = np.stack([np.cos(t), np.sin(t)], axis=1)
        w = np.full(resolution, 2.0 * np.pi / resolution)
        return SphereGrid(2, nodes, w, resolution - 1, resolution, t)
    if N != 3:
        raise ValueError(f"unsupported dimension N={N}")
    z, wz = np.polynomial.legendre.leggauss(resolution)
    nphi = 2 * resolution
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    Z, P = np.meshgrid(z, phi, indexing="ij")
    S = np.sqrt(1.0 - Z**2)
    nodes = np.stack([S * np.cos(P), S * np.sin(P), Z], axis=-1).reshape(-1, 3)
    w = np.repeat(wz, nphi) * (2.0 * np.pi / nphi)
    return SphereGrid(3, nodes, w, 2 * resolution - 1, resolution)


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True, eq=False)
class Shape:
    """Truncated real spherical-harmonic expansion of a function on S^{N-1}.

    ``coeffs`` is aligned with ``basis_index(N, K, parity)``.
    """

    N: int
    K: int
    coeffs: np.ndarray = field(default=None)
    parity: str = "all"

    def __post_init__(self):
        n = len(basis_index(self.N, self.K, self.parity))
        c = np.zeros(n) if self.coeffs is None else np.array(self.coeffs, dtype=float)
        if c.shape != (n,):
            raise ValueError(f"expected {n} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def index(self) -> list[tuple[int, int]]:
        return basis_index(self.N, self.K, self.parity)

    def coefficient(self, k: int, m: int) -> float:
        try:
            return float(self.coeffs[self.index.index((k, m))])
        except ValueError:
            return 0.0

    def degree_part(self, k: int) -> np.ndarray:
        idx = [i for i, (kk, _) in enumerate(self.index) if kk == k]
        return self.coeffs[idx]

    def with_coeffs(self, coeffs) -> "Shape":
        return Shape(self.N, self.K, coeffs, self.parity)

    def __call__(self, points) -> np.ndarray:
        return synthesize(self, points)

    def __add__(self, other: "Shape") -> "Shape":
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "Shape") -> "Shape":
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "Shape":
        return self.with_coeffs(float(c) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "Shape":
        return self.with_coeffs(-self.coeffs)

    def _check_compatible(self, other):
        if (self.N, self.K, self.parity) != (other.N, other.K, other.parity):
            raise ValueError("incompatible shapes")

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "K": self.K,
            "coeffs": [{"k": k, "m": m, "c": float(c)} for (k, m), c in zip(self.index, self.coeffs)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, parity: str | None = None) -> "Shape":
        N, K = int(d["N"]), int(d["K"])
        entries = {(int(e["k"]), int(e["m"])): float(e["c"]) for e in d["coeffs"]}
        if cls is EvenShape:
            parity = "even"
        elif parity is None:
            parity = "even" if all(k % 2 == 0 for k, _ in entries) else "all"
        idx = basis_index(N, K, parity)
        unknown = set(entries) - set(idx)
        if unknown:
            raise ValueError(f"coefficients outside the basis: {sorted(unknown)}")
        c = [entries.get(key, 0.0) for key in idx]
        return cls(N, K, c) if cls is EvenShape else cls(N, K, c, parity)

    @classmethod
    def from_json(cls, text: str) -> "Shape":
        return cls.from_dict(json.loads(text))

    @classmethod
    def single(cls, N: int, K: int, k: int, m: int, value: float = 1.0, parity: str = "all") -> "Shape":
        _check_index(N, k, m)
        if cls is EvenShape:
            parity = "even"
        idx = basis_index(N, K, parity)
        c = np.zeros(len(idx))
        c[idx.index((k, m))] = value
        return cls(N, K, c) if cls is EvenShape else cls(N, K, c, parity)

    @classmethod
    def constant(cls, N: int, K: int, value: float) -> "Shape":
        """Shape equal to ``value`` everywhere."""
        return cls.single(N, K, 0, 0, value * math.sqrt(sphere_area(N)), parity="even")


class EvenShape(Shape):
    """Shape containing even degrees only (the space X)."""

    def __init__(self, N: int, K: int, coeffs=None):
        if K % 2:
            raise ValueError("cutoff degree K must be even")
        super().__init__(N, K, coeffs, "even")

    def with_coeffs(self, coeffs) -> "EvenShape":
        return EvenShape(self.N, self.K, coeffs)

    @classmethod
    def zeros(cls, N: int, K: int) -> "EvenShape":
        return cls(N, K)


def _as_points(N: int, targets) -> np.ndarray:
    if isinstance(targets, SphereGrid):
        return targets.nodes
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    if pts.shape[-1] != N:
        raise ValueError(f"points must have {N} components")
    return pts


def synthesize(shape: Shape, targets) -> np.ndarray:
    """Pointwise values sum_j c_j Y_j(target)."""
    pts = _as_points(shape.N, targets)
    flat = pts.reshape(-1, shape.N)
    out = np.zeros(flat.shape[0])
    for c, (k, m) in zip(shape.coeffs, shape.index):
        if c != 0.0:
            v, _ = _eval_one(shape.N, k, m, flat, False)
            out += c * v
    return out.reshape(pts.shape[:-1])


def synthesize_with_gradient(shape: Shape, targets):
    """Values and tangential gradients (shape ``(..., N)``) at the targets."""
    pts = _as_points(shape.N, targets)
    flat = pts.reshape(-1, shape.N)
    val = np.zeros(flat.shape[0])
    g = np.zeros_like(flat)
    for c, (k, m) in zip(shape.coeffs, shape.index):
        if c != 0.0:
            v, gk = _eval_one(shape.N, k, m, flat, True)
            val += c * v
            g += c * gk
    g = _tangential(flat, g)
    return val.reshape(pts.shape[:-1]), g.reshape(pts.shape)


def analyze(grid: SphereGrid, values, K: int, parity: str = "even"):
    """Project node values onto harmonics of degree <= K.

    Returns ``(shape, odd_residual)``.  ``odd_residual`` is the grid L2 norm
    of whatever the projection leaves out (odd degrees and degrees above K
    when ``parity == "even"``).
    """
    if K > grid.max_exact_degree - 2:
        raise CutoffError(f"cutoff K={K} exceeds grid capacity {grid.max_exact_degree - 2}")
    values = np.asarray(values, dtype=float)
    idx = basis_index(grid.N, K, parity)
    Y = harmonic_matrix(grid.N, idx, grid.nodes)
    c = Y.T @ (grid.weights * values)
    rest = values - Y @ c
    odd = float(np.sqrt(np.sum(grid.weights * rest**2)))
    shape = EvenShape(grid.N, K, c) if parity == "even" else Shape(grid.N, K, c, parity)
    return shape, odd


def rotation_to(theta: np.ndarray) -> np.ndarray:
    """Orthogonal matrix (columns u, v, theta) mapping e_N to theta."""
    theta = np.asarray(theta, dtype=float)
    N = theta.shape[0]
    if N == 2:
        return np.array([[theta[1], theta[0]], [-theta[0], theta[1]]])
    # Householder reflection sending e_3 to theta, then fix orientation
    e = np.array([0.0, 0.0, 1.0])
    v = e - theta
    nv = np.dot(v, v)
    if nv < 1e-30:
        return np.eye(3)
    H = np.eye(3) - 2.0 * np.outer(v, v) / nv
    H[:, 0] *= -1.0
    return H


def rotate_shape(shape: Shape, R: np.ndarray, grid: SphereGrid | None = None) -> Shape:
    """Coefficients of theta -> shape(R^T theta), i.e. shape composed with R^{-1}."""
    if grid is None:
        grid = build_grid(shape.N, max(8, 2 * (shape.K + 2)))
    vals = synthesize(shape, grid.nodes @ np.asarray(R))
    rotated, _ = analyze(grid, vals, shape.K, shape.parity)
    return rotated if isinstance(shape, EvenShape) else Shape(shape.N, shape.K, rotated.coeffs, shape.parity)


def sup_norm(shape: Shape, resolution: int | None = None) -> float:
    """sup|shape| estimated on a dense grid (4x the degree-resolving size)."""
    if resolution is None:
        base = max(16, 2 * (shape.K + 2))
        resolution = 4 * base if shape.N == 2 else 2 * base
    resolution += resolution % 2
    grid = build_grid(shape.N, resolution)
    return float(np.max(np.abs(synthesize(shape, grid.nodes))))


def check_admissible(shape: Shape, resolution: int | None = None) -> float:
    s = sup_norm(shape, resolution)
    if not s < 1.0:
        raise OutsideDomainError(f"sup|phi| = {s:.6g} >= 1; shape is outside the admissible set")
    return s
