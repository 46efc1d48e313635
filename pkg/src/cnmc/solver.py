"""Newton continuation for H(1/r, phi) = lambda_1 in the even harmonic space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expansion import ExpansionData, kappa_constants, predicted_shape
from .linop import dh0_diagonal, jacobian_fd, linearization_spectrum
from .nmc import script_h
from .specfun import FracParams, lambda_k, sphere_area
from .sphere import EvenShape, analyze, build_grid, check_admissible, synthesize

__all__ = [
    "SolverOptions",
    "BranchPoint",
    "Branch",
    "NoConvergenceError",
    "newton_solve",
    "trace_branch",
    "verify_expansion",
]


class NoConvergenceError(RuntimeError):
    def __init__(self, msg, iters=None, residual=None):
        super().__init__(msg)
        self.iters = iters
        self.residual = residual


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iters: int = 40
    h_tol: float = 1e-12
    contraction: float = 0.5
    fd_step: float = 1e-4
    spectrum: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BranchPoint:
    r: float
    tau: float
    shape: EvenShape
    residual_sup: float
    residual_coeff: float
    odd_residual: float
    newton_iters: int
    jacobian: str = "frozen"
    negative_eigenvalues: int | None = None
    eigenvalues: list | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "shape"}
        d["shape"] = self.shape.to_dict()
        return d

    def csv_row(self) -> list:
        return [self.r, self.tau, self.residual_sup, self.newton_iters, self.negative_eigenvalues] + list(self.shape.coeffs)


class Branch(list):
    """List of BranchPoints; ``failure`` records why tracing stopped early."""

    failure: str | None = None


def _residual(tau, shape, grid, L, params, opts, lam1):
    vals = script_h(tau, shape, grid, L, params, opts.h_tol) - lam1
    coeffs, odd = analyze(grid, vals, shape.K)
    return float(np.max(np.abs(vals))), coeffs.coeffs, odd


def newton_solve(tau: float, initial: EvenShape, grid, L, params: FracParams, opts: SolverOptions | None = None) -> BranchPoint:
    """Quasi-Newton iteration with the frozen diagonal Jacobian Dh(0).

    Falls back to a finite-difference Jacobian when the sup residual shrinks
    by less than ``opts.contraction`` per step.
    """
    opts = opts or SolverOptions()
    lam1 = lambda_k(params, 1)
    x = initial
    check_admissible(x)
    diag = dh0_diagonal(params, x.K)
    J = None
    sup, rc, odd = _residual(tau, x, grid, L, params, opts, lam1)
    it = 0
    while sup > opts.tol:
        if it >= opts.max_iters:
            raise NoConvergenceError(f"no convergence after {it} iterations (residual {sup:.3g})", it, sup)
        step = rc / diag if J is None else np.linalg.solve(J, rc)
        x = x.with_coeffs(x.coeffs - step)
        check_admissible(x)
        it += 1
        new_sup, rc, odd = _residual(tau, x, grid, L, params, opts, lam1)
        if J is None and new_sup > opts.contraction * sup and new_sup > opts.tol:
            J = jacobian_fd(tau, x, grid, L, params, opts.fd_step, opts.h_tol)
        sup = new_sup
    r = 1.0 / abs(tau) if tau != 0.0 else float("inf")
    bp = BranchPoint(r, tau, x, sup, float(np.linalg.norm(rc)), odd, it, "frozen" if J is None else "fd")
    if opts.spectrum:
        ev = linearization_spectrum(tau, x, grid, L, params, opts.fd_step, opts.h_tol)
        bp.eigenvalues = [float(v) for v in ev]
        bp.negative_eigenvalues = int(np.sum(ev < 0))
    return bp


def trace_branch(
    r_values,
    grid,
    L,
    params: FracParams,
    opts: SolverOptions | None = None,
    K: int = 8,
    data: ExpansionData | None = None,
) -> Branch:
    """Solve at each r (descending), warm-starting from the previous point."""
    rs = [float(r) for r in r_values]
    if any(a <= b for a, b in zip(rs, rs[1:])):
        raise ValueError("r values must be strictly descending")
    for r in rs:
        if not 1.0 / r < 0.25 * L.c0:
            raise ValueError(f"r = {r:g} violates 1/r < c0/4")
    data = data or kappa_constants(params, L)
    out = Branch()
    start = predicted_shape(rs[0], params, L, data, K)
    for r in rs:
        try:
            bp = newton_solve(1.0 / r, start, grid, L, params, opts)
        except Exception as exc:  # noqa: BLE001 - reported, not fatal
            out.failure = f"r={r:g}: {exc}"
            break
        out.append(bp)
        start = bp.shape
    return out


def verify_expansion(branch, data: ExpansionData, resolution: int | None = None) -> list[dict]:
    """Residuals of the two-term expansion along a solved branch.

    e0(r) = r^(N+alpha) mean(phi_r) + kappa0 and
    e2(r) = sup |r^(N+alpha+2) (phi_r + kappa0 r^-(N+alpha)) - (kappa1 f - kappa2)|.
    Ratios compare each point with the one at the next smaller r.  The e0
    rate is a heuristic (the next correction is assumed to be O(r^-2)).
    """
    pts = sorted(branch, key=lambda b: b.r)
    if not pts:
        return []
    N = data.params.N
    s = data.params.s
    res = resolution or (256 if N == 2 else 32)
    grid = build_grid(N, res)
    f = data.f_tilde(grid.nodes)
    rows = []
    for bp in pts:
        phi = synthesize(bp.shape, grid.nodes)
        mean = bp.shape.coefficient(0, 0) / np.sqrt(sphere_area(N))
        e0 = bp.r**s * mean + data.kappa0
        e2 = float(np.max(np.abs(bp.r ** (s + 2) * (phi + data.kappa0 * bp.r**-s) - (data.kappa1 * f - data.kappa2))))
        rows.append({"r": bp.r, "e0": float(e0), "e2": e2})
    for prev, cur in zip(rows, rows[1:]):
        cur["e0_ratio"] = cur["e0"] / prev["e0"] if prev["e0"] != 0 else float("nan")
        cur["e2_ratio"] = cur["e2"] / prev["e2"] if prev["e2"] != 0 else float("nan")
        cur["r_ratio"] = cur["r"] / prev["r"]
    for row in rows:
        row["e0_rate_is_heuristic"] = True
    return rows
