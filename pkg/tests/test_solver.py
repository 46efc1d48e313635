import numpy as np
import pytest

from cnmc.expansion import kappa_constants, predicted_shape
from cnmc.linop import dh0_diagonal, linearization_spectrum
from cnmc.specfun import FracParams, lambda_k
from cnmc.solver import NoConvergenceError, SolverOptions, newton_solve, trace_branch, verify_expansion
from cnmc.sphere import EvenShape, OutsideDomainError, build_grid, sup_norm

P2 = FracParams(2, 0.5)
OPTS = SolverOptions(tol=1e-9)


@pytest.fixture(scope="module")
def grid():
    return build_grid(2, 128)


@pytest.fixture(scope="module")
def z2_branch(z2, grid):
    return trace_branch([80, 40, 20], grid, z2, P2, OPTS)


@pytest.fixture(scope="module")
def z1_branch(z1, grid):
    return trace_branch([80, 40], grid, z1, P2, OPTS)


def test_tau_zero_trivial(grid):
    bp = newton_solve(0.0, EvenShape.zeros(2, 8), grid, None, P2, OPTS)
    assert bp.newton_iters == 0 and np.all(bp.shape.coeffs == 0)


def test_single_solve_and_tau_symmetry(z2, grid):
    d = kappa_constants(P2, z2)
    start = predicted_shape(40.0, P2, z2, d, 8)
    a = newton_solve(1 / 40, start, grid, z2, P2, OPTS)
    b = newton_solve(-1 / 40, start, grid, z2, P2, OPTS)
    assert a.residual_sup <= 1e-9 and a.newton_iters <= 6
    assert np.array_equal(a.shape.coeffs, b.shape.coeffs)


def test_branch_properties(z2_branch):
    assert z2_branch.failure is None and [bp.r for bp in z2_branch] == [80, 40, 20]
    norms = [sup_norm(bp.shape) for bp in z2_branch]
    assert norms[0] < norms[1] < norms[2]
    for bp in z2_branch:
        assert bp.residual_sup <= 1e-9
        assert bp.odd_residual <= 1e-10
        assert bp.shape.coefficient(0, 0) < 0


def test_warm_and_cold_agree(z2, z2_branch, grid):
    d = kappa_constants(P2, z2)
    cold = newton_solve(1 / 20, predicted_shape(20.0, P2, z2, d, 8), grid, z2, P2, OPTS)
    warm = z2_branch[2]
    diff = cold.shape - warm.shape
    assert sup_norm(diff) <= 10 * OPTS.tol


def test_line_lattice_nonconstant(z1_branch):
    bp = z1_branch[1]
    assert bp.r == 40
    assert np.max(np.abs(bp.shape.degree_part(2))) > 10 * OPTS.tol


def test_morse_index_and_drift(z2, z2_branch, grid):
    base = np.sort(dh0_diagonal(P2, 8))
    drift = []
    for bp in z2_branch[:2]:
        ev = linearization_spectrum(bp.tau, bp.shape, grid, z2, P2)
        assert int(np.sum(ev < 0)) == 1
        assert ev[0] == pytest.approx(-P2.alpha * lambda_k(P2, 1), rel=1e-2)
        drift.append(np.max(np.abs(ev - base)))
    assert drift[1] / drift[0] >= 4


def test_verify_table(z2, z2_branch):
    rows = verify_expansion(z2_branch, kappa_constants(P2, z2))
    assert [r["r"] for r in rows] == [20, 40, 80]
    assert rows[0]["e2"] > rows[1]["e2"] > rows[2]["e2"]
    assert all(r["e0_rate_is_heuristic"] for r in rows)
    assert rows[1]["r_ratio"] == 2.0 and "e0_ratio" in rows[2]


def test_square_lattice_degree_two_vanishes(z2_branch):
    for bp in z2_branch:
        assert np.max(np.abs(bp.shape.degree_part(2))) < 1e-14


def test_non_convergence(z2, grid):
    with pytest.raises(NoConvergenceError):
        newton_solve(1 / 40, EvenShape.zeros(2, 8), grid, z2, P2, SolverOptions(tol=1e-12, max_iters=1))


def test_outside_domain(z2, grid):
    with pytest.raises(OutsideDomainError):
        newton_solve(1 / 40, EvenShape.constant(2, 8, 1.2), grid, z2, P2, OPTS)


def test_partial_branch(z2, grid):
    br = trace_branch([80, 40, 20], grid, z2, P2, SolverOptions(tol=1e-9, max_iters=2))
    assert len(br) == 1 and br.failure.startswith("r=40")


def test_trace_branch_validation(z2, grid):
    with pytest.raises(ValueError):
        trace_branch([20, 40], grid, z2, P2, OPTS)
    with pytest.raises(ValueError):
        trace_branch([10, 4], grid, z2, P2, OPTS)
