"""Trace the branch for the square and line lattices and compare with the expansion.

Usage: python3 demos/branch_demo.py [outdir]
Writes branch_<name>.csv files and prints the expansion residual tables for
both weightings of the second-order term.
"""
import sys
from pathlib import Path

from cnmc.expansion import kappa_constants
from cnmc.lattice import make_lattice
from cnmc.solver import SolverOptions, trace_branch, verify_expansion
from cnmc.specfun import FracParams
from cnmc.sphere import build_grid

RS = [160, 80, 40, 20]


def main(outdir="."):
    P = FracParams(2, 0.5)
    grid = build_grid(2, 128)
    opts = SolverOptions(tol=1e-12, h_tol=1e-13)
    for name, basis in [("square", [[1, 0], [0, 1]]), ("line", [[1]])]:
        L = make_lattice(basis, 2)
        branch = trace_branch(RS, grid, L, P, opts)
        path = Path(outdir) / f"branch_{name}.csv"
        with open(path, "w") as fh:
            fh.write("r,residual_sup,newton_iters," + ",".join(f"c_{k}_{m}" for k, m in branch[0].shape.index) + "\n")
            for bp in branch:
                fh.write(",".join(repr(float(v)) for v in [bp.r, bp.residual_sup, bp.newton_iters, *bp.shape.coeffs]) + "\n")
        print(f"\n{name} lattice -> {path}")
        for conv in ("printed", "taylor"):
            rows = verify_expansion(branch, kappa_constants(P, L, convention=conv))
            print(f"  kappa convention {conv}:")
            print("     r        e0          e2       e0 ratio  e2 ratio")
            for r in rows:
                print(f"  {r['r']:5.0f}  {r['e0']:10.3e}  {r['e2']:10.3e}  {r.get('e0_ratio', float('nan')):8.4f}  {r.get('e2_ratio', float('nan')):8.4f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
