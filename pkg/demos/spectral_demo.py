"""Eigenvalues, the classical limit and the linearized spectrum at the sphere.

Usage: python3 demos/spectral_demo.py
"""
import numpy as np

from cnmc.linop import dh0_diagonal, linearization_spectrum
from cnmc.specfun import FracParams, classical_limit_gap, lambda_table
from cnmc.sphere import EvenShape, build_grid


def main():
    for N in (2, 3):
        for a in (0.25, 0.5, 0.75):
            lam = lambda_table(FracParams(N, a), 5)
            print(f"N={N} alpha={a}: " + " ".join(f"{v:9.4f}" for v in lam))
    print("\nclassical limit gaps at alpha = 0.999 (k = 1..4):")
    for N in (2, 3):
        print(f"  N={N}: " + " ".join(f"{classical_limit_gap(FracParams(N, 0.999), k):+.2e}" for k in range(1, 5)))
    P = FracParams(2, 0.5)
    ev = linearization_spectrum(0.0, EvenShape.zeros(2, 8), build_grid(2, 64), None, P)
    print("\nfinite-difference spectrum at the sphere vs alpha (lambda_k - lambda_1):")
    for a, b in zip(ev, np.sort(dh0_diagonal(P, 8))):
        print(f"  {a:12.7f}  {b:12.7f}")


if __name__ == "__main__":
    main()
