"""Integral-system solve against the discrete-ordinates reference on one grid."""

import argparse

import numpy as np

from rte_kernel_lab.geometry import BoxDomain, Grid, constant_medium
from rte_kernel_lab.phase import hg_coefficients
from rte_kernel_lab.solver import MomentField, assemble_system, discrete_ordinates_reference, solve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells", type=int, default=32)
    ap.add_argument("--g", type=float, default=0.5)
    ap.add_argument("--dirs", type=int, default=64)
    ap.add_argument("--self-cell", default="disc", choices=["disc", "corrected"])
    args = ap.parse_args()
    dom = BoxDomain((0.0, 0.0), (1.0, 1.0))
    grid = Grid(dom, args.cells)
    med = constant_medium(dom, 2.0, 1.0)
    ph = hg_coefficients(args.g, 3)
    Q = MomentField.from_sources(grid, 3, {0: 1.0})
    U, rep = solve(assemble_system(grid, med, ph, self_cell=args.self_cell), Q, tol=1e-10)
    ref = discrete_ordinates_reference(grid, med, ph, Q, n_dirs=args.dirs)
    print(f"{rep.iterations} iterations")
    for n in range(3):
        rel = np.linalg.norm(U[n] - ref[n]) / np.linalg.norm(ref[n])
        print(f"u_{n}: relative L2 gap {rel:.3e}")


if __name__ == "__main__":
    main()
