"""eps-rank of the 2D kernel matrices against n for the two 2D box-pair presets."""

import argparse
from pathlib import Path

from rte_kernel_lab import io as rio
from rte_kernel_lab.presets import rank_preset
from rte_kernel_lab.separability import rank_growth_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/ranks"))
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-4, 1e-8])
    ap.add_argument("--points-per-unit", type=float, default=2.0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in ("fig2-left", "fig2-right"):
        prof = rank_growth_study(rank_preset(name, n_values=tuple(args.n), epsilons=tuple(args.eps),
                                             points_per_unit=args.points_per_unit))
        rows = [(e, n, prof.rank(e, n), *prof.shapes[i]) for e in args.eps for i, n in enumerate(args.n)]
        rio.write_csv(args.out / f"{name}.csv", ("eps", "n", "rank", "rows", "cols"), rows)
        for e in args.eps:
            ranks = [prof.rank(e, n) for n in args.n]
            print(f"{name} eps={e:g}: ranks {ranks}, exponent {prof.fitted_exponents[e]:.2f}")


if __name__ == "__main__":
    main()
