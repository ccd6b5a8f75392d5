"""Write the data behind the ARL, ADD_k and SADD / lower-bound plots as CSV files.

    python scripts/figure_data.py [--out-dir figures] [--resolution 768]

arl_surface.csv      ARL over an (r, A) grid for mu = 0.5
add_profiles.csv     ADD_k and P(T > k) at the optimal designs for mu = 0.2 and 0.5, gamma = 100
sadd_curves.csv      SADD and lower bound along ARL = gamma, gamma = 100, mu = 0.2 and 0.5
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from gsrchart import ChartDesign, NumericsConfig, SearchConfig, evaluate, optimize_design
from gsrchart.model import ModelParams
from gsrchart.solver import build_discretization, solve_arl


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}")


def arl_surface(out, numerics, mu=0.5):
    rows = []
    for A in np.linspace(20, 400, 20):
        arl = solve_arl(build_discretization(A, numerics.resolution, numerics.panels), ModelParams(mu))
        for r in np.linspace(0, 0.95 * A, 20):
            rows.append((mu, r, A, arl(r)))
    write(out / "arl_surface.csv", ("mu", "r", "A", "arl"), rows)


def curves(out, numerics, gamma=100.0):
    config = SearchConfig(numerics=numerics)
    profile_rows, curve_rows = [], []
    for mu in (0.2, 0.5):
        res = optimize_design(mu, gamma, config)
        rep = evaluate(ChartDesign(r=res.r_star, A=res.a_star, mu=mu), numerics)
        profile_rows += [(mu, gamma, int(k), a, s) for k, a, s in
                         zip(rep.profile.k, rep.profile.add, rep.profile.survival)]
        curve_rows += [(mu, gamma, p.r, p.A, p.report.sadd, p.report.lower_bound)
                       for p in res.diagnostics["probes"]]
    write(out / "add_profiles.csv", ("mu", "gamma", "k", "add_k", "survival_k"), profile_rows)
    write(out / "sadd_curves.csv", ("mu", "gamma", "r", "A", "sadd", "lower_bound"), curve_rows)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="figures")
    ap.add_argument("--resolution", type=int, default=768)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    numerics = NumericsConfig(resolution=args.resolution)
    arl_surface(out, numerics)
    curves(out, numerics)
