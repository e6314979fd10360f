"""Simulate the two-queue family over a p scan and write both collapse tables.

    python scripts/reproduce_collapse.py --duration 2.56e5 --out-dir results/

For each p this writes ``theory_p*.csv``, ``sim_p*.csv`` and ``compare_p*.csv``
(the latter carries the type-1 ``norm1`` and type-2 ``norm2`` columns).
"""

import argparse
from pathlib import Path

import numpy as np

from jackson_dynamics.cli import main

TEMPLATE = """\
n = 2
mu = 0.3 0.2
rho = 0.3 0.7
routing_row = 0 {p}
routing_row = {p2} 0
duration = {duration}
seed = {seed}
subrun_length = 1e4
chains = {chains}
omega = {omegas}
pair = 1 2
pair = 2 1
"""


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--p", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.3, 0.32])
    ap.add_argument("--duration", type=float, default=2.56e5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--chains", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--points", type=int, default=6, help="log-spaced omega points in [0.02, 2]")
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    return ap.parse_args()


def main_script():
    args = parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    omegas = " ".join(f"{w:.17g}" for w in np.geomspace(0.02, 2.0, args.points))
    for p in args.p:
        tag = f"p{p:g}"
        cfg = args.out_dir / f"net_{tag}.cfg"
        cfg.write_text(TEMPLATE.format(p=p, p2=2 * p, duration=args.duration, seed=args.seed,
                                       chains=args.chains, omegas=omegas))
        theory, sim = args.out_dir / f"theory_{tag}.csv", args.out_dir / f"sim_{tag}.csv"
        main(["theory", "--config", str(cfg), "--out", str(theory)])
        main(["simulate", "--config", str(cfg), "--out", str(sim), "--workers", str(args.workers)])
        code = main(["compare", "--config", str(cfg), str(theory), str(sim),
                     "--out", str(args.out_dir / f"compare_{tag}.csv")])
        print(f"p={p:g}: compare exit {code}")


if __name__ == "__main__":
    main_script()
