"""Max relative error per parareal iteration for a preset, optionally with another variant.

    python scripts/convergence.py burgers_case2 --variant projected_damped -k 15
    python scripts/convergence.py wave_power --p 10
"""
import argparse
import logging

import numpy as np

from stableparareal import harness as H
from stableparareal.config import PRESETS, burgers_damped, preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("name", choices=PRESETS)
    ap.add_argument("--scale", default="desk", choices=("desk", "paper"))
    ap.add_argument("--variant", choices=("plain", "projected", "projected_damped"))
    ap.add_argument("-k", "--iterations", type=int)
    ap.add_argument("--p", type=float, help="power-law exponent of the initial data")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="also write the CSV files here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = preset(args.name, args.scale)
    if args.variant == "projected_damped" and cfg.problem.kind == "burgers":
        cfg = burgers_damped(cfg)
    elif args.variant:
        cfg = cfg.replace(method={"variant": args.variant})
    if args.iterations is not None:
        cfg = cfg.replace(method={"iterations": args.iterations})
    if args.p is not None:
        cfg = cfg.replace(initial={"p": args.p})

    exp = H.run_experiment(cfg, workers=args.workers)
    rep = exp.report
    print(f"# {args.name} ({args.scale}), variant {cfg.method.variant}, {cfg.n_windows} windows")
    print(" k   max_n e(k,n)   windows diverged")
    for k in range(rep.errors.shape[0]):
        print(f"{k:2d}   {rep.max_error(k):.3e}   {int(np.sum(rep.flags[k] == H.DIVERGED)):4d}")
    if rep.energy_deviation is not None:
        print(f"max relative energy deviation: {np.nanmax(rep.energy_deviation):.3e}")
    if args.out:
        H.write_experiment(exp, args.out)


if __name__ == "__main__":
    main()
