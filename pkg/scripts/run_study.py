"""Desk-scale replication of the simulation study (VAR(2) and VMA(1) models).

Default protocol: 30 replications, n = 256, 20000 iterations with 8000
burn-in, thinning 5, L = 20; procedures VNPC(1), VNP and VAR(AIC).

    python3 scripts/run_study.py --out results/study --reps 30
"""

import argparse
import logging
import time

from vnpc.sampler import McmcConfig
from vnpc.study import StudyConfig, run_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/study")
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--models", default="var2,vma1")
    ap.add_argument("--sizes", default="256")
    ap.add_argument("--iters", type=int, default=20000)
    ap.add_argument("--burnin", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    cfg = StudyConfig(
        models=tuple(args.models.split(",")),
        sizes=tuple(int(s) for s in args.sizes.split(",")),
        replications=args.reps,
        master_seed=args.seed,
        mcmc=McmcConfig(iterations=args.iters, burn_in=args.burnin, thin=5, L=20),
        workers=args.workers,
        out_dir=args.out,
    )
    t0 = time.time()
    table, _ = run_study(cfg)
    print(f"{'model':6s}{'n':>6s} {'procedure':10s}{'L1':>8s}{'L2':>8s}{'cov':>7s}  widths (f11, Re f12, Im f12, f22)")
    for e in table:
        w = [e.get(f"width_{k}", float("nan")) for k in ("f11", "Re_f12", "Im_f12", "f22")]
        print(
            f"{e['model']:6s}{e['n']:6d} {e['procedure']:10s}{e['L1']:8.4f}{e['L2']:8.4f}{e['coverage']:7.3f}  "
            + " ".join(f"{x:.3f}" for x in w)
        )
    print(f"elapsed {time.time() - t0:.0f} s")


if __name__ == "__main__":
    main()
