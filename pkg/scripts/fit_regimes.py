"""Calibration vs holdout delta for linear autoencoders across bottleneck width
and calibration-set size: where the over- and underfitting labels switch on."""

import argparse

from reasonlab import neural
from reasonlab.diagnostics import FailureConfig, fit_gap


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--rank", type=int, default=8)
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cfg = FailureConfig()
    print(f"{'k':>3} {'n_cal':>6} {'calib':>9} {'holdout':>9}  labels")
    for k in (1, 2, 4, args.n):
        for n_cal in (3, 10, 50):
            data = neural.DataDistribution(args.n, args.rank, seed=args.seed, n_calibration=n_cal)
            s = neural.neural_system(neural.init_model(args.n, k, args.seed), data)
            s.adapter.train(args.rounds)
            gap = fit_gap(s, args.seed, cfg)
            c, h = gap["calibration_delta"], gap["holdout_delta"]
            labels = []
            if h - c > cfg.overfit_gap_threshold:
                labels.append("Overfitting")
            if c > cfg.underfit_floor:
                labels.append("Underfitting")
            print(f"{k:>3} {n_cal:>6} {c:>9.4f} {h:>9.4f}  {', '.join(labels) or '-'}")


if __name__ == "__main__":
    main()
