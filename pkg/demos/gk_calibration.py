"""Calibrate the g-and-k distribution from order statistics.

The g-and-k family is defined through its quantile function, so the usual
likelihood is unavailable -- but simulating draws is trivial. This script
generates data at the canonical truth (A, B, g, k) = (3, 1, 2, 0.5),
summarises it into 100 order statistics, and runs the inversion driver in
optimisation mode (variance-contraction stop) to recover the parameters.

Run:  python3 demos/gk_calibration.py [--seed 0] [--n 500]
"""
import argparse

import numpy as np

from enki.inversion import EkiConfig, run_eki
from enki.models.gk import GkModel
from enki.rng import ALGO, DATA, as_seed_sequence, derive, substream

TRUTH = {"A": 3.0, "B": 1.0, "g": 2.0, "k": 0.5}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="experiment seed")
    parser.add_argument("--n", type=int, default=500, help="ensemble size")
    args = parser.parse_args()

    model = GkModel()
    root = as_seed_sequence(args.seed)
    data_rng = substream(root, DATA)
    truth = model.sample_truth(data_rng)
    observed = model.simulate(truth, data_rng)

    config = EkiConfig(n_particles=args.n, stop_mode="optimisation")
    res = run_eki(model, observed, config, derive(root, ALGO))
    est = model.constrain(res.ensemble.params).mean(axis=0)

    print(f"observed: {model.d_y} order statistics from 1000 draws (seed {args.seed})")
    print(
        f"stopped:  {res.termination_reason} after {res.schedule.n_steps} iterations, "
        f"{res.sim_count} simulations"
    )
    print()
    print(f"{'parameter':>9}  {'truth':>6}  {'estimate':>8}  {'abs error':>9}")
    for name, value, fit in zip(TRUTH, TRUTH.values(), est):
        print(f"{name:>9}  {value:>6.2f}  {fit:>8.3f}  {abs(fit - value):>9.3f}")
    print()
    print("location (A) and kurtosis (k) pin down sharply; skewness (g) is the")
    print("hard direction for quantile-summary data and carries the most error.")


if __name__ == "__main__":
    main()
