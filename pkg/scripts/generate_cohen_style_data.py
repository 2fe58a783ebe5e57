"""Generate a simulated admissions-style dataset for trunc-ellipse."""

import argparse
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli.io import save_csv
from src.config.defaults import COHEN_CUTOFFS, COHEN_N, COHEN_THETA
from src.core.inference import BivariateTheta, theta_to_model
from src.core.sampling import sample_truncated


def generate(n=COHEN_N, seed=0):
    """
    Draw rows from the truncated bivariate normal at the published estimates.

    Args:
        n: Number of rows
        seed: Non-negative integer seed

    Returns:
        n x 2 array with every row >= COHEN_CUTOFFS
    """
    model = theta_to_model(BivariateTheta(**COHEN_THETA), COHEN_CUTOFFS)
    return sample_truncated(model, n, seed).points


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=COHEN_N)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="cohen_style.csv")
    args = parser.parse_args()

    print(f"Sampling {args.n} rows truncated at {COHEN_CUTOFFS}...")
    rows = generate(args.n, args.seed)
    save_csv(args.out, rows, header=True)

    print(f"Generated {args.out}")
    print(f"Use: trunc-ellipse lrt --data {args.out} --c1 {COHEN_CUTOFFS[0]} --c2 {COHEN_CUTOFFS[1]}")
