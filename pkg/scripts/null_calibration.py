"""Size study for the likelihood-ratio normality test under a Gaussian null.

Fits the two-phase model to replicated Gaussian samples and reports the
rejection rate at several nominal levels together with LR quantiles against
the chi-square(1) reference.  The observed rejection rate is far above
nominal (36% at the 5% level for n = 500) because the boundary location is
unidentified when sigma1 = sigma2, making the statistic the supremum of a
chi-square(1) field; see README, "Known failing tests".

Usage: python3 scripts/null_calibration.py [--replicates 200] [--n 500]
"""

import argparse

import numpy as np
from scipy.stats import chi2

from multiphase.inference import ReturnSample, fit_two_phase
from multiphase.numerics import RngState

LEVELS = (0.10, 0.05, 0.01)
QUANTILES = (0.5, 0.9, 0.95, 0.99)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--replicates", type=int, default=200)
    parser.add_argument("--n", type=int, default=500)
    parser.add_argument("--sigma", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=40000)
    args = parser.parse_args(argv)

    lr_values, p_values = [], []
    for i in range(args.replicates):
        gen = RngState(seed=args.seed + i).generator()
        x = gen.normal(0.0, args.sigma, size=args.n)
        report = fit_two_phase(ReturnSample(x))
        lr_values.append(report.lr_statistic)
        p_values.append(report.p_value)
    lr_values = np.array(lr_values)
    p_values = np.array(p_values)

    print(f"replicates={args.replicates} n={args.n} sigma={args.sigma}")
    print("\nrejection rates (nominal -> observed):")
    for level in LEVELS:
        observed = float(np.mean(p_values < level))
        print(f"  {level:5.2f} -> {observed:6.3f}")
    print("\nLR quantiles (observed vs chi-square(1)):")
    for quantile in QUANTILES:
        observed = float(np.quantile(lr_values, quantile))
        reference = float(chi2.ppf(quantile, df=1))
        print(f"  {quantile:5.2f}: {observed:7.3f} vs {reference:7.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
