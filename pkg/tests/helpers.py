"""Shared oracles and invariant sweeps used by module and acceptance tests."""

import math

import numpy as np

from multiphase.numerics import QuadratureSpec, integrate_adaptive
from multiphase.phase_kernel import TwoPhaseParams, two_phase_pdf

#: Parameter grid pinned by the density-normalization invariant.
SIGMA_GRID = (0.05, 0.2, 0.5, 1.0)
Q_GRID = (-1.0, -0.1, 0.0, 0.1, 1.0)
T_GRID = (0.25, 1.0, 5.0)

#: Published call prices for [sigma1, sigma2, q] = [0.3, 0.4, -0.02],
#: S=100, r=5%, strikes 80..115 step 5, maturities in days (365 day count).
TABLE_STRIKES = (80.0, 85.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0)
TABLE_TAUS_DAYS = (17, 45, 80, 136, 227, 318)
TABLE_CALLS = {
    17: (20.192, 15.252, 10.507, 6.304, 3.094, 1.157, 0.319, 0.065),
    45: (20.673, 16.046, 11.801, 8.128, 5.173, 3.005, 1.586, 0.761),
    80: (21.474, 17.166, 13.262, 9.860, 7.023, 4.775, 3.096, 1.918),
    136: (22.838, 18.861, 15.258, 12.074, 9.335, 7.045, 5.191, 3.739),
    227: (24.950, 21.294, 17.962, 14.970, 12.324, 10.023, 8.055, 6.402),
    318: (26.882, 23.434, 20.271, 17.400, 14.821, 12.530, 10.516, 8.767),
}


def iter_parameter_grid():
    for sigma1 in SIGMA_GRID:
        for sigma2 in SIGMA_GRID:
            for q in Q_GRID:
                for t in T_GRID:
                    yield TwoPhaseParams(sigma1, sigma2, q), t


def normalization_error(p: TwoPhaseParams, t: float) -> float:
    """|integral of the density - 1| with tails cut at 12*max(sigma)*sqrt(t)."""
    scale = max(p.sigma1, p.sigma2) * math.sqrt(t)
    lo = min(p.q, 0.0) - 12.0 * scale
    hi = max(p.q, 0.0) + 12.0 * scale
    breaks = sorted({lo, min(max(p.q, lo), hi), min(max(0.0, lo), hi), hi})
    spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12, max_subdivisions=200)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            value, _ = integrate_adaptive(lambda x: two_phase_pdf(p, x, t), a, b, spec)
            total += value
    return abs(total - 1.0)


def continuity_mismatch(p: TwoPhaseParams, t: float) -> float:
    """|u(q-) - u(q+)| via one-sided evaluations a single ulp off the boundary."""
    left = two_phase_pdf(p, np.nextafter(p.q, -np.inf), t)
    right = two_phase_pdf(p, np.nextafter(p.q, np.inf), t)
    return abs(left - right)


def _one_sided_derivative(f, x0: float, h: float, side: int) -> float:
    """4th-order one-sided first derivative using nodes x0, x0+s*h, ..., x0+4*s*h."""
    coeffs = (-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25)
    return side * sum(
        c * f(x0 + side * k * h) for k, c in enumerate(coeffs)
    ) / h


def flux_mismatch(p: TwoPhaseParams, t: float, h: float = 1e-5) -> float:
    """|flux(q+) - flux(q-)| with 4th-order stencils, one-sided at the kink.

    The density is only piecewise smooth at q, so the stencils anchor one ulp
    inside each branch; flux on side k is (sigma_k^2 / 2) * du/dx.
    """
    f = lambda x: two_phase_pdf(p, x, t)
    right_anchor = np.nextafter(p.q, np.inf)
    left_anchor = np.nextafter(p.q, -np.inf)
    flux_right = 0.5 * p.sigma1**2 * _one_sided_derivative(f, right_anchor, h, +1)
    flux_left = 0.5 * p.sigma2**2 * _one_sided_derivative(f, left_anchor, h, -1)
    return abs(flux_right - flux_left)


def gaussian_reduction_sup_error(sigma: float, q: float, t: float) -> float:
    """sup |two-phase pdf - normal pdf| over |x| <= 8*sigma*sqrt(t) when s1=s2."""
    p = TwoPhaseParams(sigma, sigma, q)
    scale = sigma * math.sqrt(t)
    xs = np.linspace(-8.0 * scale, 8.0 * scale, 321)
    worst = 0.0
    for x in xs:
        normal = math.exp(-0.5 * (x / scale) ** 2) / (scale * math.sqrt(2.0 * math.pi))
        worst = max(worst, abs(two_phase_pdf(p, x, t) - normal))
    return worst


def batch_moments(draws: np.ndarray, n_batches: int = 100):
    """Sample skewness/kurtosis with batch-mean standard errors.

    Returns (skew, se_skew, kurt, se_kurt); SEs come from splitting the sample
    into equal batches and taking the spread of per-batch statistics.
    """
    draws = np.asarray(draws, dtype=float)
    batches = draws[: draws.size - draws.size % n_batches].reshape(n_batches, -1)

    def skew_kurt(x):
        centered = x - x.mean(axis=-1, keepdims=True)
        m2 = np.mean(centered**2, axis=-1)
        m3 = np.mean(centered**3, axis=-1)
        m4 = np.mean(centered**4, axis=-1)
        return m3 / m2**1.5, m4 / m2**2

    skew, kurt = skew_kurt(draws)
    batch_skew, batch_kurt = skew_kurt(batches)
    se_skew = batch_skew.std(ddof=1) / math.sqrt(n_batches)
    se_kurt = batch_kurt.std(ddof=1) / math.sqrt(n_batches)
    return float(skew), float(se_skew), float(kurt), float(se_kurt)
