"""Closed-form multi-phase densities, CDFs, moments, and samplers.

A "phase" is a spatial interval with its own diffusion scale sigma_k; a unit
point mass starts at x = 0 and diffuses under the piecewise heat equation with
continuity of u and of the scaled flux (sigma^2/2) u_x at every boundary.  The
two-phase law has exact pdf/CDF branches; the three-phase family is an image
series evaluated exactly as written in its source, with adaptive truncation.

Caveat for the three-phase series: as written it does not satisfy the interface
conditions it is associated with (one-sided boundary values disagree at the ten-
percent-to-factor-three level and the equal-sigma case does not collapse to a
Gaussian).  It is kept verbatim because its boundary fluxes are internally
consistent with the closed-form flux series (see pde_oracle.three_phase_flux);
the numerical solver in pde_oracle is the trustworthy density for three phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, TextIO, Union

import numpy as np

from .numerics import QuadratureSpec, RngState, integrate_adaptive, std_normal_cdf

__all__ = [
    "DomainError",
    "SeriesConsistencyError",
    "PhaseSystem",
    "TwoPhaseParams",
    "ThreePhaseParams",
    "MomentSummary",
    "DensityTable",
    "two_phase_pdf",
    "two_phase_cdf",
    "two_phase_moments",
    "two_phase_sample",
    "three_phase_pdf",
    "three_phase_pdf_branch",
    "density_grid",
    "write_density_csv",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """A parameter lies outside its mathematical domain (sigma <= 0, t <= 0, ...)."""


class SeriesConsistencyError(RuntimeError):
    """A truncated series produced a negative density beyond its tolerance."""


@dataclass(frozen=True)
class TwoPhaseParams:
    """Two-phase law: scale sigma1 above the boundary q, sigma2 below."""

    sigma1: float
    sigma2: float
    q: float

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise DomainError(
                f"sigmas must be positive, got ({self.sigma1}, {self.sigma2})"
            )
        if not math.isfinite(self.q):
            raise DomainError(f"q must be finite, got {self.q}")


@dataclass(frozen=True)
class ThreePhaseParams:
    """Three-phase law with boundaries q1 > 0 > q2 and the source in the middle."""

    sigma1: float
    sigma2: float
    sigma3: float
    q1: float
    q2: float

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0 and self.sigma3 > 0):
            raise DomainError(
                "sigmas must be positive, got "
                f"({self.sigma1}, {self.sigma2}, {self.sigma3})"
            )
        if not (self.q1 > 0 > self.q2):
            raise DomainError(f"need q1 > 0 > q2, got q1={self.q1}, q2={self.q2}")


@dataclass(frozen=True)
class PhaseSystem:
    """N phases: sigmas top-down, strictly decreasing boundaries between them.

    Phases are numbered 1..N from the top interval (q_1, +inf) downward; the
    source phase is the 1-based index of the interval containing x = 0, with a
    boundary exactly at 0 assigned to the phase above it.
    """

    sigmas: tuple[float, ...]
    boundaries: tuple[float, ...]

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        boundaries = tuple(float(q) for q in self.boundaries)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "boundaries", boundaries)
        if len(sigmas) < 1:
            raise DomainError("need at least one phase")
        if any(not s > 0 for s in sigmas):
            raise DomainError(f"sigmas must be positive, got {sigmas}")
        if len(boundaries) != len(sigmas) - 1:
            raise DomainError(
                f"{len(sigmas)} phases need {len(sigmas) - 1} boundaries, "
                f"got {len(boundaries)}"
            )
        if any(not math.isfinite(q) for q in boundaries):
            raise DomainError(f"boundaries must be finite, got {boundaries}")
        if any(a <= b for a, b in zip(boundaries, boundaries[1:])):
            raise DomainError(
                f"boundaries must be strictly decreasing, got {boundaries}"
            )

    @property
    def n_phases(self) -> int:
        return len(self.sigmas)

    @property
    def source_phase(self) -> int:
        """1-based index of the phase whose interval contains x = 0."""
        for k, q in enumerate(self.boundaries, start=1):
            if q <= 0.0:
                return k
        return self.n_phases

    @classmethod
    def from_two_phase(cls, p: TwoPhaseParams) -> "PhaseSystem":
        return cls(sigmas=(p.sigma1, p.sigma2), boundaries=(p.q,))

    @classmethod
    def from_three_phase(cls, p: ThreePhaseParams) -> "PhaseSystem":
        return cls(sigmas=(p.sigma1, p.sigma2, p.sigma3), boundaries=(p.q1, p.q2))


@dataclass(frozen=True)
class MomentSummary:
    """First four moments; kurtosis is the raw (non-excess) fourth ratio."""

    mean: float
    variance: float
    skewness: float
    kurtosis: float

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"variance must be positive, got {self.variance}")
        if self.kurtosis < 1.0 + self.skewness**2 - 1e-8:
            raise DomainError(
                f"kurtosis {self.kurtosis} violates the lower bound "
                f"1 + skewness^2 = {1.0 + self.skewness**2}"
            )


def _check_t(t: float) -> float:
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    return float(t)


def _coeffs(p: TwoPhaseParams):
    """Shared two-phase constants: amplitudes, reflection weight, mean shifts."""
    s1, s2 = p.sigma1, p.sigma2
    a1 = 2.0 * s1 / (s1 + s2)
    a2 = 2.0 * s2 / (s1 + s2)
    refl = (s2 - s1) / (s1 + s2)
    c1 = 1.0 - s1 / s2
    c2 = 1.0 - s2 / s1
    return a1, a2, refl, c1, c2


def _phi(z: np.ndarray, mean: float, scale: float) -> np.ndarray:
    return np.exp(-0.5 * ((z - mean) / scale) ** 2) / (_SQRT_2PI * scale)


def two_phase_pdf(p: TwoPhaseParams, x, t: float):
    """Density of the two-phase law at horizon t; vectorized in x.

    The q > 0 and q <= 0 parameter branches use their own closed forms; the
    boundary point x = q takes the upper-phase expression, and q = 0 is routed
    to the q <= 0 branch.  Scalar x in, scalar out.
    """
    t = _check_t(t)
    x_arr = np.asarray(x, dtype=float)
    r1 = p.sigma1 * math.sqrt(t)
    r2 = p.sigma2 * math.sqrt(t)
    a1, a2, refl, c1, c2 = _coeffs(p)
    q = p.q
    if q > 0:
        upper = a1 * _phi(x_arr, c1 * q, r1)
        lower = _phi(x_arr, 0.0, r2) + refl * _phi(x_arr, 2.0 * q, r2)
    else:
        upper = _phi(x_arr, 0.0, r1) - refl * _phi(x_arr, 2.0 * q, r1)
        lower = a2 * _phi(x_arr, c2 * q, r2)
    out = np.where(x_arr >= q, upper, lower)
    return out.item() if np.isscalar(x) or np.ndim(x) == 0 else out


def two_phase_cdf(p: TwoPhaseParams, x, t: float):
    """Distribution function of the two-phase law; vectorized in x."""
    t = _check_t(t)
    x_arr = np.asarray(x, dtype=float)
    r1 = p.sigma1 * math.sqrt(t)
    r2 = p.sigma2 * math.sqrt(t)
    a1, a2, refl, c1, c2 = _coeffs(p)
    q = p.q
    cdf = std_normal_cdf
    if q > 0:
        at_q = cdf(q / r2) + refl * cdf(-q / r2)
        below = cdf(x_arr / r2) + refl * cdf((x_arr - 2.0 * q) / r2)
        above = at_q + a1 * (cdf((x_arr - c1 * q) / r1) - cdf(q / r2))
    else:
        at_q = a2 * cdf(q / r1)
        below = a2 * cdf((x_arr - c2 * q) / r2)
        above = (
            at_q
            + cdf(x_arr / r1)
            - cdf(q / r1)
            - refl * (cdf((x_arr - 2.0 * q) / r1) - cdf(-q / r1))
        )
    out = np.where(x_arr <= q, below, above)
    out = np.clip(out, 0.0, 1.0)
    return out.item() if np.isscalar(x) or np.ndim(x) == 0 else out


def _central_moment_quadrature(
    pdf: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    interior_breaks: Sequence[float],
    spec: QuadratureSpec,
) -> MomentSummary:
    """Mean/variance/skewness/kurtosis of a density by piecewise quadrature."""
    breaks = [lo] + sorted(b for b in interior_breaks if lo < b < hi) + [hi]

    def piecewise(f: Callable[[float], float]) -> float:
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            value, _ = integrate_adaptive(f, a, b, spec)
            total += value
        return total

    mean = piecewise(lambda z: z * float(pdf(z)))
    var = piecewise(lambda z: (z - mean) ** 2 * float(pdf(z)))
    mu3 = piecewise(lambda z: (z - mean) ** 3 * float(pdf(z)))
    mu4 = piecewise(lambda z: (z - mean) ** 4 * float(pdf(z)))
    return MomentSummary(
        mean=mean,
        variance=var,
        skewness=mu3 / var**1.5,
        kurtosis=mu4 / var**2,
    )


def two_phase_moments(
    p: TwoPhaseParams, t: float, spec: QuadratureSpec | None = None
) -> MomentSummary:
    """Mean, variance, skewness, and kurtosis at horizon t, by quadrature.

    Tails are cut at 12*max(sigma)*sqrt(t) beyond the boundary/source span,
    where the remaining mass is far below every tolerance in use.
    """
    t = _check_t(t)
    spec = spec or QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12, max_subdivisions=200)
    span = 12.0 * max(p.sigma1, p.sigma2) * math.sqrt(t)
    lo = min(p.q, 0.0) - span
    hi = max(p.q, 0.0) + span
    return _central_moment_quadrature(
        lambda z: two_phase_pdf(p, z, t), lo, hi, [p.q, 0.0], spec
    )


def two_phase_sample(
    p: TwoPhaseParams, t: float, n: int, rng: RngState
) -> tuple[np.ndarray, RngState]:
    """n i.i.d. draws by inverse-CDF with bracketed bisection + Newton polish.

    Deterministic given rng; returns (draws, advanced rng state).
    """
    t = _check_t(t)
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    gen = rng.generator()
    if n == 0:
        return np.empty(0), rng.advanced(gen)
    u = gen.random(n)
    smax = max(p.sigma1, p.sigma2) * math.sqrt(t)
    lo = np.full(n, min(p.q, 0.0) - 14.0 * smax)
    hi = np.full(n, max(p.q, 0.0) + 14.0 * smax)
    # Bisection narrows the bracket; Newton then converges quadratically and is
    # rejected back into the bracket whenever it would step outside.
    for _ in range(25):
        mid = 0.5 * (lo + hi)
        low_side = two_phase_cdf(p, mid, t) < u
        lo = np.where(low_side, mid, lo)
        hi = np.where(low_side, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(8):
        resid = two_phase_cdf(p, x, t) - u
        slope = np.maximum(two_phase_pdf(p, x, t), 1e-300)
        x_new = x - resid / slope
        outside = (x_new <= lo) | (x_new >= hi)
        x_new = np.where(outside, 0.5 * (lo + hi), x_new)
        low_side = two_phase_cdf(p, x_new, t) < u
        lo = np.where(low_side, x_new, lo)
        hi = np.where(low_side, hi, x_new)
        x = x_new
    return x, rng.advanced(gen)


def three_phase_pdf_branch(
    p: ThreePhaseParams, x, t: float, series_tol: float = 1e-10
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three image-series branches (u1, u2, u3) each evaluated everywhere.

    Exposed so boundary one-sided values and fluxes can be probed directly;
    three_phase_pdf selects the phase-appropriate branch pointwise.
    """
    t = _check_t(t)
    if not series_tol > 0:
        raise DomainError(f"series_tol must be positive, got {series_tol}")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    s1, s2, s3 = p.sigma1, p.sigma2, p.sigma3
    q1, q2 = p.q1, p.q2
    r1 = s1 * math.sqrt(t)
    r2 = s2 * math.sqrt(t)
    r3 = s3 * math.sqrt(t)

    def gauss_sq(arg: np.ndarray, scale: float) -> np.ndarray:
        return np.exp(-0.5 * (arg / scale) ** 2)

    def sum_shells(term: Callable[[int], np.ndarray]) -> np.ndarray:
        """Sum term(n) over n in Z by symmetric shells with a relative cutoff."""
        total = term(0)
        shell = 1
        while True:
            add = term(shell) + term(-shell)
            total = total + add
            if shell >= 3:
                scale = np.maximum(np.max(np.abs(total)), 1e-300)
                if np.max(np.abs(add)) < series_tol * scale:
                    break
            shell += 1
            if shell > 200:
                break
        return total

    # Upper branch: images reflected through q1, distances mapped by sigma1/sigma2.
    def u1_term(n: int) -> np.ndarray:
        c_a = abs((2 * n + 1) * q1 - 2 * n * q2)
        c_b = abs((2 * n - 1) * q1 - 2 * n * q2)
        return gauss_sq(x_arr - q1 + (s1 / s2) * c_a, r1) + gauss_sq(
            x_arr - q1 + (s1 / s2) * c_b, r1
        )

    u1 = (s1 / s2) / (_SQRT_2PI * s1 * math.sqrt(t)) * sum_shells(u1_term)

    # Middle branch: free slab images minus two boundary-exchange double sums.
    def u21_term(n: int) -> np.ndarray:
        return gauss_sq(x_arr + 2 * n * q1 - 2 * n * q2, r2) + gauss_sq(
            x_arr + 2 * n * q1 - (2 * n + 2) * q2, r2
        )

    u21 = sum_shells(u21_term) / (_SQRT_2PI * s2 * math.sqrt(t))

    def u22_term(n: int) -> np.ndarray:
        base = np.abs(x_arr + 2 * n * q1 - (2 * n + 1) * q2)

        def inner(m: int) -> np.ndarray:
            c_a = abs(2 * m * q1 - (2 * m - 1) * q2)
            c_b = abs(2 * m * q1 - (2 * m + 1) * q2)
            return gauss_sq(base + c_a, r2) + gauss_sq(base + c_b, r2)

        return sum_shells(inner)

    u22 = (s3 / s2) / (_SQRT_2PI * s2 * math.sqrt(t)) * sum_shells(u22_term)

    def u23_term(n: int) -> np.ndarray:
        base = np.abs(x_arr + (2 * n - 1) * q1 - 2 * n * q2)

        def inner(m: int) -> np.ndarray:
            c_a = abs((2 * m + 1) * q1 - 2 * m * q2)
            c_b = abs((2 * m - 1) * q1 - 2 * m * q2)
            return gauss_sq(base + c_a, r2) + gauss_sq(base + c_b, r2)

        return sum_shells(inner)

    u23 = (s1 / s2) / (_SQRT_2PI * s2 * math.sqrt(t)) * sum_shells(u23_term)
    u2 = u21 - u22 - u23

    # Lower branch: mirror image of the upper one through q2.
    def u3_term(n: int) -> np.ndarray:
        c_a = abs(2 * n * q1 - (2 * n - 1) * q2)
        c_b = abs(2 * n * q1 - (2 * n + 1) * q2)
        return gauss_sq(x_arr - q2 - (s3 / s2) * c_a, r3) + gauss_sq(
            x_arr - q2 - (s3 / s2) * c_b, r3
        )

    u3 = (s3 / s2) / (_SQRT_2PI * s3 * math.sqrt(t)) * sum_shells(u3_term)
    return u1, u2, u3


def three_phase_pdf(
    p: ThreePhaseParams, x, t: float, series_tol: float = 1e-10
):
    """Three-phase image-series density, selected by phase; vectorized in x.

    Values within series_tol of zero are clamped to 0; a negative value beyond
    that tolerance raises SeriesConsistencyError rather than being hidden (the
    series as written can go genuinely negative away from its stated domain
    assumptions; see the module docstring).
    """
    u1, u2, u3 = three_phase_pdf_branch(p, x, t, series_tol)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.where(x_arr >= p.q1, u1, np.where(x_arr >= p.q2, u2, u3))
    floor = out.min()
    if floor < -series_tol:
        raise SeriesConsistencyError(
            f"series produced density {floor:.6g} < -series_tol="
            f"{-series_tol:.1g} at x={x_arr[out.argmin()]:.6g}, t={t}"
        )
    out = np.where((out < 0.0) & (out >= -series_tol), 0.0, out)
    return out.item() if np.isscalar(x) or np.ndim(x) == 0 else out


@dataclass(frozen=True)
class DensityTable:
    """Grid evaluation of a density, optionally with a matched normal column."""

    x: np.ndarray
    density: np.ndarray
    normal_density: np.ndarray | None
    source: str  # "closed-form" or "numerical"


ModelLike = Union[TwoPhaseParams, ThreePhaseParams, PhaseSystem]


def density_grid(
    model: ModelLike,
    t: float,
    x_grid: Sequence[float],
    include_normal: bool = False,
    series_tol: float = 1e-10,
) -> DensityTable:
    """Densities over a grid of x values, in grid order.

    Two- and three-phase models use their closed forms; any other PhaseSystem
    is evaluated by the finite-difference solver and flagged "numerical".  The
    optional normal column is the zero-mean Gaussian of commensurate variance
    (same variance as the model's law at horizon t).
    """
    t = _check_t(t)
    x_arr = np.asarray(list(x_grid), dtype=float)
    if x_arr.size == 0:
        raise DomainError("x_grid must be nonempty")

    two: TwoPhaseParams | None = None
    three: ThreePhaseParams | None = None
    if isinstance(model, TwoPhaseParams):
        two = model
    elif isinstance(model, ThreePhaseParams):
        three = model
    elif isinstance(model, PhaseSystem):
        if model.n_phases == 2:
            two = TwoPhaseParams(model.sigmas[0], model.sigmas[1], model.boundaries[0])
        elif model.n_phases == 3 and model.source_phase == 2:
            three = ThreePhaseParams(*model.sigmas, *model.boundaries)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    if two is not None:
        dens = np.asarray(two_phase_pdf(two, x_arr, t), dtype=float)
        source = "closed-form"
        variance = two_phase_moments(two, t).variance if include_normal else None
    elif three is not None:
        dens = np.asarray(three_phase_pdf(three, x_arr, t, series_tol), dtype=float)
        source = "closed-form"
        variance = None
        if include_normal:
            # Variance from a dedicated wide grid, independent of the caller's.
            smax = max(three.sigma1, three.sigma2, three.sigma3)
            span = 12.0 * smax * math.sqrt(t)
            wide = np.linspace(three.q2 - span, three.q1 + span, 4001)
            variance = _grid_variance(
                wide, np.asarray(three_phase_pdf(three, wide, t, series_tol))
            )
    else:
        from . import pde_oracle  # local import: pde_oracle depends on this module

        solution = pde_oracle.solve_for_system(model, t)
        dens = np.interp(x_arr, solution.x, solution.values)
        source = "numerical"
        variance = _grid_variance(solution.x, solution.values) if include_normal else None

    normal = None
    if include_normal:
        normal = _phi(x_arr, 0.0, math.sqrt(variance))
    return DensityTable(x=x_arr, density=dens, normal_density=normal, source=source)


def _grid_variance(x: np.ndarray, density: np.ndarray) -> float:
    mass = np.trapezoid(density, x)
    mean = np.trapezoid(x * density, x) / mass
    return float(np.trapezoid((x - mean) ** 2 * density, x) / mass)


def _format_sig12(value: float) -> str:
    return np.format_float_positional(
        value, precision=12, unique=False, fractional=False, trim="k"
    )


def write_density_csv(table: DensityTable, stream: TextIO) -> None:
    """Serialize a DensityTable: header x,density[,normal_density], 12 sig digits."""
    cols = ["x", "density"]
    if table.normal_density is not None:
        cols.append("normal_density")
    stream.write(",".join(cols) + "\n")
    for i in range(table.x.size):
        row = [_format_sig12(table.x[i]), _format_sig12(table.density[i])]
        if table.normal_density is not None:
            row.append(_format_sig12(table.normal_density[i]))
        stream.write(",".join(row) + "\n")
