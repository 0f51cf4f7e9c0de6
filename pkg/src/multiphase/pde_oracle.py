"""Independent numerical ground truth for the interface diffusion system.

A conservative finite-volume Crank-Nicolson solver for du/dt = d/dx(D du/dx)
with piecewise-constant D = sigma_k^2/2, interphase boundaries located on cell
faces (flux continuity is then automatic), plus semigroup and integral-identity
checks used to cross-validate every closed form in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence, TextIO

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .numerics import QuadratureSpec, erfc, integrate_adaptive
from .phase_kernel import (
    DomainError,
    PhaseSystem,
    ThreePhaseParams,
    TwoPhaseParams,
    three_phase_pdf,
    two_phase_pdf,
)

__all__ = [
    "SolverFailure",
    "SolverGrid",
    "GridSolution",
    "solve_system",
    "solve_for_system",
    "chapman_kolmogorov_check",
    "verify_identity_A10",
    "verify_identity_A14",
    "three_phase_flux",
    "write_solution_csv",
    "solution_report",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class SolverFailure(RuntimeError):
    """The solve violated a sanity bound (mass drift, negativity); see message."""


@dataclass(frozen=True)
class SolverGrid:
    """Requested discretization: spatial window, cell count, step, warm start."""

    x_min: float
    x_max: float
    nx: int = 2001
    dt: float = 1e-4
    t_warm: float = 0.05

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise DomainError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.nx < 201:
            raise DomainError(f"nx must be >= 201, got {self.nx}")
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if not self.t_warm > 0:
            raise DomainError(f"t_warm must be > 0, got {self.t_warm}")


@dataclass(frozen=True)
class GridSolution:
    """Discrete density u(x, t) on cell centers, with conservation diagnostics."""

    grid: SolverGrid
    t: float
    x: np.ndarray
    values: np.ndarray
    mass: float
    max_mass_deviation: float
    boundary_snap: tuple[float, ...]
    dt_effective: float


def _build_centers(
    boundaries: Sequence[float], x_min: float, x_max: float, nx: int
) -> tuple[np.ndarray, float, tuple[float, ...], tuple[float, ...]]:
    """Uniform cell centers whose faces hit the boundaries (snapping leftovers).

    Returns (centers, dx, snapped boundaries descending, snap distances).
    """
    bounds = sorted(boundaries, reverse=True)
    if not bounds:
        dx = (x_max - x_min) / nx
        centers = x_min + (np.arange(nx) + 0.5) * dx
        return centers, dx, (), ()
    if len(bounds) == 1:
        anchor = bounds[0]
        dx = (x_max - x_min) / nx
    else:
        # Commensurate spacing across the outermost boundary gap pins every
        # boundary that divides it evenly; the rest are snapped and reported.
        anchor = bounds[-1]
        gap = bounds[0] - bounds[-1]
        dx_raw = (x_max - x_min) / nx
        dx = gap / max(1, round(gap / dx_raw))
    n_lo = math.ceil((anchor - x_min) / dx)
    n_hi = math.ceil((x_max - anchor) / dx)
    centers = (anchor - n_lo * dx) + (np.arange(n_lo + n_hi) + 0.5) * dx
    x_lo = anchor - n_lo * dx
    snapped = []
    snaps = []
    for q in bounds:
        k = round((q - x_lo) / dx)
        snapped_q = x_lo + k * dx
        snapped.append(snapped_q)
        snaps.append(abs(snapped_q - q))
    return centers, dx, tuple(snapped), tuple(snaps)


def _initial_condition(sys: PhaseSystem, x: np.ndarray, t_warm: float) -> np.ndarray:
    """Warm-start density: exact closed form when available, else a source
    Gaussian of the source phase's scale."""
    sigmas = sys.sigmas
    if all(s == sigmas[0] for s in sigmas):
        scale = sigmas[0] * math.sqrt(t_warm)
        return np.exp(-0.5 * (x / scale) ** 2) / (_SQRT_2PI * scale)
    if sys.n_phases == 2:
        p = TwoPhaseParams(sigmas[0], sigmas[1], sys.boundaries[0])
        return np.asarray(two_phase_pdf(p, x, t_warm))
    if sys.n_phases == 3 and sys.source_phase == 2:
        p = ThreePhaseParams(*sigmas, *sys.boundaries)
        return np.asarray(three_phase_pdf(p, x, t_warm))
    scale = sigmas[sys.source_phase - 1] * math.sqrt(t_warm)
    return np.exp(-0.5 * (x / scale) ** 2) / (_SQRT_2PI * scale)


def solve_system(sys: PhaseSystem, grid: SolverGrid, t_end: float) -> GridSolution:
    """Crank-Nicolson finite-volume solve from t_warm to t_end.

    Far-field boundaries are zero-flux; the scheme conserves the (discrete)
    warm-start mass exactly, so any reported drift beyond rounding signals a
    setup problem.  Raises SolverFailure if |mass - 1| exceeds 1e-4 or the
    solution dips below -1e-10.
    """
    if not t_end > grid.t_warm:
        raise DomainError(f"t_end={t_end} must exceed t_warm={grid.t_warm}")
    smax = max(sys.sigmas)
    span = 8.0 * smax * math.sqrt(t_end)
    lo_required = min((*sys.boundaries, 0.0)) - span
    hi_required = max((*sys.boundaries, 0.0)) + span
    if grid.x_min > lo_required or grid.x_max < hi_required:
        raise DomainError(
            f"window [{grid.x_min}, {grid.x_max}] too narrow; need "
            f"[{lo_required:.3g}, {hi_required:.3g}] to keep far-field mass negligible"
        )

    x, dx, snapped_bounds, snaps = _build_centers(
        sys.boundaries, grid.x_min, grid.x_max, grid.nx
    )
    n_cells = x.size

    # Diffusivity per cell from the snapped boundaries; faces between cells of
    # different phases get the harmonic mean (exact for piecewise-linear flux).
    diffusivity = np.empty(n_cells)
    for i, xc in enumerate(x):
        k = sum(1 for b in snapped_bounds if xc < b)
        diffusivity[i] = 0.5 * sys.sigmas[k] ** 2
    d_face = 2.0 * diffusivity[:-1] * diffusivity[1:] / (
        diffusivity[:-1] + diffusivity[1:]
    )

    n_steps = max(1, round((t_end - grid.t_warm) / grid.dt))
    dt_eff = (t_end - grid.t_warm) / n_steps
    lam = dt_eff / (2.0 * dx * dx)
    main = np.zeros(n_cells)
    main[:-1] += lam * d_face
    main[1:] += lam * d_face
    implicit = diags(
        [-lam * d_face, 1.0 + main, -lam * d_face], [-1, 0, 1], format="csc"
    )
    lu = splu(implicit)

    u = _initial_condition(sys, x, grid.t_warm)
    mass0 = float(np.trapezoid(u, x))
    max_dev = abs(mass0 - 1.0)
    cell_mass0 = dx * float(u.sum())
    for _ in range(n_steps):
        rhs = u.copy()
        flux = lam * d_face * (u[1:] - u[:-1])
        rhs[:-1] += flux
        rhs[1:] -= flux
        u = lu.solve(rhs)
        step_mass = dx * float(u.sum())
        max_dev = max(max_dev, abs(step_mass - cell_mass0) + abs(mass0 - 1.0))

    mass = float(np.trapezoid(u, x))
    solution = GridSolution(
        grid=grid,
        t=t_end,
        x=x,
        values=u,
        mass=mass,
        max_mass_deviation=max_dev,
        boundary_snap=snaps,
        dt_effective=dt_eff,
    )
    if abs(mass - 1.0) > 1e-4:
        raise SolverFailure(
            f"mass drift |{mass:.8f} - 1| > 1e-4 "
            f"(max step deviation {max_dev:.3g}, snaps {snaps})"
        )
    floor = float(u.min())
    if floor < -1e-10:
        raise SolverFailure(
            f"negative density {floor:.3g} < -1e-10 at x={x[u.argmin()]:.4g}"
        )
    return solution


def solve_for_system(
    sys: PhaseSystem,
    t_end: float,
    nx: int = 2001,
    dt: float = 1e-3,
    t_warm: float = 0.05,
) -> GridSolution:
    """solve_system with an automatically sized window for the given horizon."""
    if t_end <= t_warm:
        t_warm = t_end / 2.0
    smax = max(sys.sigmas)
    span = 8.5 * smax * math.sqrt(t_end)
    lo = min((*sys.boundaries, 0.0)) - span
    hi = max((*sys.boundaries, 0.0)) + span
    grid = SolverGrid(x_min=lo, x_max=hi, nx=nx, dt=dt, t_warm=t_warm)
    return solve_system(sys, grid, t_end)


def chapman_kolmogorov_check(
    p: TwoPhaseParams, s: float, t: float, grid: SolverGrid
) -> float:
    """Max abs deviation of the time-s/time-(t-s) convolution from the time-t law.

    The inner kernel's boundary set shifts with the convolution variable: the
    density restarted from y sees its boundary at q - y, so the inner factor is
    re-parameterized per y.  Checked on 61 x points spanning the grid window
    (with x = 0 and x = q inserted); each x uses adaptive quadrature in y split
    at the kink y = q and at the inner kernel's peak y = x.
    """
    if not 0 < s < t:
        raise DomainError(f"need 0 < s < t, got s={s}, t={t}")
    smax = max(p.sigma1, p.sigma2)
    y_lo = min(p.q, 0.0) - 13.0 * smax * math.sqrt(s)
    y_hi = max(p.q, 0.0) + 13.0 * smax * math.sqrt(s)
    xs = np.unique(
        np.concatenate([np.linspace(grid.x_min, grid.x_max, 61), [0.0, p.q]])
    )
    spec = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-9, max_subdivisions=200)
    worst = 0.0
    for xv in xs:
        def integrand(y: float) -> float:
            inner = TwoPhaseParams(p.sigma1, p.sigma2, p.q - y)
            return float(two_phase_pdf(p, y, s)) * float(
                two_phase_pdf(inner, xv - y, t - s)
            )

        breaks = [y_lo] + sorted(
            b for b in {p.q, xv} if y_lo < b < y_hi
        ) + [y_hi]
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            value, _ = integrate_adaptive(integrand, a, b, spec)
            total += value
        worst = max(worst, abs(total - float(two_phase_pdf(p, xv, t))))
    return worst


def verify_identity_A10(q: float, a2: float, t: float) -> tuple[float, float]:
    """Time integral of the one-sided heat-flux kernel vs its erfc closed form.

    lhs = integral_0^t exp(-q^2/(4 a2 tau)) tau^{-1/2} (t-tau)^{-1/2} dtau,
    computed after the substitution tau = t sin^2(theta) which removes both
    endpoint singularities; rhs = pi * erfc(|q| / (2 sqrt(a2 t))).
    """
    if not (a2 > 0 and t > 0):
        raise DomainError(f"need a2 > 0 and t > 0, got a2={a2}, t={t}")
    spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12, max_subdivisions=200)

    def integrand(theta: float) -> float:
        sin_sq = math.sin(theta) ** 2
        if sin_sq == 0.0:
            return 0.0
        return math.exp(-q * q / (4.0 * a2 * t * sin_sq))

    value, _ = integrate_adaptive(integrand, 0.0, math.pi / 2.0, spec)
    lhs = 2.0 * value
    rhs = math.pi * float(erfc(abs(q) / (2.0 * math.sqrt(a2 * t))))
    return lhs, rhs


def verify_identity_A14(alpha: float, beta: float, t: float) -> tuple[float, float]:
    """Two-sided singular convolution integral vs its erfc closed form.

    lhs = integral_0^t exp(-alpha^2/(t-tau)) exp(-beta^2/tau)
          tau^{-1/2} (t-tau)^{-1/2} dtau  (same sin^2 substitution);
    rhs = pi * erfc((|alpha| + |beta|) / sqrt(t)).
    """
    if not t > 0:
        raise DomainError(f"need t > 0, got {t}")
    spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12, max_subdivisions=200)

    def integrand(theta: float) -> float:
        sin_sq = math.sin(theta) ** 2
        cos_sq = 1.0 - sin_sq
        if sin_sq == 0.0 or cos_sq == 0.0:
            return 0.0
        return math.exp(-alpha * alpha / (t * cos_sq) - beta * beta / (t * sin_sq))

    value, _ = integrate_adaptive(integrand, 0.0, math.pi / 2.0, spec)
    lhs = 2.0 * value
    rhs = math.pi * float(erfc((abs(alpha) + abs(beta)) / math.sqrt(t)))
    return lhs, rhs


def _flux_series(
    offsets: Callable[[int], tuple[float, float]],
    sigma2: float,
    t: float,
    series_tol: float = 1e-12,
) -> float:
    """Sum exp(-c^2/(2 s2^2 t)) * c / (sqrt(2) s2 t^{3/2}) over image offsets c."""
    scale = 2.0 * sigma2 * sigma2 * t

    def term(n: int) -> float:
        c_a, c_b = offsets(n)
        return (
            math.exp(-c_a * c_a / scale) * c_a + math.exp(-c_b * c_b / scale) * c_b
        ) / (math.sqrt(2.0) * sigma2 * t**1.5)

    total = term(0)
    shell = 1
    while True:
        add = term(shell) + term(-shell)
        total += add
        if shell >= 3 and abs(add) < series_tol * max(abs(total), 1e-300):
            break
        shell += 1
        if shell > 200:
            break
    return total


def three_phase_flux(p: ThreePhaseParams, t: float) -> tuple[float, float]:
    """Closed-form interface fluxes (g1 at q1, g2 at q2) of the image series.

    g1 = (sigma1^2/2) du1/dx at q1 (equal to the phase-2 side by construction
    of the series), g2 likewise at q2; both are exact derivatives of the
    three-phase branches implemented in phase_kernel.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    q1, q2 = p.q1, p.q2
    g1 = -(p.sigma1 / (2.0 * math.sqrt(math.pi) * p.sigma2)) * _flux_series(
        lambda n: (abs((2 * n + 1) * q1 - 2 * n * q2), abs((2 * n - 1) * q1 - 2 * n * q2)),
        p.sigma2,
        t,
    )
    g2 = (p.sigma3 / (2.0 * math.sqrt(math.pi) * p.sigma2)) * _flux_series(
        lambda n: (abs(2 * n * q1 - (2 * n - 1) * q2), abs(2 * n * q1 - (2 * n + 1) * q2)),
        p.sigma2,
        t,
    )
    return g1, g2


def write_solution_csv(solution: GridSolution, stream: TextIO) -> None:
    """Serialize a GridSolution as `x,u` rows (12 significant digits)."""
    stream.write("x,u\n")
    for xv, uv in zip(solution.x, solution.values):
        stream.write(
            np.format_float_positional(xv, precision=12, unique=False,
                                       fractional=False, trim="k")
            + ","
            + np.format_float_positional(uv, precision=12, unique=False,
                                         fractional=False, trim="k")
            + "\n"
        )


def solution_report(
    solution: GridSolution,
    reference: Callable[[np.ndarray], np.ndarray] | None = None,
    window: tuple[float, float] | None = None,
) -> dict:
    """JSON-ready report: mass, grid metadata, and sup error vs a closed form."""
    report = {
        "t": solution.t,
        "mass": solution.mass,
        "max_mass_deviation": solution.max_mass_deviation,
        "boundary_snap": list(solution.boundary_snap),
        "grid": {
            "x_min": solution.grid.x_min,
            "x_max": solution.grid.x_max,
            "nx": solution.grid.nx,
            "n_cells": int(solution.x.size),
            "dt": solution.grid.dt,
            "dt_effective": solution.dt_effective,
            "t_warm": solution.grid.t_warm,
        },
        "sup_error_vs_closed_form": None,
    }
    if reference is not None:
        lo, hi = window if window is not None else (solution.x[0], solution.x[-1])
        mask = (solution.x >= lo) & (solution.x <= hi)
        ref_vals = np.asarray(reference(solution.x[mask]), dtype=float)
        err = np.max(np.abs(solution.values[mask] - ref_vals)) / np.max(
            np.abs(ref_vals)
        )
        report["sup_error_vs_closed_form"] = float(err)
        report["window"] = [float(lo), float(hi)]
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False)
