"""Exact distributions for diffusion across piecewise-constant volatility phases.

The package provides the closed-form two-phase transition density (with CDF,
moments, and sampling), the three-phase image series as published, a
finite-volume PDE oracle for cross-validation, maximum likelihood fitting with
a likelihood-ratio normality test, and risk-neutral European call pricing with
an implied-volatility surface generator.
"""

__version__ = "0.1.0"

from .numerics import (
    BracketError,
    HessianError,
    QuadratureError,
    QuadratureSpec,
    RngAlgorithm,
    RngState,
    find_root_bracketed,
    integrate_adaptive,
    numerical_hessian,
)
from .phase_kernel import (
    DensityTable,
    DomainError,
    MomentSummary,
    PhaseSystem,
    SeriesConsistencyError,
    ThreePhaseParams,
    TwoPhaseParams,
    density_grid,
    three_phase_pdf,
    three_phase_pdf_branch,
    two_phase_cdf,
    two_phase_moments,
    two_phase_pdf,
    two_phase_sample,
    write_density_csv,
)
from .pde_oracle import (
    GridSolution,
    SolverFailure,
    SolverGrid,
    chapman_kolmogorov_check,
    solution_report,
    solve_for_system,
    solve_system,
    three_phase_flux,
    verify_identity_A10,
    verify_identity_A14,
    write_solution_csv,
)
from .inference import (
    DegenerateSampleError,
    FitConfig,
    FitReport,
    IngestionError,
    NestingError,
    ReturnSample,
    fit_normal_null,
    fit_two_phase,
    load_returns,
    log_likelihood_two_phase,
    lr_test,
)
from .pricing import (
    InternalConsistencyError,
    OptionTerms,
    PriceDetail,
    PricingError,
    PricingModel,
    SurfaceRow,
    VolBoundsError,
    black_scholes_call,
    commensurate_volatility,
    drift_mu_bar,
    implied_vol,
    lambda_normalizer,
    price_call,
    price_call_detail,
    price_call_quadrature,
    put_from_parity,
    surface,
    write_surface_csv,
)
from .cli import main, run

__all__ = [
    "__version__",
    # numerics
    "BracketError",
    "HessianError",
    "QuadratureError",
    "QuadratureSpec",
    "RngAlgorithm",
    "RngState",
    "find_root_bracketed",
    "integrate_adaptive",
    "numerical_hessian",
    # phase_kernel
    "DensityTable",
    "DomainError",
    "MomentSummary",
    "PhaseSystem",
    "SeriesConsistencyError",
    "ThreePhaseParams",
    "TwoPhaseParams",
    "density_grid",
    "three_phase_pdf",
    "three_phase_pdf_branch",
    "two_phase_cdf",
    "two_phase_moments",
    "two_phase_pdf",
    "two_phase_sample",
    "write_density_csv",
    # pde_oracle
    "GridSolution",
    "SolverFailure",
    "SolverGrid",
    "chapman_kolmogorov_check",
    "solution_report",
    "solve_for_system",
    "solve_system",
    "three_phase_flux",
    "verify_identity_A10",
    "verify_identity_A14",
    "write_solution_csv",
    # inference
    "DegenerateSampleError",
    "FitConfig",
    "FitReport",
    "IngestionError",
    "NestingError",
    "ReturnSample",
    "fit_normal_null",
    "fit_two_phase",
    "load_returns",
    "log_likelihood_two_phase",
    "lr_test",
    # pricing
    "InternalConsistencyError",
    "OptionTerms",
    "PriceDetail",
    "PricingError",
    "PricingModel",
    "SurfaceRow",
    "VolBoundsError",
    "black_scholes_call",
    "commensurate_volatility",
    "drift_mu_bar",
    "implied_vol",
    "lambda_normalizer",
    "price_call",
    "price_call_detail",
    "price_call_quadrature",
    "put_from_parity",
    "surface",
    "write_surface_csv",
    # cli
    "main",
    "run",
]
