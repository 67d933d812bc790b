"""Robust functional principal components for sparse longitudinal data."""

from ._rfpca import (
    Curve,
    Error,
    Fit,
    FitConfig,
    RhoFamily,
    Sample,
    SimulatedSample,
    Variant,
    alignment,
    contaminate,
    fit,
    frobenius_discrepancy,
    generate,
    mad,
    matern_cov,
    mscale,
    read_curve_table,
    run_monte_carlo,
    select_num_components,
    spearman_rho,
    write_curve_table,
)

__version__ = "0.1.0"

__all__ = [
    "Curve",
    "Error",
    "Fit",
    "FitConfig",
    "RhoFamily",
    "Sample",
    "SimulatedSample",
    "Variant",
    "alignment",
    "contaminate",
    "fit",
    "frobenius_discrepancy",
    "generate",
    "mad",
    "matern_cov",
    "mscale",
    "read_curve_table",
    "run_monte_carlo",
    "select_num_components",
    "spearman_rho",
    "write_curve_table",
]
