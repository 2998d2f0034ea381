"""Stability analysis of the delay equation for periodic chronic myelogenous leukemia."""
from .model import (
    ConfigError,
    DomainError,
    Equilibria,
    Parameters,
    ReducedCoeffs,
    b_sign_region,
    derive_k,
    equilibria,
    r_max,
    r_n,
    reduced_coeffs,
)
from .hayes import classify, hopf_boundary_r, omega0, t_func, t_inv
from .charroots import count_rhp_roots, refine_root, rightmost_root

__version__ = "0.1.0"
