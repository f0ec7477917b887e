"""Discrete coagulation with injection: solvers, steady states and exact references."""
from .kernels import EnvelopeParams, KernelDomainError, KernelSpec, classify_regime, eval_kernel, verify_envelope
from .onecomp import SolverConfig, SourceSpec, StateVector, integrate, mass_flux, rhs
from .stationary import SteadyResult, SweepReport, invariant_region_bound, solve_stationary, truncation_sweep

__version__ = "0.1.0"

__all__ = [
    "EnvelopeParams",
    "KernelDomainError",
    "KernelSpec",
    "SolverConfig",
    "SourceSpec",
    "StateVector",
    "SteadyResult",
    "SweepReport",
    "classify_regime",
    "eval_kernel",
    "integrate",
    "invariant_region_bound",
    "mass_flux",
    "rhs",
    "solve_stationary",
    "truncation_sweep",
    "verify_envelope",
]
