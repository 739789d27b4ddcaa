"""Sparse regression with penalties from Laplace exponents of subordinators.

Modules
-------
penalties      Bernstein-function penalties and their derivatives
subordinators  laws of T(t), densities, samplers, Levy measures
lasso          weighted lasso by coordinate descent
ecme           ECME estimation for the three algorithm variants
simulation     data models, SPE, cross-validation and replicated studies
cli            command-line entry point (``subpen`` / ``python -m subpen``)
"""

from .ecme import (EcmeConfig, EcmeError, EcmeState, RegressionProblem, Variant,
                   penalty_for_variant, run)
from .lasso import kkt_residual, weighted_lasso
from .penalties import (DomainError, Family, PenaltySpec, parse_spec, psi, psi_prime)
from .subordinators import Kind, SubordinatorLaw, law_for_penalty, moments, sample

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Family",
    "PenaltySpec",
    "parse_spec",
    "psi",
    "psi_prime",
    "Kind",
    "SubordinatorLaw",
    "law_for_penalty",
    "moments",
    "sample",
    "weighted_lasso",
    "kkt_residual",
    "Variant",
    "RegressionProblem",
    "EcmeConfig",
    "EcmeState",
    "EcmeError",
    "penalty_for_variant",
    "run",
]
