"""Certified contraction bounds for explicit and implicit Runge-Kutta step maps."""

from .contraction import (ContractionCertificate, certify, max_certified_step_l1, rho_l1,
                          rho_l2, rho_linf)
from .explicit_rk import explicit_lipschitz_bound, explicit_step, rho_sweep
from .fields import Certificate, VectorField
from .harness import builtin_system, empirical_contraction_factor, reproduce_figures
from .implicit_rk import (AuxiliaryConfig, certify_well_defined, implicit_step,
                          implicit_step_rewritten, solve_stages)
from .norms import NormSpec, induced_matrix_norm, log_norm, parse_norm, vec_norm, weak_pairing
from .tableau import ButcherTableau, catalog_lookup, make_tableau, parse_tableau

__all__ = [
    "AuxiliaryConfig", "ButcherTableau", "Certificate", "ContractionCertificate", "NormSpec",
    "VectorField", "builtin_system", "catalog_lookup", "certify", "certify_well_defined",
    "empirical_contraction_factor", "explicit_lipschitz_bound", "explicit_step",
    "implicit_step", "implicit_step_rewritten", "induced_matrix_norm", "log_norm",
    "make_tableau", "max_certified_step_l1", "parse_norm", "parse_tableau",
    "reproduce_figures", "rho_l1", "rho_l2", "rho_linf", "rho_sweep", "solve_stages",
    "vec_norm", "weak_pairing",
]
