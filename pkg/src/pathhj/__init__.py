"""Minimax solutions of path-dependent Hamilton-Jacobi equations at desk scale."""

from .pathspace import Anchor, BundleSpec, Path, TimeGrid, check_membership, d_infty, sample_extension, sup_history
from .calculus import SmoothFunctional, chain_rule_residual, psi, psi_bounds_report, psi_partials
from .hamiltonian import AuditConfig, Hamiltonian, audit_assumptions, control_hamiltonian
from .characteristics import CharacteristicPair, classical_drift, concat_pairs, enumerate_bundle, integrate_characteristic
from .minimax import (
    CandidateSolution,
    CheckConfig,
    check_subsolution,
    check_supersolution,
    comparison_probe,
    mu_extremal,
    sandwich_check,
    u_extremal,
)
from .control import (
    BudgetExceeded,
    ControlProblem,
    ControlSignal,
    dpp_residual,
    evaluate_control,
    integrate_state,
    regularity_modulus,
    value,
    value_function,
    verify_value_minimax,
)
from .presets import PRESETS, get_preset

__version__ = "0.1.0"
