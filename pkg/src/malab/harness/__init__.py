"""Estimate-verification pipeline: entropy, sublevel statistics, comparison,
Trudinger inequality, the mass-exponent fit, the level-set iteration and the
final bound certificate."""

import numpy as np

from .certify import CertificateResult, ConstantLedger, certify_bound, l1_estimate
from .constants import (
    choose_constants,
    entropy_norm,
    measure_power_log_constant,
    measure_young_constant,
    power_log_margin,
    young_check,
    young_margin,
)
from .degiorgi import DeGiorgiResult, closed_form_c1, degiorgi_iterate
from .inequalities import (
    ComparisonResult,
    TrudingerResult,
    alpha_scan,
    comparison_check,
    dirichlet_density,
    epsilon_constant,
    trudinger_check,
)
from .sublevel import BallContext, SublevelStats, context_from_report, phi_a_check, sublevel_scan

__all__ = [
    "entropy_norm",
    "choose_constants",
    "measure_young_constant",
    "measure_power_log_constant",
    "young_check",
    "young_margin",
    "power_log_margin",
    "BallContext",
    "SublevelStats",
    "context_from_report",
    "sublevel_scan",
    "phi_a_check",
    "comparison_check",
    "ComparisonResult",
    "alpha_scan",
    "trudinger_check",
    "TrudingerResult",
    "dirichlet_density",
    "epsilon_constant",
    "a_phi_fit",
    "degiorgi_iterate",
    "DeGiorgiResult",
    "closed_form_c1",
    "certify_bound",
    "CertificateResult",
    "ConstantLedger",
    "l1_estimate",
]


def a_phi_fit(stats_list, p: float, n: int):
    """Exponent delta0 = (p - n)/(p n) and the measured C4 = max A / Phi^{1+delta0}.

    Levels with zero mass are skipped; at least one positive-mass level is
    required.
    """
    if p <= n:
        raise ValueError("the fit requires p > n")
    delta0 = (p - n) / (p * n)
    ratios = [st.A / st.Phi ** (1.0 + delta0) for st in stats_list if st.Phi > 0]
    if not ratios:
        raise ValueError("all sampled sublevel sets are empty")
    return float(np.max(ratios)), delta0
