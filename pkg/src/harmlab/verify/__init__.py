"""Scale-sweep checks, one per analytic statement, each returning a CheckReport."""

from .basics import (
    check_bochner, check_gaussian, check_growth, check_harnack, check_kernel_bounds, check_mass_conservation,
    check_semigroup, check_tail_mass, check_volume_ratio,
)
from .inequalities import (
    NotSubharmonic, check_poincare, check_segment, check_subharmonic_heat_monotone, check_weighted_poincare,
    poincare_ratios, segment_constant, weighted_poincare_terms,
)
from .limits import (
    check_energy_monotonicity, check_heat_limit, check_identity_chain, check_li_identity, check_max_principle,
    check_sigma_conjecture_probe,
)
from .report import (
    EXPLORATORY, FAIL, NEGATIVE_CONTROL_PASS, PASS, UNTRUSTED, VERDICTS, CheckReport, decide, extrapolate,
    monotone, within,
)
from .rigidity import corollary_probe, laplacian_det_expansion, laplacian_det_residual, rigidity_probe

__all__ = [
    "CheckReport", "EXPLORATORY", "FAIL", "NEGATIVE_CONTROL_PASS", "NotSubharmonic", "PASS", "UNTRUSTED",
    "VERDICTS", "check_bochner", "check_energy_monotonicity", "check_gaussian", "check_growth", "check_harnack",
    "check_kernel_bounds", "check_mass_conservation", "check_semigroup", "check_tail_mass", "check_volume_ratio", "check_heat_limit", "check_identity_chain", "check_li_identity",
    "check_max_principle", "check_poincare", "check_segment", "check_sigma_conjecture_probe",
    "check_subharmonic_heat_monotone", "check_weighted_poincare", "corollary_probe", "decide", "extrapolate",
    "laplacian_det_expansion", "laplacian_det_residual", "monotone", "poincare_ratios", "rigidity_probe",
    "segment_constant", "weighted_poincare_terms", "within",
]
