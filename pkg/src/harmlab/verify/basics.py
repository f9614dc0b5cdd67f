"""Report adapters for the manifold, harmonic and heat primitives.

These wrap the building-block checks (Bochner residual, growth, heat-kernel
fidelity, mass, semigroup, Harnack, volume ratios, tails, kernel constants)
in :class:`CheckReport` form so the suite runner treats them like every
other statement.
"""

from __future__ import annotations

import numpy as np

from ..harmonic import bochner_residual, growth_constant
from ..heat import (
    gaussian_density, harnack_check, heat_evolve, kernel_bound_fit, kernel_refinement_verdict, tail_mass_bound,
)
from ..manifold import volume_ratio_profile
from .common import ball_trusted, heat_trusted
from .report import CheckReport, decide, floats


def check_bochner(man, u, refine=None, tol_factor: float = 1.0, shrink: float = 1.5, floor: float = 1e-9,
                  control: bool = False) -> CheckReport:
    """Δ|∇u|^2 - 2|∇∇u|^2 >= -tol(h), with the negative part shrinking under h -> h/2.

    ``refine`` is (manifold, map) at half the spacing.  The shrink factor is
    only required when the coarse negative part is above ``floor``; below it
    the residual is already at roundoff level.
    """
    rep = bochner_residual(man, u, tol_factor)
    neg = float(np.max(rep.negative_part))
    ok = rep.verdict == "PASS"
    fit = {"negative_part": neg, "tol_h": float(rep.tol), "min_residual": floats(rep.min_residual)}
    scales, measured = [float(man.h)], [neg]
    if refine is not None:
        fine = bochner_residual(*refine, tol_factor)
        neg2 = float(np.max(fine.negative_part))
        scales.append(float(refine[0].h))
        measured.append(neg2)
        ratio = neg / neg2 if neg2 > 0 else float("inf")
        fit["shrink_ratio"] = ratio
        ok = ok and fine.verdict == "PASS" and (neg <= floor or ratio >= shrink)
    return CheckReport(
        id="bochner", spec_hash=man.spec_hash, scales=scales, measured=measured, target=0.0,
        tolerance=float(rep.tol), verdict=decide(bool(ok), True, control), fit=fit,
        constants={"scale": floats(rep.scale)}, control=control,
    )


def check_growth(man, u, max_exponent: float = 1.2, control: bool = False) -> CheckReport:
    """At most linear growth: the growth exponent of max_{B(R)} |u| stays below ``max_exponent``."""
    g = growth_constant(man, u, max_exponent=max_exponent)
    return CheckReport(
        id="growth", spec_hash=man.spec_hash, scales=floats(g.radii), measured=floats(g.L_by_radius),
        target=1.0, tolerance=max_exponent, verdict=decide(not g.divergent, True, control),
        fit={"exponent": g.exponent, "divergent": g.divergent}, constants={"L": floats(g.L), "L_map": g.L_map},
        control=control,
    )


def check_mass_conservation(run, tol: float = 1e-9, control: bool = False) -> CheckReport:
    """|Σ w H - 1| <= tol at every stored time, and H >= 0."""
    man = run.man
    drift = [abs(s.mass - 1.0) for s in run.states]
    positive = all(float(s.H.min()) >= 0.0 for s in run.states)
    ok = max(drift) <= tol and positive
    return CheckReport(
        id="mass_conservation", spec_hash=man.spec_hash, scales=floats(run.times), measured=floats(drift),
        target=0.0, tolerance=tol, verdict=decide(bool(ok), True, control), fit={"nonnegative": positive},
        control=control,
    )


def check_semigroup(man, t_a: float, t_b: float, tol: float = 1e-8, q: float = 0.02, run=None,
                    control: bool = False) -> CheckReport:
    """Evolving to t_a and then by t_b matches evolving straight to t_a + t_b.

    Both evolutions use outputs {t_a, t_a + t_b} only, so they share the
    global geometric step lattice and the discrete propagators compose.  When
    ``run`` holds t_a + t_b its state is compared too and reported as the
    cross-lattice difference: extra output times in between change the steps
    and leave a time-discretisation difference of order q.
    """
    t_ab = t_a + t_b
    direct = heat_evolve(man, [t_a, t_ab], q=q)
    restart = heat_evolve(man, [t_ab], initial=direct.at(t_a).H, t_start=t_a, q=q)
    H1, H2 = direct.at(t_ab).H, restart.at(t_ab).H
    scale = float(np.max(np.abs(H1)))
    diff = float(np.max(np.abs(H1 - H2)) / scale)
    details = {}
    if run is not None and np.any(np.isclose(run.times, t_ab, rtol=1e-12)):
        details["cross_lattice"] = float(np.max(np.abs(run.at(t_ab).H - H1)) / scale)
    return CheckReport(
        id="semigroup", spec_hash=man.spec_hash, scales=[float(t_a), float(t_b)], measured=[diff], target=0.0,
        tolerance=tol, verdict=decide(diff <= tol, True, control), details=details, control=control,
    )


def check_gaussian(run, t_list, tol: float = 0.02, control: bool = False) -> CheckReport:
    """L1 distance to the Euclidean heat kernel on a FlatGrid, within ``tol``."""
    man = run.man
    if man.spec.kind != "FlatGrid":
        raise ValueError("the Gaussian oracle needs a FlatGrid")
    dist = []
    for t in t_list:
        G = gaussian_density(man.r, t, man.m)
        dist.append(float(man.w @ np.abs(run.at(t).H - G)))
    lo = 10.0 * man.h
    window = all(np.sqrt(t) >= lo - 1e-12 for t in t_list) and heat_trusted(man, t_list)
    ok = max(dist) <= tol
    return CheckReport(
        id="heat_gaussian", spec_hash=man.spec_hash, scales=floats(t_list), measured=dist, target=0.0,
        tolerance=tol, verdict=decide(ok, window, control), control=control,
    )


def check_harnack(run, t1: float, t2: float, slack: float = 1e-9, seed: int = 0,
                  control: bool = False) -> CheckReport:
    """Pointwise and two-point parabolic Harnack forms between t1 and t2."""
    rep = harnack_check(run, t1, t2, slack=slack, seed=seed)
    return CheckReport(
        id="harnack", spec_hash=run.man.spec_hash, scales=[float(t1), float(t2)],
        measured=[rep.worst_violation, rep.pair_violation], target=0.0, tolerance=slack,
        verdict=decide(rep.verdict == "PASS", heat_trusted(run.man, [t2]), control),
        fit={"worst_ratio": rep.worst_ratio, "pair_worst_ratio": rep.pair_worst_ratio},
        constants={"factor": rep.factor}, seed=seed, control=control,
    )


def check_volume_ratio(man, rho_list, slack: float = 0.03, control: bool = False) -> CheckReport:
    """Bishop-Gromov: |B(rho)| / (omega_m rho^m) non-increasing within ``slack``."""
    prof = volume_ratio_profile(man, rho_list, slack)
    return CheckReport(
        id="volume_ratio", spec_hash=man.spec_hash, scales=floats(prof.rho), measured=floats(prof.ratio),
        target=1.0, tolerance=slack, verdict=decide(prof.verdict == "PASS", ball_trusted(man, rho_list), control),
        fit={"worst_increase": prof.worst_increase}, series={"boundary_ratio": {
            "scales": floats(prof.rho), "measured": floats(prof.boundary_ratio)}},
        control=control,
    )


def check_tail_mass(run, t: float, R_list, C2_half: float | None = None, control: bool = False) -> CheckReport:
    """Heat mass outside B(x0, R) below the Psi_2 prediction and decreasing in R."""
    rep = tail_mass_bound(run, t, R_list, C2_half)
    return CheckReport(
        id="tail_mass", spec_hash=run.man.spec_hash, scales=floats(rep.ratio), measured=floats(rep.measured),
        target=floats(rep.predicted), tolerance=0.0, verdict=decide(rep.verdict == "PASS", True, control),
        fit={"decreasing": rep.decreasing, "t": float(t)}, constants={"C2_half": rep.C2_half}, control=control,
    )


def check_kernel_bounds(run, eps: float = 1.0, refine_run=None, drift: float = 1.5,
                        control: bool = False) -> CheckReport:
    """Fitted two-sided Gaussian constants, finite and stable under refinement."""
    fit = kernel_bound_fit(run, eps)
    measured = [fit.C1, fit.C2]
    scales = [float(run.man.h)]
    ok = bool(np.isfinite(fit.C1) and np.isfinite(fit.C2))
    extra = {}
    if refine_run is not None:
        fine = kernel_bound_fit(refine_run, eps)
        ver = kernel_refinement_verdict(fit, fine, drift)
        measured += [fine.C1, fine.C2]
        scales.append(float(refine_run.man.h))
        extra = {"ratios": ver["ratios"]}
        ok = ok and ver["verdict"] == "PASS"
    return CheckReport(
        id="kernel_bounds", spec_hash=run.man.spec_hash, scales=scales, measured=measured, target=0.0,
        tolerance=drift, verdict=decide(ok, True, control), fit={"eps": float(eps), **extra},
        constants={"C1": fit.C1, "C2": fit.C2, "samples": fit.n_samples}, control=control,
    )
