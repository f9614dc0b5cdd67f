"""Scale-sweep checks of the asymptotic identities.

Each check measures an average over a geometric ladder of scales, fits the
trend, extrapolates the limit and compares it with the supremum measured on
the trusted region.
"""

from __future__ import annotations

import numpy as np

from ..harmonic import VectorMap, growth_constant
from ..heat import heat_evolve
from ..pullback import average_gram, gram_field, hessian_energy, so_diagonalize
from .common import (
    ball_trusted, components, energy_fields, ensure_run, heat_trusted, masked_ball_average,
    masked_heat_average, trusted_sup,
)
from .report import EXPLORATORY, CheckReport, decide, extrapolate, floats, monotone, within


def _sweep(man, f, mask, rho_list, t_list, run):
    out = {}
    if rho_list is not None:
        out["ball"] = [masked_ball_average(man, f, mask, r) for r in rho_list]
    if t_list is not None:
        out["heat"] = [masked_heat_average(man, run.at(t).H, f, mask) for t in t_list]
    return out


def check_li_identity(man, u, rho_list, t_list, tol: float = 0.03, run=None, control: bool = False,
                      sup: float | None = None) -> CheckReport:
    """Ball and heat averages of |∇u_alpha|^2 (or of a bounded subharmonic f) tend to the sup.

    For a VectorMap the energy density of every component is tested; for a
    scalar array the array itself is the test function.  ``sup`` replaces
    the measured supremum for a scalar field whose supremum is known in
    closed form and only approached at infinity.
    """
    U, kind = components(u)
    run = ensure_run(man, t_list, run)
    if kind == "map":
        fs, mask = energy_fields(man, U)
    else:
        fs, mask = [U[0]], np.ones(man.V, dtype=bool)
    trusted = ball_trusted(man, rho_list) and heat_trusted(man, t_list)
    ok = True
    series, fit, sups = {}, {}, []
    for a, f in enumerate(fs):
        sw = _sweep(man, f, mask, rho_list, t_list, run)
        sup_a = trusted_sup(man, f, mask) if sup is None or kind == "map" else float(sup)
        sups.append(sup_a)
        lb, mb = extrapolate(sw["ball"])
        lh, mh = extrapolate(sw["heat"])
        series[f"ball_{a}"] = {"scales": floats(rho_list), "measured": floats(sw["ball"])}
        series[f"heat_{a}"] = {"scales": floats(t_list), "measured": floats(sw["heat"])}
        fit[f"component_{a}"] = {
            "ball_limit": lb, "ball_method": mb, "heat_limit": lh, "heat_method": mh,
            "ball_monotone_up": monotone(sw["ball"], "up", 0.10),
            "heat_monotone_up": monotone(sw["heat"], "up", 0.10),
        }
        if sup_a <= 1e-14:
            ok &= max(abs(lb), abs(lh)) <= 1e-12
        else:
            ok &= within(lb, sup_a, tol) and within(lh, sup_a, tol)
    return CheckReport(
        id="li_identity", spec_hash=man.spec_hash, scales=floats(rho_list),
        measured=series["ball_0"]["measured"], target=floats(sups), tolerance=tol,
        verdict=decide(ok, trusted, control), fit=fit, series=series, control=control,
        details={"kind": kind},
    )


def _gram_and_check(man, u):
    if not isinstance(u, VectorMap):
        raise TypeError("this check needs a VectorMap")
    gram = gram_field(man, u)
    if np.max(np.abs(gram.det[gram.mask])) <= 1e-14:
        raise ValueError("trivial map: the pull-back density vanishes identically")
    return gram


def check_max_principle(man, u, rho_list, tol: float = 0.03, gap_slack: float = 0.10,
                        control: bool = False) -> CheckReport:
    """Ball averages of |ω|^2 against sup |ω|^2, with the diagonalisation pipeline.

    Per scale: the average of det E, the averaged Gram matrix Ω_ρ, its
    diagonalising rotation A_ρ and eigenvalues, and the commutation gap
    |avg det E - det Ω_ρ|.  PASS when the extrapolated average matches the
    sup, the gap shrinks along the ladder and the map is not superlinear.
    """
    gram = _gram_and_check(man, u)
    det, mask = gram.det, gram.mask
    sup = trusted_sup(man, det, mask)
    growth = growth_constant(man, u)
    avgs, gaps, prods, lams, rots = [], [], [], [], []
    for rho in rho_list:
        a = masked_ball_average(man, det, mask, rho)
        omega = average_gram(gram, "ball", rho, strict=False)
        rot, lam = so_diagonalize(omega)
        avgs.append(a)
        prods.append(float(np.prod(lam)))
        gaps.append(abs(a - float(np.linalg.det(omega.matrix))))
        lams.append(floats(lam))
        rots.append(floats(rot.A))
    lim, meth = extrapolate(avgs)
    gap_down = monotone(gaps, "down", gap_slack, floor=1e-12 * sup)
    cauchy = [float(np.max(np.abs(np.subtract(b, a)))) for a, b in zip(rots, rots[1:])]
    ok = within(lim, sup, tol) and gap_down and not growth.divergent
    fit = {"direction": "up", "monotone_up": monotone(avgs, "up", 0.10), "limit": lim, "method": meth,
           "gap_monotone_down": gap_down, "growth_exponent": growth.exponent, "growth_divergent": growth.divergent}
    return CheckReport(
        id="max_principle", spec_hash=man.spec_hash, scales=floats(rho_list), measured=floats(avgs),
        target=sup, tolerance=tol, verdict=decide(ok, ball_trusted(man, rho_list), control), fit=fit,
        constants={"L_map": growth.L_map},
        series={"ball": {"scales": floats(rho_list), "measured": floats(avgs)},
                "gap": {"scales": floats(rho_list), "measured": floats(gaps)},
                "prod_lambda_sq": {"scales": floats(rho_list), "measured": prods}},
        details={"lambda_sq": lams, "rotations": rots, "rotation_steps": cauchy}, control=control,
    )


def check_heat_limit(man, u, t_list, tol: float = 0.03, run=None, control: bool = False,
                     hess=None) -> CheckReport:
    """Heat averages of |ω|^2 against sup |ω|^2 and the weighted Hessian 2t ∫|∇∇u|^2 dμ(3t)."""
    gram = _gram_and_check(man, u)
    det, mask = gram.det, gram.mask
    run = ensure_run(man, list(t_list) + [3.0 * t for t in t_list], run)
    hs, hmask = hess if hess is not None else hessian_energy(man, u)
    sup = trusted_sup(man, det, mask)
    esup = trusted_sup(man, gram.trace, mask)
    avgs = [masked_heat_average(man, run.at(t).H, det, mask) for t in t_list]
    weighted = []
    for t in t_list:
        wH = man.w * run.at(3.0 * t).H
        weighted.append(float(2.0 * t * (wH[hmask] @ hs[hmask])))
    lim, meth = extrapolate(avgs)
    wlim, wmeth = extrapolate(weighted)
    w_down = monotone(weighted, "down", 0.10, floor=1e-12 * max(esup, 1e-300))
    w_zero = abs(wlim) < tol * esup + 1e-10
    ok = within(lim, sup, tol) and w_down and w_zero
    fit = {"direction": "up", "monotone_up": monotone(avgs, "up", 0.10), "limit": lim, "method": meth,
           "hessian_limit": wlim, "hessian_method": wmeth, "hessian_monotone_down": w_down}
    return CheckReport(
        id="heat_limit", spec_hash=man.spec_hash, scales=floats(t_list), measured=floats(avgs), target=sup,
        tolerance=tol, verdict=decide(ok, heat_trusted(man, t_list), control), fit=fit,
        series={"heat": {"scales": floats(t_list), "measured": floats(avgs)},
                "weighted_hessian": {"scales": floats(t_list), "measured": floats(weighted)}},
        control=control,
    )


def check_identity_chain(man, u, rho_list, t_list, tol: float = 0.05, run=None, control: bool = False,
                         floor: float = 0.0, sup: float | None = None) -> CheckReport:
    """lim ball average = sup = lim heat average for |ω|^2 (or a scalar f).

    ``sup`` overrides the measured supremum of a scalar field, as in
    :func:`check_li_identity`.
    """
    if isinstance(u, VectorMap):
        gram = _gram_and_check(man, u)
        f, mask = gram.det, gram.mask
        kind = "pullback_density"
    else:
        f, mask = np.asarray(u, dtype=float), np.ones(man.V, dtype=bool)
        kind = "scalar"
    run = ensure_run(man, t_list, run)
    sw = _sweep(man, f, mask, rho_list, t_list, run)
    sup = trusted_sup(man, f, mask) if sup is None or kind != "scalar" else float(sup)
    lb, mb = extrapolate(sw["ball"])
    lh, mh = extrapolate(sw["heat"])
    scale = max(abs(sup), 1e-300)
    ok = (abs(lb - lh) < tol * scale + floor) and within(lb, sup, tol, floor) and within(lh, sup, tol, floor)
    trusted = ball_trusted(man, rho_list) and heat_trusted(man, t_list)
    return CheckReport(
        id="identity_chain", spec_hash=man.spec_hash, scales=floats(rho_list), measured=floats(sw["ball"]),
        target=sup, tolerance=tol, verdict=decide(ok, trusted, control),
        fit={"ball_limit": lb, "ball_method": mb, "heat_limit": lh, "heat_method": mh, "sup": sup},
        series={"ball": {"scales": floats(rho_list), "measured": floats(sw["ball"])},
                "heat": {"scales": floats(t_list), "measured": floats(sw["heat"])}},
        details={"kind": kind}, control=control,
    )


def check_energy_monotonicity(man, u, t_pairs, tol: float = 1e-9, rel_tol: float = 1e-6, q: float = 0.02,
                              control: bool = False) -> CheckReport:
    """∫|∇u|^2 dμ(t2) - ∫|∇u|^2 dμ(t1) >= 2 ∫_{t1}^{t2} ∫|∇∇u|^2 dμ dt for every pair.

    Both sides are accumulated on the heat lattice: the left side from the
    stored states and the right side with the right-endpoint rule the
    backward Euler step obeys, so the measured slack is exactly the time
    integral of the heat-weighted Bochner residual of the discretisation.
    """
    U, _ = components(u)
    es, emask = energy_fields(man, U)
    e = np.where(emask, sum(es), 0.0)
    hs, hmask = hessian_energy(man, U)
    hs = np.where(hmask, hs, 0.0)
    pairs = [(float(a), float(b)) for a, b in t_pairs]
    if any(not 0 < a < b for a, b in pairs):
        raise ValueError("time pairs need 0 < t1 < t2")
    times = sorted({t for p in pairs for t in p})
    acc = {"t": [], "I": []}
    total = [0.0]

    def observe(t, dt, H):
        total[0] += dt * 2.0 * float((man.w * H) @ hs)
        acc["t"].append(t)
        acc["I"].append(total[0])

    run = heat_evolve(man, times, q=q, observe=observe)
    tt = np.array(acc["t"])
    II = np.array(acc["I"])

    def cum(t):
        return float(II[int(np.argmin(np.abs(tt - t)))])

    lhs, rhs, slack = [], [], []
    ok = True
    for a, b in pairs:
        L = float((man.w * run.at(b).H) @ e - (man.w * run.at(a).H) @ e)
        R = cum(b) - cum(a)
        lhs.append(L)
        rhs.append(R)
        slack.append(L - R)
        ok &= (L - R) > -(tol + rel_tol * max(abs(L), abs(R)))
    trusted = heat_trusted(man, times)
    return CheckReport(
        id="energy_monotonicity", spec_hash=man.spec_hash, scales=[list(p) for p in pairs], measured=slack,
        target=0.0, tolerance=tol, verdict=decide(ok, trusted, control),
        fit={"min_slack": float(min(slack)), "all_nonnegative": bool(min(slack) >= 0.0)},
        series={"lhs": {"scales": floats([p[1] for p in pairs]), "measured": lhs},
                "rhs": {"scales": floats([p[1] for p in pairs]), "measured": rhs}},
        details={"rel_tol": rel_tol, "steps": run.steps}, control=control,
    )


def check_sigma_conjecture_probe(man, u, k: int, rho_list, t_list, run=None) -> CheckReport:
    """Three-way gaps for sigma_k, 2 <= k <= n - 1.  Always EXPLORATORY."""
    gram = gram_field(man, u)
    n = gram.n
    if not 2 <= k <= n - 1:
        raise ValueError(f"k must satisfy 2 <= k <= n - 1 = {n - 1}")
    run = ensure_run(man, t_list, run)
    f, mask = gram.sigma[k], gram.mask
    sw = _sweep(man, f, mask, rho_list, t_list, run)
    sup = trusted_sup(man, f, mask)
    lb, _ = extrapolate(sw["ball"])
    lh, _ = extrapolate(sw["heat"])
    trusted = ball_trusted(man, rho_list) and heat_trusted(man, t_list)
    return CheckReport(
        id="sigma_conjecture_probe", spec_hash=man.spec_hash, scales=floats(rho_list),
        measured=floats(sw["ball"]), target=sup, tolerance=0.0, verdict=EXPLORATORY,
        fit={"ball_limit": lb, "heat_limit": lh, "sup": sup, "gap_ball_sup": sup - lb, "gap_heat_sup": sup - lh,
             "gap_ball_heat": lb - lh},
        series={"ball": {"scales": floats(rho_list), "measured": floats(sw["ball"])},
                "heat": {"scales": floats(t_list), "measured": floats(sw["heat"])}},
        details={"k": k, "trusted": trusted},
    )
