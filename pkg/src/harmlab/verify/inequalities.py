"""Checks of the analytic inequalities with fitted constants.

The constants C_CC, C_P and C_WP are never given numerically; each check
fits the smallest constant that makes the inequality hold on the sampled
scales and, when a refined manifold is supplied, requires the fit to drift
by less than ``drift`` under h -> h/2.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import trapezoid
from scipy.sparse.csgraph import dijkstra

from ..fields import gradient, laplacian_apply
from ..geodesic import base_graph
from ..heat import kernel_bound_fit, psi2
from ..manifold import ball
from .common import ensure_run, heat_trusted, trusted_sup
from .report import CheckReport, decide, extrapolate, floats, monotone

DRIFT = 1.5


def _drift(a: float, b: float) -> float:
    if a == b:
        return 1.0
    if min(a, b) <= 0.0 or not (np.isfinite(a) and np.isfinite(b)):
        return np.inf
    return max(a, b) / min(a, b)


# ---------------------------------------------------------------------------
# Segment inequality


def _flat_positions(man, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(base index, flat coordinates) of vertices."""
    nflat = int(np.prod(man.flat_shape)) if man.flat else 1
    b = v // nflat
    z = np.stack([man.coords[n][v] for n in man.flat_names], axis=-1) if man.flat else np.zeros((v.size, 0))
    return b, z


def _interp_flat(man, fblk: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Multilinear interpolation along the flat axes at fixed base vertices."""
    if not man.flat:
        return fblk[b]
    k = len(man.flat)
    lo_idx, frac = [], []
    for j, ax in enumerate(man.flat):
        x = (z[:, j] - ax.nodes[0]) / ax.h
        i = np.clip(np.floor(x).astype(int), 0, ax.n - 2)
        lo_idx.append(i)
        frac.append(np.clip(x - i, 0.0, 1.0))
    out = np.zeros(b.size)
    for corner in range(2**k):
        wgt = np.ones(b.size)
        idx = [b]
        for j in range(k):
            bit = (corner >> j) & 1
            wgt *= frac[j] if bit else 1.0 - frac[j]
            idx.append(lo_idx[j] + bit)
        out += wgt * fblk[tuple(idx)]
    return out


def _line_integral(man, fblk, x: int, y: int, base_path, base_len: float):
    """∫ f along the product path (base path) x (straight flat segment), and its length."""
    bx, zx = _flat_positions(man, np.array([x]))
    by, zy = _flat_positions(man, np.array([y]))
    zx, zy = zx[0], zy[0]
    dz = float(np.linalg.norm(zy - zx))
    length = float(np.hypot(base_len, dz))
    if length == 0.0:
        return 0.0, 0.0
    if base_path is None or len(base_path) == 1:
        base_path = [int(bx[0])]
        cum = np.zeros(1)
    else:
        cum = _path_fractions(man, base_path)
    h = man.h_min
    n_sub = max(2, int(np.ceil(length / (0.5 * h))) + 1)
    lam = np.linspace(0.0, 1.0, n_sub)
    z = zx[None, :] + lam[:, None] * (zy - zx)[None, :]
    if len(base_path) == 1:
        vals = _interp_flat(man, fblk, np.full(n_sub, base_path[0]), z)
    else:
        seg = np.clip(np.searchsorted(cum, lam, side="right") - 1, 0, len(base_path) - 2)
        span = np.maximum(cum[seg + 1] - cum[seg], 1e-300)
        mu = np.clip((lam - cum[seg]) / span, 0.0, 1.0)
        bp = np.asarray(base_path)
        va = _interp_flat(man, fblk, bp[seg], z)
        vb = _interp_flat(man, fblk, bp[seg + 1], z)
        vals = (1.0 - mu) * va + mu * vb
    return float(trapezoid(vals, lam) * length), length


def _path_fractions(man, path) -> np.ndarray:
    G = base_graph(man.base)
    steps = np.array([G[path[i], path[i + 1]] for i in range(len(path) - 1)])
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    return cum / cum[-1]


def segment_constant(man, f, rho: float, sample_count: int | None = 400, seed: int = 0) -> dict:
    """Fitted C in ∫∫_{B×B} F <= C |B(ρ)| (2ρ) ∫_{B(2ρ)} f, by sampling pairs.

    Pairs are drawn with probability proportional to the vertex volumes, so
    the double integral is |B|^2 times the sample mean of F.  With
    ``sample_count=None`` every ordered pair is used.
    """
    if man.base.kind == "radial":
        raise ValueError("segment sampling needs a grid-path backend (flat, warped or product)")
    f = np.asarray(f, dtype=float)
    b = ball(man, rho)
    idx = b.indices
    w = man.w[idx]
    rng = np.random.default_rng(seed)
    if sample_count is None:
        X, Y = np.meshgrid(idx, idx, indexing="ij")
        X, Y = X.ravel(), Y.ravel()
        pw = np.outer(w, w).ravel()
    else:
        p = w / w.sum()
        X = rng.choice(idx, size=sample_count, p=p)
        Y = rng.choice(idx, size=sample_count, p=p)
        pw = np.ones(X.size)
    fblk = f.reshape(man.block_shape)
    bX, _ = _flat_positions(man, X)
    bY, _ = _flat_positions(man, Y)
    F = np.zeros(X.size)
    failures = 0
    warped = man.base.kind == "warped"
    order = np.argsort(bX, kind="stable")
    cache_src, cache = None, None
    for k in order:
        x, y = int(X[k]), int(Y[k])
        if warped:
            if bX[k] != cache_src:
                cache_src = int(bX[k])
                dist, pred = dijkstra(base_graph(man.base), directed=False, indices=cache_src,
                                      return_predecessors=True)
                cache = (dist, pred)
            dist, pred = cache
            t = int(bY[k])
            if not np.isfinite(dist[t]):
                failures += 1
                continue
            path = [t]
            while path[-1] != cache_src:
                path.append(int(pred[path[-1]]))
            path = path[::-1]
            blen = float(dist[t])
        else:
            path, blen = None, 0.0
        F[k], _ = _line_integral(man, fblk, x, y, path, blen)
    meanF = float(pw @ F / pw.sum())
    b2 = ball(man, 2.0 * rho)
    int2 = float(man.w[b2.indices] @ f[b2.indices])
    rhs_unit = 2.0 * rho * int2
    C = b.volume * meanF / rhs_unit if rhs_unit > 0 else (0.0 if meanF == 0 else np.inf)
    return {"C": float(C), "mean_F": meanF, "ball_volume": b.volume, "integral_2rho": int2,
            "failures": failures, "pairs": int(X.size), "trusted": bool(2.0 * rho <= man.trusted_radius() + 1e-12)}


def check_segment(man, f, rho: float, sample_count: int | None = 400, seed: int = 0, refine=None,
                  drift: float = DRIFT, control: bool = False) -> CheckReport:
    """Segment inequality with a fitted constant, refinement-stable when ``refine`` is given.

    ``refine`` is an optional (manifold, field) pair at half the spacing.
    """
    res = segment_constant(man, f, rho, sample_count, seed)
    trusted = res["trusted"] and res["failures"] <= 0.01 * res["pairs"]
    consts = {"C_CC": res["C"]}
    measured = [res["C"]]
    ok = np.isfinite(res["C"])
    details = {k: v for k, v in res.items() if k != "C"}
    if refine is not None:
        rf = segment_constant(refine[0], refine[1], rho, sample_count, seed)
        consts["C_CC_fine"] = rf["C"]
        d = _drift(res["C"], rf["C"])
        consts["drift"] = d
        measured.append(rf["C"])
        ok = ok and np.isfinite(rf["C"]) and d <= drift
        trusted = trusted and rf["trusted"] and rf["failures"] <= 0.01 * rf["pairs"]
    return CheckReport(id="segment", spec_hash=man.spec_hash, scales=[float(rho)], measured=measured,
                       target=drift, tolerance=drift, verdict=decide(bool(ok), trusted, control),
                       constants=consts, details=details, control=control, seed=seed)


# ---------------------------------------------------------------------------
# Poincaré


def poincare_ratios(man, f, rho_list) -> tuple[list, bool]:
    f = np.asarray(f, dtype=float)
    g = gradient(man, f)
    gn = g.norm()
    out = []
    for rho in rho_list:
        b = ball(man, rho)
        w = man.w[b.indices]
        fb = f[b.indices]
        avg = float(w @ fb) / w.sum()
        lhs = float(w @ np.abs(fb - avg)) / w.sum()
        b2 = ball(man, 2.0 * rho)
        i2 = b2.indices[g.mask[b2.indices]]
        grad_avg = float(man.w[i2] @ gn[i2]) / man.w[i2].sum()
        denom = rho * grad_avg
        if lhs <= 1e-14 * max(1.0, float(np.max(np.abs(fb)))):
            out.append(0.0)
        elif denom == 0.0:
            out.append(np.inf)
        else:
            out.append(lhs / denom)
    trusted = all(2.0 * r <= man.trusted_radius() + 1e-12 for r in rho_list)
    return out, trusted


def check_poincare(man, f, rho_list, refine=None, drift: float = DRIFT, control: bool = False) -> CheckReport:
    """avg_B |f - avg_B f| / (ρ avg_{B(2ρ)} |∇f|) over the ladder; C_P is the maximum."""
    ratios, trusted = poincare_ratios(man, f, rho_list)
    C = float(max(ratios))
    consts = {"C_P": C}
    ok = np.isfinite(C)
    if refine is not None:
        rr, tr = poincare_ratios(refine[0], refine[1], rho_list)
        Cf = float(max(rr))
        d = _drift(C, Cf)
        consts.update({"C_P_fine": Cf, "drift": d})
        ok = ok and np.isfinite(Cf) and d <= drift
        trusted = trusted and tr
    return CheckReport(id="poincare", spec_hash=man.spec_hash, scales=floats(rho_list), measured=floats(ratios),
                       target=C, tolerance=drift, verdict=decide(bool(ok), trusted, control), constants=consts,
                       series={"ratio": {"scales": floats(rho_list), "measured": floats(ratios)}}, control=control)


# ---------------------------------------------------------------------------
# Weighted Poincaré


def weighted_poincare_terms(man, run, f, t: float, j_list, L: float | None = None,
                            C2_half: float | None = None) -> dict:
    """LHS, central and tail terms of the heat-weighted Poincaré inequality for R = j √t."""
    f = np.asarray(f, dtype=float)
    L = float(np.max(np.abs(f))) if L is None else float(L)
    if C2_half is None:
        C2_half = kernel_bound_fit(run, 0.5).C2
    wH = man.w * run.at(t).H
    mean = float(f[man.x0]) + float(wH @ (f - f[man.x0]))
    lhs = float(wH @ np.abs(f - mean))
    g = gradient(man, f)
    gn = np.where(g.mask, g.norm(), 0.0)
    grad3 = float((man.w * run.at(3.0 * t).H) @ gn)
    vt = ball(man, np.sqrt(t)).volume
    central, tail, R = [], [], []
    for j in j_list:
        r = j * np.sqrt(t)
        R.append(r)
        central.append(ball(man, r).volume / vt * r * grad3)
        tail.append(6.0 * psi2(1.0 / j, man.m, C2_half) * L)
    need = [max(lhs - tl, 0.0) / c if c > 0 else (0.0 if lhs <= tl else np.inf) for c, tl in zip(central, tail)]
    C = float(max(need))
    rhs = [C * c + tl for c, tl in zip(central, tail)]
    trusted = all(r <= man.trusted_radius(3.0 * t) + 1e-12 for r in R) and heat_trusted(man, [3.0 * t])
    return {"lhs": lhs, "central": central, "tail": tail, "rhs": rhs, "R": R, "C_WP": C, "C2_half": C2_half,
            "L": L, "argmin_rhs": int(np.argmin(rhs)), "trusted": bool(trusted)}


def check_weighted_poincare(man, run, f, t: float, j_list=(1, 2, 4, 8), L: float | None = None, refine=None,
                            drift: float = DRIFT, control: bool = False) -> CheckReport:
    """Heat-weighted Poincaré inequality with fitted C_WP and the Ψ_WP tail.

    ``refine`` is an optional (manifold, run, field) triple at half spacing.
    """
    run = ensure_run(man, [t, 3.0 * t], run)
    res = weighted_poincare_terms(man, run, f, t, j_list, L)
    consts = {"C_WP": res["C_WP"], "C2_half": res["C2_half"]}
    ok = np.isfinite(res["C_WP"])
    trusted = res["trusted"]
    if refine is not None:
        m2, r2, f2 = refine
        r2 = ensure_run(m2, [t, 3.0 * t], r2)
        rf = weighted_poincare_terms(m2, r2, f2, t, j_list, L)
        d = _drift(res["C_WP"], rf["C_WP"])
        consts.update({"C_WP_fine": rf["C_WP"], "drift": d})
        ok = ok and np.isfinite(rf["C_WP"]) and d <= drift
        trusted = trusted and rf["trusted"]
    j = floats(j_list)
    return CheckReport(
        id="weighted_poincare", spec_hash=man.spec_hash, scales=j, measured=floats(res["rhs"]), target=res["lhs"],
        tolerance=drift, verdict=decide(bool(ok), trusted, control), constants=consts,
        series={"central": {"scales": j, "measured": floats(res["central"])},
                "tail": {"scales": j, "measured": floats(res["tail"])},
                "rhs": {"scales": j, "measured": floats(res["rhs"])}},
        details={"t": float(t), "lhs": res["lhs"], "argmin_rhs_j": float(j_list[res["argmin_rhs"]]),
                 "L": res["L"]},
        control=control,
    )


# ---------------------------------------------------------------------------
# Heat monotonicity for subharmonic functions


class NotSubharmonic(ValueError):
    """Input refused: the field is not discretely subharmonic."""


def check_subharmonic_heat_monotone(man, f, t_list, run=None, control: bool = False, slack: float = 1e-8,
                                    sub_tol: float = 0.5, reach: float | None = None,
                                    oracle=None, oracle_tol: float = 0.01) -> CheckReport:
    """Hf(x0, t) = ∫ f dμ_{x0}(t) is non-decreasing, >= f(x0), and tends to sup f.

    The input must satisfy min Δ_h f >= -sub_tol h sup|f| on the interior
    unless it is a declared negative control.  Optional ``reach`` requires
    Hf at the last time to exceed reach * sup f; optional ``oracle`` values
    must match Hf to ``oracle_tol`` relative.
    """
    f = np.asarray(f, dtype=float)
    fmax = float(np.max(np.abs(f)))
    lap = laplacian_apply(man, f)[man.interior_mask(1)]
    lap_min = float(lap.min()) if lap.size else 0.0
    if not control and lap_min < -sub_tol * man.h * fmax:
        raise NotSubharmonic(f"min Δ_h f = {lap_min:.3e} below -{sub_tol} h sup|f|")
    run = ensure_run(man, t_list, run)
    f0 = float(f[man.x0])
    Hf = [f0 + float((man.w * run.at(t).H) @ (f - f0)) for t in t_list]
    sup = trusted_sup(man, f, np.ones(man.V, dtype=bool))
    mono = monotone(Hf, "up", 0.0, floor=slack * fmax)
    above = all(v >= f0 - slack * fmax for v in Hf)
    ok = mono and above
    lim, meth = extrapolate(Hf)
    fit = {"direction": "up", "monotone_up": mono, "above_initial": above, "limit": lim, "method": meth,
           "laplacian_min": lap_min}
    if reach is not None:
        fit["reached"] = Hf[-1] >= reach * sup
        ok = ok and fit["reached"]
    if oracle is not None:
        oracle = floats(oracle)
        err = [abs(a - b) / abs(b) if b != 0 else abs(a) for a, b in zip(Hf, oracle)]
        fit["oracle_max_rel_err"] = float(max(err))
        ok = ok and fit["oracle_max_rel_err"] < oracle_tol
    trusted = heat_trusted(man, t_list)
    series = {"heat": {"scales": floats(t_list), "measured": floats(Hf)}}
    if oracle is not None:
        series["oracle"] = {"scales": floats(t_list), "measured": oracle}
    return CheckReport(id="subharmonic_heat_monotone", spec_hash=man.spec_hash, scales=floats(t_list),
                       measured=floats(Hf), target=sup, tolerance=slack, verdict=decide(ok, trusted, control),
                       fit=fit, series=series, details={"f_x0": f0}, control=control)
