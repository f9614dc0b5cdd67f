"""Heat measure evolution and the heat-kernel estimates built on it.

The density H_{x0}(., t) is evolved by backward Euler steps of
``dH/dt = -L H`` with zero flux at the truncation boundary.  Steps follow a
global time lattice t_k = t_first (1 + q)^k, refined so that every requested
output time is a lattice point.  Because the lattice depends only on absolute
time, restarting from a stored state reproduces the uninterrupted run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .manifold import DiscreteManifold, ball
from .solvers import SeparableSolver


class HeatError(RuntimeError):
    """Mass drift or a positivity violation that step refinement could not fix."""


MASS_TOL = 1e-9


@dataclass(frozen=True)
class HeatState:
    t: float
    H: np.ndarray
    mass: float


@dataclass
class HeatRun:
    """Heat states of one evolution on one manifold."""

    man: DiscreteManifold
    states: list
    base: int
    steps: int = 0
    retries: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def at(self, t: float) -> HeatState:
        for s in self.states:
            if abs(s.t - t) <= 1e-12 * max(1.0, t):
                return s
        raise KeyError(f"no heat state at t = {t}")

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)


def _lattice(t_start: float, t_grid, t_first: float, q: float) -> np.ndarray:
    t_grid = np.asarray(sorted(set(float(t) for t in t_grid)))
    t_end = t_grid[-1]
    n = int(np.ceil(np.log(t_end / t_first) / np.log1p(q))) + 1
    G = t_first * (1.0 + q) ** np.arange(n + 1)
    G = G[(G > t_start * (1 + 1e-12)) & (G < t_end)]
    # drop geometric points that nearly coincide with requested outputs
    keep = np.ones(G.size, dtype=bool)
    for t in t_grid:
        keep &= np.abs(G - t) > 1e-9 * t
    return np.union1d(G[keep], t_grid)


def default_t_first(man: DiscreteManifold) -> float:
    return 1e-3 * man.h_min**2


def heat_evolve(man: DiscreteManifold, t_grid, initial: np.ndarray | None = None, t_start: float = 0.0,
                base: int | None = None, q: float = 0.02, t_first: float | None = None,
                solver: SeparableSolver | None = None, observe=None) -> HeatRun:
    """Evolve the heat density and return the states at the times in ``t_grid``.

    Without ``initial`` the evolution starts from unit mass at ``base``
    (default x0): H = 1 / w_base there.  With ``initial`` it starts from that
    density at ``t_start``.  ``observe(t, dt, H)`` is called after every
    lattice step, which lets callers accumulate time integrals with the same
    right-endpoint rule the backward Euler scheme satisfies.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(t_grid <= t_start) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing and later than t_start")
    base = man.x0 if base is None else int(base)
    t_first = default_t_first(man) if t_first is None else float(t_first)
    solver = solver or SeparableSolver(man)
    if initial is None:
        H = np.zeros(man.V)
        H[base] = 1.0 / man.w[base]
    else:
        H = np.array(initial, dtype=float)
    lattice = _lattice(t_start, t_grid, t_first, q)
    wanted = set(np.round(t_grid, 15))
    states: list = []
    t = t_start
    retries = 0
    for t_next in lattice:
        H, r = _step(man, solver, H, t_next - t)
        retries += r
        dt = t_next - t
        t = t_next
        if observe is not None:
            observe(t, dt, H)
        mass = float(man.w @ H)
        if abs(mass - 1.0) > MASS_TOL:
            raise HeatError(f"mass drift {mass - 1.0:.3e} at t = {t:.6g}")
        if np.round(t, 15) in wanted or np.any(np.abs(t_grid - t) <= 1e-12 * t):
            states.append(HeatState(t=float(t), H=H.copy(), mass=mass))
    return HeatRun(man=man, states=states, base=base, steps=len(lattice), retries=retries)


def _step(man, solver, H, dt, depth: int = 0):
    """One backward Euler step; on a positivity violation split it in two."""
    Hn = solver.solve(man.w * H, 1.0, dt)
    floor = -1e-12 * np.abs(Hn).max()
    if Hn.min() < floor:
        if depth >= 5:
            raise HeatError(f"positivity violation {Hn.min():.3e} persists after 5 step refinements")
        Hh, r1 = _step(man, solver, H, 0.5 * dt, depth + 1)
        Hn, r2 = _step(man, solver, Hh, 0.5 * dt, depth + 1)
        return Hn, 1 + r1 + r2
    return np.maximum(Hn, 0.0), 0


def heat_average(states, f) -> np.ndarray:
    """Integral of f against each heat measure: sum_i w_i H_i f_i."""
    if isinstance(states, HeatRun):
        man = states.man
        states = states.states
    else:
        raise TypeError("heat_average expects a HeatRun")
    f = np.asarray(f, dtype=float)
    # the heat measure has unit mass; shifting by f(x0) makes constants exact
    c0 = f[man.x0]
    return np.array([float(c0 + (man.w * s.H) @ (f - c0)) for s in states])


def gaussian_density(r, t, m):
    """Euclidean heat kernel (4 pi t)^{-m/2} exp(-r^2 / 4t)."""
    return (4.0 * np.pi * t) ** (-0.5 * m) * np.exp(-np.asarray(r) ** 2 / (4.0 * t))


# ---------------------------------------------------------------------------
# Kernel bounds


@dataclass
class KernelBoundFit:
    eps: float
    C1: float
    C2: float
    n_samples: int
    times: list
    r_cut: float
    argmax_C2: tuple = ()
    argmax_C1: tuple = ()
    verdict: str = "PASS"
    notes: list = field(default_factory=list)


def _ball_volumes(man, radii):
    order = np.argsort(man.r)
    rs = man.r[order]
    cum = np.cumsum(man.w[order])
    idx = np.searchsorted(rs, np.asarray(radii) * (1 + 1e-12), side="right") - 1
    return cum[np.maximum(idx, 0)]


def kernel_bound_fit(run: HeatRun, eps: float, window: tuple | None = None, floor: float = 1e-10) -> KernelBoundFit:
    """Fit the two-sided Gaussian bound constants C1(eps), C2(eps).

    C2 = max H |B(sqrt t)| exp(r^2 / ((4+eps) t)) and
    C1 = max exp(-r^2 / ((4-eps) t)) / (H |B(sqrt t)|) over samples with
    r <= R_max / 2 and sqrt t in ``window`` (default [10 h, R_max / 4]).
    Samples where H is below ``floor`` times its on-diagonal value are
    dropped from the lower-bound fit: they sit at the roundoff level.
    """
    if not 0.0 < eps <= 2.0:
        raise ValueError("eps must lie in (0, 2]")
    man = run.man
    lo, hi = window if window is not None else (10.0 * man.h, man.R_max / 4.0)
    r_cut = man.R_max / 2.0
    sel = man.r <= r_cut + 1e-12
    r = man.r[sel]
    C1 = C2 = 0.0
    arg1 = arg2 = ()
    n = 0
    times = []
    for st in run.states:
        rt = np.sqrt(st.t)
        if rt < lo * (1 - 1e-12) or rt > hi * (1 + 1e-12):
            continue
        times.append(st.t)
        vol = _ball_volumes(man, [rt])[0]
        H = st.H[sel]
        up = H * vol * np.exp(r**2 / ((4.0 + eps) * st.t))
        k = int(np.argmax(up))
        if up[k] > C2:
            C2, arg2 = float(up[k]), (float(r[k]), float(st.t))
        ok = H > floor * st.H[run.base]
        low = np.exp(-r[ok] ** 2 / ((4.0 - eps) * st.t)) / (H[ok] * vol)
        k = int(np.argmax(low))
        if low[k] > C1:
            C1, arg1 = float(low[k]), (float(r[ok][k]), float(st.t))
        n += int(sel.sum())
    if n == 0:
        raise ValueError("empty sample window for the kernel bound fit")
    fit = KernelBoundFit(eps=eps, C1=C1, C2=C2, n_samples=n, times=times, r_cut=r_cut,
                         argmax_C2=arg2, argmax_C1=arg1)
    fit.verdict = "PASS" if np.isfinite(C1) and np.isfinite(C2) else "FAIL"
    return fit


def kernel_refinement_verdict(coarse: KernelBoundFit, fine: KernelBoundFit, drift: float = 1.5) -> dict:
    """Both constants finite and within a factor ``drift`` across h -> h/2."""
    out = {}
    for name in ("C1", "C2"):
        a, b = getattr(coarse, name), getattr(fine, name)
        ratio = max(a, b) / min(a, b) if min(a, b) > 0 else np.inf
        out[name] = ratio
    ok = all(np.isfinite(v) and v < drift for v in out.values())
    return {"ratios": out, "verdict": "PASS" if ok else "FAIL"}


# ---------------------------------------------------------------------------
# Harnack


@dataclass
class HarnackReport:
    t1: float
    t2: float
    factor: float
    worst_ratio: float
    worst_violation: float
    pair_worst_ratio: float
    pair_violation: float
    verdict: str


def harnack_check(run: HeatRun, t1: float, t2: float, slack: float = 1e-9, n_pairs: int = 2000,
                  seed: int = 0) -> HarnackReport:
    """Check H(x,t1) <= (t2/t1)^{3m/4} H(x,t2) and the two-point Harnack form.

    The two-point form H(x,t1) <= (t2/t1)^{3m/4} exp(3 d(x,y)^2 / (8 (t2-t1))) H(y,t2)
    is spot-checked on random vertex pairs inside B(x0, R_max/2).  A
    violation counts when it exceeds ``slack`` times max H(., t1).
    """
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    man = run.man
    s1, s2 = run.at(t1), run.at(t2)
    factor = (t2 / t1) ** (0.75 * man.m)
    sel = np.flatnonzero(man.r <= man.R_max / 2.0)
    H1, H2 = s1.H[sel], s2.H[sel]
    scale = float(s1.H.max())
    viol = float(np.max(H1 - factor * H2)) / scale
    big = H2 > 1e-8 * s2.H.max()
    worst_ratio = float(np.max(H1[big] / H2[big])) if np.any(big) else 0.0

    from .geodesic import distance_field_on

    rng = np.random.default_rng(seed)
    n_src = min(8, sel.size)
    src = rng.choice(sel, size=n_src, replace=False)
    pv = -np.inf
    pr = 0.0
    per = max(1, n_pairs // n_src)
    for x in np.sort(src):
        d = distance_field_on(man, int(x))
        ys = rng.choice(sel, size=min(per, sel.size), replace=False)
        bound = factor * np.exp(3.0 * d[ys] ** 2 / (8.0 * (t2 - t1))) * s2.H[ys]
        lhs = s1.H[x]
        pv = max(pv, float(np.max(lhs - bound)) / scale)
        okb = bound > 0
        if np.any(okb):
            pr = max(pr, float(np.max(lhs / bound[okb])))
    ok = viol <= slack and pv <= slack
    return HarnackReport(t1=t1, t2=t2, factor=factor, worst_ratio=worst_ratio, worst_violation=viol,
                         pair_worst_ratio=pr, pair_violation=pv, verdict="PASS" if ok else "FAIL")


# ---------------------------------------------------------------------------
# Tail mass


def psi2(x: float, m: int, C2: float) -> float:
    """Tail prediction C2 m int_{1/x}^inf exp(-2 s^2 / 9) s^{m-1} ds at x = sqrt(t)/R."""
    lower = 1.0 / x
    val, _ = integrate.quad(lambda s: np.exp(-2.0 * s * s / 9.0) * s ** (m - 1), lower, np.inf,
                            epsabs=1e-300, epsrel=1e-12, limit=200)
    return float(C2 * m * val)


@dataclass
class TailReport:
    t: float
    R: np.ndarray
    ratio: np.ndarray           # R / sqrt t
    measured: np.ndarray
    predicted: np.ndarray
    C2_half: float
    decreasing: bool
    verdict: str


def tail_mass(run: HeatRun, t: float, R: float) -> float:
    man = run.man
    st = run.at(t)
    out = man.r > R + 1e-12 * max(1.0, R)
    return float(man.w[out] @ st.H[out])


def tail_mass_bound(run: HeatRun, t: float, R_list, C2_half: float | None = None) -> TailReport:
    """Compare the measured heat mass outside B(x0, R) with the Psi_2 prediction."""
    man = run.man
    R = np.asarray(R_list, dtype=float)
    if np.any(R < np.sqrt(t) * (1 - 1e-12)):
        raise ValueError("tail radii must satisfy R >= sqrt(t)")
    if C2_half is None:
        C2_half = kernel_bound_fit(run, 0.5).C2
    measured = np.array([tail_mass(run, t, r) for r in R])
    predicted = np.array([psi2(np.sqrt(t) / r, man.m, C2_half) for r in R])
    dec = bool(np.all(np.diff(measured) < 0) or np.all(measured[1:] == 0))
    ok = bool(np.all(measured <= predicted)) and dec
    return TailReport(t=t, R=R, ratio=R / np.sqrt(t), measured=measured, predicted=predicted,
                      C2_half=C2_half, decreasing=dec, verdict="PASS" if ok else "FAIL")
