"""Helpers shared by the checks: masked averages, heat runs, trusted windows."""

from __future__ import annotations

import numpy as np

from ..fields import gradient
from ..harmonic import VectorMap
from ..heat import HeatRun, heat_evolve
from ..manifold import DiscreteManifold, ball


def masked_ball_average(man: DiscreteManifold, f: np.ndarray, mask: np.ndarray, rho: float) -> float:
    b = ball(man, rho)
    idx = b.indices[mask[b.indices]]
    w = man.w[idx]
    return float(w @ f[idx]) / float(w.sum())


def masked_heat_average(man: DiscreteManifold, H: np.ndarray, f: np.ndarray, mask: np.ndarray) -> float:
    wH = man.w * H
    return float(wH[mask] @ f[mask]) / float(wH[mask].sum())


def trusted_sup(man: DiscreteManifold, f: np.ndarray, mask: np.ndarray, t_max: float = 0.0) -> float:
    """max of f over the mask inside the trusted radius."""
    region = mask & (man.r <= man.trusted_radius(t_max) + 1e-12)
    return float(np.max(f[region]))


def ball_trusted(man: DiscreteManifold, rho_list) -> bool:
    return all(r <= man.trusted_radius() + 1e-12 for r in rho_list)


def heat_trusted(man: DiscreteManifold, t_list) -> bool:
    return all(np.sqrt(t) <= man.R_max / 4.0 + 1e-12 for t in t_list)


def has_times(run: HeatRun, times) -> bool:
    have = run.times
    return all(np.any(np.abs(have - t) <= 1e-12 * max(1.0, t)) for t in times)


def ensure_run(man: DiscreteManifold, times, run: HeatRun | None = None, q: float = 0.02) -> HeatRun:
    """Reuse ``run`` when it holds every requested time, otherwise evolve."""
    times = sorted(set(float(t) for t in times))
    if run is not None and run.man is man and has_times(run, times):
        return run
    return heat_evolve(man, times, q=q)


def components(u) -> tuple[np.ndarray, str]:
    """(n, V) component array and a kind tag for a VectorMap or a scalar field."""
    if isinstance(u, VectorMap):
        return u.U, "map"
    return np.atleast_2d(np.asarray(u, dtype=float)), "scalar"


def energy_fields(man: DiscreteManifold, U: np.ndarray):
    """|∇u_alpha|^2 per component and the common validity mask."""
    out = []
    mask = np.ones(man.V, dtype=bool)
    for c in U:
        g = gradient(man, c)
        out.append(g.norm_sq())
        mask &= g.mask
    return out, mask
