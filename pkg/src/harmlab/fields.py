"""Discrete differential operators, averages and closed-form field generators.

Derivatives are taken on the structured grid view of a manifold: centred
differences in the interior, second-order one-sided differences at the
truncation boundary (so affine fields are differentiated exactly), periodic
differences in theta.  Inner products use the analytic inverse metric at the
vertex.  At a smooth pole the gradient and Hessian come from the Fourier
modes of the first two rings, read in normal coordinates (x, y) =
(s cos θ, s sin θ).  A cone apex is singular and is masked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .manifold import DiscreteManifold, TruncationError, ball


# ---------------------------------------------------------------------------
# 1-D stencils on an axis of a grid array


def _d1(G: np.ndarray, axis: int, h: float, periodic: bool = False) -> np.ndarray:
    if periodic:
        return (np.roll(G, -1, axis) - np.roll(G, 1, axis)) / (2.0 * h)
    G = np.moveaxis(G, axis, 0)
    out = np.empty_like(G)
    out[1:-1] = (G[2:] - G[:-2]) / (2.0 * h)
    out[0] = (-3.0 * G[0] + 4.0 * G[1] - G[2]) / (2.0 * h)
    out[-1] = (3.0 * G[-1] - 4.0 * G[-2] + G[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _d2(G: np.ndarray, axis: int, h: float, periodic: bool = False) -> np.ndarray:
    if periodic:
        return (np.roll(G, -1, axis) - 2.0 * G + np.roll(G, 1, axis)) / (h * h)
    G = np.moveaxis(G, axis, 0)
    out = np.empty_like(G)
    out[1:-1] = (G[2:] - 2.0 * G[1:-1] + G[:-2]) / (h * h)
    out[0] = (2.0 * G[0] - 5.0 * G[1] + 4.0 * G[2] - G[3]) / (h * h)
    out[-1] = (2.0 * G[-1] - 5.0 * G[-2] + 4.0 * G[-3] - G[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def _axes(man: DiscreteManifold):
    """(name, grid axis, spacing, periodic) for every coordinate axis."""
    out = []
    k = 0
    if man.base.kind == "radial":
        out.append(("s", 0, man.base.hs, False))
        k = 1
    elif man.base.kind == "warped":
        out.append(("s", 0, man.base.hs, False))
        out.append(("theta", 1, man.base.dtheta, True))
        k = 2
    for j, name in enumerate(man.flat_names):
        out.append((name, k + j, man.flat[j].h, False))
    return out


def _profile_rows(man: DiscreteManifold, func) -> np.ndarray:
    """A profile function evaluated on the s rows, shaped to broadcast on the grid."""
    vals = func(man.base.s)
    return vals.reshape((-1,) + (1,) * (len(man.grid_shape) - 1))


def _radial_ghost(G: np.ndarray) -> np.ndarray:
    """Prepend the even reflection u(-h) = u(h) for radial fields."""
    return np.concatenate([G[1:2], G], axis=0)


def _ring_modes(G: np.ndarray, man: DiscreteManifold):
    """Fourier data of rings 1 and 2 around a pole, batched over flat axes."""
    th = man.base.theta
    nt = th.size
    h = man.base.hs
    u0 = G[0, 0]
    out = {}
    for ring, s in ((1, h), (2, 2.0 * h)):
        R = G[ring]
        out[ring] = {
            "mean": R.mean(axis=0),
            "c1": 2.0 / nt * np.tensordot(np.cos(th), R, axes=(0, 0)),
            "s1": 2.0 / nt * np.tensordot(np.sin(th), R, axes=(0, 0)),
            "c2": 2.0 / nt * np.tensordot(np.cos(2 * th), R, axes=(0, 0)),
            "s2": 2.0 / nt * np.tensordot(np.sin(2 * th), R, axes=(0, 0)),
            "s": s,
        }
    r1, r2 = out[1], out[2]

    def rich(key, power):
        a1 = r1[key] / r1["s"] ** power
        a2 = r2[key] / r2["s"] ** power
        return (4.0 * a1 - a2) / 3.0 if power == 2 else (4.0 * a1 - a2) / 3.0

    gx = rich("c1", 1)
    gy = rich("s1", 1)
    trace4 = (4.0 * (r1["mean"] - u0) / h**2 - (r2["mean"] - u0) / (4.0 * h**2)) / 3.0
    diff4 = rich("c2", 2)
    B = 2.0 * rich("s2", 2)
    A = 2.0 * trace4 + 2.0 * diff4
    C = 2.0 * trace4 - 2.0 * diff4
    return gx, gy, A, B, C


# ---------------------------------------------------------------------------
# Gradients


@dataclass
class GradientField:
    """Coordinate partial derivatives of a scalar field with the inverse metric.

    ``comps[i]`` is the partial derivative along coordinate ``names[i]`` and
    ``ginv[i]`` the matching diagonal entry of the inverse metric.  At a
    smooth pole the ``s`` and ``theta`` slots hold the Cartesian components
    in normal coordinates, with unit inverse metric.  ``mask`` marks
    vertices where the gradient is defined.
    """

    names: list
    comps: list
    ginv: list
    mask: np.ndarray

    def norm_sq(self) -> np.ndarray:
        return sum(g * c * c for g, c in zip(self.ginv, self.comps))

    def dot(self, other: "GradientField") -> np.ndarray:
        return sum(g * a * b for g, a, b in zip(self.ginv, self.comps, other.comps))

    def norm(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.norm_sq(), 0.0))


def _tip_regular(man: DiscreteManifold) -> bool:
    return man.base.kind != "warped" or not man.base.tip or man.base.profile.smooth_tip


def _singular_mask(man: DiscreteManifold) -> np.ndarray:
    ok = np.ones(man.V, dtype=bool)
    if not _tip_regular(man):
        ok[man.tip_vertices] = False
    return ok


def inverse_metric(man: DiscreteManifold) -> list:
    ginv = []
    for name, *_ in _axes(man):
        if name == "theta":
            f = _profile_rows(man, man.base.profile.f)
            with np.errstate(divide="ignore"):
                g = np.where(f > 0, 1.0 / np.where(f > 0, f, 1.0) ** 2, 1.0)
            g = man.from_grid(np.broadcast_to(g, man.grid_shape))
            ginv.append(g.copy())
        else:
            ginv.append(np.ones(man.V))
    return ginv


def gradient(man: DiscreteManifold, f: np.ndarray) -> GradientField:
    """Discrete gradient of a vertex field."""
    G = man.to_grid(np.asarray(f, dtype=float))
    axes = _axes(man)
    comps = []
    for name, ax, h, per in axes:
        if man.base.kind == "radial" and name == "s":
            D = _d1(_radial_ghost(G), 0, h)[1:]
            D[0] = 0.0
        else:
            D = _d1(G, ax, h, per)
        comps.append(D)
    if man.base.kind == "warped" and man.base.tip:
        if _tip_regular(man):
            gx, gy, *_ = _ring_modes(G, man)
            comps[0][0] = gx
            comps[1][0] = gy
        else:
            comps[0][0] = 0.0
            comps[1][0] = 0.0
    comps = [man.from_grid(np.ascontiguousarray(c)) for c in comps]
    ginv = inverse_metric(man)
    for g in ginv:
        g[man.tip_vertices] = 1.0
    return GradientField(names=[a[0] for a in axes], comps=comps, ginv=ginv, mask=_singular_mask(man))


# ---------------------------------------------------------------------------
# Hessians


@dataclass
class HessianField:
    norm_sq: np.ndarray
    mask: np.ndarray


def hessian(man: DiscreteManifold, f: np.ndarray) -> HessianField:
    """|∇∇f|^2 per vertex with the analytic Christoffel symbols of the metric."""
    G = man.to_grid(np.asarray(f, dtype=float))
    axes = _axes(man)
    kind = man.base.kind
    flat_axes = [(n, ax, h) for n, ax, h, per in axes if n not in ("s", "theta")]
    total = np.zeros(man.grid_shape)
    # flat-flat block
    for i, (_, ai, hi) in enumerate(flat_axes):
        for j, (_, aj, hj) in enumerate(flat_axes):
            if i == j:
                d = _d2(G, ai, hi)
            elif i < j:
                d = _d1(_d1(G, ai, hi), aj, hj)
            else:
                continue
            total += (1.0 if i == j else 2.0) * d * d
    if kind == "radial":
        m = man.m
        Gg = _radial_ghost(G)
        us = _d1(Gg, 0, man.base.hs)[1:]
        uss = _d2(Gg, 0, man.base.hs)[1:]
        prof = man.base.profile
        s = man.base.s.copy()
        s[0] = 1.0
        ratio = prof.df(s) / prof.f(s)
        ratio[0] = 0.0
        total = uss**2 + (m - 1) * (us * ratio) ** 2
        total[0] = m * uss[0] ** 2
    elif kind == "warped":
        prof = man.base.profile
        hs, dth = man.base.hs, man.base.dtheta
        f_r = _profile_rows(man, prof.f)
        df_r = _profile_rows(man, prof.df)
        with np.errstate(divide="ignore", invalid="ignore"):
            ginv = np.where(f_r > 0, 1.0 / np.where(f_r > 0, f_r, 1.0) ** 2, 0.0)
            gam = np.where(f_r > 0, df_r / np.where(f_r > 0, f_r, 1.0), 0.0)
        us = _d1(G, 0, hs)
        ut = _d1(G, 1, dth, True)
        Hss = _d2(G, 0, hs)
        Hst = _d1(us, 1, dth, True) - gam * ut
        Htt = _d2(G, 1, dth, True) + f_r * df_r * us
        total = total + Hss**2 + 2.0 * ginv * Hst**2 + ginv**2 * Htt**2
        for _, af, hf in flat_axes:
            Hsf = _d1(us, af, hf)
            Htf = _d1(ut, af, hf)
            total = total + 2.0 * Hsf**2 + 2.0 * ginv * Htf**2
        if man.base.tip:
            if _tip_regular(man):
                gx, gy, A, B, C = _ring_modes(G, man)
                tip = A**2 + 2.0 * B**2 + C**2
                for _, af, hf in flat_axes:
                    tip = tip + 2.0 * _d1(gx, af - 2, hf) ** 2 + 2.0 * _d1(gy, af - 2, hf) ** 2
                ff = np.zeros(G.shape[2:])
                for i, (_, ai, hi) in enumerate(flat_axes):
                    for j, (_, aj, hj) in enumerate(flat_axes):
                        if i == j:
                            d = _d2(G[0, 0], ai - 2, hi)
                        elif i < j:
                            d = _d1(_d1(G[0, 0], ai - 2, hi), aj - 2, hj)
                        else:
                            continue
                        ff += (1.0 if i == j else 2.0) * d * d
                total[0] = tip + ff
            else:
                total[0] = 0.0
    mask = man.interior_mask(1) & _singular_mask(man)
    return HessianField(norm_sq=man.from_grid(np.ascontiguousarray(total)), mask=mask)


def hessian_norm_sq(man: DiscreteManifold, f: np.ndarray) -> np.ndarray:
    """|∇∇f|^2 per vertex (see :func:`hessian` for the mask)."""
    return hessian(man, f).norm_sq


# ---------------------------------------------------------------------------
# Laplacian, averages, integrals


def laplacian_apply(man: DiscreteManifold, f: np.ndarray) -> np.ndarray:
    """-L f, approximating Δf.  Boundary rows use the zero-flux closure; mask them."""
    return man.laplacian(np.asarray(f, dtype=float))


def integral(man: DiscreteManifold, f: np.ndarray, idx=None) -> float:
    f = np.asarray(f, dtype=float)
    if idx is None:
        return float(man.w @ f)
    return float(man.w[idx] @ f[idx])


def ball_average(man: DiscreteManifold, f: np.ndarray, rho: float, strict: bool = True,
                 t_max: float = 0.0) -> float:
    """Volume average of f over B(x0, rho); refuses untrusted radii when ``strict``."""
    b = ball(man, rho, t_max=t_max)
    if strict and not b.trusted:
        raise TruncationError(f"rho = {rho} lies beyond the trusted radius {man.trusted_radius(t_max):.4g}")
    f = np.asarray(f, dtype=float)[b.indices]
    # shift by a sampled value so a constant field averages to itself exactly
    c0 = f[0]
    return float(c0 + (man.w[b.indices] @ (f - c0)) / b.volume)


# ---------------------------------------------------------------------------
# Closed-form generators

GENERATORS = (
    "linear", "coordinate", "product_coordinates", "cone_harmonic", "bounded_subharmonic",
    "gaussian_heat", "height", "embedding_x", "saddle_harmonic", "radial_distance",
    "exp_bump", "tanh", "constant",
)


class GeneratorError(ValueError):
    """Generator incompatible with the backend."""


def analytic_field(man: DiscreteManifold, generator_id: str, params: dict | None = None):
    """Closed-form scalar fields and vector maps.

    Vector-valued generators (``linear``, ``product_coordinates``,
    ``cone_harmonic`` with ``vector=True``) return a
    :class:`harmlab.harmonic.VectorMap`; the others return a vertex array.
    """
    from .harmonic import VectorMap

    p = dict(params or {})
    kind = man.spec.kind
    c = man.coords
    prof = man.base.profile

    if generator_id == "constant":
        return np.full(man.V, float(p.get("value", 1.0)))
    if generator_id == "linear":
        if kind != "FlatGrid":
            raise GeneratorError("linear maps u = A x need a FlatGrid")
        A = np.atleast_2d(np.asarray(p.get("A", np.eye(man.m)), dtype=float))
        if A.shape[1] != man.m:
            raise GeneratorError(f"A must have {man.m} columns")
        X = man.embedding()
        X0 = X[:, man.x0][:, None]
        return VectorMap.analytic(man, A @ (X - X0), "linear")
    if generator_id == "coordinate":
        name = p.get("name", man.flat_names[0] if man.flat else "s")
        return c[name] - c[name][man.x0]
    if generator_id == "product_coordinates":
        names = list(man.flat_names)
        if p.get("include_s"):
            if not (man.base.kind == "warped" and not man.base.tip and np.all(prof.d2f(man.base.s) == 0)
                    and np.all(prof.df(man.base.s) == 0)):
                raise GeneratorError("s is a flat coordinate only on the cylinder factor")
            names = ["s"] + names
        if not names:
            raise GeneratorError("backend has no flat factor")
        U = np.stack([c[n] - c[n][man.x0] for n in names])
        return VectorMap.analytic(man, U, "product_coordinates")
    if generator_id == "cone_harmonic":
        if kind != "Cone2D" and not (kind == "Product" and man.spec.factor.kind == "Cone2D"):
            raise GeneratorError("cone harmonic needs a Cone2D backend")
        k = int(p.get("k", 1))
        a = prof.a
        u = c["s"] ** (k / a) * np.cos(k * c["theta"])
        if p.get("vector", False):
            v = c["s"] ** (k / a) * np.sin(k * c["theta"])
            return VectorMap.analytic(man, np.stack([u, v]), "cone_harmonic")
        return u
    if generator_id == "bounded_subharmonic":
        r = man.r
        with np.errstate(divide="ignore"):
            return np.where(r > 1.0, 1.0 - 1.0 / np.where(r > 0, r, 1.0), 0.0)
    if generator_id == "gaussian_heat":
        if kind != "FlatGrid":
            raise GeneratorError("Gaussian heat density is the flat closed form")
        t = float(p.get("t", 1.0))
        return (4.0 * np.pi * t) ** (-0.5 * man.m) * np.exp(-man.r**2 / (4.0 * t))
    if generator_id == "height":
        if man.base.kind not in ("warped", "radial") or not man.base.tip:
            raise GeneratorError("height coordinate needs a surface of revolution with a pole")
        s = c["s"]
        return _height(prof, s)
    if generator_id == "embedding_x":
        if man.base.kind != "warped":
            raise GeneratorError("embedding coordinate needs a warped surface")
        return prof.f(c["s"]) * np.cos(c["theta"])
    if generator_id == "saddle_harmonic":
        if man.base.kind != "warped" or man.base.tip:
            raise GeneratorError("saddle harmonic needs a two-sided warped surface")
        return 2.0 * np.arctan(np.tanh(0.5 * c["s"]))
    if generator_id == "radial_distance":
        return man.r.copy()
    if generator_id == "exp_bump":
        return np.exp(-man.r**2 / float(p.get("width", 1.0)) ** 2)
    if generator_id == "tanh":
        name = p.get("name", man.flat_names[0] if man.flat else "s")
        return np.tanh(c[name] / float(p.get("scale", 1.0)))
    raise GeneratorError(f"unknown generator {generator_id!r}")


def _height(prof, s):
    """Height coordinate z(s) = int_0^s sqrt(1 - f'^2) of a surface of revolution in R^3."""
    from scipy.integrate import cumulative_trapezoid

    s = np.asarray(s, dtype=float)
    if prof.name == "capped_cylinder":
        half = 0.5 * np.pi
        return np.where(s < half, 1.0 - np.cos(np.minimum(s, half)), 1.0 + s - half)
    grid = np.linspace(0.0, max(float(s.max()), 1e-9), 4001)
    z = cumulative_trapezoid(np.sqrt(np.maximum(1.0 - prof.df(grid) ** 2, 0.0)), grid, initial=0.0)
    return np.interp(s, grid, z)


# ---------------------------------------------------------------------------
# Export


def export_csv(man: DiscreteManifold, path, fields: dict, mask: np.ndarray | None = None) -> None:
    """Write vertex id, coordinates and the given fields, 17 significant digits."""
    names = list(man.coords)
    cols = list(fields)
    idx = np.arange(man.V) if mask is None else np.flatnonzero(mask)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex"] + names + cols)
        for i in idx:
            row = [str(int(i))]
            row += [format(float(man.coords[n][i]), ".17g") for n in names]
            row += [format(float(fields[k][i]), ".17g") for k in cols]
            w.writerow(row)
