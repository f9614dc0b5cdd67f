"""Discrete model manifolds on symmetry-reduced tensor grids.

A manifold is a base (nothing, a 1-D radial profile, or a 2-D warped surface
in coordinates (s, theta)) times k flat axes.  The Laplacian is assembled by
finite volumes as ``L = W^{-1} K`` where ``W`` holds the vertex volumes and
``K`` is symmetric positive semi-definite with ``K 1 = 0``.  Both factor as
Kronecker products of per-axis pieces, which the separable solver exploits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma

from .profiles import Profile, make_profile

KINDS = ("FlatGrid", "RadialProfile", "WarpedGrid2D", "Cone2D", "Product")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class CurvatureError(ValueError):
    """The profile violates the curvature sign certificate."""


class TruncationError(ValueError):
    """A requested scale lies outside the trusted region."""


def sphere_area(m: int) -> float:
    """|S^{m-1}|, the area of the unit sphere in R^m."""
    return 2.0 * np.pi ** (m / 2.0) / gamma(m / 2.0)


def unit_ball_volume(m: int) -> float:
    return sphere_area(m) / m


@dataclass(frozen=True)
class ManifoldSpec:
    """Declarative description of a catalog manifold.

    Use the constructors :func:`FlatGrid`, :func:`RadialProfile`,
    :func:`WarpedGrid2D`, :func:`Cone2D` and :func:`Product` rather than
    filling the fields by hand.
    """

    kind: str
    m: int = 2
    halfwidth: float = 0.0
    h: float = 0.0
    profile: str = ""
    profile_params: tuple = ()
    s_max: float = 0.0
    n_s: int = 0
    n_theta: int = 0
    factor: "ManifoldSpec | None" = None
    k_flat: int = 0
    negative_control: bool = False
    kappa_tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile_params"] = [list(p) for p in self.profile_params]
        if self.factor is not None:
            d["factor"] = self.factor.to_dict()
        return d

    @property
    def spec_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def make_profile(self) -> Profile:
        return make_profile(self.profile, **dict(self.profile_params))


def FlatGrid(m: int, halfwidth: float, h: float, **kw) -> ManifoldSpec:
    return ManifoldSpec("FlatGrid", m=int(m), halfwidth=float(halfwidth), h=float(h), **kw)


def RadialProfile(m: int, profile: str, s_max: float, h: float, profile_params=(), **kw) -> ManifoldSpec:
    return ManifoldSpec("RadialProfile", m=int(m), profile=profile, profile_params=tuple(profile_params),
                        s_max=float(s_max), h=float(h), **kw)


def WarpedGrid2D(profile: str, s_max: float, n_s: int, n_theta: int, profile_params=(), **kw) -> ManifoldSpec:
    return ManifoldSpec("WarpedGrid2D", m=2, profile=profile, profile_params=tuple(profile_params),
                        s_max=float(s_max), n_s=int(n_s), n_theta=int(n_theta), **kw)


def Cone2D(a: float, s_max: float, n_s: int, n_theta: int, **kw) -> ManifoldSpec:
    return ManifoldSpec("Cone2D", m=2, profile="cone", profile_params=(("a", float(a)),),
                        s_max=float(s_max), n_s=int(n_s), n_theta=int(n_theta), **kw)


def Product(factor: ManifoldSpec, k_flat: int, halfwidth: float, h: float, **kw) -> ManifoldSpec:
    if factor.kind not in ("WarpedGrid2D", "Cone2D"):
        raise ValueError("Product factor must be a WarpedGrid2D or Cone2D spec")
    kw.setdefault("negative_control", factor.negative_control)
    return ManifoldSpec("Product", m=2 + int(k_flat), factor=factor, k_flat=int(k_flat),
                        halfwidth=float(halfwidth), h=float(h), **kw)


# ---------------------------------------------------------------------------
# 1-D building blocks


def _cell_integral(func, a, b):
    """Gauss-Legendre integral of ``func`` over each interval [a_i, b_i]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (func(pts) @ _GL_W)


@dataclass(frozen=True)
class FlatAxis:
    """Uniform axis on [-halfwidth, halfwidth] with Neumann half cells at both ends."""

    nodes: np.ndarray
    h: float

    @property
    def n(self) -> int:
        return self.nodes.size

    @cached_property
    def mass(self) -> np.ndarray:
        m = np.full(self.n, self.h)
        m[0] = m[-1] = 0.5 * self.h
        return m

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        e = np.full(self.n - 1, 1.0 / self.h)
        return _edge_laplacian(e)

    @cached_property
    def eig(self):
        """Generalized eigenpairs K v = lam M v with V^T M V = I."""
        from scipy.linalg import eigh

        lam, vec = eigh(self.stiffness.toarray(), np.diag(self.mass))
        lam[0] = 0.0
        return lam, vec


def _edge_laplacian(e: np.ndarray) -> sp.csr_matrix:
    """Path-graph Laplacian with edge coefficients e (length n-1)."""
    n = e.size + 1
    d = np.zeros(n)
    d[:-1] += e
    d[1:] += e
    return sp.diags([-e, d, -e], [-1, 0, 1], format="csr")


def make_flat_axis(halfwidth: float, h: float) -> FlatAxis:
    n = int(round(2.0 * halfwidth / h))
    if n < 2 or abs(n * h - 2.0 * halfwidth) > 1e-9 * max(1.0, halfwidth):
        raise ValueError(f"halfwidth {halfwidth} is not a multiple of h/2 = {h / 2}")
    return FlatAxis(nodes=np.linspace(-halfwidth, halfwidth, n + 1), h=float(h))


# ---------------------------------------------------------------------------
# Bases


@dataclass
class Base:
    """The non-flat part of a manifold.

    ``kind`` is ``none`` (single point), ``radial`` (1-D radial profile with
    measure f^{m-1}) or ``warped`` (2-D surface with metric ds^2 + f^2 dθ^2).
    Rows index the s nodes; for a warped base with a tip, row 0 is the tip.
    """

    kind: str
    dim: int
    profile: Profile | None = None
    s: np.ndarray = field(default_factory=lambda: np.zeros(1))
    hs: float = 0.0
    n_theta: int = 1
    tip: bool = False
    w_rows: np.ndarray = field(default_factory=lambda: np.ones(1))
    e_rows: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_rows: np.ndarray = field(default_factory=lambda: np.zeros(1))
    w_tip: float = 0.0
    e_tip: float = 0.0

    @property
    def n_rows(self) -> int:
        return self.s.size

    @property
    def size(self) -> int:
        if self.kind == "warped":
            return (1 if self.tip else 0) + (self.n_rows - (1 if self.tip else 0)) * self.n_theta
        return self.n_rows

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    def weights(self) -> np.ndarray:
        if self.kind != "warped":
            return self.w_rows.copy()
        rings = np.repeat(self.w_rows[1:] if self.tip else self.w_rows, self.n_theta)
        if self.tip:
            return np.concatenate([[self.w_tip], rings])
        return rings

    def stiffness(self) -> sp.csr_matrix:
        if self.kind == "none":
            return sp.csr_matrix((1, 1))
        if self.kind == "radial":
            return _edge_laplacian(self.e_rows)
        nt = self.n_theta
        first = 1 if self.tip else 0
        nr = self.n_rows - first
        ring = first + np.arange(nr * nt).reshape(nr, nt)
        # radial edges between consecutive rings, angular edges within rings
        p = [ring[:-1].ravel(), ring.ravel()]
        q = [ring[1:].ravel(), np.roll(ring, -1, axis=1).ravel()]
        c = [np.repeat(self.e_rows[first:], nt), np.repeat(self.c_rows[first:], nt)]
        if self.tip:
            p.append(np.zeros(nt, dtype=int))
            q.append(ring[0])
            c.append(np.full(nt, self.e_tip))
        p, q, c = np.concatenate(p), np.concatenate(q), np.concatenate(c)
        n = self.size
        off = sp.coo_matrix((np.concatenate([c, c]), (np.concatenate([p, q]), np.concatenate([q, p]))),
                            shape=(n, n)).tocsr()
        off.sum_duplicates()
        deg = np.asarray(off.sum(axis=1)).ravel()
        return (sp.diags(deg) - off).tocsr()


def _radial_base(profile: Profile, m: int, s_max: float, h: float) -> Base:
    n = int(round(s_max / h))
    s = np.arange(n + 1) * h
    a = np.maximum(s - 0.5 * h, 0.0)
    b = np.minimum(s + 0.5 * h, s_max)
    omega = sphere_area(m)
    if m == 2:
        w = omega * (profile.F(b) - profile.F(a))
    else:
        w = omega * _cell_integral(lambda x: np.abs(profile.f(x)) ** (m - 1), a, b)
    mid = 0.5 * (s[:-1] + s[1:])
    e = omega * np.abs(profile.f(mid)) ** (m - 1) / h
    return Base(kind="radial", dim=1, profile=profile, s=s, hs=h, w_rows=w, e_rows=e, tip=True)


def _warped_base(profile: Profile, s_max: float, n_s: int, n_theta: int) -> Base:
    h = s_max / n_s
    dth = 2.0 * np.pi / n_theta
    if profile.tip:
        s = np.arange(n_s + 1) * h
        lo, hi = 0.0, s_max
    else:
        s = np.arange(-n_s, n_s + 1) * h
        lo, hi = -s_max, s_max
    a = np.maximum(s - 0.5 * h, lo)
    b = np.minimum(s + 0.5 * h, hi)
    w_rows = dth * (profile.F(b) - profile.F(a))
    mid = 0.5 * (s[:-1] + s[1:])
    e_rows = profile.f(mid) * dth / h
    fs = profile.f(s)
    with np.errstate(divide="ignore"):
        c_rows = np.where(fs > 0, (b - a) / np.where(fs > 0, fs, 1.0) / dth, 0.0)
    base = Base(kind="warped", dim=2, profile=profile, s=s, hs=h, n_theta=n_theta, tip=profile.tip,
                w_rows=w_rows, e_rows=e_rows, c_rows=c_rows)
    if profile.tip:
        base.w_tip = float(2.0 * np.pi * profile.F(0.5 * h))
        base.e_tip = float(profile.f(0.5 * h) * dth / h)
        base.c_rows[0] = 0.0
    return base


# ---------------------------------------------------------------------------
# The discrete manifold


@dataclass
class DiscreteManifold:
    """Immutable-after-build discrete manifold.

    Vertex arrays are flat of length ``V`` in C order over
    ``(base_index, flat_1, ..., flat_k)``.  ``to_grid`` gives the structured
    view ``(rows, [theta,] flat_1, ..., flat_k)`` where a warped tip is
    repeated across theta in row 0.
    """

    spec: ManifoldSpec
    base: Base
    flat: list
    w: np.ndarray
    K: sp.csr_matrix
    x0: int
    r: np.ndarray
    boundary: np.ndarray
    R_max: float
    certificate: dict

    # -- sizes and views ---------------------------------------------------
    @property
    def V(self) -> int:
        return self.w.size

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def h(self) -> float:
        """Largest coordinate spacing (the refinement parameter)."""
        hs = [ax.h for ax in self.flat]
        if self.base.kind != "none":
            hs.append(self.base.hs)
        if self.base.kind == "warped":
            fmax = float(np.max(np.abs(self.base.profile.f(self.base.s))))
            hs.append(fmax * self.base.dtheta)
        return max(hs)

    @property
    def h_min(self) -> float:
        hs = [ax.h for ax in self.flat]
        if self.base.kind != "none":
            hs.append(self.base.hs)
        return min(hs)

    @property
    def flat_shape(self) -> tuple:
        return tuple(ax.n for ax in self.flat)

    @property
    def block_shape(self) -> tuple:
        return (self.base.size,) + self.flat_shape

    @property
    def grid_shape(self) -> tuple:
        if self.base.kind == "warped":
            return (self.base.n_rows, self.base.n_theta) + self.flat_shape
        if self.base.kind == "radial":
            return (self.base.n_rows,) + self.flat_shape
        return self.flat_shape

    @property
    def spec_hash(self) -> str:
        return self.spec.spec_hash

    @property
    def negative_control(self) -> bool:
        return self.spec.negative_control

    def to_grid(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        lead = f.shape[:-1]
        blk = f.reshape(lead + self.block_shape)
        if self.base.kind == "none":
            return blk.reshape(lead + self.flat_shape)
        if self.base.kind == "radial":
            return blk
        nt = self.base.n_theta
        nb = len(lead)
        if self.base.tip:
            tip = blk[(Ellipsis, slice(0, 1)) + (slice(None),) * len(self.flat)]
            rings = blk[(Ellipsis, slice(1, None)) + (slice(None),) * len(self.flat)]
            rings = rings.reshape(lead + (self.base.n_rows - 1, nt) + self.flat_shape)
            tip = np.broadcast_to(np.expand_dims(tip, nb + 1), lead + (1, nt) + self.flat_shape)
            return np.concatenate([tip, rings], axis=nb)
        return blk.reshape(lead + (self.base.n_rows, nt) + self.flat_shape)

    def from_grid(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g)
        nd = len(self.grid_shape)
        lead = g.shape[: g.ndim - nd]
        if self.base.kind != "warped":
            return g.reshape(lead + (self.V,))
        nb = len(lead)
        if self.base.tip:
            tip = np.take(np.take(g, [0], axis=nb), 0, axis=nb + 1)
            rings = np.take(g, np.arange(1, self.base.n_rows), axis=nb)
            rings = rings.reshape(lead + (-1,) + self.flat_shape)
            return np.concatenate([tip, rings], axis=nb).reshape(lead + (self.V,))
        return g.reshape(lead + (self.V,))

    # -- coordinates -------------------------------------------------------
    @cached_property
    def coords(self) -> dict:
        """Coordinate arrays per vertex: ``s``, ``theta`` and flat axes."""
        out = {}
        blk = self.block_shape
        if self.base.kind == "radial":
            out["s"] = np.broadcast_to(self.base.s.reshape((-1,) + (1,) * len(self.flat)), blk).ravel().copy()
        elif self.base.kind == "warped":
            grid = np.zeros(self.grid_shape)
            sh = (-1, 1) + (1,) * len(self.flat)
            out["s"] = self.from_grid(grid + self.base.s.reshape(sh))
            th = self.from_grid(grid + self.base.theta.reshape((1, -1) + (1,) * len(self.flat)))
            if self.base.tip:
                th = th.copy()
                th[self.tip_vertices] = 0.0
            out["theta"] = th
        for j, name in enumerate(self.flat_names):
            shape = [1] * len(blk)
            shape[1 + j] = -1
            out[name] = np.broadcast_to(self.flat[j].nodes.reshape(shape), blk).ravel().copy()
        return out

    @property
    def flat_names(self) -> list:
        prefix = "x" if self.spec.kind == "FlatGrid" else "t"
        return [f"{prefix}{j + 1}" for j in range(len(self.flat))]

    @cached_property
    def tip_vertices(self) -> np.ndarray:
        if self.base.kind == "warped" and self.base.tip:
            g = np.zeros(self.grid_shape, dtype=bool)
            g[0] = True
            return np.flatnonzero(self.from_grid(g))
        return np.zeros(0, dtype=int)

    def embedding(self) -> np.ndarray | None:
        """Cartesian coordinates for flat grids (used by closed-form generators)."""
        if self.spec.kind == "FlatGrid":
            return np.stack([self.coords[n] for n in self.flat_names])
        return None

    # -- operators ---------------------------------------------------------
    def apply_L(self, f: np.ndarray) -> np.ndarray:
        """L f = W^{-1} K f (approximates -Δ f)."""
        return (self.K @ f) / self.w

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return -self.apply_L(f)

    def interior_mask(self, depth: int = 1) -> np.ndarray:
        """Vertices at least ``depth`` grid steps away from the truncation boundary."""
        g = np.ones(self.grid_shape, dtype=bool)
        nb = 0
        if self.base.kind in ("radial", "warped"):
            nr = self.base.n_rows
            keep = np.ones(nr, dtype=bool)
            if depth > 0:
                keep[nr - depth:] = False
                if not self.base.tip:
                    keep[:depth] = False
            sh = [1] * g.ndim
            sh[0] = -1
            g &= keep.reshape(sh)
            nb = 2 if self.base.kind == "warped" else 1
        for j, ax in enumerate(self.flat):
            keep = np.ones(ax.n, dtype=bool)
            if depth > 0:
                keep[:depth] = False
                keep[ax.n - depth:] = False
            sh = [1] * g.ndim
            sh[nb + j] = -1
            g &= keep.reshape(sh)
        return self.from_grid(g)

    def trusted_radius(self, t_max: float = 0.0) -> float:
        buffer = max(3.0 * np.sqrt(max(t_max, 0.0)), 5.0 * self.h_min)
        return self.R_max - buffer


# ---------------------------------------------------------------------------
# Build


def _curvature_certificate(spec: ManifoldSpec, base: Base) -> dict:
    """Sample the Ricci lower bound of the base and check the sign."""
    if base.kind == "none":
        return {"min_ricci": 0.0, "max_abs_curvature": 0.0, "ok": True}
    prof = base.profile
    s = base.s
    h = base.hs
    mids = 0.5 * (s[:-1] + s[1:])
    pts = np.concatenate([s, mids])
    if prof.tip:
        pts = pts[pts > 0.25 * h]
    f = prof.f(pts)
    K = -prof.d2f(pts) / f
    m = spec.m if spec.kind == "RadialProfile" else 2
    if m > 2:
        tang = K + (m - 2) * (1.0 - prof.df(pts) ** 2) / f**2
        ric = np.minimum((m - 1) * K, tang)
        scale = np.maximum(np.abs(K), np.abs(tang))
    else:
        ric = K
        scale = np.abs(K)
    return {
        "min_ricci": float(ric.min()),
        "max_abs_curvature": float(scale.max()),
        "ok": bool(ric.min() >= -spec.kappa_tol),
    }


def build_manifold(spec: ManifoldSpec, check_scale: bool = True) -> DiscreteManifold:
    """Assemble the discrete manifold described by ``spec``.

    Raises :class:`CurvatureError` when the curvature certificate fails on a
    spec not flagged ``negative_control``.  With ``check_scale`` the domain
    must also span at least ten curvature lengths (small unit-test grids
    switch this off).
    """
    from .geodesic import distance_field_on

    flat: list = []
    if spec.kind == "FlatGrid":
        if spec.h <= 0:
            raise ValueError("h must be positive")
        base = Base(kind="none", dim=0)
        flat = [make_flat_axis(spec.halfwidth, spec.h) for _ in range(spec.m)]
        R_max = spec.halfwidth
    elif spec.kind == "RadialProfile":
        prof = spec.make_profile()
        if not prof.tip:
            raise ValueError("RadialProfile needs a profile with a tip (f(0) = 0)")
        base = _radial_base(prof, spec.m, spec.s_max, spec.h)
        R_max = spec.s_max
    elif spec.kind in ("WarpedGrid2D", "Cone2D"):
        prof = spec.make_profile()
        base = _warped_base(prof, spec.s_max, spec.n_s, spec.n_theta)
        R_max = spec.s_max
    else:
        fac = spec.factor
        prof = fac.make_profile()
        base = _warped_base(prof, fac.s_max, fac.n_s, fac.n_theta)
        flat = [make_flat_axis(spec.halfwidth, spec.h) for _ in range(spec.k_flat)]
        R_max = min(fac.s_max, spec.halfwidth)

    cert = _curvature_certificate(spec, base)
    if not cert["ok"] and not spec.negative_control:
        raise CurvatureError(
            f"profile {spec.profile or spec.factor.profile!r} has Ricci lower bound "
            f"{cert['min_ricci']:.3g} < -{spec.kappa_tol:g}; flag it negative_control to use it"
        )
    if check_scale and cert["max_abs_curvature"] > 0 and not spec.negative_control:
        length = 1.0 / np.sqrt(cert["max_abs_curvature"])
        if R_max < 10.0 * length - 1e-12:
            raise ValueError(f"R_max = {R_max} is below 10 curvature lengths ({10 * length:.3g})")

    # assemble W and K as Kronecker products over (base, flat_1, ..., flat_k)
    w = base.weights()
    K = base.stiffness()
    W_acc = sp.diags(w, format="csr")
    for ax in flat:
        M = sp.diags(ax.mass, format="csr")
        K = (sp.kron(K, M) + sp.kron(W_acc, ax.stiffness)).tocsr()
        W_acc = sp.kron(W_acc, M).tocsr()
        w = np.multiply.outer(w, ax.mass).ravel()
    K = K.tocsr()
    K.sum_duplicates()

    shell = DiscreteManifold(spec=spec, base=base, flat=flat, w=np.asarray(w, dtype=float), K=K, x0=0,
                             r=np.zeros(w.size), boundary=np.zeros(w.size, dtype=bool), R_max=float(R_max),
                             certificate=cert)
    shell.x0 = _base_point(shell)
    shell.boundary = ~shell.interior_mask(1)
    shell.r = distance_field_on(shell, shell.x0)
    return shell


def _base_point(man: DiscreteManifold) -> int:
    g = np.zeros(man.grid_shape, dtype=bool)
    idx = []
    if man.base.kind == "radial":
        idx.append(0)
    elif man.base.kind == "warped":
        idx.append(0 if man.base.tip else (man.base.n_rows - 1) // 2)
        idx.append(0)
    idx.extend(ax.n // 2 for ax in man.flat)
    g[tuple(idx)] = True
    return int(np.flatnonzero(man.from_grid(g))[0])


# ---------------------------------------------------------------------------
# Balls and volume profiles


def distance_field(man: DiscreteManifold, base: int | None = None) -> np.ndarray:
    """Geodesic distance from ``base`` (default x0) to every vertex."""
    from .geodesic import distance_field_on

    if base is None or base == man.x0:
        return man.r.copy()
    return distance_field_on(man, int(base))


@dataclass(frozen=True)
class Ball:
    indices: np.ndarray
    volume: float
    rho: float
    trusted: bool


def ball(man: DiscreteManifold, rho: float, t_max: float = 0.0, strict: bool = False) -> Ball:
    """Vertices with r <= rho and their total volume.

    ``trusted`` is False when rho exceeds R_max minus the buffer
    max(3 sqrt(t_max), 5 h); with ``strict`` that raises instead.
    """
    if rho <= 0:
        raise ValueError("ball radius must be positive")
    trusted = rho <= man.trusted_radius(t_max) + 1e-12
    if strict and not trusted:
        raise TruncationError(f"rho = {rho} exceeds trusted radius {man.trusted_radius(t_max):.4g}")
    idx = np.flatnonzero(man.r <= rho + 1e-12 * max(1.0, rho))
    return Ball(indices=idx, volume=float(man.w[idx].sum()), rho=float(rho), trusted=bool(trusted))


@dataclass
class VolumeProfile:
    rho: np.ndarray
    volume: np.ndarray
    ratio: np.ndarray          # |B| / (omega_m rho^m)
    boundary_ratio: np.ndarray  # |dB| rho / |B|, bounded by m under Bishop-Gromov
    monotone: bool
    worst_increase: float
    verdict: str


def volume_ratio_profile(man: DiscreteManifold, rho_list, slack: float = 0.03) -> VolumeProfile:
    """Bishop-Gromov profile: the normalized volume ratio must be non-increasing."""
    rho = np.asarray(rho_list, dtype=float)
    if np.any(np.diff(rho) <= 0):
        raise ValueError("rho_list must be increasing")
    m = man.m
    vol = np.array([ball(man, r).volume for r in rho])
    ratio = vol / (unit_ball_volume(m) * rho**m)
    # |dB(rho)| from a centred difference of the volume in rho on a fine local stencil
    dr = 2.0 * man.h
    area = np.array([(ball(man, r + dr).volume - ball(man, max(r - dr, 1e-9)).volume) / (2 * dr) for r in rho])
    bratio = area * rho / vol
    rel = ratio[1:] / ratio[:-1] - 1.0
    worst = float(rel.max()) if rel.size else 0.0
    ok = worst < slack
    return VolumeProfile(rho=rho, volume=vol, ratio=ratio, boundary_ratio=bratio, monotone=ok,
                         worst_increase=worst, verdict="PASS" if ok else "FAIL")
