"""Vector-valued harmonic maps of at most linear growth.

Exact maps come from :func:`harmlab.fields.analytic_field`.  On curved
backends a Dirichlet approximant is computed by solving ``K_II u_I = -K_IB u_B``
with Jacobi-preconditioned CG, where B is the truncation boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fields import gradient, hessian, laplacian_apply
from .manifold import DiscreteManifold
from .solvers import pcg

DEFAULT_TOL = 1e-12


@dataclass
class VectorMap:
    """n vertex fields u_alpha on one manifold, pointed at x0."""

    man: DiscreteManifold
    U: np.ndarray
    provenance: str = "analytic"
    R_solve: float | None = None
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def __getitem__(self, k) -> np.ndarray:
        return self.U[k]

    @classmethod
    def analytic(cls, man: DiscreteManifold, U: np.ndarray, name: str = "analytic") -> "VectorMap":
        U = np.atleast_2d(np.asarray(U, dtype=float))
        offset = U[:, man.x0].copy()
        U = U - offset[:, None]
        return cls(man=man, U=U, provenance=name, residual=harmonic_residual(man, U), offset=offset)

    def scaled(self, c) -> "VectorMap":
        c = np.broadcast_to(np.asarray(c, dtype=float), (self.n,))
        return VectorMap(self.man, self.U * c[:, None], self.provenance, self.R_solve,
                         self.residual * np.abs(c), self.offset * c, list(self.iterations))


def harmonic_residual(man: DiscreteManifold, U: np.ndarray) -> np.ndarray:
    """max |L u_alpha| over the interior vertices, per component."""
    U = np.atleast_2d(U)
    mask = man.interior_mask(1)
    return np.array([float(np.max(np.abs(man.apply_L(u)[mask]), initial=0.0)) for u in U])


def solve_harmonic(man: DiscreteManifold, boundary_data, tol: float = DEFAULT_TOL, maxiter: int | None = None,
                   provenance: str = "dirichlet") -> VectorMap:
    """Dirichlet approximant with the given values on the truncation boundary.

    ``boundary_data`` is an (n, V) array (or a VectorMap); only its boundary
    entries are used.  The result is pointed (u(x0) subtracted) and carries
    the relative residual of each component solve.
    """
    data = boundary_data.U if isinstance(boundary_data, VectorMap) else boundary_data
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] > man.m:
        raise ValueError(f"n = {data.shape[0]} exceeds the dimension m = {man.m}")
    B = np.flatnonzero(man.boundary)
    I = np.flatnonzero(~man.boundary)
    K = man.K
    K_II = K[I][:, I].tocsr()
    K_IB = K[I][:, B].tocsr()
    U = np.zeros_like(data)
    res = []
    its = []
    for a, u in enumerate(data):
        rhs = -(K_IB @ u[B])
        out = np.empty(man.V)
        out[B] = u[B]
        if np.linalg.norm(rhs) == 0.0:
            out[I] = 0.0
            res.append(0.0)
            its.append(0)
        else:
            sol = pcg(K_II, rhs, tol=tol, maxiter=maxiter)
            out[I] = sol.x
            res.append(sol.residual)
            its.append(sol.iterations)
        U[a] = out
    offset = U[:, man.x0].copy()
    U -= offset[:, None]
    return VectorMap(man=man, U=U, provenance=provenance, R_solve=man.R_max, residual=np.array(res),
                     offset=offset, iterations=its)


def lift_factor_map(product: DiscreteManifold, factor_u: np.ndarray) -> np.ndarray:
    """Extend a field on the warped factor of a product constantly along the flat axes."""
    if product.spec.kind != "Product":
        raise ValueError("lift_factor_map needs a Product manifold")
    u = np.asarray(factor_u, dtype=float)
    if u.size != product.base.size:
        raise ValueError("factor field has the wrong size")
    shape = (product.base.size,) + (1,) * len(product.flat)
    return np.broadcast_to(u.reshape(shape), product.block_shape).ravel().copy()


def product_approximant(product: DiscreteManifold, factor_man: DiscreteManifold, data: str = "embedding_x",
                        n_flat: int | None = None, tol: float = DEFAULT_TOL) -> VectorMap:
    """u = (Dirichlet approximant on the factor, flat coordinates) on N x R^k."""
    from .fields import analytic_field

    if factor_man.base.size != product.base.size:
        raise ValueError("factor manifold does not match the product's factor grid")
    g = analytic_field(factor_man, data)
    u1 = solve_harmonic(factor_man, g[None, :], tol=tol)
    lifted = lift_factor_map(product, u1.U[0])
    k = len(product.flat) if n_flat is None else int(n_flat)
    flat = [product.coords[n] - product.coords[n][product.x0] for n in product.flat_names[:k]]
    U = np.stack([lifted] + flat)
    offset = U[:, product.x0].copy()
    U = U - offset[:, None]
    res = np.concatenate([u1.residual, np.zeros(k)])
    return VectorMap(man=product, U=U, provenance=f"dirichlet({data})", R_solve=factor_man.R_max,
                     residual=res, offset=offset, iterations=u1.iterations + [0] * k)


# ---------------------------------------------------------------------------
# Growth


@dataclass
class GrowthReport:
    L: np.ndarray            # per component, over r <= R_max
    L_map: float
    radii: np.ndarray
    L_by_radius: np.ndarray  # map constant restricted to r <= radius
    exponent: float          # log-log slope of max_{B(R)} |u| against R
    divergent: bool


def growth_constant(man: DiscreteManifold, u: VectorMap | np.ndarray, radii=None,
                    max_exponent: float = 1.2) -> GrowthReport:
    """L = max |u(x)| / (r(x) + 1) over B(x0, R_max), with a growth-exponent trend.

    The exponent is the log-log slope of max_{B(x0, R)} |u| over nested
    radii (default R_max / 4, R_max / 2, R_max).  Linear growth gives at most
    1; an exponent above ``max_exponent`` flags superlinear growth, for which
    no finite L exists on the untruncated manifold.
    """
    U = u.U if isinstance(u, VectorMap) else np.atleast_2d(u)
    inside = man.r <= man.R_max + 1e-12
    denom = man.r + 1.0
    L = np.array([float(np.max(np.abs(c[inside]) / denom[inside])) for c in U])
    norm = np.sqrt(np.sum(U**2, axis=0))
    L_map = float(np.max(norm[inside] / denom[inside]))
    radii = np.asarray(radii if radii is not None else [man.R_max / 4, man.R_max / 2, man.R_max], dtype=float)
    Lr = np.array([float(np.max(norm[man.r <= R] / denom[man.r <= R])) for R in radii])
    G = np.array([float(np.max(norm[man.r <= R])) for R in radii])
    if np.all(G > 0) and radii.size > 1:
        exponent = float(np.polyfit(np.log(radii), np.log(G), 1)[0])
    else:
        exponent = 0.0
    return GrowthReport(L=L, L_map=L_map, radii=radii, L_by_radius=Lr, exponent=exponent,
                        divergent=bool(exponent > max_exponent))


# ---------------------------------------------------------------------------
# Cheng-Yau


@dataclass
class ChengYauReport:
    R: list
    sup_grad: list           # per run, per component
    L: list
    C: list
    verdict: str


def cheng_yau_check(runs, drift: float = 1.5) -> ChengYauReport:
    """sup of |∇u_alpha| over the inner half ball, compared across solve radii.

    ``runs`` is a sequence of VectorMaps on manifolds of increasing R_max.
    PASS when the supremum stays bounded: it grows by less than ``drift``
    from each run to the next.
    """
    R, sups, Ls, Cs = [], [], [], []
    for u in runs:
        man = u.man
        half = man.r <= 0.5 * man.R_max
        g = []
        for comp in u.U:
            grad = gradient(man, comp)
            ok = half & grad.mask
            g.append(float(np.max(grad.norm()[ok])))
        gr = growth_constant(man, u)
        R.append(man.R_max)
        sups.append(g)
        Ls.append(gr.L.tolist())
        Cs.append([gi / li if li > 0 else 0.0 for gi, li in zip(g, gr.L)])
    ok = True
    for a, b in zip(sups, sups[1:]):
        for x, y in zip(a, b):
            if y > drift * x + 1e-12:
                ok = False
    if not all(np.isfinite(np.ravel(sups))):
        ok = False
    return ChengYauReport(R=R, sup_grad=sups, L=Ls, C=Cs, verdict="PASS" if ok else "FAIL")


# ---------------------------------------------------------------------------
# Bochner


@dataclass
class BochnerReport:
    residual: np.ndarray     # (n, V), zero outside the mask
    mask: np.ndarray
    min_residual: np.ndarray
    negative_part: np.ndarray  # max(0, -min) relative to the component scale
    scale: np.ndarray
    tol: float
    verdict: str


TIP_RADIUS = 0.5


def bochner_mask(man: DiscreteManifold, tip_radius: float = TIP_RADIUS) -> np.ndarray:
    """Interior vertices where second differences of derived fields are valid.

    A non-smooth tip (the cone vertex) carries its curvature as a point mass
    and derived fields are singular there; vertices with s < ``tip_radius``
    are excluded.  The radius is a fixed length, so the excluded region does
    not shrink under refinement.
    """
    mask = man.interior_mask(2)
    g = gradient(man, np.zeros(man.V))
    mask &= g.mask
    if man.base.kind == "warped" and man.base.tip and not man.base.profile.smooth_tip:
        grid = np.ones(man.grid_shape, dtype=bool)
        grid[:2] = False
        mask &= man.from_grid(grid)
        mask &= man.coords["s"] >= tip_radius - 1e-12
    return mask


def bochner_residual(man: DiscreteManifold, u: VectorMap | np.ndarray, tol_factor: float = 1.0) -> BochnerReport:
    """Δ|∇u_alpha|^2 - 2|∇∇u_alpha|^2 per interior vertex.

    For a harmonic u this equals 2 Ric(∇u, ∇u), so it is non-negative when
    Ric >= 0.  The verdict allows a negative part up to
    ``tol(h) = tol_factor * h`` relative to the component scale
    max(|Δ|∇u|^2| + 2|∇∇u|^2); components with a vanishing scale are
    compared against the absolute floor 1e-9.
    """
    U = u.U if isinstance(u, VectorMap) else np.atleast_2d(u)
    mask = bochner_mask(man)
    res = np.zeros_like(U)
    mins, negs, scales = [], [], []
    tol = tol_factor * man.h
    ok = True
    for a, comp in enumerate(U):
        e = gradient(man, comp).norm_sq()
        lap = laplacian_apply(man, e)
        hs = hessian(man, comp).norm_sq
        r = np.where(mask, lap - 2.0 * hs, 0.0)
        res[a] = r
        scale = float(np.max((np.abs(lap) + 2.0 * hs)[mask], initial=0.0))
        mn = float(np.min(r[mask], initial=0.0))
        neg = max(0.0, -mn)
        if scale > 1e-9:
            rel = neg / scale
            ok &= rel <= tol
        else:
            rel = neg
            ok &= neg <= 1e-9
        mins.append(mn)
        negs.append(rel)
        scales.append(scale)
    return BochnerReport(residual=res, mask=mask, min_residual=np.array(mins), negative_part=np.array(negs),
                         scale=np.array(scales), tol=tol, verdict="PASS" if ok else "FAIL")
