"""Rigidity probes and the cofactor expansion of Δ det E."""

from __future__ import annotations

import itertools

import numpy as np

from ..fields import gradient, laplacian_apply
from ..harmonic import bochner_mask
from ..heat import heat_evolve
from ..pullback import average_gram, gram_field, hessian_energy, so_diagonalize
from .report import CheckReport, convergence_order, decide, floats


def _trusted_region(man, mask):
    return mask & (man.r <= man.trusted_radius() + 1e-12)


def rigidity_probe(man, u, t_max: float, tol_delta: float = 1e-8, tol_hess: float = 1e-8,
                   amgm_tol: float = 1e-10, q: float = 0.02, control: bool = False) -> CheckReport:
    """Implication body of the rigidity statement on the renormalised map.

    The map is first rotated by the A in SO(n) that diagonalises the Gram
    average over the largest trusted ball, then renormalised:
    ũ_alpha = v_alpha / L_alpha with L_alpha = sup |∇v_alpha| on the trusted
    region.  δ = sup |ω̃| - |ω̃|(x0).  The Hessian mass
    ∫_0^{t_max} ∫ |∇∇ũ|^2 dμ dt is accumulated on the heat lattice.  The
    probe passes when δ <= tol_delta implies Hessian mass <= tol_hess and
    the AM-GM chain n |ω̃|^{2/n} <= |∇ũ|^2 <= n holds on the trusted region.
    """
    gram = gram_field(man, u)
    n = gram.n
    region = _trusted_region(man, gram.mask)
    # v = A u with A diagonalising the Gram average over the largest trusted ball
    rho = man.trusted_radius()
    rot, _ = so_diagonalize(average_gram(gram, "ball", rho, strict=False))
    A = rot.A
    Ev = np.einsum("ab,vbc,dc->vad", A, gram.E, A)
    V = A @ u.U
    diag = np.diagonal(Ev, axis1=1, axis2=2)
    L2 = np.array([float(np.max(diag[region, a])) for a in range(n)])
    if np.any(L2 <= 0.0):
        raise ValueError("a component has vanishing gradient: the map is trivial")
    scale = 1.0 / np.sqrt(np.outer(L2, L2))
    Et = Ev * scale[None]
    det_t = np.linalg.det(Et) if n > 1 else Et[:, 0, 0]
    det_t = np.maximum(det_t, 0.0)
    omega_t = np.sqrt(det_t)
    energy_t = np.trace(Et, axis1=1, axis2=2)
    delta = float(np.max(omega_t[region]) - omega_t[man.x0])
    hs = np.zeros(man.V)
    hmask = np.ones(man.V, dtype=bool)
    for a, comp in enumerate(V):
        h_a, m_a = hessian_energy(man, comp)
        hs += h_a / L2[a]
        hmask &= m_a
    hs = np.where(hmask, hs, 0.0)
    total = [0.0]

    def observe(t, dt, H):
        total[0] += dt * float((man.w * H) @ hs)

    heat_evolve(man, [t_max], q=q, observe=observe)
    mass = float(total[0])
    lower = n * det_t ** (1.0 / n)
    amgm_low = float(np.max((lower - energy_t)[region]))
    amgm_high = float(np.max(energy_t[region] - n))
    amgm_ok = amgm_low <= amgm_tol and amgm_high <= amgm_tol
    implication = bool(delta > tol_delta or mass <= tol_hess)
    splitting = bool(delta <= tol_delta and mass <= tol_hess)
    ok = implication and amgm_ok
    return CheckReport(
        id="rigidity_probe", spec_hash=man.spec_hash, scales=[float(t_max)], measured=[delta, mass],
        target=0.0, tolerance=tol_delta, verdict=decide(ok, True, control),
        fit={"delta": delta, "hessian_mass": mass, "implication_holds": implication, "splitting_detected": splitting,
             "amgm_lower_excess": amgm_low, "amgm_upper_excess": amgm_high},
        constants={"L_sq": floats(L2), "rotation": floats(A)},
        details={"omega_tilde_x0": float(omega_t[man.x0]), "energy_tilde_x0": float(energy_t[man.x0])},
        control=control,
    )


def corollary_probe(man, u, tol: float = 1e-8, control: bool = False) -> CheckReport:
    """The three vanishing conditions and the Hessian they should force to vanish.

    Conditions, measured as sup-norms on the interior: |∇ det E|,
    |Δ det E| and |Δ |∇|ω||^2|.  The third uses the gradient of |ω| in
    place of the full covariant derivative of ω (Kato's inequality bounds the
    former by the latter); both vanish together on parallel forms.
    """
    gram = gram_field(man, u)
    mask = bochner_mask(man) & gram.mask
    det = gram.det
    omega = np.sqrt(np.maximum(det, 0.0))
    c1 = float(np.max(gradient(man, det).norm()[mask]))
    c2 = float(np.max(np.abs(laplacian_apply(man, det))[mask]))
    k = gradient(man, omega).norm_sq()
    c3 = float(np.max(np.abs(laplacian_apply(man, k))[mask]))
    hs, hmask = hessian_energy(man, u)
    hess = float(np.max(hs[mask & hmask]))
    s_det = max(1.0, float(np.max(det[mask])))
    s_tr = max(1.0, float(np.max(gram.trace[mask])))
    holds = [c1 <= tol * s_det, c2 <= tol * s_det, c3 <= tol * s_det]
    hess_zero = hess <= tol * s_tr
    ok = (not any(holds)) or hess_zero
    return CheckReport(
        id="corollary_probe", spec_hash=man.spec_hash, scales=[], measured=[c1, c2, c3, hess], target=0.0,
        tolerance=tol, verdict=decide(ok, True, control),
        fit={"conditions_hold": holds, "hessian_vanishes": hess_zero},
        details={"names": ["sup|grad det E|", "sup|lap det E|", "sup|lap |grad|omega||^2|", "sup|hess u|^2"]},
        control=control,
    )


# ---------------------------------------------------------------------------
# Cofactor expansion


def _minor(E: np.ndarray, rows, cols) -> np.ndarray:
    n = E.shape[-1]
    keep_r = [i for i in range(n) if i not in rows]
    keep_c = [j for j in range(n) if j not in cols]
    if not keep_r:
        return np.ones(E.shape[:-2])
    sub = E[..., keep_r, :][..., :, keep_c]
    return np.linalg.det(sub)


def det_first_derivatives(E: np.ndarray) -> dict:
    """∂ det / ∂E_ab = cofactor C_ab, with all n^2 entries treated as independent."""
    n = E.shape[-1]
    return {(a, b): (-1) ** (a + b) * _minor(E, [a], [b]) for a in range(n) for b in range(n)}


def det_second_derivatives(E: np.ndarray) -> dict:
    """∂^2 det / ∂E_ab ∂E_cd for a != c, b != d.

    Equals (-1)^{a+b+c+d} eps det E*_{ac;bd}, where E* deletes rows a, c and
    columns b, d, and eps = +1 when (a < c) and (b < d) agree, else -1.
    """
    n = E.shape[-1]
    out = {}
    for a, b, c, d in itertools.product(range(n), repeat=4):
        if a == c or b == d:
            continue
        eps = 1.0 if (a < c) == (b < d) else -1.0
        out[(a, b, c, d)] = (-1) ** (a + b + c + d) * eps * _minor(E, [a, c], [b, d])
    return out


def laplacian_det_expansion(man, E: np.ndarray) -> np.ndarray:
    """Σ C_ab ΔE_ab + Σ (∂^2 det / ∂E_ab ∂E_cd) <∇E_ab, ∇E_cd>, entries by stencil."""
    n = E.shape[-1]
    lapE = {(a, b): laplacian_apply(man, E[:, a, b]) for a in range(n) for b in range(n)}
    grads = {(a, b): gradient(man, E[:, a, b]) for a in range(n) for b in range(n)}
    out = np.zeros(man.V)
    for (a, b), C in det_first_derivatives(E).items():
        out += C * lapE[(a, b)]
    for (a, b, c, d), D in det_second_derivatives(E).items():
        out += D * grads[(a, b)].dot(grads[(c, d)])
    return out


def _det_residual(man, u):
    gram = gram_field(man, u)
    if gram.n < 2:
        raise ValueError("the cofactor expansion needs n >= 2")
    mask = bochner_mask(man) & gram.mask
    direct = laplacian_apply(man, gram.det)
    expanded = laplacian_det_expansion(man, gram.E)
    err = float(np.max(np.abs(direct - expanded)[mask]))
    scale = float(np.max(np.abs(direct)[mask]))
    w = man.w[mask]
    d = direct[mask]
    sign = {"negative_volume": float(w[d < 0].sum() / w.sum()), "positive_volume": float(w[d > 0].sum() / w.sum())}
    return err, scale, sign


def laplacian_det_residual(man, u, refine=None, order_min: float = 1.0, control: bool = False) -> CheckReport:
    """Δ det E by stencil against its cofactor expansion.

    PASS when the discrepancy is O(h): below h times the scale of Δ det E,
    and, when ``refine`` (manifold, map) at h/2 is given, shrinking with
    observed order >= ``order_min``.  Discrepancies at roundoff level
    (below 1e-9 of the scale) count as exact agreement.
    """
    err, scale, sign = _det_residual(man, u)
    hs = [man.h]
    errs = [err]
    floor = 1e-9 * max(scale, 1e-300)
    ok = err <= man.h * max(scale, 1e-12)
    order = None
    if refine is not None:
        e2, s2, _ = _det_residual(*refine)
        hs.append(refine[0].h)
        errs.append(e2)
        if max(err, e2) <= max(floor, 1e-9 * max(s2, 1e-300)):
            order = float("inf")
        else:
            order = convergence_order(errs, hs)
        ok = ok and order >= order_min
    return CheckReport(
        id="laplacian_det_residual", spec_hash=man.spec_hash, scales=floats(hs), measured=floats(errs),
        target=0.0, tolerance=float(man.h), verdict=decide(bool(ok), True, control),
        fit={"order": order, "scale": scale, "roundoff_floor": floor},
        details={"sign": sign}, control=control,
    )
