"""Gram fields of vector maps and their SL(n)/SO(n) algebra.

E_ab = <∇u_a, ∇u_b> per vertex.  det E = |ω|^2 is the pull-back density of
the volume form of R^n, trace E = |∇u|^2, and sigma_k are the elementary
symmetric polynomials of the eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import gradient, hessian
from .manifold import DiscreteManifold, TruncationError, ball


class NumericalFault(RuntimeError):
    """A structural invariant (PSD Gram matrix, orthogonality) is violated."""


def elementary_symmetric(eigs: np.ndarray) -> np.ndarray:
    """sigma_0..sigma_n of the last axis of ``eigs``; result has the new axis first."""
    eigs = np.asarray(eigs, dtype=float)
    n = eigs.shape[-1]
    e = np.zeros((n + 1,) + eigs.shape[:-1])
    e[0] = 1.0
    for j in range(n):
        lam = eigs[..., j]
        for k in range(j + 1, 0, -1):
            e[k] = e[k] + lam * e[k - 1]
    return e


def newton_residual(E: np.ndarray, sigma: np.ndarray) -> float:
    """Largest relative violation of Newton's identities k e_k = sum (-1)^{i-1} e_{k-i} p_i."""
    n = E.shape[-1]
    P = [None]
    Ek = np.broadcast_to(np.eye(n), E.shape).copy()
    for _ in range(n):
        Ek = Ek @ E
        P.append(np.trace(Ek, axis1=-2, axis2=-1))
    tr = np.abs(P[1])
    worst = 0.0
    for k in range(1, n + 1):
        rhs = sum((-1) ** (i - 1) * sigma[k - i] * P[i] for i in range(1, k + 1))
        scale = tr**k
        err = np.abs(k * sigma[k] - rhs) / np.where(scale > 0, scale, 1.0)
        worst = max(worst, float(np.max(err)))
    return worst


@dataclass
class GramField:
    man: DiscreteManifold
    E: np.ndarray          # (V, n, n)
    mask: np.ndarray       # vertices where the gradients are defined
    det: np.ndarray
    trace: np.ndarray
    sigma: np.ndarray      # (n + 1, V)
    eigs: np.ndarray       # (V, n) ascending

    @property
    def n(self) -> int:
        return self.E.shape[-1]

    def entry(self, a: int, b: int) -> np.ndarray:
        return self.E[:, a, b]

    def summary(self) -> dict:
        m = self.mask
        out = {}
        for name, arr in (("det", self.det), ("trace", self.trace)):
            out[name] = {"min": float(arr[m].min()), "max": float(arr[m].max()),
                         "mean": float(np.average(arr[m], weights=self.man.w[m]))}
        for k in range(1, self.n + 1):
            arr = self.sigma[k]
            out[f"sigma_{k}"] = {"min": float(arr[m].min()), "max": float(arr[m].max())}
        scale = np.maximum(self.trace, 1e-300) ** self.n
        degenerate = m & (self.det <= 1e-12 * scale)
        out["degenerate_volume"] = float(self.man.w[degenerate].sum())
        return out


def gram_field(man: DiscreteManifold, u, psd_slack: float = 1e-12) -> GramField:
    """Gram matrix field of a VectorMap (or an (n, V) array of components)."""
    U = u.U if hasattr(u, "U") else np.atleast_2d(u)
    grads = [gradient(man, c) for c in U]
    n = len(grads)
    E = np.empty((man.V, n, n))
    for a in range(n):
        for b in range(a, n):
            E[:, a, b] = E[:, b, a] = grads[a].dot(grads[b])
    mask = np.logical_and.reduce([g.mask for g in grads])
    E[~mask] = 0.0
    eigs = np.linalg.eigvalsh(E)
    trace = np.trace(E, axis1=1, axis2=2)
    if np.any(eigs[:, 0] < -psd_slack * np.maximum(trace, 1e-300)):
        bad = int(np.argmin(eigs[:, 0] / np.maximum(trace, 1e-300)))
        raise NumericalFault(f"Gram matrix not PSD at vertex {bad}: eigenvalues {eigs[bad]}")
    sigma = elementary_symmetric(eigs)
    det = np.linalg.det(E) if n > 1 else E[:, 0, 0].copy()
    return GramField(man=man, E=E, mask=mask, det=det, trace=trace, sigma=sigma, eigs=eigs)


def transform_map(u, A: np.ndarray):
    """(A u)_a = sum_b A_ab u_b.  Singular A is rejected."""
    from .harmonic import VectorMap

    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = u.n
    if A.shape != (n, n):
        raise ValueError(f"A must be {n}x{n}")
    scale = np.linalg.norm(A, 2)
    if abs(np.linalg.det(A)) <= 1e-13 * scale**n:
        raise ValueError("singular transformation")
    return VectorMap(man=u.man, U=A @ u.U, provenance=f"{u.provenance}|A", R_solve=u.R_solve,
                     residual=np.abs(A) @ u.residual if u.residual.size == n else u.residual,
                     offset=A @ u.offset if u.offset.size == n else u.offset, iterations=list(u.iterations))


# ---------------------------------------------------------------------------
# Averages


@dataclass
class AveragedGram:
    matrix: np.ndarray
    mode: str
    scale: float
    trusted: bool


def average_gram(gram: GramField, mode: str, scale: float, run=None, strict: bool = True) -> AveragedGram:
    """Entrywise ball average over B(x0, scale) or heat average at time scale."""
    man = gram.man
    n = gram.n
    M = np.zeros((n, n))
    if mode == "ball":
        b = ball(man, scale)
        if strict and not b.trusted:
            raise TruncationError(f"ball radius {scale} beyond the trusted radius")
        idx = b.indices[gram.mask[b.indices]]
        wt = man.w[idx]
        M = np.einsum("i,iab->ab", wt, gram.E[idx]) / wt.sum()
        trusted = b.trusted
    elif mode == "heat":
        if run is None:
            raise ValueError("heat mode needs a HeatRun")
        trusted = np.sqrt(scale) <= man.R_max / 4.0 + 1e-12
        if strict and not trusted:
            raise TruncationError(f"sqrt(t) = {np.sqrt(scale):.4g} beyond R_max / 4")
        st = run.at(scale)
        wt = man.w * st.H * gram.mask
        M = np.einsum("i,iab->ab", wt, gram.E)
    else:
        raise ValueError(f"unknown averaging mode {mode!r}")
    M = 0.5 * (M + M.T)
    return AveragedGram(matrix=M, mode=mode, scale=float(scale), trusted=bool(trusted))


# ---------------------------------------------------------------------------
# Jacobi diagonalisation


def jacobi_eigh(S: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Cyclic Jacobi eigenvalue iteration for a small symmetric matrix.

    Returns (eigenvalues, V) with S = V diag(eig) V^T, eigenvectors in columns.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    return np.diag(A).copy(), V


@dataclass
class Rotation:
    A: np.ndarray

    def check(self, tol: float = 1e-12) -> None:
        n = self.A.shape[0]
        if np.max(np.abs(self.A.T @ self.A - np.eye(n))) > tol or abs(np.linalg.det(self.A) - 1.0) > tol:
            raise NumericalFault("matrix is not in SO(n)")


def so_diagonalize(omega) -> tuple[Rotation, np.ndarray]:
    """A in SO(n) with A Ω A^T diagonal, eigenvalues sorted descending.

    Each eigenvector (a row of A) has its first non-negligible component
    positive; if det A = -1 the last row is flipped.  Ties keep coordinate
    order.
    """
    M = omega.matrix if isinstance(omega, AveragedGram) else np.asarray(omega, dtype=float)
    M = 0.5 * (M + M.T)
    lam, V = jacobi_eigh(M)
    order = sorted(range(lam.size), key=lambda i: (-lam[i], i))
    lam = lam[order]
    A = V[:, order].T.copy()
    for row in A:
        k = int(np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())[0])
        if row[k] < 0:
            row *= -1.0
    if np.linalg.det(A) < 0:
        A[-1] *= -1.0
    rot = Rotation(A)
    rot.check(1e-12)
    return rot, lam


# ---------------------------------------------------------------------------
# Splitting error


def hessian_energy(man: DiscreteManifold, u) -> tuple[np.ndarray, np.ndarray]:
    """sum_alpha |∇∇u_alpha|^2 and its validity mask."""
    U = u.U if hasattr(u, "U") else np.atleast_2d(u)
    total = np.zeros(man.V)
    mask = np.ones(man.V, dtype=bool)
    for c in U:
        hs = hessian(man, c)
        total += hs.norm_sq
        mask &= hs.mask
    return total, mask


def splitting_error(man: DiscreteManifold, u, weight_mode: str, scale: float, run=None,
                    hess: tuple | None = None) -> float:
    """rho^2 avg_{B(2 rho)} |∇∇u|^2 (ball) or t int |∇∇u|^2 dmu(t) (heat)."""
    hs, mask = hess if hess is not None else hessian_energy(man, u)
    if weight_mode == "ball":
        b = ball(man, 2.0 * scale)
        if not b.trusted:
            raise TruncationError(f"B(2 rho) with rho = {scale} reaches the truncation boundary")
        idx = b.indices[mask[b.indices]]
        return float(scale**2 * (man.w[idx] @ hs[idx]) / man.w[idx].sum())
    if weight_mode == "heat":
        if run is None:
            raise ValueError("heat mode needs a HeatRun")
        st = run.at(scale)
        return float(scale * ((man.w * st.H)[mask] @ hs[mask]))
    raise ValueError(f"unknown weight mode {weight_mode!r}")


def hadamard_gap(gram: GramField) -> float:
    """min over vertices of prod_a E_aa - det E (non-negative by Hadamard)."""
    diag = np.prod(np.diagonal(gram.E, axis1=1, axis2=2), axis=1)
    return float(np.min((diag - gram.det)[gram.mask]))
