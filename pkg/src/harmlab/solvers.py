"""Linear solvers.

``pcg`` is a Jacobi-preconditioned conjugate-gradient iteration used for the
Dirichlet harmonic solves.  ``SeparableSolver`` solves ``(a W + b K) x = y``
exactly on the tensor-grid manifolds: flat axes are diagonalised by their
generalized eigenvectors, a warped base by an orthonormal Fourier basis in
theta, and what remains is a batch of tridiagonal systems in s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    """Iterative solve failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    residual: float


def pcg(A: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-12,
        maxiter: int | None = None) -> PCGResult:
    """Jacobi-preconditioned CG for symmetric positive-definite ``A``.

    Stops when ||b - A x|| <= tol ||b||.  Raises :class:`SolverError` if
    ``maxiter`` (default 20 n) iterations are exhausted.
    """
    A = sp.csr_matrix(A)
    n = b.size
    maxiter = maxiter or 20 * n
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return PCGResult(np.zeros(n), 0, 0.0)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            # recompute the true residual once to guard against drift
            r_true = b - A @ x
            res = np.linalg.norm(r_true) / bnorm
            if res <= tol:
                return PCGResult(x, it, res)
            r = r_true
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not converge in {maxiter} iterations", res)


def thomas_batched(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve tridiagonal systems along axis 0, batched over the trailing axes.

    ``lower[i]`` couples row i to row i-1 (lower[0] unused), ``upper[i]``
    couples row i to row i+1 (upper[-1] unused).  All arrays broadcast to
    ``rhs.shape``.  Intended for diagonally dominant matrices (no pivoting).
    """
    n = rhs.shape[0]
    diag = np.broadcast_to(diag, rhs.shape)
    lower = np.broadcast_to(lower, rhs.shape)
    upper = np.broadcast_to(upper, rhs.shape)
    c = np.empty(rhs.shape)
    d = np.empty(rhs.shape)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x = np.empty(rhs.shape)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _theta_basis(n: int):
    """Orthonormal eigenbasis of the periodic second-difference matrix."""
    k = np.arange(n)
    mu = 2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)
    j = np.arange(n)[:, None]
    Q = np.empty((n, n))
    Q[:, 0] = 1.0 / np.sqrt(n)
    for kk in range(1, n):
        if kk < (n + 1) // 2:
            Q[:, kk] = np.sqrt(2.0 / n) * np.cos(2.0 * np.pi * kk * j[:, 0] / n)
        elif 2 * kk == n:
            Q[:, kk] = np.cos(np.pi * j[:, 0]) / np.sqrt(n)
        else:
            Q[:, kk] = np.sqrt(2.0 / n) * np.sin(2.0 * np.pi * (n - kk) * j[:, 0] / n)
    return Q, mu


class SeparableSolver:
    """Exact solver for ``(a W + b K) x = y`` on a tensor-grid manifold."""

    def __init__(self, man):
        self.man = man
        self.base = man.base
        self.flat_eig = [ax.eig for ax in man.flat]
        lam = np.zeros(1)
        for lam_j, _ in self.flat_eig:
            lam = np.add.outer(lam, lam_j).ravel()
        self.flat_lam = lam  # eigen-sum per flat mode, C order over flat axes
        if self.base.kind == "warped":
            self.Q, self.mu = _theta_basis(self.base.n_theta)
            self.k0 = int(np.argmin(self.mu))
            self.colsum0 = float(self.Q[:, self.k0].sum())

    # -- flat transforms -----------------------------------------------------
    def _flat_forward(self, X: np.ndarray, nlead: int) -> np.ndarray:
        for j, (_, vec) in enumerate(self.flat_eig):
            X = np.moveaxis(np.tensordot(X, vec, axes=([nlead + j], [0])), -1, nlead + j)
        return X

    def _flat_backward(self, X: np.ndarray, nlead: int) -> np.ndarray:
        for j, (_, vec) in enumerate(self.flat_eig):
            X = np.moveaxis(np.tensordot(X, vec, axes=([nlead + j], [1])), -1, nlead + j)
        return X

    def solve(self, y: np.ndarray, a: float, b: float) -> np.ndarray:
        """Return x with (a W + b K) x = y."""
        man = self.man
        base = self.base
        nf = len(man.flat)
        blk = y.reshape(man.block_shape)
        # V^T y along every flat axis
        c = self._flat_forward(blk, 1)
        c = c.reshape(base.size, -1)
        shift = a + b * self.flat_lam  # per flat mode, multiplies base weights
        if base.kind == "none":
            x = c / shift[None, :]
        elif base.kind == "radial":
            w = base.w_rows[:, None]
            e = base.e_rows
            lo = np.concatenate([[0.0], -b * e])[:, None]
            up = np.concatenate([-b * e, [0.0]])[:, None]
            deg = np.zeros(base.n_rows)
            deg[:-1] += e
            deg[1:] += e
            dg = w * shift[None, :] + b * deg[:, None]
            x = thomas_batched(lo, dg, up, c)
        else:
            x = self._solve_warped(c, shift, b)
        x = x.reshape((base.size,) + man.flat_shape)
        x = self._flat_backward(x, 1)
        return x.reshape(-1)

    def _solve_warped(self, c: np.ndarray, shift: np.ndarray, b: float) -> np.ndarray:
        base = self.base
        nt = base.n_theta
        tip = base.tip
        first = 1 if tip else 0
        nr = base.n_rows - first
        nfm = c.shape[1]
        rings = c[first:].reshape(nr, nt, nfm)
        rings = np.matmul(self.Q.T, rings)
        # rows: [tip,] ring_1..ring_nr ; batch over (theta mode k, flat mode)
        R = nr + first
        rhs = np.zeros((R, nt, nfm))
        rhs[first:] = rings
        e = base.e_rows[first:]          # ring-to-ring edges (nr - 1)
        cth = base.c_rows[first:]        # angular coefficients per ring
        w = base.w_rows[first:]
        deg = np.zeros(nr)
        deg[:-1] += e
        deg[1:] += e
        if tip:
            deg[0] += base.e_tip
        diag = np.empty((R, nt, nfm))
        diag[first:] = (w[:, None, None] * shift[None, None, :]
                        + b * (deg[:, None, None] + cth[:, None, None] * self.mu[None, :, None]))
        lower = np.zeros((R, nt, 1))
        upper = np.zeros((R, nt, 1))
        lower[first + 1:] = -b * e[:, None, None]
        upper[first:R - 1] = -b * e[:, None, None]
        if tip:
            diag[0] = 1.0
            diag[0, self.k0] = base.w_tip * shift + b * nt * base.e_tip
            rhs[0, self.k0] = c[0]
            coup = -b * base.e_tip * self.colsum0
            upper[0, self.k0] = coup
            lower[1, self.k0] = coup
        x = thomas_batched(lower, diag, upper, rhs)
        out = np.empty_like(c)
        out[first:] = np.matmul(self.Q, x[first:]).reshape(nr * nt, nfm)
        if tip:
            out[0] = x[0, self.k0]
        return out


def direct_solve(man, y: np.ndarray, a: float, b: float) -> np.ndarray:
    """Sparse LU reference for ``(a W + b K) x = y`` (small grids, cross-checks)."""
    from scipy.sparse.linalg import spsolve

    A = (a * sp.diags(man.w) + b * man.K).tocsc()
    return spsolve(A, y)
