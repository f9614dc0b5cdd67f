from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from harmlab.manifold import Cone2D, FlatGrid, Product, WarpedGrid2D, build_manifold
from harmlab.solvers import SeparableSolver, SolverError, direct_solve, pcg, thomas_batched


def test_pcg_matches_dense():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((30, 30))
    A = sp.csr_matrix(M @ M.T + 30 * np.eye(30))
    b = rng.standard_normal(30)
    res = pcg(A, b, tol=1e-13)
    np.testing.assert_allclose(res.x, np.linalg.solve(A.toarray(), b), rtol=1e-10)
    assert res.residual <= 1e-13


def test_pcg_zero_rhs_and_nonconvergence():
    A = sp.identity(5, format="csr") * 2.0
    assert pcg(A, np.zeros(5)).iterations == 0
    M = np.diag(np.linspace(1, 1e6, 200))
    with pytest.raises(SolverError):
        pcg(sp.csr_matrix(M + 0.1 * np.ones((200, 200))), np.ones(200), tol=1e-15, maxiter=2)


def test_thomas_batched():
    rng = np.random.default_rng(2)
    n, batch = 12, 4
    lower = rng.uniform(-1, 0, (n, batch))
    upper = rng.uniform(-1, 0, (n, batch))
    diag = 3.0 + rng.uniform(0, 1, (n, batch))
    rhs = rng.standard_normal((n, batch))
    x = thomas_batched(lower, diag, upper, rhs)
    for k in range(batch):
        T = np.diag(diag[:, k]) + np.diag(lower[1:, k], -1) + np.diag(upper[:-1, k], 1)
        np.testing.assert_allclose(T @ x[:, k], rhs[:, k], atol=1e-12)


@pytest.mark.parametrize("spec", [
    FlatGrid(2, 3.0, 0.5),
    FlatGrid(3, 2.0, 0.5),
    WarpedGrid2D("capped_cylinder", 6.0, 24, 16),
    Cone2D(0.7, 6.0, 24, 16),
    WarpedGrid2D("cylinder", 3.0, 12, 8),
    Product(WarpedGrid2D("capped_cylinder", 6.0, 12, 8), 1, 3.0, 0.5),
], ids=lambda s: s.kind + s.profile)
def test_separable_solver_matches_direct(spec):
    man = build_manifold(spec, check_scale=False)
    y = np.random.default_rng(3).standard_normal(man.V)
    x = SeparableSolver(man).solve(y, 1.0, 0.3)
    np.testing.assert_allclose(x, direct_solve(man, y, 1.0, 0.3), rtol=1e-9, atol=1e-11)
