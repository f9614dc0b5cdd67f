from __future__ import annotations

from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmlab.fields import analytic_field, gradient
from harmlab.heat import heat_evolve
from harmlab.harmonic import product_approximant
from harmlab.manifold import FlatGrid, Product, TruncationError, WarpedGrid2D, build_manifold
from harmlab.pullback import (
    NumericalFault, Rotation, average_gram, elementary_symmetric, gram_field, hadamard_gap, jacobi_eigh,
    newton_residual, so_diagonalize, splitting_error, transform_map,
)


@pytest.fixture(scope="module")
def product_case():
    fspec = WarpedGrid2D("capped_cylinder", 10.0, 40, 16)
    man = build_manifold(Product(fspec, 1, 10.0, 0.5))
    return man, product_approximant(man, build_manifold(fspec))


def _rot(deg):
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


# ---------------------------------------------------------------------------
# Gram fields


def test_identity_gram(flat3):
    u = analytic_field(flat3, "linear", {"A": np.eye(3)})
    g = gram_field(flat3, u)
    m = g.mask
    np.testing.assert_allclose(g.E[m], np.broadcast_to(np.eye(3), g.E[m].shape), atol=1e-12)
    np.testing.assert_allclose(g.det[m], 1.0, atol=1e-12)
    for k in range(4):
        np.testing.assert_allclose(g.sigma[k][m], comb(3, k), atol=1e-12)


def test_sl2_image_of_identity(flat2, flat_linear):
    g = gram_field(flat2, flat_linear)
    m = g.mask
    np.testing.assert_allclose(g.E[m], np.broadcast_to([[2.0, 1.0], [1.0, 1.0]], g.E[m].shape), atol=1e-12)
    np.testing.assert_allclose(g.det[m], 1.0, atol=1e-12)
    assert g.summary()["det"]["max"] == pytest.approx(1.0)
    assert hadamard_gap(g) >= -1e-12


def test_product_gram_is_block_diagonal(product_case):
    man, u = product_case
    g = gram_field(man, u)
    m = g.mask
    np.testing.assert_allclose(g.E[m, 1, 1], 1.0, atol=1e-12)
    np.testing.assert_allclose(g.E[m, 0, 1], 0.0, atol=1e-12)
    e1 = gradient(man, u.U[0]).norm_sq()
    np.testing.assert_allclose(g.det[m], e1[m], rtol=1e-10, atol=1e-14)
    cap = m & (man.coords["s"] < np.pi / 2)
    assert np.ptp(g.det[cap]) > 0.1 * np.max(g.det[cap]) > 0


# ---------------------------------------------------------------------------
# SL(n) and SO(n) action


def test_unimodular_invariance(flat2, flat_linear):
    base = gram_field(flat2, flat_linear)
    g = gram_field(flat2, transform_map(flat_linear, np.diag([2.0, 0.5])))
    np.testing.assert_allclose(g.det, base.det, atol=1e-12)


def test_rotation_invariance_of_sigma(product_case):
    man, u = product_case
    base = gram_field(man, u)
    g = gram_field(man, transform_map(u, _rot(30)))
    np.testing.assert_allclose(g.sigma, base.sigma, atol=1e-12)
    R = _rot(30)
    np.testing.assert_allclose(g.E, R @ base.E @ R.T, atol=1e-12)


def test_det_scales_with_square_of_det_A(product_case):
    man, u = product_case
    base = gram_field(man, u)
    g = gram_field(man, transform_map(u, 2 * np.eye(2)))
    np.testing.assert_allclose(g.det, 16 * base.det, rtol=1e-12, atol=1e-14)


def test_singular_transform_rejected(flat2, flat_linear):
    with pytest.raises(ValueError):
        transform_map(flat_linear, np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(ValueError):
        transform_map(flat_linear, np.eye(3))


# ---------------------------------------------------------------------------
# Averages


def test_average_gram_constant_field(flat2, flat_linear):
    g = gram_field(flat2, flat_linear)
    avg = average_gram(g, "ball", 5.0)
    np.testing.assert_allclose(avg.matrix, [[2.0, 1.0], [1.0, 1.0]], atol=1e-10)
    run = heat_evolve(flat2, [1.0])
    heat = average_gram(g, "heat", 1.0, run=run)
    np.testing.assert_allclose(heat.matrix, [[2.0, 1.0], [1.0, 1.0]], atol=1e-8)
    with pytest.raises(TruncationError):
        average_gram(g, "ball", 9.9)
    with pytest.raises(ValueError):
        average_gram(g, "heat", 1.0)
    with pytest.raises(ValueError):
        average_gram(g, "cube", 1.0)


def test_average_gram_product_heat(product_case):
    man, u = product_case
    g = gram_field(man, u)
    run = heat_evolve(man, [4.0])
    avg = average_gram(g, "heat", 4.0, run=run)
    assert abs(avg.matrix[0, 1]) <= 1e-8
    e1 = gradient(man, u.U[0]).norm_sq()
    wt = man.w * run.at(4.0).H * g.mask
    assert avg.matrix[0, 0] == pytest.approx(float(wt @ e1), rel=1e-12)
    assert avg.matrix[1, 1] == pytest.approx(float(wt.sum()), rel=1e-12)


# ---------------------------------------------------------------------------
# Jacobi and SO(n) diagonalisation


def test_so_diagonalize_identity():
    rot, lam = so_diagonalize(np.eye(3))
    np.testing.assert_array_equal(rot.A, np.eye(3))
    np.testing.assert_array_equal(lam, 1.0)


def test_so_diagonalize_golden():
    omega = np.array([[2.0, 1.0], [1.0, 1.0]])
    rot, lam = so_diagonalize(omega)
    np.testing.assert_allclose(lam, [(3 + np.sqrt(5)) / 2, (3 - np.sqrt(5)) / 2], atol=1e-14)
    np.testing.assert_allclose(rot.A.T @ np.diag(lam) @ rot.A, omega, atol=1e-12)
    ref = np.linalg.eigh(omega)[1][:, ::-1].T
    np.testing.assert_allclose(np.abs(rot.A), np.abs(ref), atol=1e-12)


def test_so_diagonalize_repeated():
    rot, lam = so_diagonalize(2 * np.eye(2))
    rot.check()
    np.testing.assert_allclose(rot.A @ (2 * np.eye(2)) @ rot.A.T, np.diag(lam), atol=1e-12)


def test_rotation_check_rejects_reflection():
    with pytest.raises(NumericalFault):
        Rotation(np.diag([1.0, -1.0])).check()


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10**6))
def test_so_diagonalize_random(n, seed):
    M = np.random.default_rng(seed).standard_normal((n, n))
    S = M @ M.T
    rot, lam = so_diagonalize(S)
    A = rot.A
    assert np.max(np.abs(A.T @ A - np.eye(n))) <= 1e-12
    assert abs(np.linalg.det(A) - 1.0) <= 1e-12
    D = A @ S @ A.T
    scale = np.abs(S).max()
    assert np.max(np.abs(D - np.diag(np.diag(D)))) <= 1e-12 * scale
    assert np.all(np.diff(lam) <= 1e-12 * scale)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=4))
def test_elementary_symmetric_matches_polynomial(eigs):
    eigs = np.array(eigs)
    e = elementary_symmetric(eigs)
    coeffs = np.poly(eigs)
    signs = (-1.0) ** np.arange(eigs.size + 1)
    np.testing.assert_allclose(e, signs * coeffs, rtol=1e-10, atol=1e-10)
    E = np.diag(eigs)[None]
    assert newton_residual(E, elementary_symmetric(eigs[None])) <= 1e-10


def test_jacobi_eigh_reconstructs():
    S = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]])
    lam, V = jacobi_eigh(S)
    np.testing.assert_allclose(V @ np.diag(lam) @ V.T, S, atol=1e-13)
    np.testing.assert_allclose(np.sort(lam), np.linalg.eigvalsh(S), atol=1e-13)
    lam0, V0 = jacobi_eigh(np.zeros((2, 2)))
    np.testing.assert_array_equal(lam0, 0.0)


# ---------------------------------------------------------------------------
# Splitting error


def test_splitting_error_flat_linear(flat2, flat_linear):
    for rho in (1.0, 2.0, 3.0):
        assert splitting_error(flat2, flat_linear, "ball", rho) <= 1e-10
    with pytest.raises(TruncationError):
        splitting_error(flat2, flat_linear, "ball", 6.0)
    with pytest.raises(ValueError):
        splitting_error(flat2, flat_linear, "cube", 1.0)


def test_splitting_error_product_positive(product_case):
    man, u = product_case
    # the Dirichlet approximant carries its Hessian near the truncation boundary, so the
    # ladder values grow with rho here; the decreasing trend belongs to the theorem-trend
    # acceptance criterion, which records that failure
    vals = [splitting_error(man, u, "ball", rho) for rho in (1.0, 2.0, 4.0)]
    assert all(np.isfinite(v) and v > 0 for v in vals)
    run = heat_evolve(man, [1.0])
    assert splitting_error(man, u, "heat", 1.0, run=run) > 0
