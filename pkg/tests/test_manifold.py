from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from harmlab.geodesic import fast_marching
from harmlab.manifold import (
    Cone2D, CurvatureError, FlatGrid, Product, RadialProfile, TruncationError, WarpedGrid2D, ball,
    build_manifold, distance_field, unit_ball_volume, volume_ratio_profile,
)
from harmlab.profiles import make_profile


def _symmetric_ok(man):
    K = man.K
    return abs(K - K.T).max() <= 1e-12 * abs(K).max()


# ---------------------------------------------------------------------------
# Invariants across the catalog

CATALOG = [
    FlatGrid(2, 4.0, 0.5),
    FlatGrid(3, 3.0, 0.5),
    RadialProfile(2, "capped_cylinder", 8.0, 0.1),
    WarpedGrid2D("capped_cylinder", 8.0, 32, 16),
    Cone2D(0.7, 8.0, 32, 32),
    Product(WarpedGrid2D("capped_cylinder", 8.0, 24, 12), 1, 4.0, 0.5),
]


@pytest.mark.parametrize("spec", CATALOG, ids=lambda s: s.kind)
def test_operator_invariants(spec):
    man = build_manifold(spec, check_scale=False)
    assert np.all(man.w > 0)
    assert _symmetric_ok(man)
    assert np.max(np.abs(man.apply_L(np.ones(man.V)))) <= 1e-10
    f = np.random.default_rng(0).standard_normal(man.V)
    assert f @ (man.K @ f) >= -1e-9 * abs(f) @ abs(man.K) @ abs(f)
    assert man.r[man.x0] == 0.0
    assert np.all(np.isfinite(man.r)) and np.all(man.r >= 0)


@pytest.mark.parametrize("spec", CATALOG[:2] + CATALOG[3:5], ids=lambda s: s.kind)
def test_ball_volumes_monotone(spec):
    man = build_manifold(spec, check_scale=False)
    vols = [ball(man, r).volume for r in np.linspace(0.5, 0.9 * man.R_max, 12)]
    assert np.all(np.diff(vols) >= 0)


def test_spec_hash_stable_and_distinct():
    a = FlatGrid(2, 4.0, 0.5)
    assert a.spec_hash == FlatGrid(2, 4.0, 0.5).spec_hash
    assert a.spec_hash != FlatGrid(2, 4.0, 0.25).spec_hash


def test_grid_round_trip(cap):
    f = np.arange(cap.V, dtype=float)
    assert np.array_equal(cap.from_grid(cap.to_grid(f)), f)


# ---------------------------------------------------------------------------
# Spectral examples


def test_flat_vertex_count_and_dirichlet_gap():
    man = build_manifold(FlatGrid(2, 10.0, 0.1))
    assert man.V == 201**2
    assert np.max(np.abs(man.apply_L(np.ones(man.V)))) == 0.0
    inner = np.flatnonzero(~man.boundary)
    K = man.K[inner][:, inner]
    W = man.w[inner]
    L = (K.multiply(1.0 / np.sqrt(W)[:, None])).multiply(1.0 / np.sqrt(W)[None, :]).tocsc()
    lam = spla.eigsh(L, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0]
    assert lam == pytest.approx(np.pi**2 / 200, rel=0.02)


def test_flat_stencil_interior():
    man = build_manifold(FlatGrid(2, 2.0, 0.5))
    f = np.zeros(man.V)
    g = man.to_grid(f)
    g[4, 4] = 1.0
    Lf = man.to_grid(man.apply_L(man.from_grid(g)))
    assert Lf[4, 4] == pytest.approx(4.0 / 0.25)
    assert Lf[3, 4] == pytest.approx(-1.0 / 0.25)
    assert Lf[3, 3] == 0.0


def _neumann_spectrum(man, k):
    W = man.w
    L = (man.K.multiply(1.0 / np.sqrt(W)[:, None])).multiply(1.0 / np.sqrt(W)[None, :]).tocsc()
    return np.sort(spla.eigsh(L, k=k, sigma=-1e-3, which="LM", return_eigenvectors=False))


def test_cone_a1_matches_flat_bessel_spectrum():
    # Neumann eigenvalues of the disc of radius 10: (j'_{n,1}/10)^2 for n = 1, 2 and j'_{0,1}
    man = build_manifold(Cone2D(1.0, 10.0, 80, 128))
    lam = _neumann_spectrum(man, 6)
    assert abs(lam[0]) < 1e-8
    oracle = [0.0338996, 0.0338996, 0.0932836, 0.0932836, 0.1468197]
    np.testing.assert_allclose(lam[1:], oracle, rtol=2e-3)


def test_capped_cylinder_curvature():
    spec = RadialProfile(2, "capped_cylinder", 40.0, 0.02)
    man = build_manifold(spec)
    assert man.certificate["ok"]
    prof = man.base.profile
    s_cap = np.linspace(0.01, np.pi / 2 - 0.01, 50)
    s_cyl = np.linspace(np.pi / 2 + 0.01, 40.0, 50)
    np.testing.assert_allclose(prof.gauss_curvature(s_cap), 1.0, atol=1e-6)
    np.testing.assert_allclose(prof.gauss_curvature(s_cyl), 0.0, atol=1e-6)


def test_positive_curvature_violation_rejected():
    with pytest.raises(CurvatureError):
        build_manifold(WarpedGrid2D("saddle", 2.0, 16, 16), check_scale=False)
    man = build_manifold(WarpedGrid2D("saddle", 2.0, 16, 16, negative_control=True), check_scale=False)
    assert man.negative_control


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 3.0))
def test_profile_derivatives_consistent(s):
    for prof in (make_profile("capped_cylinder"), make_profile("cone", a=0.7), make_profile("saddle")):
        d = 1e-5
        fd = (prof.f(s + d) - prof.f(s - d)) / (2 * d)
        assert float(prof.df(s)) == pytest.approx(float(fd), abs=1e-6)
        anti = (prof.F(s + d) - prof.F(s - d)) / (2 * d)
        assert float(anti) == pytest.approx(float(prof.f(s)), abs=1e-6)


# ---------------------------------------------------------------------------
# Distances


def test_flat_distance_is_euclidean(flat2):
    X = flat2.embedding()
    np.testing.assert_array_equal(flat2.r, np.sqrt(np.sum((X - X[:, [flat2.x0]]) ** 2, axis=0)))


def test_capped_cylinder_distance_from_tip(cap):
    assert np.max(np.abs(cap.r - cap.coords["s"])) == 0.0


def test_cone_unrolled_distance():
    a = 0.5
    man = build_manifold(Cone2D(a, 4.0, 64, 128))
    c = man.coords
    src = int(np.flatnonzero((np.abs(c["s"] - 1.0) < 1e-9) & (np.abs(c["theta"]) < 1e-9))[0])
    dst = np.flatnonzero((np.abs(c["s"] - 1.0) < 1e-9) & (np.abs(c["theta"] - np.pi) < 1e-9))
    d = distance_field(man, src)
    # theta runs over [0, 2 pi) on the cone of angle 2 pi a, so theta = pi is the intrinsic angle pi a
    assert d[dst[0]] == pytest.approx(2 * np.sin(np.pi * a / 2), abs=1e-9)
    fm = fast_marching(man.base, int(np.unravel_index(src, man.block_shape)[0]))
    assert fm[np.unravel_index(dst[0], man.block_shape)[0]] == pytest.approx(2 * np.sin(np.pi * a / 2),
                                                                               abs=2 * man.h)


def test_distance_is_lipschitz_along_edges(cap):
    coo = cap.K.tocoo()
    i, j = coo.row[coo.row != coo.col], coo.col[coo.row != coo.col]
    c = cap.coords
    ds = c["s"][i] - c["s"][j]
    dth = np.angle(np.exp(1j * (c["theta"][i] - c["theta"][j])))
    fbar = cap.base.profile.f(0.5 * (c["s"][i] + c["s"][j]))
    edge = np.sqrt(ds**2 + (fbar * dth) ** 2)
    tip = np.isin(i, cap.tip_vertices) | np.isin(j, cap.tip_vertices)
    assert np.all(np.abs(cap.r[i] - cap.r[j])[~tip] <= (1 + cap.h) * edge[~tip] + 1e-12)


# ---------------------------------------------------------------------------
# Balls and volume ratios


def test_flat_ball_area():
    man = build_manifold(FlatGrid(2, 10.0, 0.1))
    assert ball(man, 5.0).volume == pytest.approx(25 * np.pi, rel=0.02)


def test_capped_cylinder_ball_area():
    man = build_manifold(WarpedGrid2D("capped_cylinder", 12.0, 96, 64))
    exact = 2 * np.pi + 2 * np.pi * (10 - np.pi / 2)
    # discrete balls hold whole cells, so allow one ring of half-cells
    ring = 2 * np.pi * man.base.hs
    assert abs(ball(man, 10.0).volume - exact) <= ring


def test_cone_ball_area():
    a = 0.5
    man = build_manifold(Cone2D(a, 8.0, 128, 128))
    ring = 2 * np.pi * a * 4.0 * man.base.hs
    assert abs(ball(man, 4.0).volume - a * np.pi * 16) <= ring


def test_truncated_ball_flagged():
    man = build_manifold(FlatGrid(2, 4.0, 0.5))
    assert not ball(man, 3.9).trusted
    with pytest.raises(TruncationError):
        ball(man, 3.9, strict=True)


def test_volume_ratio_flat():
    man = build_manifold(FlatGrid(2, 20.0, 0.1))
    prof = volume_ratio_profile(man, [1, 2, 4, 8, 12])
    np.testing.assert_allclose(prof.ratio, 1.0, atol=0.02)
    assert prof.verdict == "PASS"


def test_volume_ratio_capped_cylinder(cap):
    prof = volume_ratio_profile(cap, [1, 2, 4, 8])
    assert prof.verdict == "PASS"
    assert np.all(np.diff(prof.ratio) < 0)
    # closed-form area 2 pi + 2 pi (rho - pi/2) beyond the cap: ratio decays like 2 / rho
    exact = (2 * np.pi + 2 * np.pi * (8.0 - np.pi / 2)) / (np.pi * 64)
    assert prof.ratio[-1] == pytest.approx(exact, rel=0.03)


def test_volume_ratio_cone():
    man = build_manifold(Cone2D(0.7, 16.0, 256, 192))
    prof = volume_ratio_profile(man, [4, 8, 12])
    np.testing.assert_allclose(prof.ratio, 0.7, rtol=0.02)
    assert prof.verdict == "PASS"


def test_unit_ball_volume():
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * np.pi / 3)
