from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate

from harmlab.fields import analytic_field
from harmlab.harmonic import VectorMap
from harmlab.heat import heat_evolve
from harmlab.manifold import Cone2D, FlatGrid, WarpedGrid2D, build_manifold
from harmlab.pullback import transform_map
from harmlab.verify import (
    check_energy_monotonicity, check_heat_limit, check_identity_chain, check_li_identity, check_max_principle,
    check_sigma_conjecture_probe,
)
from harmlab.verify.common import masked_ball_average
from harmlab.verify.report import EXPLORATORY, FAIL, NEGATIVE_CONTROL_PASS, PASS, UNTRUSTED

RHO = [2.0, 4.0, 6.0]
T = [1.0, 2.0, 3.0]


@pytest.fixture(scope="module")
def flat_case():
    man = build_manifold(FlatGrid(2, 20.0, 0.5))
    u = analytic_field(man, "linear", {"A": np.array([[1.0, 1.0], [0.0, 1.0]])})
    run = heat_evolve(man, sorted(set(T + [3 * t for t in T])))
    return man, u, run


# ---------------------------------------------------------------------------
# Equality case: the linear map


def test_flat_li_identity(flat_case):
    man, u, run = flat_case
    rep = check_li_identity(man, u, RHO, T, run=run)
    assert rep.verdict == PASS
    for a in range(2):
        sup = rep.target[a]
        np.testing.assert_allclose(rep.series[f"ball_{a}"]["measured"], sup, atol=1e-8)
        np.testing.assert_allclose(rep.series[f"heat_{a}"]["measured"], sup, atol=1e-8)
    assert rep.target == pytest.approx([2.0, 1.0])


def test_flat_max_principle(flat_case):
    man, u, _ = flat_case
    rep = check_max_principle(man, u, RHO)
    assert rep.verdict == PASS
    np.testing.assert_allclose(rep.measured, 1.0, atol=1e-8)
    np.testing.assert_allclose(rep.series["gap"]["measured"], 0.0, atol=1e-12)
    assert rep.target == pytest.approx(1.0)


def test_flat_heat_limit(flat_case):
    man, u, run = flat_case
    rep = check_heat_limit(man, u, T, run=run)
    assert rep.verdict == PASS
    np.testing.assert_allclose(rep.measured, 1.0, atol=1e-8)
    np.testing.assert_allclose(rep.series["weighted_hessian"]["measured"], 0.0, atol=1e-10)


def test_flat_identity_chain(flat_case):
    man, u, run = flat_case
    rep = check_identity_chain(man, u, RHO, T, run=run)
    assert rep.verdict == PASS
    for key in ("ball_limit", "heat_limit", "sup"):
        assert rep.fit[key] == pytest.approx(1.0, abs=1e-8)


def test_flat_energy_monotonicity(flat_case):
    man, u, _ = flat_case
    rep = check_energy_monotonicity(man, u, [(0.5, 1.0), (1.0, 2.0)])
    assert rep.verdict == PASS
    np.testing.assert_allclose(rep.series["lhs"]["measured"], 0.0, atol=1e-9)
    np.testing.assert_allclose(rep.series["rhs"]["measured"], 0.0, atol=1e-9)
    with pytest.raises(ValueError):
        check_energy_monotonicity(man, u, [(2.0, 1.0)])


def test_untrusted_scales(flat_case):
    man, u, run = flat_case
    assert check_max_principle(man, u, [4.0, 8.0, 19.0]).verdict == UNTRUSTED


def test_trivial_map_rejected(flat2):
    zero = VectorMap.analytic(flat2, np.zeros((2, flat2.V)))
    with pytest.raises(ValueError):
        check_max_principle(flat2, zero, RHO)
    with pytest.raises(TypeError):
        check_max_principle(flat2, np.zeros(flat2.V), RHO)


# ---------------------------------------------------------------------------
# Bounded subharmonic branch


def _flat3_ball_oracle(rho):
    # avg over B(rho) in R^3 of max(0, 1 - 1/r)
    return (3 / rho**3) * ((rho**3 - 1) / 3 - (rho**2 - 1) / 2)


def test_bounded_subharmonic_ball_average_flat3():
    man = build_manifold(FlatGrid(3, 12.0, 0.5))
    f = analytic_field(man, "bounded_subharmonic")
    avgs = [masked_ball_average(man, f, np.ones(man.V, dtype=bool), r) for r in (2.0, 4.0, 8.0)]
    np.testing.assert_allclose(avgs, [_flat3_ball_oracle(r) for r in (2.0, 4.0, 8.0)], rtol=0.03)
    assert np.all(np.diff(avgs) > 0)
    # the oracle deficit at rho = 40 and its trend
    assert 1 - _flat3_ball_oracle(40.0) <= 0.08
    assert 1 - _flat3_ball_oracle(80.0) < 1 - _flat3_ball_oracle(40.0)


@pytest.fixture(scope="module")
def cone_case():
    man = build_manifold(Cone2D(0.7, 40.0, 160, 192))
    return man, analytic_field(man, "bounded_subharmonic")


def test_cone_li_branch(cone_case):
    # on the cone the ball average of max(0, 1 - 1/r) is 1 - 2/rho + 1/rho^2
    man, f = cone_case
    rep = check_li_identity(man, f, [8.0, 16.0, 32.0], [25.0, 50.0, 100.0], sup=1.0)
    oracle = [1 - 2 / r + 1 / r**2 for r in (8.0, 16.0, 32.0)]
    np.testing.assert_allclose(rep.measured, oracle, rtol=0.01)
    fit = rep.fit["component_0"]
    assert fit["ball_limit"] == pytest.approx(1.0, rel=0.03)
    assert fit["heat_limit"] == pytest.approx(1.0, rel=0.03)
    assert rep.verdict == PASS


def _cap_ball_oracle(rho):
    f = lambda r: 1 - 1 / r if r > 1 else 0.0  # noqa: E731
    dA = lambda r: 2 * np.pi * (np.sin(r) if r < np.pi / 2 else 1.0)  # noqa: E731
    num = integrate.quad(lambda r: f(r) * dA(r), 0, rho, points=[1.0, np.pi / 2], limit=200)[0]
    den = integrate.quad(dA, 0, rho, points=[np.pi / 2])[0]
    return num / den


def test_capped_cylinder_li_branch():
    man = build_manifold(WarpedGrid2D("capped_cylinder", 16.0, 128, 32))
    f = analytic_field(man, "bounded_subharmonic")
    rep = check_identity_chain(man, f, [2.0, 4.0, 8.0], [2.0, 4.0, 8.0], sup=1.0)
    # whole-cell balls shift small-radius averages by about one ring of cells
    np.testing.assert_allclose(rep.measured, [_cap_ball_oracle(r) for r in (2.0, 4.0, 8.0)], atol=0.015)
    # ball and heat limits agree with each other; their distance to the sup carries the
    # ln(rho)/rho error of linear volume growth, which three-point extrapolation overshoots
    assert abs(rep.fit["ball_limit"] - rep.fit["heat_limit"]) < 0.05


# ---------------------------------------------------------------------------
# Negative controls


def test_superlinear_cone_max_principle_control():
    man = build_manifold(Cone2D(0.7, 16.0, 64, 64))
    u = analytic_field(man, "cone_harmonic", {"k": 1, "vector": True})
    rep = check_max_principle(man, u, [1.0, 2.0, 4.0], control=True)
    assert rep.fit["growth_divergent"]
    assert rep.verdict == NEGATIVE_CONTROL_PASS
    assert np.all(np.diff(rep.measured) > 0)


def test_saddle_energy_monotonicity_control(saddle):
    u = VectorMap.analytic(saddle, analytic_field(saddle, "saddle_harmonic")[None])
    rep = check_energy_monotonicity(saddle, u, [(0.05, 0.1), (0.1, 0.2)], control=True)
    assert rep.fit["min_slack"] < 0
    assert rep.verdict == NEGATIVE_CONTROL_PASS


def test_saddle_heat_limit_flagged(saddle):
    u = VectorMap.analytic(saddle, analytic_field(saddle, "saddle_harmonic")[None])
    rep = check_heat_limit(saddle, u, [0.02, 0.04, 0.08])
    assert rep.verdict in (FAIL, UNTRUSTED)


# ---------------------------------------------------------------------------
# sigma_k probe


def test_sigma_probe_identity_r3():
    man = build_manifold(FlatGrid(3, 8.0, 0.5))
    u = analytic_field(man, "linear", {"A": np.eye(3)})
    rep = check_sigma_conjecture_probe(man, u, 2, [1.0, 2.0, 3.0], [0.25, 0.5, 1.0])
    assert rep.verdict == EXPLORATORY
    for key in ("ball_limit", "heat_limit", "sup"):
        assert rep.fit[key] == pytest.approx(3.0, abs=1e-9)
    a = np.deg2rad(20)
    R = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    rot = check_sigma_conjecture_probe(man, transform_map(u, R), 2, [1.0, 2.0, 3.0], [0.25, 0.5, 1.0])
    np.testing.assert_allclose(rot.measured, rep.measured, atol=1e-10)
    with pytest.raises(ValueError):
        check_sigma_conjecture_probe(man, u, 3, [1.0], [0.25])
