from __future__ import annotations

import numpy as np
import pytest

from harmlab.fields import analytic_field
from harmlab.heat import heat_evolve
from harmlab.manifold import Cone2D, FlatGrid, build_manifold
from harmlab.verify.basics import (
    check_bochner, check_gaussian, check_growth, check_harnack, check_kernel_bounds, check_mass_conservation,
    check_semigroup, check_tail_mass, check_volume_ratio,
)
from harmlab.verify.report import FAIL, NEGATIVE_CONTROL_PASS, PASS, UNTRUSTED


@pytest.fixture(scope="module")
def flat_run():
    man = build_manifold(FlatGrid(2, 10.0, 0.1))
    return heat_evolve(man, [1.0, 2.0, 4.0])


def test_bochner_adapter_flat(flat2, flat_linear):
    fine = build_manifold(FlatGrid(2, 10.0, 0.25))
    u2 = analytic_field(fine, "linear", {"A": np.array([[1.0, 1.0], [0.0, 1.0]])})
    rep = check_bochner(flat2, flat_linear, refine=(fine, u2))
    assert rep.verdict == PASS
    # residual at roundoff, so the shrink factor is not demanded
    assert rep.measured[0] <= 1e-9
    assert rep.scales == [0.5, 0.25]


def test_bochner_adapter_saddle_control(saddle):
    u = analytic_field(saddle, "saddle_harmonic")
    assert check_bochner(saddle, u).verdict == FAIL
    assert check_bochner(saddle, u, control=True).verdict == NEGATIVE_CONTROL_PASS


def test_growth_adapter(flat2, flat_linear):
    rep = check_growth(flat2, flat_linear)
    assert rep.verdict == PASS
    assert rep.fit["exponent"] == pytest.approx(1.0, abs=0.05)
    cone = build_manifold(Cone2D(0.5, 16.0, 64, 64))
    u = analytic_field(cone, "cone_harmonic", {"vector": True})
    assert check_growth(cone, u).verdict == FAIL
    assert check_growth(cone, u, control=True).verdict == NEGATIVE_CONTROL_PASS


def test_mass_and_semigroup(flat_run):
    rep = check_mass_conservation(flat_run)
    assert rep.verdict == PASS
    assert max(rep.measured) <= 1e-9
    sg = check_semigroup(flat_run.man, 1.0, 1.0, run=flat_run)
    assert sg.verdict == PASS
    assert sg.measured[0] <= 1e-8
    assert "cross_lattice" in sg.details


def test_gaussian_adapter(flat_run):
    rep = check_gaussian(flat_run, [1.0, 2.0, 4.0])
    assert rep.verdict == PASS
    assert max(rep.measured) <= 0.02
    # sqrt(t) below 10 h is outside the trusted window
    early = heat_evolve(flat_run.man, [0.25])
    assert check_gaussian(early, [0.25]).verdict == UNTRUSTED


def test_gaussian_needs_flat(cap):
    run = heat_evolve(cap, [1.0])
    with pytest.raises(ValueError):
        check_gaussian(run, [1.0])


def test_harnack_adapter(flat_run):
    rep = check_harnack(flat_run, 1.0, 2.0)
    assert rep.verdict == PASS
    assert rep.constants["factor"] == pytest.approx(2.0 ** 1.5)


def test_volume_ratio_adapter(cap):
    rep = check_volume_ratio(cap, [1.0, 2.0, 4.0])
    assert rep.verdict == PASS
    assert np.all(np.diff(rep.measured) <= 0.03)
    assert check_volume_ratio(cap, [1.0, 11.9]).verdict == UNTRUSTED


def test_tail_mass_adapter(flat_run):
    rep = check_tail_mass(flat_run, 1.0, [2.0, 4.0])
    assert rep.verdict == PASS
    assert all(m <= p for m, p in zip(rep.measured, rep.target))
    assert rep.fit["decreasing"]


def test_kernel_bounds_adapter(flat_run):
    fine = heat_evolve(build_manifold(FlatGrid(2, 10.0, 0.05)), [1.0, 2.0, 4.0])
    rep = check_kernel_bounds(flat_run, 1.0, refine_run=fine)
    assert rep.verdict == PASS
    assert rep.constants["C2"] == pytest.approx(0.25, rel=0.05)
    assert rep.constants["C1"] == pytest.approx(4.0, rel=0.05)
    assert all(np.isfinite(rep.measured))
