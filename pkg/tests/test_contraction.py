import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkcontract.contraction import (AssumptionViolated, certify, max_certified_step_l1, rho_l1,
                                    rho_l2, rho_linf)
from rkcontract.fields import Certificate
from rkcontract.implicit_rk import assert_well_defined
from rkcontract.norms import NormSpec
from rkcontract.tableau import CATALOG_NAMES, catalog_lookup, make_tableau

IE = catalog_lookup("implicit_euler")
IM = catalog_lookup("implicit_midpoint")

L2_IDS = {"A1_well_defined", "A2_rate", "A3_lipschitz", "A4_M_psd", "A4_b_nonneg",
          "b_positive", "h_positive"}
L1_IDS = {"A1_well_defined", "A2_rate", "A3_lipschitz", "A4_diag_nonneg", "A4_v_nonneg",
          "A4_rate_gap", "A5_step_rate", "A5_step_component", "h_positive"}


def test_rho_l2_examples():
    c = rho_l2(IM, 1.0, 1.0, 2.0)
    assert c.rho == pytest.approx(math.sqrt(0.5), abs=1e-12) and c.certified
    assert rho_l2(IE, 0.5, 1.0, 2.0).rho == pytest.approx(math.sqrt(0.75), abs=1e-12)
    fe = rho_l2(catalog_lookup("forward_euler"), 0.1, 1.0, 2.0)
    assert not fe.certified and "A4_M_psd" in fe.failing()


def test_rho_l2_midpoint_minimum_at_two_over_ell():
    grid = np.linspace(0.01, 4, 400)
    rhos = [rho_l2(IM, h, 1.0, 2.0).rho for h in grid]
    assert abs(grid[int(np.argmin(rhos))] - 1.0) <= grid[1] - grid[0]
    assert min(rhos) >= math.sqrt(1 - 1 / 2) - 1e-12


def test_rho_l2_zero_weight_uncertifiable():
    T = make_tableau([["1/2", 0], ["1/2", "1/2"]], [1, 0])
    c = rho_l2(T, 0.5, 1.0, 2.0)
    assert not c.certified and "b_positive" in c.failing()


def test_rho_l1_implicit_euler_exact():
    for h in (0.5, 1.0, 2.0, 10.0):
        c = rho_l1(IE, h, 1.0, 2.0)
        assert c.rho == 1.0 / (1.0 + h) and c.certified


def test_rho_l1_strictly_decreasing():
    rhos = [rho_l1(IE, h, 1.0, 2.0).rho for h in np.linspace(0.01, 20, 200)]
    assert np.all(np.diff(rhos) < 0)


def test_rho_l1_midpoint():
    c = rho_l1(IM, 1.0, 1.0, 2.0)
    assert c.rho == pytest.approx(1 / 3) and c.certified
    assert rho_l1(IM, 1.5, 1.0, 2.0).failing() == ["A5_step_component"]
    assert set(rho_l1(IM, 2.5, 1.0, 2.0).failing()) == {"A5_step_rate", "A5_step_component"}


def test_component_default_flagged():
    assert rho_l1(IM, 1.0, 1.0, 2.0).details["component_lips_defaulted"]
    assert not rho_l1(IM, 1.0, 1.0, 2.0, comp_lips=[1.0]).details["component_lips_defaulted"]


@pytest.mark.parametrize("name", ["implicit_euler", "implicit_midpoint"])
@pytest.mark.parametrize("h", [0.1, 0.7, 1.0, 3.0])
def test_one_stage_l1_linf_agree(name, h):
    T = catalog_lookup(name)
    a = rho_l1(T, h, 1.3, 2.0)
    b = rho_linf(T, h, 1.3, 2.0)
    assert a.rho == b.rho
    assert [x.satisfied for x in a.assumptions] == [x.satisfied for x in b.assumptions]


def test_linf_records_both_patterns():
    T = make_tableau([["1/2", "1/4"], [0, "1/4"]], ["1/2", "1/2"])
    c = rho_linf(T, 0.1, 1.0, 2.0)
    assert c.details["column_pattern"] == pytest.approx(0.25)
    assert c.details["row_pattern"] == pytest.approx(0.0)
    assert c.details["denominator"] == pytest.approx(1 - 0.1 * c.details["row_pattern"])


def test_assumption_ids_unique_and_complete():
    for name in CATALOG_NAMES:
        T = catalog_lookup(name)
        c2 = rho_l2(T, 0.5, 1.0, 2.0)
        ids = [a.id for a in c2.assumptions]
        assert len(ids) == len(set(ids)) and L2_IDS <= set(ids)
        for fn in (rho_l1, rho_linf):
            c = fn(T, 0.5, 1.0, 2.0)
            ids = [a.id for a in c.assumptions]
            assert len(ids) == len(set(ids)) and L1_IDS <= set(ids)


def test_explicit_methods():
    for name in ("forward_euler", "heun2", "rk4_classic"):
        assert not rho_l2(catalog_lookup(name), 0.1, 1, 2).certified
    assert not rho_l1(catalog_lookup("heun2"), 0.1, 1, 2).certified
    # forward Euler in l1: ||I + hJ||_1 = 1 + h mu_1(J) once h |j_ii| <= 1
    fe = rho_l1(catalog_lookup("forward_euler"), 0.1, 1, 2)
    assert fe.certified and fe.rho == pytest.approx(0.9)
    assert not rho_l1(catalog_lookup("forward_euler"), 0.6, 1, 2).certified


def test_max_step():
    assert max_certified_step_l1(IE, 1.0, 2.0) == math.inf
    assert max_certified_step_l1(IM, 1.0, 2.0) == pytest.approx(1.0)
    assert max_certified_step_l1(IM, 1.0, 2.0, comp_lips=[4.0]) == pytest.approx(0.5)
    with pytest.raises(AssumptionViolated):
        max_certified_step_l1(catalog_lookup("heun2"), 1.0, 2.0)


def test_well_definedness_embedded_and_overridable():
    c = rho_l1(IE, 1.0, 1.0, 2.0)
    assert c.well_definedness.certified
    bad = assert_well_defined(1.0, -0.5)
    c = rho_l1(IE, 1.0, 1.0, 2.0, well_defined=bad)
    assert not c.certified and "A1_well_defined" in c.failing()
    assert c.as_dict()["wd.asserted"]


def test_rate_assumptions():
    c = rho_l2(IM, 1.0, -0.5, 2.0)
    assert "A2_rate" in c.failing() and not c.certified


def test_dispatch():
    cert = Certificate(2.0, -1.0)
    assert certify(IM, NormSpec.l2(), 1.0, cert).theorem == "thm3_l2"
    assert certify(IM, NormSpec.l1([1, 2]), 1.0, cert).theorem == "thm4_l1"
    assert certify(IM, NormSpec.linf(), 1.0, cert).theorem == "thm5_linf"
    with pytest.raises(ValueError):
        rho_l2(IM, 1.0, 1.0, 2.0, norm=NormSpec.l1())


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 5.0), st.floats(0.1, 2.0), st.floats(1.0, 3.0),
       st.sampled_from(["implicit_euler", "implicit_midpoint"]))
def test_certified_implies_unit_interval(h, lam, ratio, name):
    T = catalog_lookup(name)
    ell = lam * ratio
    for c in (rho_l2(T, h, lam, ell), rho_l1(T, h, lam, ell), rho_linf(T, h, lam, ell)):
        if c.certified:
            assert 0 <= c.rho < 1
            assert all(a.satisfied for a in c.assumptions)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 5.0), st.floats(0.1, 2.0), st.floats(1.0, 3.0))
def test_l2_factor_dominates_scalar_linear_maps(h, lam, ratio):
    # f = -mu x with mu in [lam, ell]: the exact step factors never exceed rho2
    ell = lam * ratio
    c_ie, c_im = rho_l2(IE, h, lam, ell), rho_l2(IM, h, lam, ell)
    for mu in np.linspace(lam, ell, 11):
        assert 1 / (1 + h * mu) <= c_ie.rho + 1e-12
        assert abs((1 - h * mu / 2) / (1 + h * mu / 2)) <= c_im.rho + 1e-12
