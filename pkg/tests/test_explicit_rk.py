import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import truncated_exp
from rkcontract.explicit_rk import (NotCertifiable, default_h_grid, explicit_lipschitz_bound,
                                    explicit_step, rho_sweep, write_sweep_csv)
from rkcontract.fields import VectorField, make_rng
from rkcontract.harness import builtin_system, empirical_contraction_factor, make_stepper
from rkcontract.norms import NormSpec, induced_matrix_norm
from rkcontract.tableau import EXPLICIT_NAMES, catalog_lookup, make_tableau

NEG = VectorField(1, lambda t, x: -x)


def test_forward_euler_collapse():
    r = explicit_lipschitz_bound(catalog_lookup("forward_euler"), 0.25, 1, 2)
    assert r.rho == pytest.approx(math.sqrt(0.75), abs=1e-12)
    assert r.stage_rhos.tolist() == [1.0]


def test_heun2_two_stage_recursion():
    q = math.sqrt(0.75)
    r = explicit_lipschitz_bound(catalog_lookup("heun2"), 0.25, 1, 2)
    assert r.stage_rhos.tolist() == pytest.approx([1.0, q])
    assert r.rho == pytest.approx(0.5 * q * (1 + q), abs=1e-12)
    assert r.rho == pytest.approx(0.8080127018922, abs=1e-12)


@pytest.mark.parametrize("name", EXPLICIT_NAMES)
@pytest.mark.parametrize("form", ["basic", "corrected"])
@pytest.mark.parametrize("bound", ["l2", "general"])
def test_small_step_limit(name, form, bound):
    r = explicit_lipschitz_bound(catalog_lookup(name), 1e-10, 1, 2, bound, form)
    assert abs(r.rho - 1) < 1e-6 and r.rho >= 0
    assert r.stage_rhos[0] == 1.0


@pytest.mark.parametrize("h", [0.1, 0.4, 0.9])
def test_heun2_scaled_identity_collapse(h):
    lam = 1.5
    q = abs(1 - h * lam)
    r = explicit_lipschitz_bound(catalog_lookup("heun2"), h, lam, lam)
    assert r.rho == pytest.approx(0.5 * q * (1 + q), abs=1e-12)


def test_basic_form_underestimates_heun2():
    # f = -x, h = 0.5: the true step factor is 1 - h + h^2/2 = 0.625
    T = catalog_lookup("heun2")
    true = abs(explicit_step(T, NEG, 0.0, np.array([1.0]), 0.5)[0])
    assert true == pytest.approx(0.625)
    assert explicit_lipschitz_bound(T, 0.5, 1, 1, form="basic").rho == pytest.approx(0.375)
    assert explicit_lipschitz_bound(T, 0.5, 1, 1, form="corrected").rho >= true


@pytest.mark.parametrize("name", EXPLICIT_NAMES)
def test_corrected_form_dominates_linear_systems(name):
    T = catalog_lookup(name)
    rng = make_rng(11)
    for _ in range(100):
        B = rng.normal(size=(2, 2))
        B = 0.5 * (B - B.T) - rng.uniform(0.2, 2) * np.eye(2)
        N = NormSpec.l2()
        ell = induced_matrix_norm(B, N)
        lam = -np.linalg.eigvalsh(0.5 * (B + B.T))[-1]
        h = rng.uniform(0.01, 1.5)
        f = VectorField(2, lambda t, x, B=B: x @ B.T)
        M = np.stack([explicit_step(T, f, 0.0, e, h) for e in np.eye(2)], axis=1)
        actual = induced_matrix_norm(M, N)
        for bound in ("l2", "general"):
            rho = explicit_lipschitz_bound(T, h, lam, ell, bound, "corrected").rho
            assert actual <= rho + 1e-12


def test_general_bound_pluggable():
    T = catalog_lookup("rk4_classic")
    r = explicit_lipschitz_bound(T, 0.3, 1, 2, euler_bound=lambda hd, lam, ell: 1 + hd * ell)
    assert r.euler_bound_kind == "<lambda>" and r.rho > 0


def test_zero_row_and_zero_d():
    T = make_tableau([[0, 0, 0], [0, 0, 0], [1, -1, 0]], [0.5, 0, 0.5])
    with pytest.raises(NotCertifiable):
        explicit_lipschitz_bound(T, 0.1, 1, 2)
    T2 = make_tableau([[0, 0], [0, 0]], [0.5, 0.5])
    r = explicit_lipschitz_bound(T2, 0.25, 1, 2)
    assert r.stage_rhos.tolist() == [1.0, 1.0]
    assert r.rho == pytest.approx(math.sqrt(0.75))
    with pytest.raises(NotCertifiable):
        explicit_lipschitz_bound(make_tableau([[0, 0], [1, 0]], [1, -1]), 0.1, 1, 2)


@pytest.mark.parametrize("args", [(-0.1, 1, 2), (0.1, 0, 2), (0.1, 2, 1)])
def test_parameter_errors(args):
    with pytest.raises(ValueError):
        explicit_lipschitz_bound(catalog_lookup("heun2"), *args)


def test_implicit_rejected():
    with pytest.raises(ValueError):
        explicit_lipschitz_bound(catalog_lookup("implicit_euler"), 0.1, 1, 2)


def test_step_examples():
    x = np.array([1.0])
    assert explicit_step(catalog_lookup("forward_euler"), NEG, 0, x, 0.1)[0] == pytest.approx(0.9)
    rk4 = explicit_step(catalog_lookup("rk4_classic"), NEG, 0, x, 0.1)[0]
    assert rk4 == pytest.approx(truncated_exp(-0.1, 4), abs=1e-15)
    assert rk4 == pytest.approx(0.90483750, abs=1e-8)
    zero = VectorField(2, lambda t, x: np.zeros_like(x))
    assert np.array_equal(explicit_step(catalog_lookup("ssprk5"), zero, 0, [1.0, 2.0], 0.3),
                          [1.0, 2.0])


def test_step_non_finite():
    bad = VectorField(1, lambda t, x: x / 0.0 * 0.0)
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError):
        explicit_step(catalog_lookup("heun2"), bad, 0, [1.0], 0.1)


def test_stage_time_conventions():
    tf = VectorField(1, lambda t, x: np.full_like(x, t))
    T = catalog_lookup("heun2")
    # stage times (0, 1) literally vs (0, h) scaled
    assert explicit_step(T, tf, 0, [0.0], 0.1)[0] == pytest.approx(0.05)
    assert explicit_step(T, tf, 0, [0.0], 0.1, "scaled_by_h")[0] == pytest.approx(0.005)


def _stability_polynomial(T, z):
    """``1 + sum_k z^k b^T A^{k-1} 1`` evaluated from the exact coefficients."""
    A = [list(r) for r in T.A_exact]
    v = [Fraction(1)] * T.s
    total = 1.0
    for k in range(1, T.s + 1):
        total += z**k * float(sum(bi * vi for bi, vi in zip(T.b_exact, v)))
        v = [sum(A[i][j] * v[j] for j in range(T.s)) for i in range(T.s)]
    return total


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(EXPLICIT_NAMES), st.floats(0.01, 1.0), st.floats(0.1, 3.0))
def test_step_on_linear_problem_is_stability_polynomial(name, h, lam):
    T = catalog_lookup(name)
    f = VectorField(1, lambda t, x: -lam * x)
    got = explicit_step(T, f, 0, [1.0], h)[0]
    assert got == pytest.approx(_stability_polynomial(T, -lam * h), rel=1e-12, abs=1e-14)
    if name != "ssprk5":
        order = {"forward_euler": 1, "heun2": 2, "heun3": 3, "rk4_classic": 4}[name]
        assert got == pytest.approx(truncated_exp(-lam * h, order), rel=1e-12, abs=1e-14)


def test_ssprk5_catalog_weights_are_first_order():
    # the stored weights give b^T c = 1/4, so only the consistency condition holds
    T = catalog_lookup("ssprk5")
    assert sum(T.b_exact) == 1
    assert sum(b * c for b, c in zip(T.b_exact, T.c_exact)) == Fraction(1, 4)


def test_sweep_rows_and_csv():
    rows = rho_sweep(catalog_lookup("heun2"), 1, 2, h_grid=[0.25, 0.5, 1.0])
    assert [r.certified for r in rows] == [True, False, False]
    text = write_sweep_csv(rows)
    assert text.splitlines()[0] == "method,h,rho,certified"
    assert text.splitlines()[1].startswith("heun2,0.25,0.808012701892")


def test_sweep_flags_failures():
    T = make_tableau([[0, 0, 0], [0, 0, 0], [1, -1, 0]], [0.5, 0, 0.5])
    rows = rho_sweep(T, 1, 2, h_grid=[0.1])
    assert not rows[0].certified and math.isnan(rows[0].rho) and rows[0].note


@pytest.mark.parametrize("grid", [[0.0], [], [0.1, -0.1]])
def test_sweep_rejects_bad_grid(grid):
    with pytest.raises(ValueError):
        rho_sweep(catalog_lookup("heun2"), 1, 2, h_grid=grid)


def test_default_grid():
    g = default_h_grid()
    assert g.size == 1000 and g[0] == pytest.approx(1e-3) and g[-1] == 1.0
    assert g[249] == 0.25


@pytest.mark.parametrize("lam,ell", [(1.0, 2.0), (2.0, 2.0)])
def test_every_method_dips_below_one(lam, ell):
    for m in EXPLICIT_NAMES:
        rows = rho_sweep(catalog_lookup(m), lam, ell, h_grid=default_h_grid())
        assert min(r.rho for r in rows) < 1


def test_rk4_rotation_example():
    sys = builtin_system("linear_rot", 1, 2)
    T = catalog_lookup("rk4_classic")
    rho = explicit_lipschitz_bound(T, 0.1, 1, 2).rho
    rep = empirical_contraction_factor(make_stepper(T, sys.field, 0.1), sys, NormSpec.l2(),
                                       pairs=1000, seed=1, h=0.1, certified_rho=rho)
    assert rep.sound
