from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkcontract.tableau import (CATALOG_NAMES, EXPLICIT_NAMES, TableauError,
                                catalog_lookup, derive, format_tableau, is_algebraically_stable,
                                load_tableau, make_tableau, parse_tableau)


def test_forward_euler_from_parts():
    T = make_tableau([[0]], [1], [0])
    assert T.s == 1 and T.is_explicit


def test_implicit_midpoint_from_parts():
    T = make_tableau([["1/2"]], [1], ["1/2"])
    assert not T.is_explicit
    assert T.A_exact == ((Fraction(1, 2),),)


@pytest.mark.parametrize("A,b,c", [
    ([[0, 0], [1, 0]], [1], None),
    ([[0, 0]], [1, 1], None),
    ([[0, 0], [1]], [0.5, 0.5], None),
    ([[0]], [1], [0, 0]),
])
def test_dimension_mismatch(A, b, c):
    with pytest.raises(TableauError):
        make_tableau(A, b, c)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), "x", None])
def test_non_finite_or_garbage_entry(bad):
    with pytest.raises(TableauError):
        make_tableau([[bad]], [1])


def test_rk4_weights():
    T = catalog_lookup("rk4_classic")
    assert T.s == 4
    assert T.b_exact == tuple(Fraction(v) for v in ("1/6", "1/3", "1/3", "1/6"))


def test_ssprk5_last_row():
    T = catalog_lookup("ssprk5")
    assert T.A_exact[4] == tuple(Fraction(v) for v in ("3/16", "-3/8", "3/8", "9/16", "0"))


def test_implicit_euler_coefficients():
    T = catalog_lookup("implicit_euler")
    assert T.A_exact == ((1,),) and T.b_exact == (1,)


def test_unknown_method():
    with pytest.raises(KeyError):
        catalog_lookup("rk45")


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_consistency(name):
    T = catalog_lookup(name)
    assert T.is_explicit == (name in EXPLICIT_NAMES)
    assert sum(T.b_exact) == 1  # every catalog method is consistent
    if name in EXPLICIT_NAMES:
        for i in range(T.s):
            assert T.c_exact[i] == sum(T.A_exact[i])


def test_float_arrays_read_only():
    T = catalog_lookup("heun2")
    with pytest.raises(ValueError):
        T.A[0, 0] = 1.0


def test_derived_forward_euler():
    D = derive(catalog_lookup("forward_euler"))
    assert D.d0 == 1 and list(D.d) == [0] and list(D.v) == [1]
    assert D.M.tolist() == [[-1.0]]


def test_derived_implicit_v():
    assert derive(catalog_lookup("implicit_midpoint")).v.tolist() == [0.5]
    assert derive(catalog_lookup("implicit_euler")).v.tolist() == [0.0]


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_derive_pure_and_symmetric(name):
    T = catalog_lookup(name)
    D1, D2 = derive(T), derive(T)
    assert np.array_equal(D1.M, D2.M) and np.array_equal(D1.v, D2.v)
    assert np.array_equal(D1.M, D1.M.T)


def test_algebraic_stability_values():
    im = is_algebraically_stable(catalog_lookup("implicit_midpoint"))
    ie = is_algebraically_stable(catalog_lookup("implicit_euler"))
    assert im and im.m_margin == 0.0
    assert ie and ie.m_margin == 1.0
    for m in EXPLICIT_NAMES:
        assert not is_algebraically_stable(catalog_lookup(m))


def test_text_round_trip(tmp_path):
    for name in CATALOG_NAMES:
        T = catalog_lookup(name)
        text = format_tableau(T)
        assert parse_tableau(text) == T
        path = tmp_path / f"{name}.txt"
        path.write_text(text)
        assert load_tableau(path) == T


def test_parse_with_comments():
    text = """# two-stage
    2
    0 0
    1 0   # second row
    1/2 1/2
    0 1
    """
    assert parse_tableau(text) == catalog_lookup("heun2")


@pytest.mark.parametrize("text", ["", "2\n0 0\n1 0\n1/2 1/2\n", "1\n0 0\n1\n0\n", "x\n"])
def test_parse_errors(text):
    with pytest.raises(TableauError):
        parse_tableau(text)


fractions = st.fractions(min_value=-3, max_value=3, max_denominator=12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4).flatmap(lambda s: st.tuples(
    st.lists(st.lists(fractions, min_size=s, max_size=s), min_size=s, max_size=s),
    st.lists(fractions, min_size=s, max_size=s))))
def test_random_tableau_properties(parts):
    A, b = parts
    T = make_tableau(A, b)
    s = len(b)
    assert T.is_explicit == all(A[i][j] == 0 for i in range(s) for j in range(i, s))
    assert parse_tableau(format_tableau(T)) == T
    D = derive(T)
    # M from its definition with exact rationals
    for i in range(s):
        for j in range(s):
            m = b[i] * A[i][j] + A[j][i] * b[j] - b[i] * b[j]
            assert D.M[i, j] == pytest.approx(float(m), abs=1e-12)
    if T.is_explicit:
        assert not is_algebraically_stable(T) or D.M[0, 0] >= 0
