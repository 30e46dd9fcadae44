"""Affine expressions, conic program assembly, export, and census."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdgrouper.program import ConicProgram, Expr

coef = st.floats(min_value=-100, max_value=100,
                 allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------------------
# Expr algebra


@given(coef, coef, coef)
def test_expr_linearity(a, b, c):
    x = np.array([1.7, -0.3])
    e = Expr.var(0, a) + Expr.var(1, b) + c
    assert e.value(x) == pytest.approx(a * x[0] + b * x[1] + c)
    assert (e * 2.0).value(x) == pytest.approx(2 * e.value(x))
    assert (-e).value(x) == pytest.approx(-e.value(x))
    assert (e - e).value(x) == pytest.approx(0.0, abs=1e-9)


def test_expr_sub_and_radd():
    x = np.array([2.0])
    e = 1.0 - Expr.var(0)
    assert e.value(x) == -1.0
    assert (0 + Expr.var(0)).value(x) == 2.0
    assert (3.0 * Expr.var(0)).value(x) == 6.0


def test_expr_is_finite():
    assert Expr.var(0).is_finite()
    assert not Expr({0: float("nan")}).is_finite()
    assert not Expr.const_(float("inf")).is_finite()


# ---------------------------------------------------------------------------
# program assembly


def test_add_vars_registry():
    prog = ConicProgram()
    a = prog.add_vars("a", 3)
    b = prog.add_vars("b", 2, role="aux")
    np.testing.assert_array_equal(a, [0, 1, 2])
    np.testing.assert_array_equal(b, [3, 4])
    np.testing.assert_array_equal(prog.indices("a"), a)
    with pytest.raises(ValueError):
        prog.add_vars("a", 1)


def test_census_counts_roles_and_complex_pair_convention():
    prog = ConicProgram()
    prog.add_vars("x", 4)                       # decision, 4 scalars
    prog.add_vars("w", 6, census_scalars=3)      # complex pairs count once
    prog.add_vars("s", 2, role="aux")
    prog.add_ge(Expr.var(0))
    prog.add_soc(Expr.var(1), [Expr.var(2)])
    prog.add_rsoc(Expr.var(3), Expr.var(4), [Expr.var(5)])
    c = prog.census()
    assert c["decision_vars"] == 7
    assert c["aux_vars"] == 2
    assert c["real_vars"] == 12
    assert c["constraints"] == 3


def test_validate_rejects_out_of_range_and_nan():
    prog = ConicProgram()
    prog.add_vars("x", 1)
    prog.add_ge(Expr.var(5))
    with pytest.raises(ValueError):
        prog.validate()
    prog2 = ConicProgram()
    prog2.add_vars("x", 1)
    prog2.add_ge(Expr({0: float("nan")}))
    with pytest.raises(ValueError):
        prog2.validate()


def test_empty_cone_body_rejected():
    prog = ConicProgram()
    prog.add_vars("x", 1)
    with pytest.raises(ValueError):
        prog.add_soc(Expr.var(0), [])
    with pytest.raises(ValueError):
        prog.add_rsoc(Expr.var(0), Expr.var(0), [])


def test_soc_head_in_body_rejected():
    prog = ConicProgram()
    prog.add_vars("x", 2)
    prog.add_soc(Expr.var(0), [Expr.var(0) + Expr.var(1)])
    with pytest.raises(ValueError):
        prog.validate()


def test_conic_data_standard_form():
    # maximize x0 s.t. x0 + x1 = 2, x1 >= 0.5, ||x0|| <= x1  (as data)
    prog = ConicProgram()
    prog.add_vars("x", 2)
    prog.set_objective(Expr.var(0) + 3.0)
    prog.add_eq(Expr.var(0) + Expr.var(1), 2.0)
    prog.add_ge(Expr.var(1), 0.5)
    prog.add_soc(Expr.var(1), [Expr.var(0)])
    data = prog.conic_data()
    np.testing.assert_allclose(data.c, [-1.0, 0.0])     # minimize -obj
    assert data.obj_offset == 3.0
    np.testing.assert_allclose(data.A.toarray(), [[1.0, 1.0]])
    np.testing.assert_allclose(data.b, [2.0])
    assert data.dims_l == 1
    assert data.dims_q == [2]
    # linear row: s = x1 - 0.5 >= 0  ->  G = [0, -1], h = -0.5
    np.testing.assert_allclose(data.G.toarray()[0], [0.0, -1.0])
    assert data.h[0] == -0.5


def test_conic_data_rotated_cone_becomes_standard():
    # 2uv >= z^2 maps to the standard cone via ((u+v)/sqrt2, (u-v)/sqrt2, z)
    prog = ConicProgram()
    u, = prog.add_vars("u", 1)
    v, = prog.add_vars("v", 1)
    z, = prog.add_vars("z", 1)
    prog.add_rsoc(Expr.var(u), Expr.var(v), [Expr.var(z)])
    data = prog.conic_data()
    assert data.dims_q == [3]
    x = np.array([0.8, 1.3, 0.9])
    s = data.h - data.G @ x
    head, b1, b2 = s
    assert head == pytest.approx((x[0] + x[1]) / np.sqrt(2))
    assert b1 == pytest.approx((x[0] - x[1]) / np.sqrt(2))
    assert b2 == pytest.approx(x[2])
    # cone membership of the image iff 2uv >= z^2
    assert head ** 2 - b1 ** 2 - b2 ** 2 == pytest.approx(
        2 * x[0] * x[1] - x[2] ** 2)


def test_quad_le_encoding():
    prog = ConicProgram()
    prog.add_vars("x", 2)
    prog.add_quad_le([Expr.var(0)], Expr.var(1))   # x0^2 <= x1
    data = prog.conic_data()
    x = np.array([2.0, 4.0])
    s = data.h - data.G @ x
    assert s[0] ** 2 - s[1] ** 2 - s[2] ** 2 == pytest.approx(
        2 * x[1] * 0.5 - x[0] ** 2)   # boundary point


def test_dump_round_trip_text(tmp_path):
    prog = ConicProgram()
    prog.add_vars("x", 2)
    prog.set_objective(Expr.var(1, 2.5) + 1.0)
    prog.add_eq(Expr.var(0) - 1.0)
    prog.add_ge(Expr.var(1))
    prog.add_soc(Expr.var(0), [Expr.var(1, 3.0)])
    prog.add_rsoc(Expr.var(0), Expr.const_(0.5), [Expr.var(1)])
    path = tmp_path / "prog.txt"
    prog.dump(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "conicprogram 2 1 1 1 1 1.0"
    assert lines[1] == "obj 1 2.5"
    assert "eq" in lines and "ineq" in lines
    assert "soc 2" in lines and "rsoc 3" in lines
    # every row line parses back to floats
    for ln in lines:
        if ln.startswith("row"):
            parts = ln.split()
            float(parts[1])
            for term in parts[2:]:
                i, c = term.split(":")
                assert 0 <= int(i) < 2
                float(c)
