import copy
import math

import pytest
import sympy

from flagmirror.algebra import Rational
from flagmirror.errors import BudgetExceeded, CheckFailure
from flagmirror.series import (
    all_S,
    assemble_S,
    check_recursion,
    check_hamiltonian,
    check_integrals,
    compute_s,
    form_value,
    h_windows,
    independence_check,
    recursion_rank_check,
    projective_series,
)
from flagmirror.weyl import DiffOp, apply


def _sympy_n1(order):
    """Coefficients (a_d, b_d) of s^(d) = a_d + b_d J_1 from the n = 1 recursion."""
    h = sympy.Symbol("h")
    a, b = [sympy.Integer(1)], [sympy.Integer(0)]
    for d in range(1, order + 1):
        ad = a[-1] / (h**2 * d**2)
        bd = (b[-1] - 2 * h * d * ad) / (h**2 * d**2)
        a.append(sympy.simplify(ad))
        b.append(sympy.simplify(bd))
    return h, a, b


def test_n1_against_sympy():
    order = 5
    data = compute_s(1, order)
    h, a, b = _sympy_n1(order)
    for d in range(order + 1):
        unit = data.component((d,), 0)
        top = data.component((d,), 1)
        got_a = sum(sympy.Rational(int(c.numerator), int(c.denominator)) * h**e for e, c in unit.items())
        got_b = sum(sympy.Rational(int(c.numerator), int(c.denominator)) * h**e for e, c in top.items())
        assert sympy.simplify(got_a - a[d]) == 0
        assert sympy.simplify(got_b - b[d]) == 0


def test_hand_examples_n1():
    data = compute_s(1, 2)
    assert data.component((1,), 0) == {-2: 1}
    assert data.component((1,), 1) == {-3: -2}
    assert data.component((2,), 0) == {-4: Rational(1, 4)}
    assert data.component((2,), 1) == {-5: Rational(-3, 4)}


def test_bessel_coefficients():
    data = compute_s(1, 6)
    for d in range(7):
        assert data.component((d,), 0) == {-2 * d: Rational(1, math.factorial(d) ** 2)}


def test_form_values():
    assert [form_value((d,)) for d in range(1, 5)] == [2 * d * d for d in range(1, 5)]
    assert form_value((1, 1)) == 2
    assert form_value((0, 0)) == 0


@pytest.mark.parametrize("n,order", [(1, 4), (2, 3)])
def test_recursion_holds(n, order):
    assert check_recursion(compute_s(n, order))["status"] == "pass"


def test_recursion_after_table_round_trip():
    data = compute_s(2, 2)
    clone = copy.deepcopy(data)
    assert clone.table() == data.table()
    assert check_recursion(clone)["status"] == "pass"


@pytest.mark.parametrize("n,order", [(1, 4), (2, 3), (3, 2)])
def test_series_annihilated(n, order):
    data = compute_s(n, order)
    S = all_S(data)
    assert len(S) == math.factorial(n + 1)
    assert check_hamiltonian(n, order, data, S)["status"] == "pass"
    assert check_integrals(n, order, data, S)["status"] == "pass"


def test_hamiltonian_detects_perturbation():
    data = compute_s(1, 3)
    data.s[(1,)][-2][(0, ())] += 1
    with pytest.raises(CheckFailure):
        check_hamiltonian(1, 3, data)


def test_sum_of_t_derivatives_vanishes():
    n = 2
    data = compute_s(n, 3)
    X = DiffOp(n)
    for i in range(n + 1):
        X = X + DiffOp.hd(n, i)
    for S in all_S(data):
        assert apply(X, S).is_zero()


def test_degree_zero_slice_is_t_polynomial():
    data = compute_s(1, 2)
    # J_1 is the point class for n = 1
    assert assemble_S("J_1", data).coefficient((0,)) == {((0, 0), 0): 1}
    # <exp(p t/h), 1> = (t_1 - t_0)/h
    S = assemble_S("1", data)
    assert S.coefficient((0,)) == {((0, 1), -1): 1, ((1, 0), -1): -1}


def test_h_windows():
    w = h_windows(compute_s(2, 3))
    for key, (lo, hi) in w.items():
        d = eval(key)
        assert hi == -2 * sum(d)
        assert lo >= -2 * sum(d) - 3


@pytest.mark.parametrize("n", [1, 2])
def test_recursion_rank(n):
    assert recursion_rank_check(n, 4)["status"] == "pass"


@pytest.mark.parametrize("n", [1, 2, 3])
def test_independence(n):
    assert independence_check(n)["rank"] == math.factorial(n + 1)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_projective_ode(N):
    assert projective_series(N, 5).order == 5


def test_projective_n2_unit_component():
    ps = projective_series(2, 4)
    comp = ps.component(0)
    for d in range(5):
        assert comp[d] == {(0, -2 * d): Rational(1, math.factorial(d) ** 2)}


def test_projective_n1_exponential():
    ps = projective_series(1, 4)
    for d in range(5):
        assert ps.coeffs[d] == {(0, 0, -d): Rational(1, math.factorial(d))}


def test_budgets():
    with pytest.raises(BudgetExceeded):
        compute_s(3, 4)
    with pytest.raises(BudgetExceeded):
        projective_series(7, 2)
