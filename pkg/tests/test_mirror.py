import math

import numpy as np
import pytest

from flagmirror import _kernels
from flagmirror.cohomology import fiber_points
from flagmirror.errors import BudgetExceeded, CheckFailure, IncompleteEnumeration
from flagmirror.mirror import (
    FlagGraph,
    amplitude_check,
    amplitude_matrices,
    check_lagrangian,
    check_critical_values,
    currents,
    dedup_points,
    diagonal_t,
    find_critical_points,
    gradient,
    hessian,
    hessian_jacobian_check,
    momenta,
    potential,
)


def rand_q(n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 2.0, n) * np.exp(1j * rng.uniform(-np.pi, np.pi, n))


@pytest.mark.parametrize("n", range(1, 7))
def test_graph_counts(n):
    g = FlagGraph(n)
    assert g.counts() == g.expected_counts()


def test_distinguished_edges():
    g = FlagGraph(2)
    assert g.u(1) == ((0, 0), (1, 0))
    assert g.v(2) == ((2, 1), (2, 2))
    assert g.u(1) in g.edges and g.v(2) in g.edges


def test_potential_n1():
    g = FlagGraph(1)
    T = np.array([0.3 + 0.4j])
    t = diagonal_t([0.49])
    F = potential(g, T, t)
    assert abs(F - (np.exp(T[0]) + 0.49 * np.exp(-T[0]))) < 1e-14
    # gradient = u_1 - v_1
    assert abs(gradient(g, T, t)[0] - (np.exp(T[0]) - 0.49 * np.exp(-T[0]))) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gradient_finite_differences(n):
    g = FlagGraph(n)
    rng = np.random.default_rng(n)
    T = rng.normal(size=g.nfree) + 1j * rng.normal(size=g.nfree)
    t = diagonal_t(rand_q(n, 0))
    grad = gradient(g, T, t)
    H = hessian(g, T, t)
    h = 1e-6
    for k in range(g.nfree):
        e = np.zeros(g.nfree)
        e[k] = h
        fd = (potential(g, T + e, t) - potential(g, T - e, t)) / (2 * h)
        assert abs(fd - grad[k]) < 1e-7 * (1 + abs(grad[k]))
        gd = (gradient(g, T + e, t) - gradient(g, T - e, t)) / (2 * h)
        assert np.allclose(gd, H[:, k], atol=1e-6)


def test_n1_critical_points():
    pts = find_critical_points(1, [0.49])
    assert len(pts) == 2
    Fs = sorted(pt.F.real for pt in pts)
    assert np.allclose(Fs, [-1.4, 1.4])
    for pt in pts:
        u, v = pt.Q
        assert abs(u - v) < 1e-12 and abs(u * v - 0.49) < 1e-12
        assert np.allclose(pt.p, [-u, v])
        # currents: u_1 = v_1 = J_11
        assert np.allclose(pt.J, [u])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_counts_and_corollaries(n):
    q = rand_q(n, 10 + n)
    pts = find_critical_points(n, q, seed=1)
    assert len(pts) == math.factorial(n + 1)
    assert check_lagrangian(pts, q)["residual"] < 1e-8
    c2 = check_critical_values(pts, q)
    assert c2["residual"] < 1e-8 and c2["current_residual"] < 1e-9


def test_scaling():
    n = 2
    q = rand_q(n, 3)
    s = 1.3
    p1 = np.array([pt.p for pt in find_critical_points(n, q)])
    p2 = np.array([pt.p for pt in find_critical_points(n, q * s**4)])
    scaled = p1 * s**2
    for row in p2:
        assert np.min(np.max(np.abs(scaled - row), axis=1)) < 1e-8


def test_dedup_is_order_independent():
    pts = find_critical_points(2, rand_q(2, 4))
    doubled = pts + pts[::-1]
    a = dedup_points(doubled)
    b = dedup_points(doubled[::-1])
    assert len(a) == 6
    assert all(np.allclose(x.Q, y.Q) for x, y in zip(a, b))


def test_numba_and_numpy_newton_agree():
    n = 2
    q = rand_q(n, 5)
    a = find_critical_points(n, q, seed=2, numba=True)
    b = find_critical_points(n, q, seed=2, numba=False)
    A = sorted(pt.F.real for pt in a)
    B = sorted(pt.F.real for pt in b)
    assert np.allclose(A, B, atol=1e-10)


def test_incomplete_enumeration():
    with pytest.raises(IncompleteEnumeration) as err:
        find_critical_points(3, rand_q(3, 0), budget=2, batch=2)
    assert err.value.expected == 24


def test_budget_n4():
    with pytest.raises(BudgetExceeded):
        find_critical_points(4, [1, 1, 1, 1])


def test_lagrangian_detects_bad_points():
    q = np.array([0.49])
    pts = find_critical_points(1, q)
    pts[0].p = pts[0].p + 1e-3
    with pytest.raises(CheckFailure):
        check_lagrangian(pts, q)


def test_currents_n2_diagonal_sum():
    q = rand_q(2, 7)
    for pt in find_critical_points(2, q):
        g = FlagGraph(2)
        J, res = currents(g, pt.Q)
        assert res < 1e-12
        diag = [J[g.cells.index((i, i))] for i in (1, 2)]
        assert abs(pt.F - 2 * sum(diag)) < 1e-10
        assert np.allclose(momenta(g, pt.T, diagonal_t(q)), pt.p)


def test_momenta_match_fiber_n2():
    q = rand_q(2, 8)
    P = np.array([pt.p for pt in find_critical_points(2, q)])
    fib = fiber_points(2, q)
    for row in fib:
        assert np.min(np.max(np.abs(P - row), axis=1)) < 1e-7


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_amplitude(n):
    assert amplitude_check(n)["status"] == "pass"


def test_amplitude_n1_charpoly():
    A, U, V = amplitude_matrices(1)
    assert amplitude_check(1)["charpoly"] == "lam^2 - lam*u_1 + lam*v_1"
    assert len(A) == 2 and len(U) == 2 and len(V) == 2


def test_hessian_jacobian_n1():
    rep = hessian_jacobian_check(1, [0.49])
    assert np.allclose(rep["ratio"], [-1, 0])


@pytest.mark.parametrize("n", [1, 2])
def test_hessian_jacobian_constant(n):
    ratios = []
    for s in range(3):
        rep = hessian_jacobian_check(n, rand_q(n, 20 + s))
        assert rep["residual"] < 1e-6
        ratios.append(rep["ratio"])
    assert np.allclose(ratios, ratios[0])


def test_kernel_incidence():
    B = _kernels.incidence(np.array([0, 1]), np.array([1, 2]), 2)
    assert B.tolist() == [[-1.0, 1.0], [0.0, -1.0]]
