import math

import numpy as np
import pytest

from flagmirror.algebra import MultiPoly, Rational, const, parse_poly
from flagmirror.cohomology import (
    CohClass,
    J,
    check_classical_limit,
    check_degree_two,
    check_frobenius,
    check_residue,
    classical_ring,
    exact_pairing_at,
    fiber_points,
    gram_matrix,
    integrate,
    jacobian_det,
    q_pairing,
    quantization_map,
    quantum_ring,
    residue_pairing,
    residue_sign,
    vandermonde,
)
from flagmirror.errors import CheckFailure
from flagmirror.toda import conserved


def _q_factorial(n):
    """Coefficients of prod_{k=1}^{n+1} (1 + t + ... + t^{k-1})."""
    poly = np.array([1])
    for k in range(1, n + 2):
        poly = np.convolve(poly, np.ones(k, dtype=int))
    return poly.tolist()


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_classical_graded_dims(n):
    ring = classical_ring(n)
    dims = [d for d in ring.graded_dims]
    while dims and dims[-1] == 0:
        dims.pop()
    assert dims == _q_factorial(n)
    assert len(ring.basis) == math.factorial(n + 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_quantum_rank(n):
    assert len(quantum_ring(n).basis) == math.factorial(n + 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_relations_vanish(n):
    ring = quantum_ring(n)
    for D in conserved(n):
        assert ring.reduce(D) == {}


def test_integration_normalization():
    assert integrate(CohClass.from_poly(classical_ring(1), "p_1")) == 1
    for n in (1, 2, 3):
        ring = classical_ring(n)
        assert integrate(CohClass(ring, ring.reduce(vandermonde(n)))) == math.factorial(n + 1)


def test_gram_symmetric_nondegenerate():
    for n in (1, 2, 3):
        G = np.array(gram_matrix(n), dtype=float)
        assert np.allclose(G, G.T)
        assert abs(np.linalg.det(G)) > 0.5


def test_degree_two_n1_explicit():
    ring = quantum_ring(1)
    sq = CohClass.from_poly(ring, "J_1") * CohClass.from_poly(ring, "J_1")
    assert sq.to_poly() == parse_poly("q_1")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_degree_two(n):
    rep = check_degree_two(n)
    for i in range(1, n + 1):
        assert rep["corrections"][f"J_{i}*J_{i}"] == f"q_{i}"


def test_sum_of_squares():
    n = 2
    ring = quantum_ring(n)
    total = CohClass(ring, {})
    for i in range(n + 1):
        pi = CohClass.from_poly(ring, f"p_{i}")
        total = total + pi * pi
    assert total.to_poly() == parse_poly("2*q_1 + 2*q_2")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_classical_limit(n):
    assert check_classical_limit(n)["status"] == "pass"


@pytest.mark.parametrize("n", [1, 2, 3])
def test_frobenius(n):
    assert check_frobenius(n, samples=15)["status"] == "pass"


def test_naive_identification_is_not_frobenius():
    # without the quantization map the Poincare pairing is not invariant
    n = 2
    qu = quantum_ring(n)
    N = len(qu.basis)
    bad = 0
    for a in range(N):
        for b in range(N):
            for c in range(N):
                A, B, C = (qu.basis_element(x) for x in (a, b, c))
                if q_pairing(qu.mul(A, B), C, n) != q_pairing(A, qu.mul(B, C), n):
                    bad += 1
    assert bad > 0


def test_quantization_is_identity_at_q0():
    n = 2
    qm = quantization_map(n)
    for k in range(len(qm.classical.basis)):
        img = qm.images[k]
        q0 = {key: v for key, v in img.items() if not any(key[1])}
        assert q0 == {(k, (0, 0)): Rational(1)}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fiber_points(n):
    rng = np.random.default_rng(n)
    q = rng.uniform(0.2, 1.5, n) * np.exp(1j * rng.uniform(-3, 3, n))
    pts = fiber_points(n, q)
    assert len(pts) == math.factorial(n + 1)
    names = [f"p_{i}" for i in range(n + 1)] + [f"q_{j}" for j in range(1, n + 1)]
    for pt in pts:
        vals = dict(zip(names, list(pt) + list(q)))
        for D in conserved(n):
            assert abs(complex(D.evaluate(vals))) < 1e-9
        assert abs(jacobian_det(n, pt, q)) > 1e-8


def test_fiber_n1():
    pts = sorted(fiber_points(1, [1.0]).real.tolist())
    assert np.allclose(pts, [[-1, 1], [1, -1]])


def test_residue_signs():
    assert [residue_sign(n) for n in (1, 2, 3)] == [-1, -1, 1]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_residue_check(n):
    assert check_residue(n)["residual"] < 1e-8


def test_residue_wrong_sign_fails():
    with pytest.raises(CheckFailure) as err:
        check_residue(2, sign=-residue_sign(2))
    assert err.value.check == "residue-check"


def test_residue_top_pairing_n1():
    q = [0.7 + 0.2j]
    val, _ = residue_pairing("p_1", "1", 1, q)
    assert abs(val - 1) < 1e-12
    val, _ = residue_pairing("p_1", "p_1", 1, q)
    assert abs(val - exact_pairing_at(parse_poly("p_1"), parse_poly("p_1"), 1, q)) < 1e-12


def test_cohclass_from_text_and_vector():
    ring = classical_ring(2)
    c = CohClass.from_poly(ring, "J_1 + 2*J_2")
    assert c.to_poly() == (J(1) + J(2) * 2).subs({"p_0": -(parse_poly("p_1") + parse_poly("p_2"))})
    assert len(c.vector()) == 6
    assert isinstance(const(1), MultiPoly)
