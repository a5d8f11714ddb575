"""Conservation laws of the open Toda lattice, classical and quantized."""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations

from .algebra import Rational, const, det, poisson, var
from .errors import BudgetExceeded, CheckFailure
from .weyl import DiffOp, commutator, quantize, symbol

MAX_N = 6
SYMBOLIC_BUDGET = 3

lam = var("lam")
HALF = Rational(1, 2)


def _p(i):
    return var(f"p_{i}")


def _q(j):
    return var(f"q_{j}")


def _check_n(n, cap=MAX_N):
    if not isinstance(n, int) or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    if n > cap:
        raise BudgetExceeded(f"n={n} exceeds the cap n <= {cap}")


def toda_matrix(n, diag=None):
    """Tridiagonal matrix with diag[i] on the diagonal, q_i above and -1 below."""
    diag = diag or [lam + _p(i) for i in range(n + 1)]
    M = [[const(0)] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        M[i][i] = diag[i]
        if i < n:
            M[i][i + 1] = _q(i + 1)
            M[i + 1][i] = const(-1)
    return M


@lru_cache(maxsize=None)
def build_delta(n, cross_check=True):
    """The characteristic polynomial lam^{n+1} + D_0 lam^n + ... + D_n.

    Built from the recurrence Delta_k = (lam + p_k) Delta_{k-1} + q_k Delta_{k-2}
    and, for n <= 4, compared against the determinant of :func:`toda_matrix`.
    """
    _check_n(n)
    prev2, prev = const(0), const(1)
    for k in range(n + 1):
        cur = (lam + _p(k)) * prev + (_q(k) * prev2 if k >= 1 else const(0))
        prev2, prev = prev, cur
    delta = prev
    if cross_check and n <= 4:
        d2 = det(toda_matrix(n))
        if d2 != delta:
            raise CheckFailure("delta", "recurrence and determinant disagree", d2 - delta)
    return delta


@lru_cache(maxsize=None)
def conserved(n):
    """Classical integrals D_0..D_n (coefficients of lam^n, ..., lam^0)."""
    delta = build_delta(n)
    return tuple(delta.coeff("lam", n - m) for m in range(n + 1))


@lru_cache(maxsize=None)
def quantized(n):
    """Quantized integrals; each quantization must be ordering-independent."""
    ops = []
    for m, D in enumerate(conserved(n)):
        op, independent = quantize(D, n)
        if not independent:
            raise CheckFailure("quantize", f"D_{m} has an ordering-dependent monomial")
        if symbol(op) != D:
            raise CheckFailure("quantize", f"symbol of quantized D_{m} differs from D_{m}")
        ops.append(op)
    return tuple(ops)


def hamiltonian(n):
    """(1/2) sum (h d_i)^2 - sum q_i."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    H = DiffOp(n)
    for i in range(n + 1):
        H = H + DiffOp.hd(n, i, 2) * HALF
    for j in range(1, n + 1):
        H = H - DiffOp.q(n, j)
    return H


def classical_hamiltonian(n):
    f = const(0)
    for i in range(n + 1):
        f = f + _p(i) * _p(i) * HALF
    for j in range(1, n + 1):
        f = f - _q(j)
    return f


def _report(check, n, status, residual=None, **extra):
    out = {"check": check, "n": n, "status": status}
    if residual is not None:
        out["residual"] = residual
    out.update(extra)
    return out


def check_commuting(n, pairwise=True, poisson_brackets=True, cap=SYMBOLIC_BUDGET):
    """[H, D_m] = 0 for every m, plus [D_l, D_m] = 0 and vanishing Poisson brackets.

    Raises :class:`CheckFailure` carrying the first nonzero residual.
    """
    _check_n(n, cap)
    H = hamiltonian(n)
    ops = quantized(n)
    done = []
    for m, D in enumerate(ops):
        r = commutator(H, D)
        if r:
            raise CheckFailure("toda-commuting", f"[H, D_{m}] != 0 for n={n}", r)
        done.append(f"[H,D_{m}]")
    if pairwise:
        for l, m in combinations(range(n + 1), 2):
            r = commutator(ops[l], ops[m])
            if r:
                raise CheckFailure("toda-commuting", f"[D_{l}, D_{m}] != 0 for n={n}", r)
            done.append(f"[D_{l},D_{m}]")
    if poisson_brackets:
        Ds = conserved(n)
        h = classical_hamiltonian(n)
        for m, D in enumerate(Ds):
            r = poisson(h, D)
            if r:
                raise CheckFailure("toda-commuting", f"{{H, D_{m}}} != 0", r)
            done.append(f"{{H,D_{m}}}")
        for l, m in combinations(range(n + 1), 2):
            r = poisson(Ds[l], Ds[m])
            if r:
                raise CheckFailure("toda-commuting", f"{{D_{l}, D_{m}}} != 0", r)
            done.append(f"{{D_{l},D_{m}}}")
    return _report("toda-commuting", n, "pass", residual=0, verified=done)


def continued_fraction_numerator(n):
    """Numerator of lam+p_0 + q_1/(lam+p_1 + q_2/(... + q_n/(lam+p_n))).

    Evaluated from the innermost level outwards as a pair (numerator,
    denominator) without cancelling common factors.
    """
    num, den = lam + _p(n), const(1)
    for k in range(n - 1, -1, -1):
        num, den = (lam + _p(k)) * num + _q(k + 1) * den, num
    return num


def check_grading_and_fraction(n):
    _check_n(n)
    Ds = conserved(n)
    for m, D in enumerate(Ds):
        degs = D.weighted_degrees()
        if degs != {m + 1}:
            raise CheckFailure("grading", f"D_{m} has weighted degrees {sorted(degs)}, expected {{{m + 1}}}", D)
    for m, op in enumerate(quantized(n)):
        if op.degrees() != {m + 1}:
            raise CheckFailure("grading", f"quantized D_{m} is not homogeneous of degree {m + 1}", op)
    delta = build_delta(n)
    diff = continued_fraction_numerator(n) - delta
    if diff:
        raise CheckFailure("continued-fraction", "numerator differs from Delta", diff)
    return _report("grading-and-fraction", n, "pass", residual=0)
