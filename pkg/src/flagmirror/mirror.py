"""Triangular-lattice mirror family: potential, critical points, currents, amplitudes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .algebra import MultiPoly, const, det, matmul, var
from .cohomology import fiber_points, jacobian_det
from .errors import BudgetExceeded, CheckFailure, DegenerateInput, IncompleteEnumeration
from .toda import build_delta, conserved, toda_matrix

__all__ = [
    "FlagGraph",
    "CritPoint",
    "diagonal_t",
    "potential",
    "gradient",
    "hessian",
    "find_critical_points",
    "dedup_points",
    "momenta",
    "currents",
    "check_lagrangian",
    "check_critical_values",
    "amplitude_matrices",
    "amplitude_check",
    "hessian_jacobian_check",
]

MAX_N = 3


class FlagGraph:
    """The triangular lattice with vertices (i, j), 0 <= j <= i <= n.

    Free vertices (j < i) come first in :attr:`index`, followed by the
    diagonal vertices (0,0), ..., (n,n) whose values are fixed by q.
    """

    def __init__(self, n):
        if n < 1:
            raise ValueError("n must be at least 1")
        self.n = n
        self.vertices = [(i, j) for i in range(n + 1) for j in range(i + 1)]
        self.free = [(i, j) for (i, j) in self.vertices if j < i]
        self.diagonal = [(i, i) for i in range(n + 1)]
        self.index = {v: k for k, v in enumerate(self.free + self.diagonal)}
        self.vertical = [((i - 1, j), (i, j)) for i in range(1, n + 1) for j in range(i)]
        self.horizontal = [((i, j), (i, j + 1)) for i in range(1, n + 1) for j in range(i)]
        self.edges = self.vertical + self.horizontal
        self.squares = [(i, j) for i in range(2, n + 1) for j in range(1, i)]
        self.triangles = [(i, i) for i in range(1, n + 1)]
        self.cells = sorted(self.squares + self.triangles)
        self.src = np.array([self.index[a] for a, _ in self.edges], dtype=np.int64)
        self.tgt = np.array([self.index[b] for _, b in self.edges], dtype=np.int64)

    @property
    def nfree(self):
        return len(self.free)

    def u(self, i):
        return ((i - 1, i - 1), (i, i - 1))

    def v(self, i):
        return ((i, i - 1), (i, i))

    def edge_index(self, edge):
        return self.edges.index(edge)

    def counts(self):
        return {
            "vertices": len(self.vertices),
            "edges": len(self.edges),
            "squares": len(self.squares),
            "cells": len(self.cells),
        }

    def expected_counts(self):
        n = self.n
        return {
            "vertices": (n + 1) * (n + 2) // 2,
            "edges": n * (n + 1),
            "squares": n * (n - 1) // 2,
            "cells": n * (n + 1) // 2,
        }

    def cell_sides(self, edge):
        """(left cell, right cell) of a directed edge; None marks the outer region."""
        (a, b), (c, d) = edge
        n = self.n
        if d == b:  # vertical (i-1, j) -> (i, j)
            i, j = c, d
            left = (i, j + 1)
            right = (i, j) if j >= 1 else None
        else:  # horizontal (i, j) -> (i, j+1)
            i, j = a, b
            left = (i, j + 1)
            right = (i + 1, j + 1) if i + 1 <= n else None
        return left, right

    @cached_property
    def incidence(self):
        return _kernels.incidence(self.src, self.tgt, self.nfree)

    @cached_property
    def current_matrix(self):
        """Edges x cells matrix of the rule Q_e = J_left - J_right."""
        cidx = {c: k for k, c in enumerate(self.cells)}
        M = np.zeros((len(self.edges), len(self.cells)))
        for e, edge in enumerate(self.edges):
            left, right = self.cell_sides(edge)
            if left is not None:
                M[e, cidx[left]] += 1.0
            if right is not None:
                M[e, cidx[right]] -= 1.0
        return M


def _check_q(n, q):
    q = np.atleast_1d(np.asarray(q, dtype=complex))
    if q.shape != (n,):
        raise ValueError(f"expected {n} values of q, got {q.shape[0]}")
    if np.any(q == 0):
        raise DegenerateInput("all q_i must be nonzero")
    return q


def diagonal_t(q):
    """Diagonal values t_0 = 0, t_i = t_{i-1} + log q_i."""
    q = np.asarray(q, dtype=complex)
    return np.concatenate([[0.0], np.cumsum(np.log(q))])


def _full(g, T, t):
    return np.concatenate([np.asarray(T, dtype=complex), np.asarray(t, dtype=complex)])


def potential(g, T, t):
    """F = sum of Q over all edges, for free coordinates T and diagonal values t."""
    z = _full(g, T, t)
    return complex(np.sum(_kernels.edge_values(z, g.src, g.tgt)))


def gradient(g, T, t):
    """dF/dT_v = (Q into v) - (Q out of v) over the free vertices."""
    z = _full(g, T, t)
    return _kernels.edge_values(z, g.src, g.tgt) @ g.incidence


def hessian(g, T, t):
    z = _full(g, T, t)
    Q = _kernels.edge_values(z, g.src, g.tgt)
    B = g.incidence
    return B.T @ (Q[:, None] * B)


def momenta(g, T, t):
    """p_i = dF/dt_i, i.e. in-minus-out at the diagonal vertex (i, i)."""
    z = _full(g, T, t)
    Q = _kernels.edge_values(z, g.src, g.tgt)
    p = np.zeros(g.n + 1, dtype=complex)
    m = g.nfree
    for e, (s, tg) in enumerate(zip(g.src, g.tgt)):
        if tg >= m:
            p[tg - m] += Q[e]
        if s >= m:
            p[s - m] -= Q[e]
    return p


def currents(g, Q):
    """Least-squares solve of Q_e = J_left(e) - J_right(e); returns (J, residual)."""
    M = g.current_matrix
    J, *_ = np.linalg.lstsq(M.astype(complex), Q, rcond=None)
    res = float(np.linalg.norm(M @ J - Q))
    return J, res


@dataclass
class CritPoint:
    n: int
    T: np.ndarray
    Q: np.ndarray
    p: np.ndarray
    F: complex
    hess: np.ndarray
    grad_norm: float
    J: np.ndarray = field(default=None, repr=False)

    def as_dict(self):
        c = lambda z: [float(np.real(z)), float(np.imag(z))]  # noqa: E731
        return {
            "T": [c(x) for x in self.T],
            "Q": [c(x) for x in self.Q],
            "p": [c(x) for x in self.p],
            "F": c(self.F),
            "grad_norm": self.grad_norm,
        }


def _make_point(g, T, t):
    z = _full(g, T, t)
    Q = _kernels.edge_values(z, g.src, g.tgt)
    gr = Q @ g.incidence
    J, _ = currents(g, Q)
    return CritPoint(
        n=g.n,
        T=np.asarray(T, dtype=complex),
        Q=Q,
        p=momenta(g, T, t),
        F=complex(Q.sum()),
        hess=hessian(g, T, t),
        grad_norm=float(np.linalg.norm(gr)),
        J=J,
    )


def _canon_key(Q):
    return tuple(np.round(np.concatenate([Q.real, Q.imag]), 6))


def dedup_points(points, rtol=1e-8):
    """Distinct points by edge-value vectors (T is only defined mod 2*pi*i).

    Points are first put in a canonical order, so the result does not
    depend on the order of the input.
    """
    pts = sorted(points, key=lambda pt: _canon_key(pt.Q))
    kept = []
    for pt in pts:
        scale = max(1.0, float(np.max(np.abs(pt.Q))))
        if all(np.max(np.abs(pt.Q - k.Q)) > rtol * scale for k in kept):
            kept.append(pt)
    return kept


def find_critical_points(n, q, seed=0, budget=None, maxit=100, tol=1e-12, batch=None, numba=None):
    """All critical points of F_q by multi-start damped Newton.

    Parameters
    ----------
    n : int
        Lattice size, 1 <= n <= 3.
    q : sequence of complex
        Nonzero deformation parameters q_1..q_n.
    budget : int, optional
        Number of Newton starts; defaults to ``200 * (n+1)!``.

    Raises
    ------
    IncompleteEnumeration
        If fewer than (n+1)! distinct points were found within the budget.
    """
    if n > MAX_N:
        raise BudgetExceeded(f"n={n} exceeds the critical point budget n <= {MAX_N}")
    q = _check_q(n, q)
    g = FlagGraph(n)
    t = diagonal_t(q)
    expected = math.factorial(n + 1)
    budget = budget or 200 * expected
    batch = batch or max(8 * expected, 32)
    rng = np.random.default_rng(seed)
    centers = np.array([(t[i] + t[j]).real / 2 for (i, j) in g.free])
    found = []
    used = 0
    while used < budget:
        k = min(batch, budget - used)
        re = centers + rng.normal(0.0, 1.0, size=(k, g.nfree))
        im = rng.uniform(0.0, 2 * np.pi, size=(k, g.nfree))
        X0 = re + 1j * im
        X, gn, conv = _kernels.newton_batch(X0, t, g.src, g.tgt, maxit=maxit, tol=tol, numba=numba)
        used += k
        for s in np.nonzero(conv)[0]:
            pt = _make_point(g, X[s], t)
            if pt.grad_norm < 1e-10 * (1 + abs(pt.F)):
                found.append(pt)
        found = dedup_points(found)
        if len(found) >= expected:
            break
    if len(found) < expected:
        raise IncompleteEnumeration(len(found), expected)
    if len(found) > expected:
        raise CheckFailure("critical-points", f"found {len(found)} distinct points, more than {expected}")
    return found


def _scale(q):
    return max(1.0, float(np.max(np.abs(q))))


def _match_multisets(A, B):
    """Greedy-free matching distance via optimal assignment."""
    from scipy.optimize import linear_sum_assignment

    A, B = np.asarray(A), np.asarray(B)
    if A.shape != B.shape:
        return np.inf
    cost = np.max(np.abs(A[:, None, :] - B[None, :, :]), axis=2)
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def check_lagrangian(points, q, tol=1e-8, fiber_tol=1e-7, seed=0):
    """Momenta at critical points satisfy D_0 = ... = D_n = 0 and match the fiber."""
    n = points[0].n
    q = _check_q(n, q)
    Ds = conserved(n)
    names = [f"p_{i}" for i in range(n + 1)] + [f"q_{j}" for j in range(1, n + 1)]
    scale = _scale(q)
    worst = 0.0
    for pt in points:
        vals = dict(zip(names, list(pt.p) + list(q)))
        for D in Ds:
            r = abs(complex(D.evaluate(vals)))
            worst = max(worst, r)
    if worst >= tol * scale:
        raise CheckFailure("lagrangian", f"max |D_m(p, q)| = {worst:.3e}", worst)
    fiber = fiber_points(n, q, seed=seed)
    dist = _match_multisets(np.array([pt.p for pt in points]), fiber)
    if not dist < fiber_tol * scale:
        raise CheckFailure("lagrangian", f"momenta differ from the fiber by {dist:.3e}", dist)
    return {"check": "lagrangian", "n": n, "status": "pass", "residual": worst, "fiber_distance": dist}


def check_critical_values(points, q=None, tol=1e-8, current_tol=1e-9):
    """F = sum (2i - n) p_i at critical points, and F = sum 2 J_ii from the currents."""
    n = points[0].n
    g = FlagGraph(n)
    diag_idx = [g.cells.index((i, i)) for i in range(1, n + 1)]
    scale = _scale(q) if q is not None else max(1.0, max(float(np.max(np.abs(pt.Q))) for pt in points))
    worst = worst_j = worst_res = 0.0
    for pt in points:
        lin = sum((2 * i - n) * pt.p[i] for i in range(n + 1))
        worst = max(worst, abs(pt.F - lin))
        J, res = currents(g, pt.Q)
        worst_res = max(worst_res, res)
        worst_j = max(worst_j, abs(pt.F - 2 * np.sum(J[diag_idx])))
    if worst >= tol * scale:
        raise CheckFailure("critical-values", f"|F - sum (2i-n) p_i| = {worst:.3e}", worst)
    if worst_res >= current_tol * scale:
        raise CheckFailure("critical-values", f"current solve residual {worst_res:.3e}", worst_res)
    if worst_j >= tol * scale:
        raise CheckFailure("critical-values", f"|F - sum 2 J_ii| = {worst_j:.3e}", worst_j)
    return {
        "check": "critical-values",
        "n": n,
        "status": "pass",
        "residual": worst,
        "current_residual": worst_res,
        "diagonal_current_residual": worst_j,
    }


# -- amplitude matrices --------------------------------------------------

def _uv(n):
    return [var(f"u_{i}") for i in range(1, n + 1)], [var(f"v_{i}") for i in range(1, n + 1)]


def amplitude_matrices(n):
    """Symbolic (n+1) x (n+1) matrices A, U, V in the formal edge variables u_i, v_i."""
    u, v = _uv(n)
    N = n + 1
    zero = const(0)
    A = [[zero] * N for _ in range(N)]
    U = [[zero] * N for _ in range(N)]
    V = [[zero] * N for _ in range(N)]
    for k in range(N):
        vk = v[k - 1] if k >= 1 else zero
        uk = u[k] if k < n else zero
        A[k][k] = vk - uk
        U[k][k] = uk
        V[k][k] = const(-1)
        if k < n:
            A[k][k + 1] = u[k] * v[k]
            A[k + 1][k] = const(-1)
            U[k + 1][k] = const(1)
            V[k][k + 1] = v[k]
    return A, U, V


def amplitude_check(n):
    """A = UV, det(lam + A) = det(lam + VU) = Delta(lam, p(u, v), q(u, v)), exactly."""
    if n > 4:
        raise BudgetExceeded(f"n={n} exceeds the symbolic amplitude budget n <= 4")
    A, U, V = amplitude_matrices(n)
    UV = matmul(U, V)
    for i in range(n + 1):
        for j in range(n + 1):
            if UV[i][j] != A[i][j]:
                raise CheckFailure("amplitude", f"(UV)[{i}][{j}] != A[{i}][{j}]", UV[i][j] - A[i][j])
    B = matmul(V, U)
    lam = var("lam")

    def shifted(M):
        return [[M[i][j] + (lam if i == j else const(0)) for j in range(n + 1)] for i in range(n + 1)]

    dA, dB = det(shifted(A)), det(shifted(B))
    if dA != dB:
        raise CheckFailure("amplitude", "det(lam + A) != det(lam + B)", dA - dB)
    u, v = _uv(n)
    sub = {}
    for i in range(n + 1):
        vi = v[i - 1] if i >= 1 else const(0)
        ui = u[i] if i < n else const(0)
        sub[f"p_{i}"] = vi - ui
    for i in range(1, n + 1):
        sub[f"q_{i}"] = u[i - 1] * v[i - 1]
    delta = build_delta(n).subs(sub)
    if dA != delta:
        raise CheckFailure("amplitude", "det(lam + A) differs from Delta", dA - delta)
    trA = sum((A[i][i] for i in range(n + 1)), const(0))
    trB = sum((B[i][i] for i in range(n + 1)), const(0))
    if trA != trB:
        raise CheckFailure("amplitude", "trace(A) != trace(B)", trA - trB)
    return {"check": "amplitude", "n": n, "status": "pass", "residual": 0, "charpoly": str(dA)}


def hessian_jacobian_check(n, q, points=None, seed=0, tol=1e-6):
    """Ratio det(dD_i/dp_j) / det Hess F_q at every critical point; must be constant."""
    q = _check_q(n, q)
    points = points or find_critical_points(n, q, seed=seed)
    ratios = []
    for pt in points:
        h = complex(np.linalg.det(pt.hess))
        scale = max(1.0, float(np.max(np.abs(pt.hess)))) ** pt.hess.shape[0]
        if abs(h) < 1e-12 * scale:
            raise DegenerateInput("degenerate Hessian at a critical point; choose another q")
        ratios.append(jacobian_det(n, pt.p, q) / h)
    ratios = np.array(ratios)
    mean = ratios.mean()
    spread = float(np.max(np.abs(ratios - mean)) / abs(mean))
    if not spread < tol:
        raise CheckFailure("hessian-jacobian", f"ratio spread {spread:.3e}", spread)
    return {
        "check": "hessian-jacobian",
        "n": n,
        "status": "pass",
        "residual": spread,
        "ratio": [float(mean.real), float(mean.imag)],
    }
