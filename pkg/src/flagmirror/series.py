"""Solution series of the quantum differential equations and their checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

from .algebra import Rational, rank_exact
from .cohomology import CohClass, _elem_add, classical_ring, gram_matrix
from .errors import BudgetExceeded, CheckFailure
from .toda import hamiltonian, quantized
from .weyl import QSeries, apply

__all__ = [
    "SolutionData",
    "form_value",
    "compute_s",
    "assemble_S",
    "all_S",
    "check_recursion",
    "check_hamiltonian",
    "check_integrals",
    "recursion_rank_check",
    "independence_check",
    "h_windows",
    "ProjectiveSeries",
    "projective_series",
]


def _check_budget(n, order):
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > 3:
        raise BudgetExceeded(f"n={n} exceeds the series budget n <= 3")
    cap = 6 if n <= 2 else 3
    if order > cap:
        raise BudgetExceeded(f"order {order} exceeds the budget {cap} for n={n}")
    if order < 0:
        raise ValueError("order must be nonnegative")


def form_value(d):
    """sum_{i=0}^{n} (d_i - d_{i+1})^2 with d_0 = d_{n+1} = 0."""
    ext = (0,) + tuple(d) + (0,)
    return sum((ext[i] - ext[i + 1]) ** 2 for i in range(len(ext) - 1))


def degrees(n, order):
    """All d in N^n with |d| <= order, by total degree then lexicographically."""
    out = [d for d in product(range(order + 1), repeat=n) if sum(d) <= order]
    return sorted(out, key=lambda d: (sum(d), d))


# elements with Laurent-in-h coefficients: {h_exp: {(basis_idx, ()): c}}

def _hadd(tgt, h, elem, c=1):
    slot = tgt.setdefault(h, {})
    for key, v in elem.items():
        _elem_add(slot, key, v * c)
    if not slot:
        del tgt[h]


def _hclean(x):
    return {h: e for h, e in x.items() if e}


def _n_action(ring, d, x):
    """sum_{i=1}^n d_i (p_i - p_{i-1}) applied to each h-level of x."""
    out = {}
    for h, elem in x.items():
        acc = {}
        for i, di in enumerate(d, start=1):
            if not di:
                continue
            for key, v in ring.mul_p(i, elem).items():
                _elem_add(acc, key, di * v)
            for key, v in ring.mul_p(i - 1, elem).items():
                _elem_add(acc, key, -di * v)
        if acc:
            out[h] = acc
    return out


def _m_action(ring, d, x):
    """M_d x with M_d = h N + (h^2/2) (d, d)."""
    out = {}
    half_q = Rational(form_value(d), 2)
    for h, elem in x.items():
        _hadd(out, h + 2, elem, half_q)
    for h, elem in _n_action(ring, d, x).items():
        _hadd(out, h + 1, elem)
    return _hclean(out)


@dataclass
class SolutionData:
    n: int
    order: int
    s: dict
    ring: object = field(repr=False, default=None)

    def component(self, d, idx):
        """Coefficient of basis element ``idx`` in s^(d), as {h_exp: rational}."""
        out = {}
        for h, elem in self.s.get(tuple(d), {}).items():
            c = elem.get((idx, ()), 0)
            if c:
                out[h] = c
        return out

    def table(self):
        """Plain-text view: d -> {basis monomial: Laurent polynomial in h}."""
        ring = self.ring
        names = []
        for e in ring.basis:
            parts = [f"p_{i}" if k == 1 else f"p_{i}^{k}" for i, k in enumerate(e, start=1) if k]
            names.append("*".join(parts) or "1")
        out = {}
        for d in sorted(self.s, key=lambda d: (sum(d), d)):
            rows = {}
            for idx, name in enumerate(names):
                comp = self.component(d, idx)
                if comp:
                    rows[name] = " + ".join(f"({c})*h^{h}" for h, c in sorted(comp.items(), reverse=True))
            out[str(list(d))] = rows
        return out


def compute_s(n, order):
    """Solve M_d s^(d) = sum_{j: d_j > 0} s^(d - a_j) degree by degree, exactly.

    M_d = c + N with c = (h^2/2)(d, d) and N nilpotent, inverted by the
    finite series c^{-1} sum_k (-N/c)^k.
    """
    _check_budget(n, order)
    ring = classical_ring(n)
    s = {(0,) * n: {0: ring.unit()}}
    for d in degrees(n, order)[1:]:
        rhs = {}
        for j in range(n):
            if d[j]:
                prev = d[:j] + (d[j] - 1,) + d[j + 1 :]
                for h, elem in s.get(prev, {}).items():
                    _hadd(rhs, h, elem)
        qd = form_value(d)
        if qd == 0:
            raise CheckFailure("recursion-rank", f"(d, d) = 0 for d = {d}")
        inv_c = Rational(2, qd)
        # term_k = (-N/c)^k c^{-1} rhs
        term = {h - 2: {k: v * inv_c for k, v in e.items()} for h, e in rhs.items()}
        total = {}
        for _ in range(ring.top + 2):
            if not term:
                break
            for h, elem in term.items():
                _hadd(total, h, elem)
            nxt = {}
            for h, elem in _n_action(ring, d, term).items():
                _hadd(nxt, h - 1, elem, -inv_c)
            term = _hclean(nxt)
        if term:
            raise CheckFailure("recursion", "nilpotent part did not terminate")
        s[d] = _hclean(total)
    return SolutionData(n=n, order=order, s=s, ring=ring)


def check_recursion(data):
    """M_d s^(d) - sum s^(d - a_j) = 0 for every stored d != 0."""
    ring, n = data.ring, data.n
    for d, sd in data.s.items():
        if not any(d):
            continue
        diff = _m_action(ring, d, sd)
        for j in range(n):
            if d[j]:
                prev = d[:j] + (d[j] - 1,) + d[j + 1 :]
                for h, elem in data.s.get(prev, {}).items():
                    _hadd(diff, h, elem, -1)
        diff = _hclean(diff)
        if diff:
            raise CheckFailure("recursion", f"M_d s^(d) differs from the right side at d = {d}")
    return {"check": "recursion", "n": n, "status": "pass", "residual": 0}


@lru_cache(maxsize=None)
def _pm_vectors(n):
    """For every m with |m| <= top: (m, coefficient vector of prod p_i^{m_i} / m!)."""
    ring = classical_ring(n)
    N = len(ring.basis)
    out = []
    for m in product(range(ring.top + 1), repeat=n + 1):
        if sum(m) > ring.top:
            continue
        elem = ring.unit()
        for i, k in enumerate(m):
            for _ in range(k):
                elem = ring.mul_p(i, elem)
        if not elem:
            continue
        fact = math.prod(math.factorial(k) for k in m)
        vec = [Rational(0)] * N
        for (idx, _), c in elem.items():
            vec[idx] = c / fact
        out.append((m, vec))
    return tuple(out)


def _as_classical(A, n):
    ring = classical_ring(n)
    if isinstance(A, CohClass):
        if A.ring.quantum:
            raise ValueError("assemble_S takes classical classes")
        return A.data
    if isinstance(A, int):
        return ring.basis_element(A)
    if isinstance(A, str):
        return CohClass.from_poly(ring, A).data
    return A


def assemble_S(A, data):
    """S_A = <exp(sum p_i t_i / h) s, A> as a truncated series in q with t, h coefficients."""
    n, ring = data.n, data.ring
    A = _as_classical(A, n)
    G = gram_matrix(n)
    N = len(ring.basis)
    pms = _pm_vectors(n)
    coeffs = {}
    for d, sd in data.s.items():
        poly = {}
        for h, elem in sd.items():
            y = ring.mul(elem, A)
            if not y:
                continue
            gy = [Rational(0)] * N
            for (l, _), c in y.items():
                for k in range(N):
                    if G[k][l]:
                        gy[k] += G[k][l] * c
            for m, vec in pms:
                val = sum((vec[k] * gy[k] for k in range(N) if vec[k] and gy[k]), Rational(0))
                if val:
                    key = (m, h - sum(m))
                    poly[key] = poly.get(key, 0) + val
        poly = {k: v for k, v in poly.items() if v}
        if poly:
            coeffs[d] = poly
    return QSeries._raw(n, data.order, coeffs)


def all_S(data):
    return [assemble_S(k, data) for k in range(len(data.ring.basis))]


def _check_ops(name, ops, data, series):
    for label, X in ops:
        for a, S in enumerate(series):
            r = apply(X, S)
            if not r.is_zero():
                d = min(r.coeffs, key=lambda d: (sum(d), d))
                raise CheckFailure(name, f"{label} S_A != 0 for basis class {a} at q-degree {list(d)}", r)
    return {
        "check": name,
        "n": data.n,
        "order": data.order,
        "status": "pass",
        "residual": 0,
        "classes": len(series),
    }


def check_hamiltonian(n, order, data=None, series=None):
    """H S_A = 0 through the truncation order for every basis class A."""
    data = data or compute_s(n, order)
    series = series or all_S(data)
    return _check_ops("hamiltonian-annihilates", [("H", hamiltonian(n))], data, series)


def check_integrals(n, order, data=None, series=None):
    """D_m S_A = 0 through the truncation order for every m and every basis class A."""
    data = data or compute_s(n, order)
    series = series or all_S(data)
    ops = [(f"D_{m}", X) for m, X in enumerate(quantized(n))]
    return _check_ops("integrals-annihilate", ops, data, series)


def _m_matrix(ring, d):
    """M_d at h = 1 in the classical basis (columns are images of basis elements)."""
    N = len(ring.basis)
    cols = []
    for j in range(N):
        img = _m_action(ring, d, {0: ring.basis_element(j)})
        col = [Rational(0)] * N
        for _, elem in img.items():
            for (k, _), c in elem.items():
                col[k] += c
        cols.append(col)
    return [[cols[j][i] for j in range(N)] for i in range(N)]


def recursion_rank_check(n, order):
    """(d, d) > 0 for every 0 < |d| <= order, and M_d is invertible on H*(F).

    Invertibility of M_d is what forces a solution with vanishing q^0 term
    to vanish identically.
    """
    if n > 2:
        raise BudgetExceeded(f"n={n} exceeds the rank-check budget n <= 2")
    ring = classical_ring(n)
    N = len(ring.basis)
    values = {}
    for d in degrees(n, order)[1:]:
        v = form_value(d)
        values[str(list(d))] = v
        if v <= 0:
            raise CheckFailure("recursion-rank", f"(d, d) = {v} for d = {d}")
        r = rank_exact(_m_matrix(ring, d))
        if r != N:
            raise CheckFailure("recursion-rank", f"M_d has rank {r} < {N} at d = {d}")
        # nilpotency of the h-linear part
        for j in range(N):
            y = {0: ring.basis_element(j)}
            for _ in range(ring.top + 1):
                y = _n_action(ring, d, y)
            if y:
                raise CheckFailure("recursion-rank", f"N_d is not nilpotent at d = {d}")
    return {"check": "recursion-rank", "n": n, "order": order, "status": "pass", "residual": 0, "form_values": values}


def independence_check(n, data=None):
    """The S_A are linearly independent: rank of their q^0 jets is (n+1)!."""
    data = data or compute_s(n, 0)
    series = all_S(data)
    keys = sorted({k for S in series for k in S.coeffs.get((0,) * n, {})})
    M = [[S.coeffs.get((0,) * n, {}).get(k, Rational(0)) for k in keys] for S in series]
    r = rank_exact(M)
    N = len(data.ring.basis)
    if r != N:
        raise CheckFailure("independence", f"jet matrix has rank {r} < {N}")
    return {"check": "independence", "n": n, "status": "pass", "residual": 0, "rank": r}


def h_windows(data):
    """Observed range of h-exponents in s^(d), keyed by d."""
    return {str(list(d)): [min(sd), max(sd)] for d, sd in data.s.items() if sd}


# -- projective space ----------------------------------------------------

@dataclass
class ProjectiveSeries:
    """s = exp(p log q / h) sum_d q^d / prod_{k<=d} (p + k h)^N, modulo p^N.

    ``coeffs[d]`` maps ``(j, k, h)`` to the coefficient of p^j (log q)^k h^h.
    """

    N: int
    order: int
    coeffs: dict

    def component(self, j):
        """Scalar series <s, p^j>: {d: {(k, h): c}}."""
        out = {}
        for d, poly in self.coeffs.items():
            sub = {(k, h): c for (jj, k, h), c in poly.items() if jj == j}
            if sub:
                out[d] = sub
        return out


def _inverse_power(N, k, power):
    """(p + k h)^{-power} modulo p^N as {(j, h): c}."""
    inv = {}
    kk = Rational(k)
    for j in range(N):
        inv[(j, -1 - j)] = Rational((-1) ** j) / kk ** (j + 1)
    out = {(0, 0): Rational(1)}
    for _ in range(power):
        out = _pmul(out, inv, N)
    return out


def _pmul(a, b, N):
    out = {}
    for (j1, h1), c1 in a.items():
        for (j2, h2), c2 in b.items():
            if j1 + j2 < N:
                key = (j1 + j2, h1 + h2)
                out[key] = out.get(key, 0) + c1 * c2
    return {k: v for k, v in out.items() if v}


def projective_series(N, order, check=True):
    """Build the series for CP^{N-1} and verify (h q d/dq)^N s = q s exactly."""
    if N < 1 or N > 6:
        raise BudgetExceeded(f"N={N} outside 1 <= N <= 6")
    base = {}
    acc = {(0, 0): Rational(1)}
    for d in range(order + 1):
        if d:
            acc = _pmul(acc, _inverse_power(N, d, N), N)
        base[d] = dict(acc)
    # multiply by exp(p L / h) = sum_j p^j L^j / (j! h^j)
    coeffs = {}
    for d, poly in base.items():
        out = {}
        for (j, h), c in poly.items():
            for e in range(N - j):
                key = (j + e, e, h - e)
                out[key] = out.get(key, 0) + c / math.factorial(e)
        coeffs[d] = {k: v for k, v in out.items() if v}
    ps = ProjectiveSeries(N, order, coeffs)
    if check:
        _check_projective(ps)
    return ps


def _theta(poly, d):
    """h q d/dq on q^d L^k h^e (L = log q): h (d L^k + k L^{k-1})."""
    out = {}
    for (j, k, h), c in poly.items():
        if d:
            key = (j, k, h + 1)
            out[key] = out.get(key, 0) + c * d
        if k:
            key = (j, k - 1, h + 1)
            out[key] = out.get(key, 0) + c * k
    return {k: v for k, v in out.items() if v}


def _check_projective(ps):
    for d in range(ps.order + 1):
        lhs = ps.coeffs.get(d, {})
        for _ in range(ps.N):
            lhs = _theta(lhs, d)
        rhs = ps.coeffs.get(d - 1, {}) if d else {}
        diff = dict(lhs)
        for k, v in rhs.items():
            diff[k] = diff.get(k, 0) - v
        diff = {k: v for k, v in diff.items() if v}
        if diff:
            raise CheckFailure("cpn", f"(h q d/dq)^N s != q s at q-degree {d}", diff)
    return {"check": "cpn", "N": ps.N, "order": ps.order, "status": "pass", "residual": 0}
