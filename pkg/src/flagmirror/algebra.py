"""Exact arithmetic: rationals, multivariate polynomials, Laurent polynomials in h.

Rationals are ``gmpy2.mpq`` (exported as :data:`Rational`); they compare and
mix freely with :class:`fractions.Fraction` and ``int``. Polynomials carry their own
ordered variable universe; binary operations extend it by union, so
``p_0 + q_1`` just works. Variables are ordered

    lam < h < p_0 < ... < p_n < q_1 < ... < q_n < (anything else)

and terms are listed in graded reverse-lexicographic order, which makes
:func:`str` a canonical serialization.
"""

from __future__ import annotations

import ast
import math
import re
from fractions import Fraction
from functools import reduce
from itertools import combinations

import gmpy2
import numpy as np

from .errors import BudgetExceeded, RankDeficiencyError

Rational = gmpy2.mpq

__all__ = [
    "Rational",
    "MultiPoly",
    "LaurentH",
    "var",
    "const",
    "var_key",
    "parse_poly",
    "det",
    "matmul",
    "solve_exact",
    "solve_lstsq",
    "rank_exact",
    "poisson",
    "DEFAULT_WEIGHTS",
]

_VAR_RE = re.compile(r"^([A-Za-z]+)_?(\d*)$")
_FAMILY_RANK = {"lam": 0, "h": 1, "p": 2, "q": 3}

DEFAULT_WEIGHTS = {"lam": 1, "h": 1, "p": 1, "q": 2, "t": 0}


def var_key(name):
    """Sort key placing variables in the canonical universe order."""
    m = _VAR_RE.match(name)
    if m is None:
        return (9, name, 0)
    fam, idx = m.group(1), m.group(2)
    i = int(idx) if idx else -1
    return (_FAMILY_RANK.get(fam, 4), fam, i)


def _family(name):
    m = _VAR_RE.match(name)
    return m.group(1) if m else name


_MPQ = type(gmpy2.mpq(0))
_MPZ = type(gmpy2.mpz(0))


def _as_fraction(c):
    if type(c) is _MPQ:
        return c
    if isinstance(c, (int, np.integer, _MPZ)):
        return Rational(int(c))
    if isinstance(c, (Fraction, str)):
        return Rational(c)
    raise TypeError(f"exact coefficient expected, got {type(c).__name__}")


def _grevlex_key(exps):
    # sort descending by this key: higher total degree first, then the
    # monomial with the smaller exponent in the last variable first
    return (sum(exps), tuple(-e for e in reversed(exps)))


class MultiPoly:
    """Exact multivariate polynomial over the rationals.

    Parameters
    ----------
    variables : sequence of str
        Variable names; reordered into canonical order.
    terms : dict
        Map from exponent tuple (aligned with ``variables``) to coefficient.
    """

    __slots__ = ("vars", "terms", "_hash")

    def __init__(self, variables=(), terms=None):
        variables = tuple(variables)
        order = sorted(range(len(variables)), key=lambda i: var_key(variables[i]))
        if len(set(variables)) != len(variables):
            raise ValueError(f"duplicate variables in {variables}")
        self.vars = tuple(variables[i] for i in order)
        clean = {}
        for exps, c in (terms or {}).items():
            if len(exps) != len(variables):
                raise ValueError("exponent vector length does not match variables")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent in polynomial term")
            key = tuple(exps[i] for i in order)
            c = _as_fraction(c)
            if c:
                clean[key] = clean.get(key, 0) + c
                if not clean[key]:
                    del clean[key]
        self.terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, variables, terms):
        # trusted constructor: variables already canonical, no zero coefficients
        obj = cls.__new__(cls)
        obj.vars = variables
        obj.terms = terms
        obj._hash = None
        return obj

    # -- construction helpers -------------------------------------------
    @classmethod
    def constant(cls, c):
        c = _as_fraction(c)
        return cls._raw((), {(): c} if c else {})

    @classmethod
    def variable(cls, name):
        return cls._raw((name,), {(1,): Rational(1)})

    # -- alignment -------------------------------------------------------
    def extend(self, variables):
        """Re-express over a larger universe (must contain ``self.vars``)."""
        variables = tuple(sorted(set(variables) | set(self.vars), key=var_key))
        if variables == self.vars:
            return self
        pos = [variables.index(v) for v in self.vars]
        k = len(variables)
        terms = {}
        for exps, c in self.terms.items():
            e = [0] * k
            for p, x in zip(pos, exps):
                e[p] = x
            terms[tuple(e)] = c
        return MultiPoly._raw(variables, terms)

    def _align(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(other)
        if self.vars == other.vars:
            return self, other
        universe = set(self.vars) | set(other.vars)
        return self.extend(universe), other.extend(universe)

    def compact(self):
        """Drop variables that do not occur."""
        used = [i for i in range(len(self.vars)) if any(e[i] for e in self.terms)]
        if len(used) == len(self.vars):
            return self
        return MultiPoly._raw(
            tuple(self.vars[i] for i in used),
            {tuple(e[i] for i in used): c for e, c in self.terms.items()},
        )

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        try:
            a, b = self._align(other)
        except TypeError:
            return NotImplemented
        terms = dict(a.terms)
        for e, c in b.terms.items():
            s = terms.get(e, 0) + c
            if s:
                terms[e] = s
            else:
                terms.pop(e, None)
        return MultiPoly._raw(a.vars, terms)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly._raw(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, MultiPoly):
            try:
                other = MultiPoly.constant(other)
            except TypeError:
                return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            try:
                c = _as_fraction(other)
            except TypeError:
                return NotImplemented
            return self.scale(c)
        a, b = self._align(other)
        terms = {}
        for e1, c1 in a.terms.items():
            for e2, c2 in b.terms.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                s = terms.get(e, 0) + c1 * c2
                if s:
                    terms[e] = s
                else:
                    del terms[e]
        return MultiPoly._raw(a.vars, terms)

    __rmul__ = __mul__

    def scale(self, c):
        c = _as_fraction(c)
        if not c:
            return MultiPoly._raw(self.vars, {})
        return MultiPoly._raw(self.vars, {e: c * v for e, v in self.terms.items()})

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        out = MultiPoly.constant(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, MultiPoly):
            try:
                other = MultiPoly.constant(other)
            except TypeError:
                return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        if self._hash is None:
            c = self.compact()
            self._hash = hash((c.vars, frozenset(c.terms.items())))
        return self._hash

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    # -- calculus / substitution ----------------------------------------
    def diff(self, name):
        """Partial derivative with respect to ``name``."""
        if name not in self.vars:
            return MultiPoly._raw(self.vars, {})
        i = self.vars.index(name)
        terms = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = e[:i] + (e[i] - 1,) + e[i + 1 :]
                terms[ne] = c * e[i]
        return MultiPoly._raw(self.vars, terms)

    def subs(self, mapping):
        """Substitute polynomials (or rationals) for variables."""
        mapping = {k: (v if isinstance(v, MultiPoly) else MultiPoly.constant(v)) for k, v in mapping.items()}
        idx = [i for i, v in enumerate(self.vars) if v in mapping]
        if not idx:
            return self
        keep = [i for i in range(len(self.vars)) if i not in idx]
        keep_vars = tuple(self.vars[i] for i in keep)
        powers = {}
        out = MultiPoly.constant(0)
        for e, c in self.terms.items():
            mono = MultiPoly._raw(keep_vars, {tuple(e[i] for i in keep): c})
            for i in idx:
                if e[i]:
                    key = (i, e[i])
                    if key not in powers:
                        powers[key] = mapping[self.vars[i]] ** e[i]
                    mono = mono * powers[key]
            out = out + mono
        return out

    def evaluate(self, values):
        """Numeric value at ``values`` (dict name -> number); all variables required."""
        total = 0
        vals = [values[v] for v in self.vars]
        for e, c in self.terms.items():
            t = c if not any(isinstance(v, (float, complex)) for v in vals) else complex(c)
            for v, k in zip(vals, e):
                if k:
                    t = t * v**k
            total = total + t
        return total

    def coeff(self, name, k):
        """Coefficient of ``name**k`` as a polynomial in the other variables."""
        if name not in self.vars:
            return self if k == 0 else MultiPoly._raw(self.vars, {})
        i = self.vars.index(name)
        terms = {}
        for e, c in self.terms.items():
            if e[i] == k:
                terms[e[:i] + (0,) + e[i + 1 :]] = c
        return MultiPoly._raw(self.vars, terms).compact()

    def degree_in(self, name):
        if name not in self.vars:
            return 0
        i = self.vars.index(name)
        return max((e[i] for e in self.terms), default=0)

    def weighted_degrees(self, weights=None):
        w = dict(DEFAULT_WEIGHTS)
        w.update(weights or {})
        ws = [w.get(v, w.get(_family(v), 1)) for v in self.vars]
        return {sum(a * b for a, b in zip(ws, e)) for e in self.terms}

    def weighted_degree(self, weights=None):
        """Maximal weighted degree (p:1, q:2, lam:1, h:1 by default); -1 for zero."""
        return max(self.weighted_degrees(weights), default=-1)

    def is_homogeneous(self, weights=None):
        return len(self.weighted_degrees(weights)) <= 1

    def constant_term(self):
        return self.terms.get((0,) * len(self.vars), Rational(0))

    def free_of(self, names):
        names = set(names)
        return all(not e[i] for e in self.terms for i, v in enumerate(self.vars) if v in names)

    # -- output ----------------------------------------------------------
    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: _grevlex_key(kv[0]), reverse=True)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.sorted_terms():
            factors = [v if k == 1 else f"{v}^{k}" for v, k in zip(self.vars, e) if k]
            mono = "*".join(factors)
            sign = "-" if c < 0 else "+"
            a = abs(c)
            if not mono:
                body = str(a)
            elif a == 1:
                body = mono
            else:
                body = f"{a}*{mono}"
            parts.append((sign, body))
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            s += f" {sign} {body}"
        return s

    def __repr__(self):
        return f"MultiPoly({str(self)!r})"


def var(name):
    return MultiPoly.variable(name)


def const(c):
    return MultiPoly.constant(c)


class _PolyBuilder(ast.NodeVisitor):
    def __init__(self, aliases):
        self.aliases = aliases

    def visit_Expression(self, node):
        return self.visit(node.body)

    def visit_BinOp(self, node):
        a = self.visit(node.left)
        if isinstance(node.op, ast.Pow):
            k = self.visit(node.right)
            if not isinstance(k, MultiPoly) or k.vars or k.constant_term().denominator != 1:
                raise ValueError("exponent must be a nonnegative integer")
            return a ** int(k.constant_term())
        b = self.visit(node.right)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div):
            if b.vars or not b.terms:
                raise ValueError("division only by nonzero constants")
            return a.scale(1 / b.constant_term())
        raise ValueError(f"unsupported operator {type(node.op).__name__}")

    def visit_UnaryOp(self, node):
        v = self.visit(node.operand)
        if isinstance(node.op, ast.USub):
            return -v
        if isinstance(node.op, ast.UAdd):
            return v
        raise ValueError("unsupported unary operator")

    def visit_Constant(self, node):
        if isinstance(node.value, bool) or not isinstance(node.value, int):
            raise ValueError(f"only integer literals allowed, got {node.value!r}")
        return MultiPoly.constant(node.value)

    def visit_Name(self, node):
        if node.id in self.aliases:
            return self.aliases[node.id]
        if _VAR_RE.match(node.id) is None:
            raise ValueError(f"bad variable name {node.id!r}")
        return MultiPoly.variable(node.id)

    def generic_visit(self, node):
        raise ValueError(f"unsupported syntax: {type(node).__name__}")


def parse_poly(text, aliases=None):
    """Parse ``"3/2*p_0^2*q_1 - p_1"`` (``^`` or ``**`` for powers)."""
    text = text.replace("^", "**")
    tree = ast.parse(text, mode="eval")
    return _PolyBuilder(aliases or {}).visit(tree)


class LaurentH:
    """Laurent polynomial in h with rational coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        self.coeffs = {int(k): _as_fraction(v) for k, v in (coeffs or {}).items() if v}

    @classmethod
    def monomial(cls, c, k):
        return cls({k: c})

    def __add__(self, other):
        if not isinstance(other, LaurentH):
            other = LaurentH({0: other})
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        r = LaurentH()
        r.coeffs = out
        return r

    __radd__ = __add__

    def __neg__(self):
        r = LaurentH()
        r.coeffs = {k: -v for k, v in self.coeffs.items()}
        return r

    def __sub__(self, other):
        return self + (-other if isinstance(other, LaurentH) else LaurentH({0: -_as_fraction(other)}))

    def __mul__(self, other):
        if not isinstance(other, LaurentH):
            c = _as_fraction(other)
            r = LaurentH()
            r.coeffs = {k: v * c for k, v in self.coeffs.items()} if c else {}
            return r
        out = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                out[k1 + k2] = out.get(k1 + k2, 0) + v1 * v2
        return LaurentH(out)

    __rmul__ = __mul__

    def shift(self, k):
        r = LaurentH()
        r.coeffs = {e + k: v for e, v in self.coeffs.items()}
        return r

    def __eq__(self, other):
        if not isinstance(other, LaurentH):
            other = LaurentH({0: other})
        return self.coeffs == other.coeffs

    def __bool__(self):
        return bool(self.coeffs)

    def window(self):
        if not self.coeffs:
            return None
        return min(self.coeffs), max(self.coeffs)

    def evaluate(self, h):
        return sum(complex(v) * h**k for k, v in self.coeffs.items())

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs, reverse=True):
            v = self.coeffs[k]
            parts.append(f"({v})*h^{k}" if k else f"({v})")
        return " + ".join(parts)

    __repr__ = __str__


# -- matrices -----------------------------------------------------------

MAX_DET_SIZE = 12


def det(M):
    """Exact determinant by memoized Laplace expansion along rows.

    Works for any commutative entries supporting ``+``, ``-`` and ``*``
    (MultiPoly, Fraction, int). Size is capped at 12.
    """
    n = len(M)
    if any(len(row) != n for row in M):
        raise ValueError("square matrix required")
    if n > MAX_DET_SIZE:
        raise BudgetExceeded(f"determinant size {n} exceeds the cap of {MAX_DET_SIZE}")
    if n == 0:
        return MultiPoly.constant(1)
    memo = {}

    def minor(row, mask):
        # determinant of rows row.. and the columns in mask
        if row == n:
            return 1
        key = mask
        if key in memo:
            return memo[key]
        total = 0
        sign = 1
        for j in range(n):
            if not mask >> j & 1:
                continue
            entry = M[row][j]
            if _nonzero(entry):
                sub = minor(row + 1, mask & ~(1 << j))
                if _nonzero(sub):
                    term = entry * sub
                    total = total + term if sign > 0 else total - term
            sign = -sign
        memo[key] = total
        return total

    result = minor(0, (1 << n) - 1)
    return result if isinstance(result, MultiPoly) else MultiPoly.constant(result)


def _nonzero(x):
    return bool(x) if isinstance(x, MultiPoly) else x != 0


def matmul(A, B):
    """Product of two matrices given as lists of rows."""
    m, k = len(A), len(B)
    p = len(B[0]) if B else 0
    out = []
    for i in range(m):
        row = []
        for j in range(p):
            s = 0
            for l in range(k):
                if _nonzero(A[i][l]) and _nonzero(B[l][j]):
                    s = s + A[i][l] * B[l][j]
            row.append(s if isinstance(s, MultiPoly) else MultiPoly.constant(s))
        out.append(row)
    return out


def _eliminate(rows, ncols):
    """Row-reduce a list of Fraction rows in place; return pivot columns."""
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c]), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return pivots


def rank_exact(A):
    rows = [[_as_fraction(x) for x in row] for row in A]
    return len(_eliminate(rows, len(rows[0]) if rows else 0))


def solve_exact(A, b):
    """Solve ``A x = b`` over the rationals; raises on singular ``A``."""
    n = len(A)
    if any(len(row) != n for row in A) or len(b) != n:
        raise ValueError("square system required")
    rows = [[_as_fraction(x) for x in row] + [_as_fraction(y)] for row, y in zip(A, b)]
    pivots = _eliminate(rows, n)
    if len(pivots) < n:
        raise RankDeficiencyError(len(pivots), n)
    return [rows[i][n] for i in range(n)]


def solve_lstsq(A, b, rcond=None):
    """Least-squares solve over complex doubles.

    Returns ``(x, residual)`` with ``residual = ||A x - b||``. Square
    rank-deficient systems raise :class:`RankDeficiencyError`.
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=rcond)
    if rank < A.shape[1]:
        raise RankDeficiencyError(int(rank), A.shape[1])
    return x, float(np.linalg.norm(A @ x - b))


# -- Poisson bracket ----------------------------------------------------

def _t_derivative(f, i):
    # d/dt_i acting on q^d p^a: multiplies by d_i - d_{i+1}
    # (q_j = exp(t_j - t_{j-1}))
    terms = {}
    qi = f"q_{i}" if i >= 1 else None
    qn = f"q_{i + 1}"
    ii = f.vars.index(qi) if qi in f.vars else None
    jj = f.vars.index(qn) if qn in f.vars else None
    for e, c in f.terms.items():
        w = (e[ii] if ii is not None else 0) - (e[jj] if jj is not None else 0)
        if w:
            terms[e] = c * w
    return MultiPoly._raw(f.vars, terms)


def poisson(f, g):
    """Canonical bracket {f, g} with q_j = exp(t_j - t_{j-1})."""
    for x in (f, g):
        if not x.free_of(["lam", "h"]):
            raise ValueError("Poisson bracket is defined on polynomials in p and q only")
    universe = set(f.vars) | set(g.vars)
    idx = sorted(
        {int(v.split("_")[1]) for v in universe if _family(v) == "p"}
        | {int(v.split("_")[1]) for v in universe if _family(v) == "q"}
        | {int(v.split("_")[1]) - 1 for v in universe if _family(v) == "q"}
    )
    out = MultiPoly.constant(0)
    for i in idx:
        pi = f"p_{i}"
        out = out + f.diff(pi) * _t_derivative(g, i) - _t_derivative(f, i) * g.diff(pi)
    return out


def multinomial(ms):
    return math.factorial(sum(ms)) // reduce(lambda a, b: a * b, (math.factorial(m) for m in ms), 1)


def monomials(nvars, degree, weights=None):
    """All exponent tuples of the given (weighted) degree."""
    weights = weights or [1] * nvars
    out = []

    def rec(i, left, acc):
        if i == nvars:
            if left == 0:
                out.append(tuple(acc))
            return
        w = weights[i]
        for k in range(left // w + 1):
            acc.append(k)
            rec(i + 1, left - k * w, acc)
            acc.pop()

    rec(0, degree, [])
    return out


def subsets(seq, k):
    return list(combinations(seq, k))
