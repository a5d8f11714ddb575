"""Differential operators in h*d/dt_i with coefficients polynomial in q_j = exp(t_j - t_{j-1}).

An operator on n+1 sites is a finite sum of terms

    c * h^k * q^d * (h d_0)^{a_0} ... (h d_n)^{a_n}

kept in normal order (q-powers to the left). Moving a derivative past
``q^d`` uses

    (h d_i) q^d = q^d (h d_i + h (d_i - d_{i+1})),    d_0 = d_{n+1} = 0.

:class:`QSeries` holds truncated q-series whose coefficients are
polynomials in t_0..t_n with Laurent-in-h rational coefficients; operators
act on them through :func:`apply`.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

from .algebra import Rational, MultiPoly, _as_fraction

__all__ = [
    "DiffOp",
    "QSeries",
    "compose",
    "commutator",
    "symbol",
    "quantize",
    "apply",
    "q_weight",
]


def q_weight(d, i):
    """Eigenvalue of d/dt_i on q^d: d_i - d_{i+1} (1-based q indices)."""
    n = len(d)
    left = d[i - 1] if i >= 1 else 0
    right = d[i] if i < n else 0
    return left - right


def _add_into(terms, key, c):
    s = terms.get(key, 0) + c
    if s:
        terms[key] = s
    else:
        terms.pop(key, None)


class DiffOp:
    """Normal-ordered operator; ``terms`` maps ``(d, a, k)`` to a Fraction."""

    __slots__ = ("n", "terms")

    def __init__(self, n, terms=None):
        self.n = n
        self.terms = {}
        for (d, a, k), c in (terms or {}).items():
            d, a = tuple(d), tuple(a)
            if len(d) != n or len(a) != n + 1:
                raise ValueError("term shape does not match the number of sites")
            if min(d, default=0) < 0 or min(a) < 0 or k < 0:
                raise ValueError("negative exponents are not allowed")
            c = _as_fraction(c)
            if c:
                _add_into(self.terms, (d, a, int(k)), c)

    @classmethod
    def _raw(cls, n, terms):
        obj = cls.__new__(cls)
        obj.n = n
        obj.terms = terms
        return obj

    # -- elementary operators -------------------------------------------
    @classmethod
    def identity(cls, n):
        return cls._raw(n, {((0,) * n, (0,) * (n + 1), 0): Rational(1)})

    @classmethod
    def hd(cls, n, i, power=1):
        """(h d/dt_i)^power."""
        a = [0] * (n + 1)
        a[i] = power
        return cls._raw(n, {((0,) * n, tuple(a), 0): Rational(1)})

    @classmethod
    def q(cls, n, j, power=1):
        """Multiplication by q_j^power, 1 <= j <= n."""
        if not 1 <= j <= n:
            raise ValueError(f"q_{j} does not exist for n={n}")
        d = [0] * n
        d[j - 1] = power
        return cls._raw(n, {(tuple(d), (0,) * (n + 1), 0): Rational(1)})

    @classmethod
    def hbar(cls, n, power=1):
        return cls._raw(n, {((0,) * n, (0,) * (n + 1), power): Rational(1)})

    # -- arithmetic ------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, DiffOp):
            other = DiffOp.identity(self.n) * _as_fraction(other)
        if other.n != self.n:
            raise ValueError(f"site counts differ: {self.n + 1} vs {other.n + 1}")
        return other

    def __add__(self, other):
        other = self._check(other)
        terms = dict(self.terms)
        for key, c in other.terms.items():
            _add_into(terms, key, c)
        return DiffOp._raw(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return DiffOp._raw(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._check(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, DiffOp):
            return compose(self, other)
        c = _as_fraction(other)
        if not c:
            return DiffOp._raw(self.n, {})
        return DiffOp._raw(self.n, {k: v * c for k, v in self.terms.items()})

    def __rmul__(self, other):
        return self * other

    def __pow__(self, k):
        out = DiffOp.identity(self.n)
        for _ in range(k):
            out = compose(out, self)
        return out

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    # -- grading ---------------------------------------------------------
    def degrees(self):
        """Weighted degrees with deg h = 1 (so deg h*d = 1) and deg q = 2."""
        return {k + sum(a) + 2 * sum(d) for (d, a, k) in self.terms}

    def is_homogeneous(self):
        return len(self.degrees()) <= 1

    def q_degree(self):
        return max((sum(d) for (d, _, _) in self.terms), default=0)

    def h_leading(self):
        """The operator with every h^k dropped to h^(k-1); terms with k = 0 must be absent."""
        if any(k == 0 for (_, _, k) in self.terms):
            raise ValueError("operator has an h^0 part")
        return DiffOp._raw(self.n, {(d, a, k - 1): c for (d, a, k), c in self.terms.items()})

    # -- output ----------------------------------------------------------
    def sorted_terms(self):
        def key(item):
            (d, a, k), _ = item
            return (-(k + sum(a) + 2 * sum(d)), tuple(-x for x in a), tuple(-x for x in d), -k)

        return sorted(self.terms.items(), key=key)

    def __str__(self):
        if not self.terms:
            return "0"
        chunks = []
        for (d, a, k), c in self.sorted_terms():
            factors = []
            if k:
                factors.append("h" if k == 1 else f"h^{k}")
            for j, e in enumerate(d, start=1):
                if e:
                    factors.append(f"q_{j}" if e == 1 else f"q_{j}^{e}")
            for i, e in enumerate(a):
                if e:
                    factors.append(f"h*d_{i}" if e == 1 else f"(h*d_{i})^{e}")
            mono = "*".join(factors)
            mag = abs(c)
            body = mono if (mono and mag == 1) else (f"{mag}*{mono}" if mono else str(mag))
            chunks.append(("-" if c < 0 else "+", body))
        s = ("-" if chunks[0][0] == "-" else "") + chunks[0][1]
        for sign, body in chunks[1:]:
            s += f" {sign} {body}"
        return s

    def __repr__(self):
        return f"DiffOp(n={self.n}, {str(self)!r})"


@lru_cache(maxsize=65536)
def _move_past(a, d):
    """Expand (h d)^a q^d = q^d * sum_b coeff * h^extra * (h d)^b.

    Returns a tuple of (b, extra_h, coeff).
    """
    out = [((), 0, 1)]
    for i, ai in enumerate(a):
        w = q_weight(d, i)
        nxt = []
        for b, extra, coeff in out:
            if ai == 0 or w == 0:
                nxt.append((b + (ai,), extra, coeff))
                continue
            for bi in range(ai + 1):
                nxt.append((b + (bi,), extra + ai - bi, coeff * comb(ai, bi) * w ** (ai - bi)))
        out = nxt
    return tuple(out)


def compose(X, Y):
    """Normal-ordered product X*Y."""
    if X.n != Y.n:
        raise ValueError(f"site counts differ: {X.n + 1} vs {Y.n + 1}")
    terms = {}
    for (d1, a1, k1), c1 in X.terms.items():
        for (d2, a2, k2), c2 in Y.terms.items():
            d = tuple(x + y for x, y in zip(d1, d2))
            c12 = c1 * c2
            for b, extra, coeff in _move_past(a1, d2):
                a = tuple(x + y for x, y in zip(b, a2))
                _add_into(terms, (d, a, k1 + k2 + extra), c12 * coeff)
    return DiffOp._raw(X.n, terms)


def commutator(X, Y):
    return compose(X, Y) - compose(Y, X)


def _pq_vars(n):
    return tuple(f"p_{i}" for i in range(n + 1)) + tuple(f"q_{j}" for j in range(1, n + 1))


def symbol(X):
    """Replace (h d)^a by p^a and set h = 0."""
    n = X.n
    terms = {}
    for (d, a, k), c in X.terms.items():
        if k == 0:
            terms[a + d] = c
    return MultiPoly._raw(_pq_vars(n), terms)


def _infer_n(f):
    n = 0
    for v in f.vars:
        fam, _, idx = v.partition("_")
        if fam == "p":
            n = max(n, int(idx))
        elif fam == "q":
            n = max(n, int(idx))
        else:
            raise ValueError(f"quantize expects a polynomial in p and q, found {v}")
    return n


def quantize(f, n=None):
    """Quantize a polynomial in p, q by writing each q^d p^a as q^d (h d)^a.

    Returns ``(operator, ordering_independent)``. The second value is True
    when no monomial contains q_i together with p_i or p_{i-1}, in which
    case every ordering of the factors gives the same operator.
    """
    if n is None:
        n = _infer_n(f)
    f = f.extend(_pq_vars(n))
    if len(f.vars) != 2 * n + 1:
        raise ValueError(f"variables {f.vars} do not fit n={n}")
    terms = {}
    independent = True
    for e, c in f.terms.items():
        a, d = e[: n + 1], e[n + 1 :]
        for j in range(1, n + 1):
            if d[j - 1] and (a[j] or a[j - 1]):
                independent = False
        terms[(d, a, 0)] = c
    return DiffOp._raw(n, terms), independent


# -- q-series -----------------------------------------------------------


class QSeries:
    """Truncated series sum_d q^d f_d(t, h), |d| <= order.

    ``coeffs[d]`` maps ``(t_exponents, h_exponent)`` to a Fraction.
    """

    __slots__ = ("n", "order", "coeffs")

    def __init__(self, n, order, coeffs=None):
        self.n = n
        self.order = order
        self.coeffs = {}
        for d, poly in (coeffs or {}).items():
            d = tuple(d)
            if len(d) != n or sum(d) > order:
                continue
            clean = {(tuple(te), int(he)): _as_fraction(c) for (te, he), c in poly.items() if c}
            if clean:
                self.coeffs[d] = clean

    @classmethod
    def monomial(cls, n, order, d=None, t_exps=None, h_exp=0, c=1):
        d = tuple(d) if d is not None else (0,) * n
        te = tuple(t_exps) if t_exps is not None else (0,) * (n + 1)
        return cls(n, order, {d: {(te, h_exp): c}})

    def __add__(self, other):
        if self.n != other.n:
            raise ValueError("site counts differ")
        order = min(self.order, other.order)
        out = {}
        for src in (self.coeffs, other.coeffs):
            for d, poly in src.items():
                if sum(d) > order:
                    continue
                tgt = out.setdefault(d, {})
                for key, c in poly.items():
                    _add_into(tgt, key, c)
        return QSeries._raw(self.n, order, {d: p for d, p in out.items() if p})

    def __neg__(self):
        return QSeries._raw(self.n, self.order, {d: {k: -c for k, c in p.items()} for d, p in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = _as_fraction(c)
        if not c:
            return QSeries._raw(self.n, self.order, {})
        return QSeries._raw(self.n, self.order, {d: {k: v * c for k, v in p.items()} for d, p in self.coeffs.items()})

    @classmethod
    def _raw(cls, n, order, coeffs):
        obj = cls.__new__(cls)
        obj.n = n
        obj.order = order
        obj.coeffs = coeffs
        return obj

    def truncate(self, order):
        return QSeries._raw(self.n, min(order, self.order), {d: p for d, p in self.coeffs.items() if sum(d) <= order})

    def is_zero(self):
        return not self.coeffs

    def __eq__(self, other):
        if not isinstance(other, QSeries):
            return NotImplemented
        return (self - other).is_zero()

    def coefficient(self, d):
        return dict(self.coeffs.get(tuple(d), {}))

    def h_window(self, d):
        poly = self.coeffs.get(tuple(d))
        if not poly:
            return None
        hs = [h for (_, h) in poly]
        return min(hs), max(hs)

    def evaluate(self, q, hbar, t=None):
        """Numeric value at (q, hbar); t defaults to the gauge t_0 = 0, t_i = sum log q_j."""
        import numpy as np

        q = np.asarray(q, dtype=complex)
        if t is None:
            t = np.concatenate([[0.0], np.cumsum(np.log(q))])
        t = np.asarray(t, dtype=complex)
        total = 0j
        for d, poly in self.coeffs.items():
            qd = complex(np.prod(q ** np.asarray(d))) if d else 1.0
            acc = 0j
            for (te, he), c in poly.items():
                acc += float(c) * complex(np.prod(t ** np.asarray(te))) * hbar**he
            total += qd * acc
        return total

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for d in sorted(self.coeffs, key=lambda d: (sum(d), d)):
            parts.append(f"q^{list(d)}: {_tpoly_str(self.coeffs[d])}")
        return "\n".join(parts)


def _tpoly_str(poly):
    chunks = []
    for (te, he), c in sorted(poly.items(), key=lambda kv: (-sum(kv[0][0]), kv[0][0], -kv[0][1])):
        fac = [f"t_{i}" if e == 1 else f"t_{i}^{e}" for i, e in enumerate(te) if e]
        if he:
            fac.append(f"h^{he}")
        chunks.append(f"{c}" + ("*" + "*".join(fac) if fac else ""))
    return " + ".join(chunks)


def _apply_derivatives(poly, a, d):
    """prod_i (h w_i + h d/dt_i)^{a_i} applied to a t-polynomial at q-degree d."""
    cur = poly
    for i, ai in enumerate(a):
        if not ai:
            continue
        w = q_weight(d, i)
        for _ in range(ai):
            nxt = {}
            for (te, he), c in cur.items():
                if w:
                    _add_into(nxt, (te, he + 1), c * w)
                e = te[i]
                if e:
                    nte = te[:i] + (e - 1,) + te[i + 1 :]
                    _add_into(nxt, (nte, he + 1), c * e)
            cur = nxt
            if not cur:
                return cur
    return cur


def apply(X, S):
    """Apply an operator to a truncated series.

    Each output coefficient of q-degree at most ``S.order`` only receives
    contributions from coefficients of equal or lower degree, so the result
    is exact through ``S.order`` and is truncated there.
    """
    if X.n != S.n:
        raise ValueError(f"site counts differ: {X.n + 1} vs {S.n + 1}")
    by_a = {}
    for (e, a, k), c in X.terms.items():
        by_a.setdefault(a, []).append((e, k, c))
    out = {}
    for d, poly in S.coeffs.items():
        for a, rest in by_a.items():
            moved = _apply_derivatives(poly, a, d)
            if not moved:
                continue
            for e, k, c in rest:
                nd = tuple(x + y for x, y in zip(d, e))
                if sum(nd) > S.order:
                    continue
                tgt = out.setdefault(nd, {})
                for (te, he), v in moved.items():
                    _add_into(tgt, (te, he + k), v * c)
    return QSeries._raw(S.n, S.order, {d: p for d, p in out.items() if p})
