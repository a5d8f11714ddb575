"""Classical and quantum cohomology rings of the complete flag manifold.

Both rings are quotients of rational polynomials in p_0..p_n (and q_1..q_n
for the quantum ring) by a homogeneous ideal. p_0 is eliminated through the
first generator (sum of p_i), so the computation runs in p_1..p_n with the
standard monomials ``p_1^k_1 ... p_n^k_n, k_i <= i`` as candidate basis.
Normal forms are found degree by degree: in each weighted degree the span
of (monomial x generator) is row-reduced with non-standard monomials as
preferred pivots, and the basis claim is *verified* by checking that the
pivots are exactly the non-standard monomials.

Elements are stored sparsely as ``{(basis_index, extra): coefficient}``
where ``extra`` is a q-exponent tuple in the quantum ring and ``()`` in the
classical ring.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .algebra import Rational, MultiPoly, const, monomials, parse_poly, var
from .errors import BudgetExceeded, CheckFailure, DegenerateInput
from .toda import conserved

__all__ = [
    "QuotientRing",
    "CohClass",
    "classical_ring",
    "quantum_ring",
    "quantum_table",
    "J",
    "integrate",
    "pairing",
    "fiber_points",
    "jacobian_det",
    "residue_pairing",
    "residue_sign",
    "QuantizationMap",
    "quantization_map",
    "q_pairing",
    "check_degree_two",
    "check_classical_limit",
    "check_frobenius",
    "top_normalization",
    "gram_matrix",
    "check_residue",
    "exact_pairing_at",
]


def J(i):
    """Fundamental weight J_i = -(p_0 + ... + p_{i-1}); J_0 = 0."""
    out = const(0)
    for k in range(i):
        out = out - var(f"p_{k}")
    return out


def class_aliases(n):
    return {f"J_{i}": J(i) for i in range(1, n + 1)}


def _elem_add(tgt, key, c):
    s = tgt.get(key, 0) + c
    if s:
        tgt[key] = s
    else:
        tgt.pop(key, None)


class QuotientRing:
    """Q[p_0..p_n (, q)] / (generators), with p_0 eliminated.

    Parameters
    ----------
    n : int
    quantum : bool
        Quantum ring (generators D_0..D_n) or classical ring (elementary
        symmetric polynomials e_1..e_{n+1}).
    """

    def __init__(self, n, quantum=False):
        if not 1 <= n <= (3 if quantum else 4):
            raise BudgetExceeded(f"n={n} outside the supported range for the {'quantum' if quantum else 'classical'} ring")
        self.n = n
        self.quantum = quantum
        self.top = n * (n + 1) // 2
        self.nq = n if quantum else 0
        self.pvars = tuple(f"p_{i}" for i in range(1, n + 1))
        self.qvars = tuple(f"q_{j}" for j in range(1, n + 1)) if quantum else ()
        self.basis = sorted(
            (e for d in range(self.top + 1) for e in monomials(n, d) if all(e[i] <= i + 1 for i in range(n))),
            key=lambda e: (sum(e), tuple(reversed(e))),
        )
        self.index = {e: i for i, e in enumerate(self.basis)}
        self.basis_degree = [sum(e) for e in self.basis]
        if len(self.basis) != math.factorial(n + 1):
            raise CheckFailure("ring", f"standard monomial count {len(self.basis)} != (n+1)!")
        self._gens = self._generators()
        self._nf = {}
        self.graded_dims = []
        for k in range(self.top + 2):
            self._reduce_degree(k)
        self._images = [self._p_images(i) for i in range(n + 1)]

    # -- construction ----------------------------------------------------
    def _generators(self):
        n = self.n
        p0 = const(0)
        for i in range(1, n + 1):
            p0 = p0 - var(f"p_{i}")
        if self.quantum:
            raw = conserved(n)[1:]
        else:
            raw = [c.subs({f"q_{j}": 0 for j in range(1, n + 1)}) for c in conserved(n)[1:]]
        universe = self.pvars + self.qvars
        gens = []
        for g in raw:
            g = g.subs({"p_0": p0}).extend(universe)
            if set(g.vars) != set(universe):
                raise AssertionError("unexpected variables in generator")
            gens.append((g.weighted_degree(), {self._split(e): c for e, c in g.terms.items()}))
        return gens

    def _split(self, e):
        return (tuple(e[: self.n]), tuple(e[self.n :]))

    def _monos(self, k):
        """(p-exponents, q-exponents) of weighted degree k."""
        out = []
        for dq in range(k // 2 + 1):
            for qe in monomials(self.nq, dq) if self.nq else ([()] if dq == 0 else []):
                for pe in monomials(self.n, k - 2 * dq):
                    out.append((pe, qe))
        return out

    def _is_standard(self, pe):
        return all(pe[i] <= i + 1 for i in range(self.n))

    def _reduce_degree(self, k):
        cols = self._monos(k)
        nonstd = [c for c in cols if not self._is_standard(c[0])]
        prio = {c: (0 if not self._is_standard(c[0]) else 1, i) for i, c in enumerate(cols)}
        pivots = {}
        for gdeg, g in self._gens:
            if gdeg > k:
                continue
            for mult in self._monos(k - gdeg):
                row = {}
                for (pe, qe), c in g.items():
                    key = (
                        tuple(a + b for a, b in zip(pe, mult[0])),
                        tuple(a + b for a, b in zip(qe, mult[1])),
                    )
                    _elem_add(row, key, c)
                for col in [c for c in row if c in pivots]:
                    f = row.get(col)
                    if f:
                        for cc, v in pivots[col].items():
                            _elem_add(row, cc, -f * v)
                if not row:
                    continue
                pc = min(row, key=prio.__getitem__)
                inv = 1 / row[pc]
                row = {c: v * inv for c, v in row.items()}
                for orow in pivots.values():
                    f = orow.get(pc)
                    if f:
                        for cc, v in row.items():
                            _elem_add(orow, cc, -f * v)
                pivots[pc] = row
        if set(pivots) != set(nonstd):
            stray = [c for c in pivots if self._is_standard(c[0])]
            raise CheckFailure(
                "ring",
                f"degree {k}: standard monomials are not a basis "
                f"(rank {len(pivots)}, non-standard {len(nonstd)}, standard pivots {stray[:3]})",
            )
        self.graded_dims.append(sum(1 for (pe, qe) in cols if self._is_standard(pe) and not any(qe)))
        for pe, qe in cols:
            if self._is_standard(pe):
                self._nf[(pe, qe)] = {(self.index[pe], qe): Rational(1)}
            else:
                row = pivots[(pe, qe)]
                self._nf[(pe, qe)] = {
                    (self.index[c[0]], c[1]): -v for c, v in row.items() if c != (pe, qe)
                }

    def _p_images(self, i):
        """Normal forms of p_i * b for every basis monomial b (p_0 = -sum p_i)."""
        images = []
        for b in self.basis:
            if i == 0:
                acc = {}
                for j in range(self.n):
                    e = list(b)
                    e[j] += 1
                    for key, c in self._nf[(tuple(e), (0,) * self.nq)].items():
                        _elem_add(acc, key, -c)
                images.append(acc)
            else:
                e = list(b)
                e[i - 1] += 1
                images.append(dict(self._nf[(tuple(e), (0,) * self.nq)]))
        return images

    # -- element arithmetic ---------------------------------------------
    def _combine(self, a, b):
        return tuple(x + y for x, y in zip(a, b)) if self.quantum else a

    def zero_extra(self):
        return (0,) * self.nq

    def mul_p(self, i, elem):
        """Multiply an element by p_i (0 <= i <= n)."""
        out = {}
        imgs = self._images[i]
        for (j, extra), c in elem.items():
            for (k, e2), v in imgs[j].items():
                _elem_add(out, (k, self._combine(extra, e2)), c * v)
        return out

    def unit(self, extra=None):
        return {(0, self.zero_extra() if extra is None else extra): Rational(1)}

    def basis_element(self, idx, extra=None):
        return {(idx, self.zero_extra() if extra is None else extra): Rational(1)}

    @lru_cache(maxsize=None)
    def _monomial_nf(self, pexps):
        """Normal form of p_0^a_0 ... p_n^a_n."""
        elem = self.unit()
        for i, a in enumerate(pexps):
            for _ in range(a):
                elem = self.mul_p(i, elem)
        return tuple(elem.items())

    def reduce(self, f):
        """Normal form of a polynomial in p_0..p_n (and q when quantum)."""
        f = f.extend(("p_0",) + self.pvars + self.qvars)
        np_ = self.n + 1
        if len(f.vars) != np_ + self.nq:
            raise ValueError(f"polynomial has variables outside p, q: {f.vars}")
        out = {}
        for e, c in f.terms.items():
            pe, qe = e[:np_], e[np_:]
            for (k, extra), v in self._monomial_nf(pe):
                _elem_add(out, (k, self._combine(extra, qe) if self.quantum else extra), c * v)
        return out

    def mul(self, a, b):
        """Product of two elements."""
        out = {}
        for (j, extra), c in a.items():
            prod = b
            for i, a_i in enumerate(self.basis[j], start=1):
                for _ in range(a_i):
                    prod = self.mul_p(i, prod)
            for (k, e2), w in prod.items():
                _elem_add(out, (k, self._combine(e2, extra)), c * w)
        return out

    def to_poly(self, elem):
        """Element as a polynomial in the standard monomials."""
        vars_ = self.pvars + self.qvars
        terms = {}
        for (j, extra), c in elem.items():
            terms[self.basis[j] + tuple(extra)] = terms.get(self.basis[j] + tuple(extra), 0) + c
        return MultiPoly(vars_, terms)

    def q_coefficients(self, elem):
        """Map basis index -> polynomial in q."""
        out = {}
        for (j, extra), c in elem.items():
            poly = MultiPoly(self.qvars, {tuple(extra): c})
            out[j] = out.get(j, const(0)) + poly
        return out

    def classical_part(self, elem):
        z = self.zero_extra()
        return {(j, z): c for (j, e), c in elem.items() if not any(e)}

    # -- matrices ------------------------------------------------------------
    def matrix(self, i):
        """Multiplication by p_i as a matrix of polynomials in q (rows = output)."""
        N = len(self.basis)
        M = [[const(0) for _ in range(N)] for _ in range(N)]
        for j, img in enumerate(self._images[i]):
            for (k, extra), c in img.items():
                M[k][j] = M[k][j] + MultiPoly(self.qvars, {tuple(extra): c})
        return M

    def numeric_matrices(self, q=None):
        """Multiplication matrices for p_0..p_n evaluated at numeric q."""
        N = len(self.basis)
        q = np.asarray(q if q is not None else [], dtype=complex)
        mats = []
        for i in range(self.n + 1):
            M = np.zeros((N, N), dtype=complex)
            for j, img in enumerate(self._images[i]):
                for (k, extra), c in img.items():
                    M[k, j] += float(c) * (np.prod(q ** np.asarray(extra)) if extra else 1.0)
            mats.append(M)
        return mats

    def evaluate(self, elem, q):
        """Coefficient vector of an element at numeric q."""
        q = np.asarray(q, dtype=complex)
        v = np.zeros(len(self.basis), dtype=complex)
        for (j, extra), c in elem.items():
            v[j] += float(c) * (np.prod(q ** np.asarray(extra)) if extra else 1.0)
        return v

    # -- integration -------------------------------------------------------
    @property
    def top_index(self):
        return len(self.basis) - 1

    def raw_top(self, elem):
        """Coefficient of the top basis monomial, as a polynomial in q."""
        terms = {}
        for (j, extra), c in elem.items():
            if j == self.top_index:
                terms[tuple(extra)] = terms.get(tuple(extra), 0) + c
        return MultiPoly(self.qvars, terms)


@lru_cache(maxsize=None)
def classical_ring(n):
    return QuotientRing(n, quantum=False)


@lru_cache(maxsize=None)
def quantum_ring(n):
    return QuotientRing(n, quantum=True)


def vandermonde(n):
    """prod_{i>j} (p_i - p_j), the Euler class of the tangent bundle."""
    out = const(1)
    for i in range(n + 1):
        for j in range(i):
            out = out * (var(f"p_{i}") - var(f"p_{j}"))
    return out


@lru_cache(maxsize=None)
def top_normalization(n):
    """Value of the integral on the top standard monomial."""
    ring = classical_ring(n)
    v = ring.raw_top(ring.reduce(vandermonde(n))).constant_term()
    if not v:
        raise CheckFailure("integrate", "Euler class reduces to zero")
    return Rational(math.factorial(n + 1)) / v


class CohClass:
    """Element of H*(F) (classical) or of the quantum ring, with ring-aware product."""

    __slots__ = ("ring", "data")

    def __init__(self, ring, data):
        self.ring = ring
        self.data = {k: v for k, v in data.items() if v}

    @classmethod
    def from_poly(cls, ring, f):
        if isinstance(f, str):
            f = parse_poly(f, class_aliases(ring.n))
        elif not isinstance(f, MultiPoly):
            f = const(f)
        return cls(ring, ring.reduce(f))

    @classmethod
    def basis(cls, ring, idx):
        return cls(ring, ring.basis_element(idx))

    @property
    def tag(self):
        return "rational-in-q" if self.ring.quantum else "rational"

    def __add__(self, other):
        out = dict(self.data)
        for k, v in other.data.items():
            _elem_add(out, k, v)
        return CohClass(self.ring, out)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, CohClass):
            return CohClass(self.ring, self.ring.mul(self.data, other.data))
        c = Rational(other)
        return CohClass(self.ring, {k: v * c for k, v in self.data.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, CohClass) and self.ring is other.ring and self.data == other.data

    def is_zero(self):
        return not self.data

    def vector(self):
        """Dense coefficient list (classical ring only)."""
        if self.ring.quantum:
            raise ValueError("vector() is for classical classes; use q_coefficients()")
        v = [Rational(0)] * len(self.ring.basis)
        for (j, _), c in self.data.items():
            v[j] += c
        return v

    def q_coefficients(self):
        return self.ring.q_coefficients(self.data)

    def to_poly(self):
        return self.ring.to_poly(self.data)

    def __str__(self):
        return str(self.to_poly())

    __repr__ = __str__


def integrate(A):
    """Integral over the flag manifold, extended Q[q]-linearly in the quantum ring.

    Returns a rational for classical classes and a polynomial in q otherwise.
    """
    ring = A.ring
    val = ring.raw_top(A.data) * top_normalization(ring.n)
    return val if ring.quantum else val.constant_term()


def pairing(A, B):
    """<A, B> = integral of the (ring) product A*B."""
    return integrate(A * B)


def gram_matrix(n):
    ring = classical_ring(n)
    N = len(ring.basis)
    return [[pairing(CohClass.basis(ring, i), CohClass.basis(ring, j)) for j in range(N)] for i in range(N)]


# -- quantization map ----------------------------------------------------

def elementary(j, k, quantum):
    """(Quantum) elementary polynomial E_k in the first j sites p_0..p_{j-1}.

    These are the coefficients of the partial Toda determinants; at q = 0
    they reduce to ordinary elementary symmetric polynomials.
    """
    if k == 0:
        return const(1)
    if k > j:
        return const(0)
    D = conserved(j - 1)[k - 1]
    if not quantum:
        D = D.subs({f"q_{i}": 0 for i in range(1, j)})
    return D


def _elementary_monomials(n):
    """Exponent patterns (i_1..i_n), 0 <= i_j <= j, for prod_j e_{i_j}^{(j)}."""
    out = [()]
    for j in range(1, n + 1):
        out = [e + (i,) for e in out for i in range(j + 1)]
    return sorted(out, key=lambda e: (sum(e), e))


class QuantizationMap:
    """Linear lift of classical classes into the quantum ring.

    Each standard elementary monomial e_{i_1}^{(1)} ... e_{i_n}^{(n)} is sent
    to the quantum product of the corresponding quantum elementary
    polynomials. Classical classes are expanded in that basis first.
    """

    def __init__(self, n):
        self.n = n
        cl, qu = classical_ring(n), quantum_ring(n)
        self.classical, self.quantum = cl, qu
        pats = _elementary_monomials(n)
        if len(pats) != len(cl.basis):
            raise CheckFailure("quantization", "elementary monomial count differs from rank")
        cols_cl, cols_q = [], []
        for pat in pats:
            fc, fq = const(1), const(1)
            for j, i in enumerate(pat, start=1):
                fc = fc * elementary(j, i, False)
                fq = fq * elementary(j, i, True)
            cols_cl.append(cl.reduce(fc))
            cols_q.append(qu.reduce(fq))
        N = len(cl.basis)
        # E[k][m]: coefficient of standard monomial k in elementary monomial m
        E = [[Rational(0)] * N for _ in range(N)]
        for m, col in enumerate(cols_cl):
            for (k, _), c in col.items():
                E[k][m] = c
        from .algebra import solve_exact

        self._to_elem = []
        for k in range(N):
            rhs = [Rational(int(i == k)) for i in range(N)]
            self._to_elem.append(solve_exact(E, rhs))
        # images of the classical standard basis
        self.images = []
        for k in range(N):
            img = {}
            for m, c in enumerate(self._to_elem[k]):
                if c:
                    for key, v in cols_q[m].items():
                        _elem_add(img, key, c * v)
            self.images.append(img)

    def lift(self, elem):
        """Quantum element for a classical element (or q-linear combination)."""
        qu = self.quantum
        out = {}
        for (j, extra), c in elem.items():
            extra = tuple(extra) if extra else qu.zero_extra()
            for (k, e2), v in self.images[j].items():
                _elem_add(out, (k, qu._combine(e2, extra)), c * v)
        return out

    def unlift(self, elem):
        """Inverse of :meth:`lift` on q-polynomial combinations of classical classes."""
        qu = self.quantum
        y = dict(elem)
        for _ in range(qu.top + 2):
            corr = {}
            for (j, extra), c in y.items():
                for (k, e2), v in self.images[j].items():
                    if k == j and not any(e2):
                        continue
                    _elem_add(corr, (k, qu._combine(e2, extra)), c * v)
            nxt = dict(elem)
            for key, v in corr.items():
                _elem_add(nxt, key, -v)
            if nxt == y:
                return y
            y = nxt
        raise CheckFailure("quantization", "lift is not unipotent")

    def star(self, a, b):
        """Quantum product transported to H*(F) (x) Q[q]."""
        qu = self.quantum
        return self.unlift(qu.mul(self.lift(a), self.lift(b)))


@lru_cache(maxsize=None)
def quantization_map(n):
    return QuantizationMap(n)


def q_pairing(a, b, n):
    """Q[q]-bilinear extension of the Poincare pairing (classical Gram matrix)."""
    gram = gram_matrix(n)
    qu = quantum_ring(n)
    out = {}
    for (i, e1), c1 in a.items():
        for (j, e2), c2 in b.items():
            g = gram[i][j]
            if g:
                _elem_add(out, qu._combine(e1, e2), c1 * c2 * g)
    return MultiPoly(qu.qvars, out)


def check_degree_two(n):
    """Exact check of the degree-two quantum products.

    Verifies sum_i p_i o p_i = 2 sum_i q_i as a matrix identity, and
    J_i o J_j = L(J_i J_j) + delta_ij q_i where L is the quantization map.
    Raises :class:`CheckFailure` on the first mismatch.
    """
    qu, cl = quantum_ring(n), classical_ring(n)
    qmap = quantization_map(n)
    lhs = {}
    for i in range(n + 1):
        for key, c in qu.mul_p(i, qu.reduce(var(f"p_{i}"))).items():
            _elem_add(lhs, key, c)
    rhs = {}
    for j in range(1, n + 1):
        e = [0] * n
        e[j - 1] = 1
        _elem_add(rhs, (0, tuple(e)), Rational(2))
    if lhs != rhs:
        raise CheckFailure("degree-two", "sum of p_i o p_i is not 2 sum q_i", qu.to_poly(lhs))
    # the same identity for the multiplication matrices
    N = len(qu.basis)
    for col in range(N):
        acc = qu.basis_element(col)
        tot = {}
        for i in range(n + 1):
            for key, c in qu.mul_p(i, qu.mul_p(i, acc)).items():
                _elem_add(tot, key, c)
        want = {}
        for key, c in rhs.items():
            _elem_add(want, (col, key[1]), c)
        if tot != want:
            raise CheckFailure("degree-two", f"matrix identity fails on basis column {col}")
    table = {}
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            quantum_prod = qu.reduce(J(i) * J(j))
            lifted = qmap.lift(cl.reduce(J(i) * J(j)))
            diff = dict(quantum_prod)
            for key, c in lifted.items():
                _elem_add(diff, key, -c)
            expect = {}
            if i == j:
                e = [0] * n
                e[i - 1] = 1
                expect = {(0, tuple(e)): Rational(1)}
            if diff != expect:
                raise CheckFailure("degree-two", f"J_{i} o J_{j} - J_{i}J_{j} = {qu.to_poly(diff)}", qu.to_poly(diff))
            table[f"J_{i}*J_{j}"] = str(qu.to_poly(diff))
    return {"check": "degree-two", "n": n, "status": "pass", "residual": 0, "corrections": table}


def _as_quantum(elem, n):
    return {(k, e if e else (0,) * n): v for (k, e), v in elem.items()}


def check_frobenius(n, samples=40, seed=0):
    """<a * b, c> = <a, b * c> for random basis triples, with * the lifted product.

    Also checks that the residue of lifted classes is independent of q.
    """
    import random

    rng = random.Random(seed)
    qm, cl = quantization_map(n), classical_ring(n)
    N = len(cl.basis)
    for _ in range(samples):
        a, b, c = (_as_quantum(cl.basis_element(rng.randrange(N)), n) for _ in range(3))
        lhs = q_pairing(qm.star(a, b), c, n)
        rhs = q_pairing(a, qm.star(b, c), n)
        if lhs != rhs:
            raise CheckFailure("frobenius", f"<a*b,c> != <a,b*c> for n={n}", lhs - rhs)
        qu = quantum_ring(n)
        lifted = integrate(CohClass(qu, qu.mul(qm.lift(a), qm.lift(b))))
        a0 = {(k, ()): v for (k, _), v in a.items()}
        b0 = {(k, ()): v for (k, _), v in b.items()}
        classical = integrate(CohClass(cl, cl.mul(a0, b0)))
        if lifted != const(classical):
            raise CheckFailure("frobenius", "residue of lifted classes depends on q", lifted)
    return {"check": "frobenius", "n": n, "status": "pass", "residual": 0, "samples": samples}


def check_classical_limit(n):
    """Quantum multiplication matrices at q = 0 equal the classical ones."""
    qu, cl = quantum_ring(n), classical_ring(n)
    for i in range(n + 1):
        for j in range(len(cl.basis)):
            q0 = {(k, ()): c for (k, e), c in qu._images[i][j].items() if not any(e)}
            if q0 != cl._images[i][j]:
                raise CheckFailure("classical-limit", f"p_{i} on basis {j} differs at q = 0")
    return {"check": "classical-limit", "n": n, "status": "pass", "residual": 0}


def quantum_table(n):
    """Multiplication matrices of p_0..p_n on the standard basis, entries polynomial in q."""
    ring = quantum_ring(n)
    return {f"p_{i}": ring.matrix(i) for i in range(n + 1)}


# -- numeric fibers -------------------------------------------------------

def _as_q(n, q):
    q = np.atleast_1d(np.asarray(q, dtype=complex))
    if q.shape != (n,):
        raise ValueError(f"need {n} values of q, got {q.shape}")
    if np.any(q == 0):
        raise DegenerateInput("all q_i must be nonzero")
    return q


def fiber_points(n, q, seed=0, tol=1e-9, dedup_rtol=1e-8, retries=5):
    """All (n+1)! points p of the Lagrangian fiber over q, as an array (N, n+1).

    Joint eigenvectors of the commuting multiplication matrices are found
    from a random rational combination; each p_i is then the Rayleigh
    quotient of M_{p_i} on every eigenvector.
    """
    q = _as_q(n, q)
    ring = quantum_ring(n)
    mats = ring.numeric_matrices(q)
    rng = np.random.default_rng(seed)
    N = len(ring.basis)
    Ds = conserved(n)
    last_err = None
    for _ in range(retries):
        coeffs = [Rational(int(x), 97) for x in rng.integers(1, 97, size=n + 1)]
        Mc = sum(float(c) * M for c, M in zip(coeffs, mats))
        _, vecs = np.linalg.eig(Mc)
        if np.linalg.cond(vecs) > 1e10:
            last_err = "ill-conditioned eigenbasis"
            continue
        pts = np.empty((N, n + 1), dtype=complex)
        for k in range(N):
            v = vecs[:, k]
            vv = np.vdot(v, v)
            for i, M in enumerate(mats):
                pts[k, i] = np.vdot(v, M @ v) / vv
        scale = max(1.0, float(np.max(np.abs(pts))))
        distinct = all(
            np.max(np.abs(pts[a] - pts[b])) > dedup_rtol * scale for a in range(N) for b in range(a)
        )
        if not distinct:
            last_err = "coincident eigenvalues"
            continue
        values = {f"q_{j}": q[j - 1] for j in range(1, n + 1)}
        worst = 0.0
        for pt in pts:
            values.update({f"p_{i}": pt[i] for i in range(n + 1)})
            for m, D in enumerate(Ds):
                worst = max(worst, abs(D.evaluate(values)) / scale ** (m + 1))
        if worst > tol:
            last_err = f"residual {worst:.2e}"
            continue
        return pts
    raise DegenerateInput(f"fiber eigenproblem failed after {retries} attempts ({last_err}); try another q")


@lru_cache(maxsize=None)
def jacobian_poly(n):
    Ds = conserved(n)
    from .algebra import det

    return det([[D.diff(f"p_{j}") for j in range(n + 1)] for D in Ds])


def jacobian_det(n, p, q):
    """det(dD_i/dp_j) at a numeric point."""
    values = {f"p_{i}": p[i] for i in range(n + 1)}
    values.update({f"q_{j}": q[j - 1] for j in range(1, n + 1)})
    return complex(jacobian_poly(n).evaluate(values))


_SIGN_CACHE = {}


def exact_pairing_at(A, B, n, q):
    """Quantum pairing integrate(A*B) evaluated at numeric q."""
    ring = quantum_ring(n)
    val = integrate(CohClass(ring, ring.mul(ring.reduce(A), ring.reduce(B))))
    q = np.asarray(q, dtype=complex)
    return complex(val.evaluate({f"q_{j}": q[j - 1] for j in range(1, n + 1)})) if val.vars else complex(val.constant_term())


def _raw_residue(A, B, n, q, pts, jac_tol=1e-10):
    q = np.asarray(q, dtype=complex)
    total = 0j
    mag = 0.0
    for pt in pts:
        jac = jacobian_det(n, pt, q)
        scale = max(1.0, float(np.max(np.abs(pt)))) ** (n * (n + 1) // 2)
        if abs(jac) < jac_tol * scale:
            raise DegenerateInput("non-simple fiber point (Jacobian vanishes); choose a different q")
        values = {f"p_{i}": pt[i] for i in range(n + 1)}
        values.update({f"q_{j}": q[j - 1] for j in range(1, n + 1)})
        term = complex(A.evaluate(values)) * complex(B.evaluate(values)) / jac
        total += term
        mag += abs(term)
    return total, mag


def residue_sign(n):
    """Global sign matching the residue sum to the exact pairing, calibrated once per n."""
    if n not in _SIGN_CACHE:
        q = np.array([0.05 * (1 + 0.1 * j) * np.exp(0.3j * j) for j in range(1, n + 1)])
        top = MultiPoly(tuple(f"p_{i}" for i in range(1, n + 1)), {classical_ring(n).basis[-1]: 1})
        one = const(1)
        raw, _ = _raw_residue(top, one, n, q, fiber_points(n, q))
        exact = exact_pairing_at(top, one, n, q)
        ratio = raw / exact
        if abs(abs(ratio) - 1) > 1e-6:
            raise CheckFailure("residue-check", f"residue sum and pairing differ by more than a sign (ratio {ratio})")
        _SIGN_CACHE[n] = 1 if ratio.real > 0 else -1
    return _SIGN_CACHE[n]


def residue_pairing(A, B, n, q, pts=None, sign=None):
    """Residue sum  eps * sum_p A(p,q) B(p,q) / det(dD/dp)  over the fiber over q.

    Returns ``(value, magnitude)`` where magnitude is the sum of absolute
    summands (the natural scale for judging cancellation).
    """
    if isinstance(A, str):
        A = parse_poly(A, class_aliases(n))
    if isinstance(B, str):
        B = parse_poly(B, class_aliases(n))
    q = _as_q(n, q)
    pts = fiber_points(n, q) if pts is None else pts
    eps = residue_sign(n) if sign is None else sign
    raw, mag = _raw_residue(A, B, n, q, pts)
    return eps * raw, mag


def check_residue(n, qs=None, pairs=8, seed=0, sign=None, tol=1e-8):
    """Residue sums over the fiber against the exact quantum pairing.

    Uses random pairs of basis monomials at each q; ``sign`` overrides the
    calibrated global sign (a wrong value must make the check fail).
    """
    rng = np.random.default_rng(seed)
    if qs is None:
        qs = [rng.uniform(0.2, 1.5, n) * np.exp(1j * rng.uniform(-np.pi, np.pi, n)) for _ in range(3)]
    cl = classical_ring(n)
    pv = tuple(f"p_{i}" for i in range(1, n + 1))
    polys = [MultiPoly(pv, {e: 1}) for e in cl.basis]
    worst = 0.0
    for q in qs:
        q = _as_q(n, q)
        pts = fiber_points(n, q, seed=seed)
        for _ in range(pairs):
            a, b = rng.integers(len(polys), size=2)
            A, B = polys[a], polys[b]
            val, mag = residue_pairing(A, B, n, q, pts=pts, sign=sign)
            exact = exact_pairing_at(A, B, n, q)
            scale = max(abs(exact), mag, 1e-300)
            worst = max(worst, abs(val - exact) / scale)
    if not worst < tol:
        raise CheckFailure("residue-check", f"residue sum differs from the pairing (relative {worst:.3e})", worst)
    return {"check": "residue-check", "n": n, "status": "pass", "residual": worst, "sign": residue_sign(n)}
