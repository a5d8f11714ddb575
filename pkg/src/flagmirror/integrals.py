"""Mirror integrals over compact torus cycles and their comparisons."""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import CheckFailure, DegenerateInput
from .mirror import FlagGraph, _check_q, diagonal_t

__all__ = [
    "default_log_radii",
    "torus_integral",
    "bessel_reference",
    "sample_points",
    "span_fit",
    "saddle_approximation",
    "saddle_check",
]


def default_log_radii(n, q):
    """log |exp T_ij| = (Re t_i + Re t_j) / 2, interpolating the diagonal values."""
    g = FlagGraph(n)
    t = diagonal_t(q)
    return np.array([(t[i].real + t[j].real) / 2 for (i, j) in g.free])


def torus_integral(n, q, hbar, radii=None, grid=64, numba=None):
    """Normalized integral of exp(F_q / h) over the torus {|exp T_ij| = r_ij}.

    The form is divided by (2 pi i)^{n(n+1)/2}, so the result is the mean of
    the integrand over the angles. Evaluated by the trapezoid rule, which
    converges exponentially for this periodic analytic integrand.

    Parameters
    ----------
    radii : sequence of float, optional
        |exp T_ij| for the free vertices in :class:`FlagGraph` order.
    grid : int
        Points per angle, at least 16.
    """
    if n > 2:
        raise DegenerateInput("torus integrals are limited to n <= 2 (at most three angles)")
    if grid < 16:
        raise ValueError("grid must be at least 16")
    q = _check_q(n, q)
    g = FlagGraph(n)
    t = diagonal_t(q)
    if radii is None:
        logr = default_log_radii(n, q)
    else:
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if radii.shape != (g.nfree,) or np.any(radii <= 0):
            raise ValueError(f"expected {g.nfree} positive radii")
        logr = np.log(radii)
    val = _kernels.torus_mean(logr, t, g.src, g.tgt, grid, hbar, numba=numba)
    if not np.isfinite(val.real) or not np.isfinite(val.imag):
        raise CheckFailure("torus", "non-finite integrand values")
    return val


def bessel_reference(q, hbar=1.0, terms=60):
    """Partial sum of q^d / (d!^2 h^{2d}) for d = 0..terms."""
    if terms > 60:
        raise ValueError("terms must be at most 60")
    x = complex(q) / complex(hbar) ** 2
    total, term = 0j, 1 + 0j
    for d in range(terms + 1):
        if d:
            term *= x / (d * d)
        total += term
    return total


def sample_points(n, k, modulus=0.1, hbar_range=(0.7, 1.5), seed=0):
    """k sample points (q, h): |q_i| = modulus with random phases, h uniform in a range."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        q = modulus * np.exp(1j * rng.uniform(-np.pi, np.pi, n))
        out.append((q, float(rng.uniform(*hbar_range))))
    return out


def span_fit(n, samples, series, grid=64, cond_limit=1e12, tol=1e-6, numba=None):
    """Fit one constant vector c with torus_integral(sample) = sum_A c_A S_A(sample).

    Parameters
    ----------
    samples : list of (q, hbar)
        At least 2 (n+1)! points.
    series : list of QSeries
        The solutions S_A for all basis classes A.

    Returns
    -------
    dict with the fitted coefficients, the relative residual and the
    condition number of the design matrix.
    """
    need = 2 * math.factorial(n + 1)
    if len(samples) < need:
        raise ValueError(f"need at least {need} samples, got {len(samples)}")
    rows, rhs = [], []
    for q, hbar in samples:
        q = np.asarray(q, dtype=complex)
        rows.append([S.evaluate(q, hbar) for S in series])
        rhs.append(torus_integral(n, q, hbar, grid=grid, numba=numba))
    M = np.array(rows)
    y = np.array(rhs)
    cond = float(np.linalg.cond(M))
    if cond > cond_limit:
        raise DegenerateInput(f"design matrix condition {cond:.2e}; use more samples or smaller |q|")
    c, *_ = np.linalg.lstsq(M, y, rcond=None)
    resid = float(np.linalg.norm(M @ c - y) / np.linalg.norm(y))
    status = "pass" if resid < tol else "fail"
    return {
        "check": "span-fit",
        "n": n,
        "status": status,
        "residual": resid,
        "condition": cond,
        "coefficients": [[float(z.real), float(z.imag)] for z in c],
        "samples": len(samples),
        "grid": grid,
    }


def saddle_approximation(q, hbar):
    """One-saddle value exp(2 sqrt(q)/h) sqrt(2 pi h) / (2 pi sqrt(2 sqrt(q)))."""
    hess = 2 * math.sqrt(q)
    return math.exp(2 * math.sqrt(q) / hbar) * math.sqrt(2 * math.pi * hbar) / (2 * math.pi * math.sqrt(hess))


def saddle_check(q=0.25, hbars=None, grid=512, tol=0.01, numba=None):
    """Torus integral over the saddle-point approximation as h decreases (n = 1).

    Asserts the final ratio is within ``tol`` of 1, the deviation decreases
    monotonically, and its log-log slope against h is within a factor 2 of 1.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    hbars = hbars or [2.0**-k for k in range(6)]
    if any(b <= a for a, b in zip(hbars[1:], hbars)):
        raise ValueError("hbar sequence must be decreasing")
    r = math.sqrt(q)
    rows = []
    for h in hbars:
        val = torus_integral(1, [q], h, radii=[r], grid=grid, numba=numba)
        ratio = val.real / saddle_approximation(q, h)
        rows.append({"hbar": h, "ratio": ratio, "deviation": abs(ratio - 1)})
    dev = np.array([row["deviation"] for row in rows])
    hs = np.array(hbars)
    slope = float(np.polyfit(np.log(hs), np.log(dev), 1)[0])
    halving = [float(a / b) for a, b in zip(dev, dev[1:])]
    report = {
        "check": "saddle",
        "n": 1,
        "q": q,
        "status": "pass",
        "residual": float(dev[-1]),
        "slope": slope,
        "halving_ratios": halving,
        "rows": rows,
    }
    if np.any(np.diff(dev) >= 0):
        raise CheckFailure("saddle", "deviation is not monotone in h", dev.tolist())
    if not dev[-1] < tol:
        raise CheckFailure("saddle", f"ratio deviation {dev[-1]:.3e} at h = {hs[-1]}", float(dev[-1]))
    if not 0.5 <= slope <= 2.0:
        raise CheckFailure("saddle", f"deviation slope {slope:.3f} is not close to linear", slope)
    return report
