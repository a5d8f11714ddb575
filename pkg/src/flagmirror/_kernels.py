"""Numeric hot loops: batched Newton on the lattice potential and torus means.

Each kernel has a numba implementation and a pure numpy one. Setting the
environment variable ``FLAGMIRROR_NO_NUMBA=1`` (or running without numba
installed) selects the numpy path. Both paths are deterministic.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False


def use_numba():
    flag = os.environ.get("FLAGMIRROR_NO_NUMBA", "").strip().lower()
    return HAS_NUMBA and flag not in ("1", "true", "yes", "on")


# -- shared pieces -------------------------------------------------------

def incidence(src, tgt, nfree):
    """Signed incidence (edges x free vertices): +1 at the target, -1 at the source."""
    B = np.zeros((len(src), nfree))
    for e, (s, t) in enumerate(zip(src, tgt)):
        if t < nfree:
            B[e, t] += 1.0
        if s < nfree:
            B[e, s] -= 1.0
    return B


def edge_values(z, src, tgt):
    """Q_e = exp(z[tgt] - z[src]) for a full vertex vector (or a batch of them)."""
    return np.exp(z[..., tgt] - z[..., src])


# -- Newton: numpy -------------------------------------------------------

def _newton_numpy(X, fixed, src, tgt, maxit, tol):
    S, m = X.shape
    B = incidence(src, tgt, m)
    X = X.copy()
    fixed_b = np.broadcast_to(fixed, (S, fixed.shape[0]))

    def grad_hess(Xc):
        z = np.concatenate([Xc, fixed_b[: Xc.shape[0]]], axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            Q = edge_values(z, src, tgt)
        g = Q @ B
        H = np.einsum("se,ea,eb->sab", Q, B, B)
        return g, H

    g, H = grad_hess(X)
    gn = np.sum(np.abs(g) ** 2, axis=1)
    active = np.isfinite(gn)
    for _ in range(maxit):
        idx = np.nonzero(active & (gn > tol * tol))[0]
        if idx.size == 0:
            break
        Hs = H[idx]
        ok = np.isfinite(Hs).all(axis=(1, 2))
        conds = np.full(idx.size, np.inf)
        conds[ok] = np.linalg.cond(Hs[ok])
        ok &= conds < 1e14
        active[idx[~ok]] = False
        idx = idx[ok]
        if idx.size == 0:
            break
        dx = -np.linalg.solve(H[idx], g[idx][..., None])[..., 0]
        big = np.max(np.abs(dx), axis=1)
        dx *= np.minimum(1.0, 2.0 / np.maximum(big, 1e-300))[:, None]
        alpha = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        newX = X[idx].copy()
        newg = g[idx].copy()
        newH = H[idx].copy()
        newgn = gn[idx].copy()
        for _ls in range(30):
            if not pending.any():
                break
            k = np.nonzero(pending)[0]
            trial = X[idx[k]] + alpha[k, None] * dx[k]
            gt, Ht = grad_hess(trial)
            gnt = np.sum(np.abs(gt) ** 2, axis=1)
            accept = np.isfinite(gnt) & (gnt < gn[idx[k]])
            acc = k[accept]
            newX[acc], newg[acc], newH[acc], newgn[acc] = trial[accept], gt[accept], Ht[accept], gnt[accept]
            pending[acc] = False
            alpha[k[~accept]] *= 0.5
        stuck = idx[pending]
        active[stuck] = False
        X[idx], g[idx], H[idx], gn[idx] = newX, newg, newH, newgn
    conv = active & (gn <= tol * tol)
    return X, np.sqrt(gn), conv


# -- Newton: numba -------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _gh(x, fixed, src, tgt, B):
        m = x.shape[0]
        nv = m + fixed.shape[0]
        z = np.empty(nv, dtype=np.complex128)
        z[:m] = x
        z[m:] = fixed
        E = src.shape[0]
        g = np.zeros(m, dtype=np.complex128)
        H = np.zeros((m, m), dtype=np.complex128)
        for e in range(E):
            q = np.exp(z[tgt[e]] - z[src[e]])
            for a in range(m):
                if B[e, a] != 0.0:
                    g[a] += q * B[e, a]
                    for b in range(m):
                        if B[e, b] != 0.0:
                            H[a, b] += q * B[e, a] * B[e, b]
        gn = 0.0
        for a in range(m):
            gn += g[a].real ** 2 + g[a].imag ** 2
        return g, H, gn

    @njit(cache=True)
    def _newton_numba(X, fixed, src, tgt, B, maxit, tol):
        S, m = X.shape
        out = X.copy()
        gnorm = np.empty(S)
        conv = np.zeros(S, dtype=np.bool_)
        for s in range(S):
            x = out[s].copy()
            g, H, gn = _gh(x, fixed, src, tgt, B)
            alive = np.isfinite(gn)
            for _ in range(maxit):
                if not alive or gn <= tol * tol:
                    break
                if not np.all(np.isfinite(H.real)) or not np.all(np.isfinite(H.imag)):
                    alive = False
                    break
                if np.linalg.cond(H) > 1e14:
                    alive = False
                    break
                dx = -np.linalg.solve(H, g)
                big = np.max(np.abs(dx))
                if big > 2.0:
                    dx *= 2.0 / big
                alpha = 1.0
                moved = False
                for _ls in range(30):
                    xt = x + alpha * dx
                    gt, Ht, gnt = _gh(xt, fixed, src, tgt, B)
                    if np.isfinite(gnt) and gnt < gn:
                        x, g, H, gn = xt, gt, Ht, gnt
                        moved = True
                        break
                    alpha *= 0.5
                if not moved:
                    alive = False
                    break
            out[s] = x
            gnorm[s] = np.sqrt(gn)
            conv[s] = alive and gn <= tol * tol
        return out, gnorm, conv


def newton_batch(X0, fixed, src, tgt, maxit=100, tol=1e-12, numba=None):
    """Damped Newton on grad F = 0 for a batch of starts.

    Parameters
    ----------
    X0 : complex array (S, m)
        Starting values of the free vertex coordinates.
    fixed : complex array
        Values of the fixed (diagonal) vertices, indexed m, m+1, ...
    src, tgt : int arrays
        Edge endpoints as indices into the full vertex vector.

    Returns
    -------
    X, gradient norms, converged mask
    """
    X0 = np.ascontiguousarray(X0, dtype=np.complex128)
    fixed = np.ascontiguousarray(fixed, dtype=np.complex128)
    src = np.ascontiguousarray(src, dtype=np.int64)
    tgt = np.ascontiguousarray(tgt, dtype=np.int64)
    if numba is None:
        numba = use_numba()
    if numba:
        B = incidence(src, tgt, X0.shape[1])
        return _newton_numba(X0, fixed, src, tgt, B, maxit, tol)
    return _newton_numpy(X0, fixed, src, tgt, maxit, tol)


# -- torus mean ----------------------------------------------------------

def _torus_numpy(logr, fixed, src, tgt, grid, inv_hbar, chunk=1 << 16):
    m = logr.shape[0]
    theta = 2.0 * np.pi * np.arange(grid) / grid
    total = grid**m
    partial = []
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.stack(np.unravel_index(flat, (grid,) * m), axis=1)
        z = np.empty((flat.size, m + fixed.shape[0]), dtype=np.complex128)
        z[:, :m] = logr + 1j * theta[idx]
        z[:, m:] = fixed
        F = np.exp(z[:, tgt] - z[:, src]).sum(axis=1)
        vals = np.exp(F * inv_hbar)
        partial.append(vals.sum())
    return np.sum(np.array(partial)) / total


if HAS_NUMBA:

    @njit(cache=True)
    def _torus_numba(logr, fixed, src, tgt, grid, inv_hbar):
        m = logr.shape[0]
        nv = m + fixed.shape[0]
        total = grid**m
        z = np.empty(nv, dtype=np.complex128)
        z[m:] = fixed
        # Neumaier-compensated sums for the real and imaginary parts
        sr = 0.0
        cr = 0.0
        si = 0.0
        ci = 0.0
        step = 2.0 * np.pi / grid
        for flat in range(total):
            r = flat
            for a in range(m - 1, -1, -1):
                k = r % grid
                r //= grid
                z[a] = logr[a] + 1j * (step * k)
            F = 0.0 + 0.0j
            for e in range(src.shape[0]):
                F += np.exp(z[tgt[e]] - z[src[e]])
            v = np.exp(F * inv_hbar)
            x = v.real
            t = sr + x
            if abs(sr) >= abs(x):
                cr += (sr - t) + x
            else:
                cr += (x - t) + sr
            sr = t
            y = v.imag
            t = si + y
            if abs(si) >= abs(y):
                ci += (si - t) + y
            else:
                ci += (y - t) + si
            si = t
        return complex(sr + cr, si + ci) / total


def torus_mean(logr, fixed, src, tgt, grid, hbar, numba=None):
    """Mean of exp(F/hbar) over the torus {|exp T_v| = exp(logr_v)} on a uniform grid."""
    logr = np.ascontiguousarray(logr, dtype=np.float64)
    fixed = np.ascontiguousarray(fixed, dtype=np.complex128)
    src = np.ascontiguousarray(src, dtype=np.int64)
    tgt = np.ascontiguousarray(tgt, dtype=np.int64)
    inv_hbar = 1.0 / complex(hbar)
    if numba is None:
        numba = use_numba()
    if numba:
        return complex(_torus_numba(logr, fixed, src, tgt, int(grid), inv_hbar))
    return complex(_torus_numpy(logr, fixed, src, tgt, int(grid), inv_hbar))
