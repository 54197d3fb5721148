"""Hot numeric kernels with a numba path and a numpy/scipy fallback.

Every public kernel dispatches on :data:`concaflow._backend.USE_NUMBA`; both
implementations stay importable (``*_numba`` / ``*_numpy``) so the benchmark
and the cross-backend tests can run them side by side.

Midpoint defects
----------------
For a triple (x, m, y) with m the exact midpoint of x and y the *concave*
defect is ``(g[x] + g[y]) / 2 - g[m]`` and the *quasi* defect is
``min(g[x], g[y]) - g[m]``.  Positive defects are violations.  Endpoints
equal to ``-inf`` make the right-hand side ``-inf`` and are skipped; a
``-inf`` midpoint between finite endpoints is an infinite violation.  With
``relative=True`` the defect is divided by ``max(1, |g[x]|, |g[y]|, |g[m]|)``.

Reductions are deterministic: the first strict maximum in enumeration order
wins, whatever the backend.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg.lapack as lapack

from ._backend import USE_NUMBA, njit

CONCAVE = 0
QUASI = 1


# ---------------------------------------------------------------------------
# 1D midpoint scan


@njit
def _defect(gx, gm, gy, mode, relative):
    if gx == -np.inf or gy == -np.inf:
        return -np.inf
    if gm == -np.inf:
        return np.inf
    if mode == CONCAVE:
        d = 0.5 * (gx + gy) - gm
    else:
        d = min(gx, gy) - gm
    if relative:
        s = max(1.0, abs(gx), abs(gy), abs(gm))
        d = d / s
    return d


@njit
def _midpoint_scan_1d_numba(g, mode, relative):
    n = g.shape[0]
    best = 0.0
    bi = -1
    bj = -1
    for k in range(1, (n - 1) // 2 + 1):
        for i in range(0, n - 2 * k):
            d = _defect(g[i], g[i + k], g[i + 2 * k], mode, relative)
            if d > best:
                best = d
                bi = i
                bj = i + 2 * k
    return best, bi, bj


def _vector_defect(gx, gm, gy, mode, relative):
    with np.errstate(invalid="ignore"):
        if mode == CONCAVE:
            d = 0.5 * (gx + gy) - gm
        else:
            d = np.minimum(gx, gy) - gm
        if relative:
            s = np.maximum.reduce([np.ones_like(gx), np.abs(gx), np.abs(gy), np.abs(gm)])
            d = d / s
    d = np.where(np.isneginf(gm), np.inf, d)
    d = np.where(np.isneginf(gx) | np.isneginf(gy), -np.inf, d)
    return d


def _midpoint_scan_1d_numpy(g, mode, relative):
    n = g.shape[0]
    best, bi, bj = 0.0, -1, -1
    for k in range(1, (n - 1) // 2 + 1):
        d = _vector_defect(g[: n - 2 * k], g[k : n - k], g[2 * k :], mode, relative)
        idx = int(np.argmax(d))
        if d[idx] > best:
            best, bi, bj = float(d[idx]), idx, idx + 2 * k
    return best, bi, bj


def midpoint_scan_1d(g, mode=CONCAVE, relative=False, backend=None):
    """Worst midpoint defect over every same-parity node pair of ``g``.

    Returns ``(worst, i, j)``; ``worst`` is ``0.0`` and the indices ``-1``
    when no pair has a positive defect.
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    if _use_numba(backend):
        best, i, j = _midpoint_scan_1d_numba(g, mode, relative)
    else:
        best, i, j = _midpoint_scan_1d_numpy(g, mode, relative)
    return float(best), int(i), int(j)


# ---------------------------------------------------------------------------
# 2D midpoint scan over a list of half-offsets (p, q):
# pairs (i, j) -- (i + 2p, j + 2q), midpoint (i + p, j + q).


@njit
def _offset_scan_2d_numba(g, offsets, mode, relative):
    n, m = g.shape
    n_off = offsets.shape[0]
    best = 0.0
    bi = -1
    bj = -1
    bo = -1
    for o in range(n_off):
        p = offsets[o, 0]
        q = offsets[o, 1]
        i0 = max(0, -2 * p)
        i1 = min(n, n - 2 * p)
        j0 = max(0, -2 * q)
        j1 = min(m, m - 2 * q)
        for i in range(i0, i1):
            for j in range(j0, j1):
                d = _defect(g[i, j], g[i + p, j + q], g[i + 2 * p, j + 2 * q], mode, relative)
                if d > best:
                    best = d
                    bi = i
                    bj = j
                    bo = o
    return best, bi, bj, bo


def _offset_scan_2d_numpy(g, offsets, mode, relative):
    n, m = g.shape
    best, bi, bj, bo = 0.0, -1, -1, -1
    for o, (p, q) in enumerate(offsets):
        i0, i1 = max(0, -2 * p), min(n, n - 2 * p)
        j0, j1 = max(0, -2 * q), min(m, m - 2 * q)
        if i1 <= i0 or j1 <= j0:
            continue
        gx = g[i0:i1, j0:j1]
        gm = g[i0 + p : i1 + p, j0 + q : j1 + q]
        gy = g[i0 + 2 * p : i1 + 2 * p, j0 + 2 * q : j1 + 2 * q]
        d = _vector_defect(gx, gm, gy, mode, relative)
        flat = int(np.argmax(d))
        val = d.flat[flat]
        if val > best:
            a, b = divmod(flat, d.shape[1])
            best, bi, bj, bo = float(val), i0 + a, j0 + b, o
    return best, bi, bj, bo


def offset_scan_2d(g, offsets, mode=CONCAVE, relative=False, backend=None):
    """Worst midpoint defect over node pairs separated by ``2 * offset``.

    Returns ``(worst, i, j, p, q)`` where ``(i, j)`` is the first node of the
    worst pair and ``(p, q)`` its half-offset.
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2)
    if _use_numba(backend):
        best, i, j, o = _offset_scan_2d_numba(g, offsets, mode, relative)
    else:
        best, i, j, o = _offset_scan_2d_numpy(g, offsets, mode, relative)
    if o < 0:
        return 0.0, -1, -1, 0, 0
    return float(best), int(i), int(j), int(offsets[o, 0]), int(offsets[o, 1])


def lattice_offsets(shape, directions=((1, 0), (0, 1), (1, 1), (1, -1))):
    """Half-offsets along the given lattice directions, every admissible length."""
    n, m = shape
    out = []
    for di, dj in directions:
        k = 1
        while 2 * k * abs(di) < n and 2 * k * abs(dj) < m:
            out.append((k * di, k * dj))
            k += 1
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def all_offsets(shape):
    """Every half-offset up to sign: together they enumerate all node pairs
    whose midpoint is a node."""
    n, m = shape
    hp, hq = (n - 1) // 2, (m - 1) // 2
    out = [(0, q) for q in range(1, hq + 1)]
    for p in range(1, hp + 1):
        for q in range(-hq, hq + 1):
            out.append((p, q))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Tridiagonal systems with a constant matrix, many right-hand sides over time.


@njit
def _thomas_factor_numba(lower, diag, upper):
    n = diag.shape[0]
    cp = np.empty(n)
    den = np.empty(n)
    den[0] = diag[0]
    cp[0] = upper[0] / den[0] if n > 1 else 0.0
    for i in range(1, n):
        den[i] = diag[i] - lower[i - 1] * cp[i - 1]
        cp[i] = upper[i] / den[i] if i < n - 1 else 0.0
    return cp, den


@njit
def _thomas_solve_numba(lower, cp, den, rhs):
    n, k = rhs.shape
    x = np.empty_like(rhs)
    for c in range(k):
        x[0, c] = rhs[0, c] / den[0]
        for i in range(1, n):
            x[i, c] = (rhs[i, c] - lower[i - 1] * x[i - 1, c]) / den[i]
        for i in range(n - 2, -1, -1):
            x[i, c] -= cp[i] * x[i + 1, c]
    return x


class Tridiagonal:
    """Factored constant tridiagonal matrix.

    ``lower`` and ``upper`` have length ``n - 1``.  ``solve`` accepts a vector
    or an ``(n, k)`` block of right-hand sides.
    """

    def __init__(self, lower, diag, upper, backend=None):
        self.lower = np.ascontiguousarray(lower, dtype=np.float64)
        self.diag = np.ascontiguousarray(diag, dtype=np.float64)
        self.upper = np.ascontiguousarray(np.append(upper, 0.0), dtype=np.float64)
        self.n = self.diag.shape[0]
        self.numba = _use_numba(backend)
        if self.numba:
            self.cp, self.den = _thomas_factor_numba(self.lower, self.diag, self.upper)
        else:
            dl, d, du, du2, ipiv, info = lapack.dgttrf(self.lower, self.diag, self.upper[:-1])
            if info != 0:
                raise np.linalg.LinAlgError(f"tridiagonal factorization failed (info={info})")
            self._lu = (dl, d, du, du2, ipiv)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=np.float64)
        vec = rhs.ndim == 1
        block = rhs.reshape(self.n, -1)
        if self.numba:
            x = _thomas_solve_numba(self.lower, self.cp, self.den, np.ascontiguousarray(block))
        else:
            x, info = lapack.dgttrs(*self._lu, block)
            if info != 0:
                raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return x[:, 0] if vec else x


# ---------------------------------------------------------------------------
# Upper hull of a planar point set sorted by x (monotone chain).


def _upper_hull_py(x, y):
    n = x.shape[0]
    hull = np.empty(n, dtype=np.int64)
    h = 0
    for i in range(n):
        while h >= 2:
            a = hull[h - 2]
            b = hull[h - 1]
            # drop b unless it lies strictly above the chord a -> i
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross >= 0.0:
                h -= 1
            else:
                break
        hull[h] = i
        h += 1
    return hull[:h]


_upper_hull_numba = njit(_upper_hull_py) if USE_NUMBA else None


def upper_hull_1d(x, y, backend=None):
    """Indices of the vertices of the upper hull of ``(x, y)``, ``x`` increasing."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _use_numba(backend):
        return _upper_hull_numba(x, y)
    return _upper_hull_py(x, y)


def _use_numba(backend):
    if backend is None:
        return USE_NUMBA
    if backend == "numba":
        if not USE_NUMBA:
            raise RuntimeError("numba backend requested but disabled")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
