"""Ordering, equivalence and scalar closure among admissible transforms, and
the hot approximation of log-concave functions.

F1-concavity is weaker than F2-concavity (every F2-concave function is
F1-concave) exactly when ``F1 o f_F2`` is concave on the range of F2, so all
comparisons reduce to midpoint scans of a composed scalar function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .admissible import AdmissibleFunction
from .flow import GridFunction, hot_h, hot_h_prime
from .windows import Window, default_window, midpoint_concavity, restrict_to_values

DEFAULT_TOL = 1e-9
# reverse comparisons must fail by this multiple of tol to count as strict
STRICT_FACTOR = 10.0
# keep compositions strictly inside the common range [0, a)
EDGE_MARGIN = 1e-8


@dataclass(frozen=True)
class ComparisonResult:
    weaker: bool
    worst_violation: float
    witness: tuple | None = None  # (z, w, lambda)
    window: tuple | None = None

    def __bool__(self):
        return self.weaker


def _common_window(F1, F2, window):
    a = min(F1.a, F2.a)
    r_max = a * (1.0 - EDGE_MARGIN) if math.isfinite(a) else None
    win = default_window(F2, r_max=r_max) if window is None else restrict_to_values(F2, window, r_max)
    return win


def is_weaker(F1: AdmissibleFunction, F2: AdmissibleFunction, window: Window | None = None, tol: float = DEFAULT_TOL) -> ComparisonResult:
    """Whether F1-concavity is implied by F2-concavity on the sampled window of ``J_F2``."""
    win = _common_window(F1, F2, window)
    z = win.nodes()
    g = F1.F(F2.f(z))
    scan = midpoint_concavity(g, z, tol)
    return ComparisonResult(scan.passed, scan.worst, scan.witness, (win.lo, win.hi))


def strictly_weaker(F1, F2, window=None, tol: float = DEFAULT_TOL) -> bool:
    """F1 weaker than F2, and the reverse comparison fails by more than ``STRICT_FACTOR * tol``."""
    if not is_weaker(F1, F2, window, tol):
        return False
    reverse = is_weaker(F2, F1, None, tol)
    return reverse.worst_violation > STRICT_FACTOR * tol


def equivalent(F1: AdmissibleFunction, F2: AdmissibleFunction, window: Window | None = None, tol: float = 1e-8):
    """Fit ``F1 o f_F2 (z) = A z + B``; equivalent when A > 0 and the fit is exact to ``tol``.

    Returns ``(equivalent, A, B)``.
    """
    win = _common_window(F1, F2, window)
    z = win.nodes()
    if z.size < 3:
        raise ValueError("degenerate grid")
    g = F1.F(F2.f(z))
    ok = np.isfinite(g)
    if ok.sum() < 3:
        raise ValueError("degenerate grid")
    A, B = np.polyfit(z[ok], g[ok], 1)
    resid = np.abs(g[ok] - (A * z[ok] + B)) / np.maximum(1.0, np.abs(g[ok]))
    return bool(A > 0 and resid.max() <= tol), float(A), float(B)


def scalar_closure(F: AdmissibleFunction, kappa: float, window: Window | None = None, tol: float = DEFAULT_TOL) -> ComparisonResult:
    """Concavity of ``z -> F(kappa f(z))``: whether F-concave functions stay F-concave when scaled by kappa."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    win = default_window(F) if window is None else window
    # kappa f must stay above the underflow floor
    win = restrict_to_values(F, win, None)
    lo = win.lo
    if F.f(lo) * kappa < 1e-300:
        lo = F.F(1e-300 / kappa)
    win = win.clip(lo)
    z = win.nodes()
    g = F.F(kappa * F.f(z))
    scan = midpoint_concavity(g, z, tol)
    return ComparisonResult(scan.passed, scan.worst, scan.witness, (win.lo, win.hi))


def limit_inheritance_check(F1: AdmissibleFunction, F2: AdmissibleFunction, window: Window | None = None, tol: float = DEFAULT_TOL) -> bool:
    """A transform weaker than one with ``F(0+) = -inf`` must share that limit.

    Returns False when the sampled comparison contradicts this.
    """
    if not F2.limit_at_zero_is_minus_infinity:
        return True
    if not is_weaker(F1, F2, window, tol):
        return True
    return F1.limit_at_zero_is_minus_infinity


# ---------------------------------------------------------------------------
# hot approximation of log-concave functions


def ha_epsilon(a: float, bracket=(1e-3, 1e6)) -> float:
    """Root of ``eps h'(-2/eps) = 1/a``; the left side increases with eps."""
    if not a > 0:
        raise ValueError("a must be positive")
    target = 1.0 / a

    def gap(eps):
        return eps * hot_h_prime(-2.0 / eps) - target

    lo, hi = bracket
    if gap(lo) > 0 or gap(hi) < 0:
        raise ValueError(f"no root in {bracket} for a={a:g}")
    return brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def ha_profile(z, a: float, eps: float):
    """``integral_{-inf}^z exp(w - eps^2 w^2 / 4) dw`` in closed form, ``a h(eps z - 2/eps)``."""
    z = np.asarray(z, dtype=float)
    return a * hot_h(eps * z - 2.0 / eps)


def ha_approximant(a: float, f: GridFunction, epsilon_solver_tol: float = 1e-14):
    """H_a-concave approximation ``h_a(log f)`` of a log-concave grid function.

    Takes ``f`` itself (zeros allowed, mapped to 0) rather than ``log f``.
    Returns ``(f_a, eps_a)``.
    """
    eps = ha_epsilon(a)
    residual = abs(eps * hot_h_prime(-2.0 / eps) - 1.0 / a) * a
    if residual > max(epsilon_solver_tol, 1e-12):
        raise ArithmeticError(f"epsilon solve residual {residual:.2e} too large")
    with np.errstate(divide="ignore"):
        logf = np.log(f.values)
    vals = np.where(f.values > 0, ha_profile(np.where(f.values > 0, logf, 0.0), a, eps), 0.0)
    return GridFunction(vals, f.origin, f.spacing, f.zero_outside), eps
