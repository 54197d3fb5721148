"""Sampling windows on the range of an admissible transform, and the
midpoint concavity scan used by the hierarchy and criterion checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

# infinite ends of J are replaced by these before trimming
SPAN_CAP = 50.0
TRIM = 0.01
# smallest value of f kept in a window, so that F(f(z)) never sees an underflow
F_FLOOR = 1e-300


@dataclass(frozen=True)
class Window:
    lo: float
    hi: float
    n: int = 1001

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"bad window [{self.lo}, {self.hi}]")
        if self.n < 3:
            raise ValueError("a window needs at least 3 nodes")

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def clip(self, lo=-math.inf, hi=math.inf) -> "Window":
        new_lo, new_hi = max(self.lo, lo), min(self.hi, hi)
        if not new_lo < new_hi:
            raise ValueError("window is empty after clipping")
        return Window(new_lo, new_hi, self.n)


def default_window(F, n: int = 1001, r_max: float | None = None) -> Window:
    """Trimmed window inside ``J``; infinite ends are capped at +/-50.

    With ``r_max`` the window also stops where ``f`` reaches ``r_max``.
    """
    lo = max(F.J_lo, -SPAN_CAP)
    hi = min(F.J_hi, SPAN_CAP)
    span = hi - lo
    win = Window(lo + TRIM * span, hi - TRIM * span, n)
    return restrict_to_values(F, win, r_max)


def restrict_to_values(F, win: Window, r_max: float | None = None) -> Window:
    """Shrink ``win`` so that ``F_FLOOR <= f(z) <= r_max`` on it."""
    lo, hi = win.lo, win.hi
    if F.f(lo) < F_FLOOR:
        lo = F.F(F_FLOOR)
    if r_max is not None and r_max < F.a and F.f(hi) > r_max:
        hi = F.F(r_max)
    return win.clip(lo, hi)


@dataclass(frozen=True)
class MidpointScan:
    passed: bool
    worst: float
    witness: tuple | None  # (z, w, lambda)


def midpoint_concavity(g, nodes, tol: float, relative: bool = True, convex: bool = False) -> MidpointScan:
    """Midpoint concavity (or convexity) of sampled ``g`` over every node
    pair whose midpoint is a node.

    ``relative`` scales each defect by ``max(1, |g|)`` over the triple.
    """
    g = np.asarray(g, dtype=float)
    if convex:
        g = -g
    worst, i, j = kernels.midpoint_scan_1d(g, kernels.CONCAVE, relative)
    passed = worst <= tol
    witness = None if passed else (float(nodes[i]), float(nodes[j]), 0.5)
    return MidpointScan(passed, worst, witness)
