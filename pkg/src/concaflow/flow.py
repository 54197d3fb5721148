"""Heat flows on grids: the hot function, whole-line convolution, the
separable plane flow, Crank-Nicolson on boxes with zero boundary values and a
semilinear IMEX variant.

The hot function is the heat evolution at time 1 of the half-line indicator,
``h(z) = P(N(0, 2) <= z)``.  It is evaluated with :func:`scipy.special.ndtr`,
whose tails are accurate to full relative precision.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .kernels import Tridiagonal

log = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_4PI = 1.0 / math.sqrt(4.0 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# tail mass cut-off for the convolution kernel
KERNEL_TAIL = 1e-16
NEGATIVE_FLOOR = -1e-12


# ---------------------------------------------------------------------------
# hot function


def _ret(x, like):
    return float(x) if np.ndim(like) == 0 else x


def hot_h(z):
    x = np.asarray(z, dtype=float)
    return _ret(ndtr(x / _SQRT2), z)


def hot_h_prime(z):
    x = np.asarray(z, dtype=float)
    return _ret(_INV_SQRT_4PI * np.exp(-0.25 * x * x), z)


def hot_log_h(z):
    x = np.asarray(z, dtype=float)
    return _ret(log_ndtr(x / _SQRT2), z)


def hot_H(y):
    """Inverse of :func:`hot_h` on ``(0, 1)``.

    Starts from the normal quantile and polishes with Newton steps on
    ``log h``.  Values above 1/2 go through ``H(y) = -H(1 - y)``, where
    ``1 - y`` is exact.
    """
    q = np.asarray(y, dtype=float)
    if np.any(~(q > 0.0)) or np.any(~(q < 1.0)):
        raise ValueError("hot_H needs 0 < y < 1")
    upper = q > 0.5
    qq = np.where(upper, 1.0 - q, q)
    z = _SQRT2 * ndtri(qq)
    target = np.log(qq)
    for _ in range(4):
        lh = log_ndtr(z / _SQRT2)
        # d/dz log h = h'/h = exp(log h' - log h)
        slope = np.exp(np.log(_INV_SQRT_4PI) - 0.25 * z * z - lh)
        z = z - (lh - target) / slope
    z = np.where(upper, -z, z)
    return _ret(z, y)


# ---------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True)
class GridFunction:
    """Nonnegative samples on a uniform 1D or 2D grid.

    ``zero_outside=True`` extends the function by 0 beyond the grid;
    otherwise the edge values continue as constants (this is how a step
    datum that is 1 on a whole half-line is represented).
    """

    values: np.ndarray
    origin: tuple
    spacing: tuple
    zero_outside: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(o) for o in np.atleast_1d(self.origin)))
        object.__setattr__(self, "spacing", tuple(float(s) for s in np.atleast_1d(self.spacing)))
        if v.ndim not in (1, 2):
            raise ValueError("GridFunction supports 1 or 2 dimensions")
        if len(self.origin) != v.ndim or len(self.spacing) != v.ndim:
            raise ValueError("origin/spacing must match the number of dimensions")
        if any(not (s > 0) for s in self.spacing):
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("GridFunction values must be finite")
        if np.any(v < 0):
            raise ValueError("GridFunction values must be nonnegative")

    @property
    def dims(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def axis(self, k: int = 0) -> np.ndarray:
        return self.origin[k] + self.spacing[k] * np.arange(self.shape[k])

    def node(self, index) -> tuple:
        index = np.atleast_1d(index)
        return tuple(self.origin[k] + self.spacing[k] * int(index[k]) for k in range(self.dims))

    @classmethod
    def sample(cls, func, lo, hi, n, zero_outside=True):
        """Sample ``func`` on ``n`` nodes per axis spanning ``[lo, hi]``."""
        lo, hi, n = np.atleast_1d(lo), np.atleast_1d(hi), np.atleast_1d(n)
        axes = [np.linspace(lo[k], hi[k], int(n[k])) for k in range(lo.size)]
        spacing = [(hi[k] - lo[k]) / (int(n[k]) - 1) for k in range(lo.size)]
        if lo.size == 1:
            vals = func(axes[0])
        else:
            X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
            vals = func(X, Y)
        return cls(np.asarray(vals, dtype=float), tuple(lo), tuple(spacing), zero_outside)


def save_grid(u: GridFunction, path) -> None:
    """Text format: ``dims``, ``origin``, ``spacing`` and ``shape`` header lines, then the matrix."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"dims {u.dims}\n")
        fh.write("origin " + " ".join(repr(o) for o in u.origin) + "\n")
        fh.write("spacing " + " ".join(repr(s) for s in u.spacing) + "\n")
        fh.write("shape " + " ".join(str(s) for s in u.shape) + "\n")
        np.savetxt(fh, np.atleast_2d(u.values), fmt="%.17g")


def load_grid(path, zero_outside: bool = True) -> GridFunction:
    path = Path(path)
    with path.open() as fh:
        header = {}
        for key in ("dims", "origin", "spacing", "shape"):
            parts = fh.readline().split()
            if not parts or parts[0] != key:
                raise ValueError(f"{path}: expected header line '{key} ...'")
            header[key] = parts[1:]
        data = np.loadtxt(fh, ndmin=2)
    dims = int(header["dims"][0])
    shape = tuple(int(s) for s in header["shape"])
    if len(shape) != dims:
        raise ValueError(f"{path}: shape does not match dims")
    values = data.reshape(shape)
    return GridFunction(
        values,
        tuple(float(o) for o in header["origin"]),
        tuple(float(s) for s in header["spacing"]),
        zero_outside,
    )


class SolverTag(enum.Enum):
    EXACT_CONVOLUTION = "ExactConvolution"
    CRANK_NICOLSON = "CrankNicolson"
    PRODUCT_FLOW = "ProductFlow"
    SEMILINEAR_IMEX = "SemilinearIMEX"


@dataclass(frozen=True)
class FlowSnapshot:
    t: float
    u: GridFunction
    solver_tag: SolverTag
    dt: float = 0.0
    clamped: int = field(default=0, compare=False)


def _clamp(values, where):
    neg = values < 0
    n = int(np.count_nonzero(neg))
    if n:
        worst = float(values.min())
        if worst < NEGATIVE_FLOOR:
            log.warning("%s: %d negative values, worst %.3e below the floor", where, n, worst)
        else:
            log.debug("%s: clamped %d round-off negatives", where, n)
        values = np.where(neg, 0.0, values)
    return values, n


# ---------------------------------------------------------------------------
# whole-line heat semigroup


def kernel_radius(t: float) -> float:
    """Distance beyond which the heat kernel at time t is below the tail cut-off of its peak."""
    return 2.0 * math.sqrt(t * math.log(1.0 / KERNEL_TAIL))


# Below this many grid spacings per kernel standard deviation the trapezoid
# rule stops resolving the kernel and segments are integrated exactly instead.
RESOLVED_SIGMAS = 3.0


def _trapezoid_rows(x, xi, t):
    """Trapezoid weights of the heat kernel, plus the exact tail masses
    beyond the first and last node."""
    dx = x[1] - x[0]
    d = xi[:, None] - x[None, :]
    W = math.sqrt(1.0 / (4.0 * math.pi * t)) * np.exp(-d * d / (4.0 * t)) * dx
    W[:, 0] *= 0.5
    W[:, -1] *= 0.5
    s = math.sqrt(2.0 * t)
    return W, ndtr((x[0] - xi) / s), ndtr((xi - x[-1]) / s)


def _segment_rows(x, xi, t):
    """Rows of the map ``phi -> e^{t Delta} phi`` for the piecewise-linear
    interpolant of ``phi``, each segment integrated exactly against the
    Gaussian kernel.  Needs no resolution of ``sqrt(t)`` by the grid.
    """
    s = math.sqrt(2.0 * t)
    dx = x[1] - x[0]
    a = (x[None, :-1] - xi[:, None]) / s
    b = (x[None, 1:] - xi[:, None]) / s
    cdf_a, cdf_b = ndtr(a), ndtr(b)
    mass = cdf_b - cdf_a
    first = s * _INV_SQRT_2PI * (np.exp(-0.5 * a * a) - np.exp(-0.5 * b * b))
    # on segment j: phi(y) = phi_j + m_j (y - x_j), m_j = (phi_{j+1} - phi_j)/dx
    # integral = (phi_j + m_j (xi - x_j)) * mass + m_j * first
    offset = xi[:, None] - x[None, :-1]
    slope_w = (offset * mass + first) / dx
    W = np.zeros((xi.size, x.size))
    W[:, :-1] += mass - slope_w
    W[:, 1:] += slope_w
    return W, cdf_a[:, 0], 1.0 - cdf_b[:, -1]


def heat_line(phi: GridFunction, t: float, block: int = 512) -> FlowSnapshot:
    """Whole-line heat flow ``(4 pi t)^{-1/2} e^{-|x-y|^2/4t} * phi`` on the grid of ``phi``.

    Uses trapezoid weights when the kernel spans at least
    ``RESOLVED_SIGMAS`` grid spacings per standard deviation and the datum
    vanishes outside the grid.  Otherwise the piecewise-linear interpolant is
    integrated exactly: at short times, and for constant continuation past
    the edges, where the trapezoid end error would bend a flat profile.
    """
    if phi.dims != 1:
        raise ValueError("heat_line needs a 1D grid function")
    if not t > 0:
        raise ValueError("t must be positive")
    x = phi.axis(0)
    dx = phi.spacing[0]
    length = x[-1] - x[0]
    if kernel_radius(t) > 10.0 * max(length, dx):
        raise ValueError("heat kernel support exceeds ten grid lengths; enlarge the grid")
    resolved = math.sqrt(2.0 * t) >= RESOLVED_SIGMAS * dx
    rows = _trapezoid_rows if resolved and phi.zero_outside else _segment_rows
    v = phi.values
    out = np.empty_like(v)
    for start in range(0, v.size, block):
        xi = x[start : start + block]
        W, left, right = rows(x, xi, t)
        u = W @ v
        if not phi.zero_outside:
            u = u + v[0] * left + v[-1] * right
        out[start : start + block] = u
    out, n = _clamp(out, "heat_line")
    return FlowSnapshot(t, GridFunction(out, phi.origin, phi.spacing, phi.zero_outside), SolverTag.EXACT_CONVOLUTION, clamped=n)


def product_flow_2d(phi1: GridFunction, phi2: GridFunction, t: float) -> FlowSnapshot:
    """Plane heat flow of ``phi1(w) phi2(z)``: the outer product of the two line flows."""
    s1 = heat_line(phi1, t)
    s2 = heat_line(phi2, t)
    vals = np.outer(s1.u.values, s2.u.values)
    u = GridFunction(
        vals,
        (phi1.origin[0], phi2.origin[0]),
        (phi1.spacing[0], phi2.spacing[0]),
        phi1.zero_outside and phi2.zero_outside,
    )
    return FlowSnapshot(t, u, SolverTag.PRODUCT_FLOW, clamped=s1.clamped + s2.clamped)


# ---------------------------------------------------------------------------
# Crank-Nicolson on boxes with zero boundary values


def _second_difference(u, axis, h):
    """Dirichlet second difference on interior nodes along ``axis`` (zero ghost values)."""
    d = -2.0 * u
    if axis == 0:
        d[1:] += u[:-1]
        d[:-1] += u[1:]
    else:
        d[:, 1:] += u[:, :-1]
        d[:, :-1] += u[:, 1:]
    return d / (h * h)


class _CNStepper:
    """Crank-Nicolson (1D) or Peaceman-Rachford ADI (2D) on the interior nodes."""

    def __init__(self, shape, spacing):
        self.shape = shape
        self.spacing = spacing
        self._cache = {}

    def _implicit(self, axis, dt):
        key = (axis, dt)
        if key not in self._cache:
            n = self.shape[axis] - 2
            r = 0.5 * dt / self.spacing[axis] ** 2
            off = np.full(n - 1, -r)
            self._cache[key] = Tridiagonal(off, np.full(n, 1.0 + 2.0 * r), off)
        return self._cache[key]

    def step(self, w, dt, source=None):
        """Advance interior values ``w`` by ``dt``; ``source`` is an explicit forcing."""
        if w.ndim == 1:
            rhs = w + 0.5 * dt * _second_difference(w, 0, self.spacing[0])
            if source is not None:
                rhs = rhs + dt * source
            return self._implicit(0, dt).solve(rhs)
        hx, hy = self.spacing
        # x-implicit half step, then y-implicit half step
        rhs = w + 0.5 * dt * _second_difference(w, 1, hy)
        if source is not None:
            rhs = rhs + 0.5 * dt * source
        half = self._implicit(0, dt).solve(rhs)
        rhs = half + 0.5 * dt * _second_difference(half, 0, hx)
        if source is not None:
            rhs = rhs + 0.5 * dt * source
        return self._implicit(1, dt).solve(rhs.T).T


def _interior(u):
    return u[1:-1] if u.ndim == 1 else u[1:-1, 1:-1]


def _embed(w, shape):
    out = np.zeros(shape)
    if w.ndim == 1:
        out[1:-1] = w
    else:
        out[1:-1, 1:-1] = w
    return out


def _check_boundary(phi: GridFunction):
    v = phi.values
    edge = np.concatenate([v[[0, -1]].ravel()] if v.ndim == 1 else [v[0], v[-1], v[:, 0], v[:, -1]])
    if np.max(np.abs(edge)) > 1e-12:
        raise ValueError("datum must vanish on the grid boundary")
    if min(phi.shape) < 3:
        raise ValueError("need at least 3 nodes per axis")


def _time_plan(t_list, dt):
    t_list = [float(t) for t in t_list]
    if not dt > 0:
        raise ValueError("dt must be positive")
    if any(t < 0 for t in t_list) or any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError("times must be nonnegative and strictly increasing")
    plan, prev = [], 0.0
    for t in t_list:
        span = t - prev
        n = max(1, math.ceil(span / dt - 1e-9)) if span > 0 else 0
        plan.append((t, n, span / n if n else 0.0))
        prev = t
    return plan


def default_dt(phi: GridFunction, t_max: float) -> float:
    return min(min(phi.spacing), 0.01 * t_max)


def _evolve(phi, t_list, dt, tag, reaction=None, guard=None):
    _check_boundary(phi)
    stepper = _CNStepper(phi.shape, phi.spacing)
    w = _interior(phi.values.copy())
    snaps, now = [], 0.0
    for t, n, h in _time_plan(t_list, dt):
        for _ in range(n):
            src = reaction(w) if reaction is not None else None
            w = stepper.step(w, h, src)
            now += h
            if guard is not None:
                guard(w, now)
        full, nclamp = _clamp(_embed(w, phi.shape), tag.value)
        snaps.append(FlowSnapshot(t, GridFunction(full, phi.origin, phi.spacing, True), tag, dt=h, clamped=nclamp))
    return snaps


def dirichlet_cn(phi: GridFunction, t_list, dt: float | None = None) -> list[FlowSnapshot]:
    """Heat flow with zero boundary values on the box spanned by the grid.

    Times that are not multiples of ``dt`` are reached with a slightly
    shortened uniform step over that interval.
    """
    t_list = list(t_list)
    if dt is None:
        dt = default_dt(phi, max(t_list))
    return _evolve(phi, t_list, dt, SolverTag.CRANK_NICOLSON)


def comparison_bound(sup0: float, kappa: float, p: float, t):
    """Solution of ``z' = kappa z^p``, ``z(0) = sup0``: an upper bound for the semilinear flow."""
    t = np.asarray(t, dtype=float)
    if sup0 == 0:
        return np.zeros_like(t)
    base = 1.0 - kappa * (p - 1.0) * t * sup0 ** (p - 1.0)
    return sup0 * base ** (-1.0 / (p - 1.0))


def blowup_guard(sup0: float, kappa: float, p: float) -> float:
    """Lower bound on the existence time for a source term ``kappa u^p``, kappa > 0."""
    if kappa <= 0 or sup0 == 0:
        return math.inf
    return sup0 ** (-(p - 1.0)) / (kappa * (p - 1.0))


def semilinear_imex(phi: GridFunction, kappa: float, p: float, T: float, dt: float, t_list=None) -> list[FlowSnapshot]:
    """``u_t = Delta u + kappa |u|^(p-1) u`` with zero boundary values.

    Diffusion is Crank-Nicolson, the reaction explicit.  Snapshots are taken
    at ``t_list`` (default ``[T]``).  Each step is checked against the
    comparison bound from the spatially constant problem.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not T > 0:
        raise ValueError("T must be positive")
    sup0 = float(phi.values.max())
    t_star = blowup_guard(sup0, kappa, p)
    if T >= t_star:
        raise ValueError(f"T={T:g} reaches the blow-up guard {t_star:g}")
    t_list = [T] if t_list is None else list(t_list)
    if max(t_list) > T:
        raise ValueError("snapshot times must not exceed T")

    def reaction(w):
        return kappa * np.abs(w) ** (p - 1.0) * w

    def guard(w, now):
        bound = float(comparison_bound(sup0, kappa, p, now))
        top = float(w.max()) if w.size else 0.0
        if top > 2.0 * bound:
            raise FloatingPointError(f"IMEX instability at t={now:g}: max {top:g} > 2 x bound {bound:g}")
        if top > bound + 1e-6:
            raise FloatingPointError(f"comparison bound violated at t={now:g}: {top:g} > {bound:g}")

    if kappa == 0:
        return _evolve(phi, t_list, dt, SolverTag.SEMILINEAR_IMEX)
    return _evolve(phi, t_list, dt, SolverTag.SEMILINEAR_IMEX, reaction=reaction, guard=guard)


# ---------------------------------------------------------------------------
# discretisation error budget


@lru_cache(maxsize=1)
def budget_constant() -> float:
    """C in ``C (dt^2 + dx^2)``, calibrated on ``sin x`` over ``(0, pi)`` to t = 1."""
    worst = 0.0
    for n, dt in ((33, 0.05), (65, 0.02)):
        phi = GridFunction.sample(np.sin, 0.0, math.pi, n)
        phi = GridFunction(np.where(np.abs(phi.values) < 1e-15, 0.0, phi.values), phi.origin, phi.spacing)
        (snap,) = dirichlet_cn(phi, [1.0], dt)
        err = np.max(np.abs(snap.u.values - math.exp(-1.0) * np.sin(phi.axis(0))))
        worst = max(worst, err / (dt * dt + phi.spacing[0] ** 2))
    return worst


def solver_error_budget(dt: float, dx: float) -> float:
    return budget_constant() * (dt * dt + dx * dx)
