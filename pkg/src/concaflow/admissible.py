"""Admissible transforms F and the calculus built on them.

An admissible F is strictly increasing on ``(0, a)`` with ``F(0) = -inf``.
Its inverse ``f`` maps the open range ``J = (J_lo, J_hi)`` back onto
``(0, a)``; a function u is F-concave when ``F(u)`` is concave.  Everything
downstream works with ``f``, ``f'``, ``f''`` and the quantity
``(log f')' = f'' / f'``.

All evaluators are vectorised: they accept scalars or arrays and return the
same shape (a Python float for scalar input).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .flow import hot_H, hot_h, hot_h_prime

# Evaluations closer than this to a or J_hi are rejected, not clamped.
ENDPOINT_GUARD = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of an admissible transform."""


class Family(enum.Enum):
    POWER = "phi"
    POWER_LOG = "lalpha"
    HOT = "hot"
    TABULATED = "table"


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class AdmissibleFunction:
    """Base class; concrete families override the ``_F``/``_f``/... hooks.

    ``a`` is the right end of ``I = [0, a)`` (``inf`` allowed) and
    ``(J_lo, J_hi)`` is ``F((0, a))``.
    """

    family: Family
    param: float
    a: float
    J_lo: float
    J_hi: float
    limit_at_zero_is_minus_infinity: bool

    @property
    def label(self) -> str:
        if self.family is Family.HOT:
            return "hot:inf" if math.isinf(self.param) else f"hot:{self.param:g}"
        return f"{self.family.value}:{self.param:g}"

    # -- domain helpers -------------------------------------------------
    def _check_r(self, r):
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise DomainError(f"{self.label}: r must be >= 0")
        if math.isfinite(self.a) and np.any(r > self.a - ENDPOINT_GUARD * max(1.0, self.a)):
            raise DomainError(f"{self.label}: r must stay below a={self.a:g}")

    def _check_z_upper(self, z):
        if np.any(np.isnan(z)):
            raise DomainError(f"{self.label}: z is NaN")
        if math.isfinite(self.J_hi) and np.any(z > self.J_hi - ENDPOINT_GUARD * max(1.0, abs(self.J_hi))):
            raise DomainError(f"{self.label}: z must stay below J_hi={self.J_hi:g}")
        if np.any(z == np.inf):
            raise DomainError(f"{self.label}: z = +inf")

    def _check_z_open(self, z):
        self._check_z_upper(z)
        if np.any(z <= self.J_lo):
            raise DomainError(f"{self.label}: z must exceed J_lo={self.J_lo:g}")

    # -- public evaluators ----------------------------------------------
    def F(self, r):
        """F(r) with the convention F(0) = -inf."""
        x = np.asarray(r, dtype=float)
        self._check_r(x)
        out = np.full(x.shape, -np.inf)
        pos = x > 0
        if np.any(pos):
            out[pos] = self._F(x[pos])
        return _out(out, r)

    def f(self, z):
        """Inverse of F, extended by 0 on ``[-inf, J_lo]``."""
        x = np.asarray(z, dtype=float)
        self._check_z_upper(x)
        out = np.zeros(x.shape)
        inside = x > self.J_lo
        if np.any(inside):
            out[inside] = self._f(x[inside])
        return _out(out, z)

    def f_prime(self, z):
        x = np.asarray(z, dtype=float)
        self._check_z_open(x)
        return _out(self._fp(x), z)

    def f_second(self, z):
        x = np.asarray(z, dtype=float)
        self._check_z_open(x)
        return _out(self._fpp(x), z)

    def F_prime(self, r):
        x = np.asarray(r, dtype=float)
        self._check_r(x)
        if np.any(x <= 0):
            raise DomainError(f"{self.label}: F' needs r > 0")
        return _out(1.0 / self._fp(self._F(x)), r)

    def log_fprime_derivative(self, z):
        """``(log f')'(z) = f''(z) / f'(z)``."""
        x = np.asarray(z, dtype=float)
        self._check_z_open(x)
        return _out(self._dlogfp(x), z)

    def f_over_fprime(self, z):
        """``f / f'``, the reciprocal of ``(log f)'``."""
        x = np.asarray(z, dtype=float)
        self._check_z_open(x)
        return _out(self._f_over_fp(x), z)

    # -- defaults for subclasses -----------------------------------------
    def _dlogfp(self, z):
        return self._fpp(z) / self._fp(z)

    def _f_over_fp(self, z):
        return self._f(z) / self._fp(z)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerFunction(AdmissibleFunction):
    """``(r^alpha - 1) / alpha``, or ``log r`` at alpha = 0, on ``[0, inf)``."""

    def _F(self, r):
        al = self.param
        if al == 0:
            return np.log(r)
        return np.expm1(al * np.log(r)) / al

    def _base(self, z):
        return 1.0 + self.param * z

    def _f(self, z):
        al = self.param
        if al == 0:
            return np.exp(z)
        return np.exp(np.log1p(al * z) / al)

    def _fp(self, z):
        al = self.param
        if al == 0:
            return np.exp(z)
        return self._base(z) ** (1.0 / al - 1.0)

    def _fpp(self, z):
        al = self.param
        if al == 0:
            return np.exp(z)
        return (1.0 - al) * self._base(z) ** (1.0 / al - 2.0)

    def _dlogfp(self, z):
        al = self.param
        if al == 0:
            return np.ones_like(z)
        return (1.0 - al) / self._base(z)

    def _f_over_fp(self, z):
        return self._base(z) if self.param != 0 else np.ones_like(z)


@dataclass(frozen=True)
class PowerLogFunction(AdmissibleFunction):
    """``-Phi_alpha(-log r)`` on ``[0, 1)``.

    With ``s = 1 - alpha z`` the inverse is ``exp(-s^(1/alpha))``
    (``exp(-e^-z)`` at alpha = 0).
    """

    def _F(self, r):
        al = self.param
        t = -np.log(r)
        if al == 0:
            return -np.log(t)
        return -np.expm1(al * np.log(t)) / al

    def _s(self, z):
        return 1.0 - self.param * z

    def _f(self, z):
        al = self.param
        if al == 0:
            return np.exp(-np.exp(-z))
        return np.exp(-self._s(z) ** (1.0 / al))

    def _fp(self, z):
        al = self.param
        if al == 0:
            return np.exp(-z - np.exp(-z))
        s = self._s(z)
        return np.exp((1.0 / al - 1.0) * np.log(s) - s ** (1.0 / al))

    def _fpp(self, z):
        return self._fp(z) * self._dlogfp(z)

    def _dlogfp(self, z):
        al = self.param
        if al == 0:
            return np.expm1(-z)
        s = self._s(z)
        return (al - 1.0) / s + s ** (1.0 / al - 1.0)

    def _f_over_fp(self, z):
        al = self.param
        if al == 0:
            return np.exp(z)
        return self._s(z) ** (1.0 - 1.0 / al)


@dataclass(frozen=True)
class HotFunction(AdmissibleFunction):
    """``H(r / a)`` on ``[0, a)``, H the inverse of the hot function h."""

    def _F(self, r):
        return hot_H(r / self.a)

    def _f(self, z):
        return self.a * hot_h(z)

    def _fp(self, z):
        return self.a * hot_h_prime(z)

    def _fpp(self, z):
        return -0.5 * z * self._fp(z)

    def _dlogfp(self, z):
        return -0.5 * z

    def _f_over_fp(self, z):
        return hot_h(z) / hot_h_prime(z)


@dataclass(frozen=True)
class TabulatedFunction(AdmissibleFunction):
    """Monotone cubic (PCHIP) interpolant of user pairs ``(r_i, F(r_i))``.

    ``a`` is the last tabulated r; r below the first node (other than 0)
    is outside the table and rejected.  Derivatives of the inverse come
    from central differences with step ``max(1e-5, 1e-4 |z|)``.
    """

    source: str = ""
    _interp: PchipInterpolator | None = field(default=None, repr=False, compare=False)
    _r0: float = 0.0

    def _F(self, r):
        if np.any(r < self._r0):
            raise DomainError(f"{self.label}: r below the first table node {self._r0:g}")
        return self._interp(r)

    def _f(self, z):
        # vectorised bisection on the monotone interpolant; 200 halvings
        # resolve any bracket to the last ulp
        lo = np.full(z.shape, self._r0)
        hi = np.full(z.shape, self.a)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self._interp(mid) < z
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300)):
                break
        return 0.5 * (lo + hi)

    def _step(self, z):
        return np.maximum(1e-5, 1e-4 * np.abs(z))

    def _fp(self, z):
        h = self._step(z)
        return (self._f(z + h) - self._f(z - h)) / (2 * h)

    def _fpp(self, z):
        h = self._step(z)
        return (self._f(z + h) - 2 * self._f(z) + self._f(z - h)) / (h * h)


# ---------------------------------------------------------------------------
# constructors


def make_power(alpha: float) -> PowerFunction:
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise ValueError("alpha must be finite")
    if alpha > 0:
        J = (-1.0 / alpha, math.inf)
    elif alpha < 0:
        J = (-math.inf, -1.0 / alpha)
    else:
        J = (-math.inf, math.inf)
    return PowerFunction(Family.POWER, alpha, math.inf, J[0], J[1], alpha <= 0)


def make_power_log(alpha: float) -> PowerLogFunction:
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise ValueError("alpha must be finite")
    if alpha > 0:
        J = (-math.inf, 1.0 / alpha)
    elif alpha < 0:
        J = (1.0 / alpha, math.inf)
    else:
        J = (-math.inf, math.inf)
    return PowerLogFunction(Family.POWER_LOG, alpha, 1.0, J[0], J[1], alpha >= 0)


def make_hot(a: float) -> AdmissibleFunction:
    """Hot transform on ``[0, a)``; ``a = inf`` gives the logarithm."""
    a = float(a)
    if not a > 0:
        raise ValueError("a must be positive")
    if math.isinf(a):
        return make_power(0.0)
    return HotFunction(Family.HOT, a, a, -math.inf, math.inf, True)


def make_tabulated(r, F_values, limit_at_zero_is_minus_infinity: bool, source: str = "") -> TabulatedFunction:
    """Admissible transform from a table; the limit flag is declared, never inferred."""
    r = np.asarray(r, dtype=float)
    Fv = np.asarray(F_values, dtype=float)
    if r.ndim != 1 or r.shape != Fv.shape or r.size < 2:
        raise ValueError("table needs two equal-length columns with at least 2 rows")
    if not (np.all(np.diff(r) > 0) and np.all(np.diff(Fv) > 0)):
        raise ValueError("table columns must be strictly increasing")
    if r[0] <= 0 or not np.all(np.isfinite(Fv)):
        raise ValueError("table r must be positive and F finite")
    interp = PchipInterpolator(r, Fv, extrapolate=False)
    return TabulatedFunction(
        Family.TABULATED,
        math.nan,
        float(r[-1]),
        float(Fv[0]),
        float(Fv[-1]),
        bool(limit_at_zero_is_minus_infinity),
        source=source,
        _interp=interp,
        _r0=float(r[0]),
    )


def load_table(path, limit_at_zero_is_minus_infinity: bool = True) -> TabulatedFunction:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns 'r F(r)'")
    return make_tabulated(data[:, 0], data[:, 1], limit_at_zero_is_minus_infinity, source=str(path))


def parse_family(text: str) -> AdmissibleFunction:
    """Resolve ``phi:<alpha>``, ``lalpha:<alpha>``, ``hot:<a|inf>`` or ``table:<path>``."""
    kind, sep, arg = text.strip().partition(":")
    if not sep or not arg:
        raise ValueError(f"malformed family spec {text!r}")
    kind = kind.lower()
    if kind == "table":
        return load_table(Path(arg))
    try:
        value = float(arg)
    except ValueError:
        raise ValueError(f"malformed family parameter in {text!r}") from None
    if kind == "phi":
        return make_power(value)
    if kind == "lalpha":
        return make_power_log(value)
    if kind == "hot":
        return make_hot(value)
    raise ValueError(f"unknown family kind {kind!r} in {text!r}")


# ---------------------------------------------------------------------------
# functional aliases


def eval_F(F: AdmissibleFunction, r):
    return F.F(r)


def eval_inverse(F: AdmissibleFunction, z):
    return F.f(z)


def log_fprime_derivative(F: AdmissibleFunction, z):
    return F.log_fprime_derivative(z)


@dataclass(frozen=True)
class AlphaMeanParams:
    alpha: float
    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie strictly inside (0, 1)")
        if math.isnan(self.alpha):
            raise ValueError("alpha must not be NaN")


def alpha_mean(x: float, y: float, p: AlphaMeanParams) -> float:
    """Weighted power mean, 0 whenever one argument vanishes."""
    if x < 0 or y < 0:
        raise ValueError("alpha_mean needs nonnegative arguments")
    if x * y == 0:
        return 0.0
    al, lam = p.alpha, p.lam
    if al == math.inf:
        return max(x, y)
    if al == -math.inf:
        return min(x, y)
    if al == 0:
        return math.exp((1 - lam) * math.log(x) + lam * math.log(y))
    # expm1/log1p form stays accurate as alpha approaches 0
    inner = (1 - lam) * math.expm1(al * math.log(x)) + lam * math.expm1(al * math.log(y))
    return math.exp(math.log1p(inner) / al)
