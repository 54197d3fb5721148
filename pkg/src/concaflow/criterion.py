"""Preservation verdicts for heat-type flows.

The Dirichlet heat flow preserves F-concavity exactly when F(0+) = -inf,
f' > 0 and ``(log f')'`` is concave on J.  Adding a reaction
``kappa |u|^(p-1) u`` with kappa <= 0 additionally requires concavity of
``kappa f^p / f'``.  The remaining checks here are the variable-coefficient
conditions, the line function used to disprove preservation for general
reactions, and the initial-rate tests for porous-medium and p-Laplace flows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .admissible import AdmissibleFunction, Family
from .hierarchy import DEFAULT_TOL, ComparisonResult
from .windows import Window, default_window, midpoint_concavity


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    violation: float
    witness: object = None
    boundary: bool = False


@dataclass
class CriterionVerdict:
    criterion: str
    family: str
    params: dict
    conditions: list = field(default_factory=list)
    notes: str = ""
    analytic: dict = field(default_factory=dict)

    @property
    def preserved(self) -> bool:
        return all(c.passed for c in self.conditions)

    def condition(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "family": self.family,
            "params": dict(self.params),
            "preserved": self.preserved,
            "conditions": [asdict(c) for c in self.conditions],
            "notes": self.notes,
            "analytic": dict(self.analytic),
        }


def _scan_condition(name, g, z, tol, convex=False):
    scan = midpoint_concavity(g, z, tol, relative=True, convex=convex)
    return Condition(name, scan.passed, scan.worst, scan.witness)


def _window(F, window):
    return default_window(F) if window is None else window


def _base_conditions(F: AdmissibleFunction, win: Window, tol: float):
    conds = []
    if F.limit_at_zero_is_minus_infinity:
        conds.append(Condition("limit_at_zero", True, 0.0))
    else:
        conds.append(Condition("limit_at_zero", False, math.inf, {"limit": F.J_lo}))
    z = win.nodes()
    fp = F.f_prime(z)
    k = int(np.argmin(fp))
    if fp[k] > 0:
        conds.append(Condition("derivative_positive", True, 0.0))
    else:
        conds.append(Condition("derivative_positive", False, float(-fp[k]), float(z[k])))
    conds.append(_scan_condition("log_fprime_derivative_concave", F.log_fprime_derivative(z), z, tol))
    return conds


def _notes(F):
    if F.family is Family.TABULATED:
        return "window-limited: tabulated transform checked on the sampled window only"
    return ""


def dhf_criterion(F: AdmissibleFunction, window: Window | None = None, tol: float = DEFAULT_TOL) -> CriterionVerdict:
    win = _window(F, window)
    v = CriterionVerdict("dhf", F.label, {"window": [win.lo, win.hi, win.n], "tol": tol}, notes=_notes(F))
    v.conditions = _base_conditions(F, win, tol)
    return v


def semilinear_criterion(F: AdmissibleFunction, kappa: float, p: float, window: Window | None = None, tol: float = DEFAULT_TOL) -> CriterionVerdict:
    """Preservation under ``u_t = Delta u + kappa |u|^(p-1) u`` with zero boundary values."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    win = _window(F, window)
    v = CriterionVerdict(
        "semilinear", F.label, {"kappa": kappa, "p": p, "window": [win.lo, win.hi, win.n], "tol": tol}, notes=_notes(F)
    )
    if kappa > 0:
        v.conditions = [Condition("kappa_nonpositive", False, float(kappa))]
        v.notes = "a positive source term destroys preservation for every admissible transform"
        return v
    v.conditions = _base_conditions(F, win, tol)
    z = win.nodes()
    if kappa == 0:
        reaction = np.zeros_like(z)
    else:
        reaction = kappa * F.f(z) ** (p - 1.0) * F.f_over_fprime(z)
    v.conditions.append(_scan_condition("reaction_ratio_concave", reaction, z, tol))
    return v


# ---------------------------------------------------------------------------
# line function for general reactions


def power_reaction(kappa: float, p: float):
    """``G(x, u, grad) = kappa |u|^(p-1) u``."""

    def G(x, u, grad):
        return kappa * np.abs(u) ** (p - 1.0) * u

    return G


def drift_reaction(b, p: float):
    """``G(x, u, grad) = <b, grad(u^p)> = p u^(p-1) <b, grad u>``."""
    b = np.asarray(b, dtype=float)

    def G(x, u, grad):
        return p * u ** (p - 1.0) * (grad @ b)

    return G


def necessary_Htilde(
    F: AdmissibleFunction,
    G,
    theta,
    ell: float = 0.0,
    line_window: Window | None = None,
    tol: float = DEFAULT_TOL,
) -> ComparisonResult:
    """Concavity in z of ``G(x, f, f' theta) / f' + (log f')' |theta|^2``
    along the line ``<theta, x> + ell = z``.

    ``G`` is vectorised: ``x`` is ``(n, d)``, ``u`` is ``(n,)`` and ``grad``
    is ``(n, d)``.  The line is parametrised by ``x(z) = theta (z - ell) / |theta|^2``
    (``x = 0`` when theta vanishes).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    win = _window(F, line_window)
    if win.lo <= F.J_lo or win.hi >= F.J_hi:
        raise ValueError("line window leaves J")
    z = win.nodes()
    t2 = float(theta @ theta)
    x = np.outer(z - ell, theta) / t2 if t2 > 0 else np.zeros((z.size, theta.size))
    u = F.f(z)
    fp = F.f_prime(z)
    grad = fp[:, None] * theta[None, :]
    g = G(x, u, grad) / fp + F.log_fprime_derivative(z) * t2
    scan = midpoint_concavity(g, z, tol)
    return ComparisonResult(scan.passed, scan.worst, scan.witness, (win.lo, win.hi))


# ---------------------------------------------------------------------------
# variable coefficients

THETA_SAMPLES_2D = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1 / math.sqrt(2), 1 / math.sqrt(2)), (3.0, 0.0)]
JOINT_DIRECTIONS = [(1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1), (1, 3), (3, 1)]


def theta_samples(d: int):
    if d == 1:
        return [np.array([t]) for t in (0.0, 1.0, -1.0, 3.0)]
    if d == 2:
        return [np.array(t) for t in THETA_SAMPLES_2D]
    raise ValueError("only 1 or 2 space dimensions are supported")


def _box_grid(domain_samples):
    """``[(lo, hi, n), ...]`` per axis -> (axes, points of shape (..., d))."""
    axes = [np.linspace(lo, hi, int(n)) for lo, hi, n in domain_samples]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack(mesh, axis=-1)


def _directions(ndim):
    """Axis directions plus the fixed oblique set, embedded in ``ndim`` dimensions."""
    dirs = set()
    for k in range(ndim):
        e = [0] * ndim
        e[k] = 1
        dirs.add(tuple(e))
    for a, b in itertools.combinations(range(ndim), 2):
        for da, db in JOINT_DIRECTIONS:
            e = [0] * ndim
            e[a], e[b] = da, db
            dirs.add(tuple(e))
    return sorted(dirs)


def _lattice_defect_nd(g, directions, scale_relative=True):
    """Worst midpoint concavity defect of an n-D array along lattice directions."""
    best, where = 0.0, None
    shape = g.shape
    for d in directions:
        k = 1
        while all(2 * k * abs(di) < n for di, n in zip(d, shape)):
            sl = [[], [], []]
            for di, n in zip(d, shape):
                step = k * di
                lo = max(0, -2 * step)
                hi = min(n, n - 2 * step)
                sl[0].append(slice(lo, hi))
                sl[1].append(slice(lo + step, hi + step))
                sl[2].append(slice(lo + 2 * step, hi + 2 * step))
            gx, gm, gy = (g[tuple(s)] for s in sl)
            defect = 0.5 * (gx + gy) - gm
            if scale_relative:
                defect = defect / np.maximum.reduce([np.ones_like(gx), np.abs(gx), np.abs(gy), np.abs(gm)])
            if defect.size:
                idx = np.unravel_index(int(np.argmax(defect)), defect.shape)
                if defect[idx] > best:
                    start = [int(s.start + i) for s, i in zip(sl[0], idx)]
                    best, where = float(defect[idx]), {"start": start, "step": [k * di for di in d]}
            k += 1
    return best, where


def _check_spd(A_vals):
    for A in A_vals.reshape(-1, *A_vals.shape[-2:]):
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("diffusion matrix sample is not symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("diffusion matrix sample is not positive definite")


def _sample(points, fn):
    flat = points.reshape(-1, points.shape[-1])
    vals = [np.asarray(fn(x), dtype=float) for x in flat]
    return np.array(vals).reshape(points.shape[:-1] + vals[0].shape)


def _affine_condition(name, b_vals, tol):
    worst, where = 0.0, None
    dirs = _directions(b_vals.ndim - 1)
    for i in range(b_vals.shape[-1]):
        comp = b_vals[..., i]
        for sign in (1.0, -1.0):
            w, loc = _lattice_defect_nd(sign * comp, dirs)
            if w > worst:
                worst, where = w, {"component": i, "node": loc}
    return Condition(name, worst <= tol, worst, None if worst <= tol else where)


def linear_vc_conditions(
    A_sampler,
    b_sampler,
    c_sampler,
    F: AdmissibleFunction | None,
    domain_samples,
    tol: float = 1e-8,
    z_window: Window | None = None,
) -> CriterionVerdict:
    """Coefficient conditions for ``u_t = div(A grad u) + <b, grad u> + c u``.

    With an admissible ``F`` (and ``c = 0``) this checks joint concavity of
    ``(x, z) -> (log f')'(z) <A(x) theta, theta>``, affinity of ``b`` and the
    heat-flow conditions.  With ``F=None`` it checks the log-concavity
    conditions: constant ``A``, affine ``b`` and convex ``c``.
    ``domain_samples`` is ``[(lo, hi, n), ...]`` per space axis.
    """
    axes, pts = _box_grid(domain_samples)
    d = pts.shape[-1]
    A_vals = _sample(pts, A_sampler)
    b_vals = _sample(pts, b_sampler)
    c_vals = _sample(pts, c_sampler)
    _check_spd(A_vals)
    params = {"domain": [list(s) for s in domain_samples], "tol": tol}

    if F is None:
        v = CriterionVerdict("linear_vc_log", "phi:0", params)
        dev = float(np.max(np.abs(A_vals - A_vals.reshape(-1, d, d)[0])))
        v.conditions.append(Condition("A_constant", dev <= tol, dev))
        v.conditions.append(_affine_condition("b_affine", b_vals, tol))
        # convexity of c is concavity of -c
        worst, where = _lattice_defect_nd(-c_vals, _directions(d))
        v.conditions.append(Condition("c_convex", worst <= tol, worst, None if worst <= tol else where))
        return v

    if np.max(np.abs(c_vals)) > 0:
        raise ValueError("general transforms are only covered for c = 0; use F=None for the log-concave case")
    win = default_window(F) if z_window is None else z_window
    z = Window(win.lo, win.hi, 201).nodes()
    v = CriterionVerdict("linear_vc", F.label, params, notes=_notes(F))
    v.conditions = _base_conditions(F, Window(win.lo, win.hi, win.n), tol)
    q = F.log_fprime_derivative(z)
    worst, where = 0.0, None
    dirs = _directions(d + 1)
    for th in theta_samples(d):
        quad = np.einsum("...ij,i,j->...", A_vals, th, th)
        joint = quad[..., None] * q
        w, loc = _lattice_defect_nd(joint, dirs)
        if w > worst:
            worst, where = w, {"theta": th.tolist(), "node": loc}
    v.conditions.append(Condition("joint_concave", worst <= tol, worst, None if worst <= tol else where))
    v.conditions.append(_affine_condition("b_affine", b_vals, tol))
    return v


# ---------------------------------------------------------------------------


def minus_one_concavity(F: AdmissibleFunction, window: Window | None = None, tol: float = DEFAULT_TOL) -> ComparisonResult:
    """Convexity of ``f / f'``, i.e. (-1)-concavity of ``(log f)'``."""
    win = _window(F, window)
    z = win.nodes()
    scan = midpoint_concavity(F.f_over_fprime(z), z, tol, convex=True)
    return ComparisonResult(scan.passed, scan.worst, scan.witness, (win.lo, win.hi))


# ---------------------------------------------------------------------------
# initial-rate checks for degenerate flows

RATE_WINDOW = Window(0.1, 4.0, 1001)
BOUNDARY_EPS = 1e-12


def _rate_verdict(name, params, exponent, analytic_concave, g, win, tol):
    z = win.nodes()
    v = CriterionVerdict(name, params.pop("family"), params)
    cond = _scan_condition("rate_concave", g(z), z, tol)
    on_boundary = exponent is not None and (abs(exponent) <= BOUNDARY_EPS or abs(exponent - 1.0) <= BOUNDARY_EPS)
    if on_boundary and cond.passed:
        cond = Condition(cond.name, True, cond.violation, None, boundary=True)
    v.conditions.append(cond)
    v.analytic = {
        "exponent": exponent,
        "exponent_in_unit_interval": None if exponent is None else bool(-BOUNDARY_EPS <= exponent <= 1 + BOUNDARY_EPS),
        "boundary": on_boundary,
        "analytic_concave": analytic_concave,
    }
    return v


def pm_initial_rate(m: float, alpha: float, z_window: Window | None = None, tol: float = DEFAULT_TOL) -> CriterionVerdict:
    """Time derivative at t = 0 of ``Phi_alpha(u)`` for ``u_t = Delta u^m`` started from
    an alpha-affine profile, as a function of the profile value z > 0."""
    if not m > 1:
        raise ValueError("m must exceed 1")
    win = RATE_WINDOW if z_window is None else z_window
    if win.lo <= 0:
        raise ValueError("rate window must lie in (0, inf)")
    if alpha == 0:
        exponent = None

        def g(z):
            return m * m * np.exp((m - 1.0) * z)

        analytic = False
    else:
        r = m / alpha
        coeff = r * (r - 1.0)
        exponent = -1.0 + (m - 1.0) / alpha

        def g(z):
            return coeff * z**exponent

        analytic = coeff == 0 or (coeff > 0 and 0 <= exponent <= 1) or (coeff < 0 and not 0 < exponent < 1)
    v = _rate_verdict("pm_initial_rate", {"family": f"phi:{alpha:g}", "m": m, "alpha": alpha, "tol": tol}, exponent, analytic, g, win, tol)
    v.analytic["below_threshold"] = bool(alpha < (m - 1.0) / 2.0)
    return v


def plaplace_initial_rate(p: float, alpha: float, z_window: Window | None = None, tol: float = DEFAULT_TOL) -> CriterionVerdict:
    """Initial rate of ``Phi_alpha(u)`` for the p-Laplace flow from an alpha-affine profile."""
    if not p > 2:
        raise ValueError("p must exceed 2")
    win = RATE_WINDOW if z_window is None else z_window
    if win.lo <= 0:
        raise ValueError("rate window must lie in (0, inf)")
    threshold = (p - 2.0) / p
    if alpha == 0:
        exponent = None

        def g(z):
            return (p - 1.0) * np.exp((p - 2.0) * z)

        analytic = False
    else:
        coeff = (p - 1.0) / (abs(alpha) ** (p - 2.0) * alpha) * ((1.0 - alpha) / alpha)
        exponent = (p - 2.0) / alpha - (p - 1.0)

        def g(z):
            return coeff * z**exponent

        analytic = coeff == 0 or (coeff > 0 and 0 <= exponent <= 1) or (coeff < 0 and not 0 < exponent < 1)
    v = _rate_verdict(
        "plaplace_initial_rate", {"family": f"phi:{alpha:g}", "p": p, "alpha": alpha, "tol": tol}, exponent, analytic, g, win, tol
    )
    v.analytic["threshold"] = threshold
    v.analytic["above_threshold"] = bool(alpha >= threshold)
    return v
