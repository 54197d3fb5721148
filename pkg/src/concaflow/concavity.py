"""Grid verdicts for F-concavity, log-concavity and quasi-concavity, the
least F-concave majorant of a grid function, and the construction of a
transform-concave datum whose heat evolution loses quasi-concavity.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .admissible import AdmissibleFunction, make_power
from .flow import GridFunction, product_flow_2d, solver_error_budget
from .hierarchy import is_weaker
from .windows import Window, default_window

log = logging.getLogger(__name__)

RANDOM_LAMBDAS = (0.25, 1.0 / 3.0, 0.75)
VALUE_MARGIN = 1e-12


class Kind(enum.Enum):
    F_CONCAVE = "FConcave"
    QUASI_CONCAVE = "QuasiConcave"
    LOG_CONCAVE = "LogConcave"


@dataclass
class ConcavityReport:
    kind: Kind
    passed: bool
    worst_violation: float
    witness: dict | None
    n_checks: int
    family: str | None = None
    tol: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "family": self.family,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "witness": self.witness,
            "n_checks": self.n_checks,
            "tol": self.tol,
        }


class PreconditionError(ValueError):
    """An experiment cannot be built for the requested transform."""


# ---------------------------------------------------------------------------
# pair enumeration


def _pair_count_1d(n):
    return sum(n - 2 * k for k in range(1, (n - 1) // 2 + 1))


def _pair_count_2d(shape, offsets):
    n, m = shape
    total = 0
    for p, q in offsets:
        total += max(0, n - 2 * abs(p)) * max(0, m - 2 * abs(q))
    return total


def _random_triples(g, rng, count, mode):
    """Worst defect over random ``(x, y, lambda)`` with ``(1-lambda) x + lambda y`` a node."""
    shape = g.shape
    best, wit = 0.0, None
    if count <= 0:
        return best, wit, 0
    lams = rng.choice(len(RANDOM_LAMBDAS), size=count)
    checked = 0
    for li in lams:
        lam = RANDOM_LAMBDAS[li]
        den = 4 if lam != 1.0 / 3.0 else 3
        num = round(lam * den)
        x = np.array([rng.integers(0, s) for s in shape])
        # y - x must be a multiple of den per axis to land the combination on a node
        steps = [rng.integers(-(s - 1) // den, (s - 1) // den + 1) for s in shape]
        y = x + den * np.array(steps)
        if np.any(y < 0) or np.any(y >= np.array(shape)) or np.all(y == x):
            continue
        c = x + num * np.array(steps)
        gx, gy, gc = g[tuple(x)], g[tuple(y)], g[tuple(c)]
        checked += 1
        if gx == -np.inf or gy == -np.inf:
            continue
        if gc == -np.inf:
            d = np.inf
        elif mode == kernels.CONCAVE:
            d = (1 - lam) * gx + lam * gy - gc
        else:
            d = min(gx, gy) - gc
        if d > best:
            best, wit = float(d), (tuple(int(i) for i in x), tuple(int(i) for i in y), lam)
    return best, wit, checked


def _coords(u: GridFunction, idx):
    return [u.origin[k] + u.spacing[k] * idx[k] for k in range(len(idx))]


def _scan(u: GridFunction, g, mode, tol, pairs, n_random, seed):
    """Shared midpoint + random-triple scan; returns (worst, witness, n_checks)."""
    if u.dims == 1:
        worst, i, j = kernels.midpoint_scan_1d(g, mode, False)
        wit = None if i < 0 else ((i,), (j,), 0.5)
        n_checks = _pair_count_1d(g.size)
    else:
        offsets = kernels.all_offsets(g.shape) if pairs == "all" else kernels.lattice_offsets(g.shape)
        worst, i, j, p, q = kernels.offset_scan_2d(g, offsets, mode, False)
        wit = None if i < 0 else ((i, j), (i + 2 * p, j + 2 * q), 0.5)
        n_checks = _pair_count_2d(g.shape, offsets)
    rng = np.random.default_rng(seed)
    rworst, rwit, rchecked = _random_triples(g, rng, n_random, mode)
    n_checks += rchecked
    if rworst > worst:
        worst, wit = rworst, rwit
    witness = None
    if worst > tol and wit is not None:
        x, y, lam = wit
        witness = {"x": list(x), "y": list(y), "lambda": lam, "x_coord": _coords(u, x), "y_coord": _coords(u, y)}
    return worst, witness, n_checks


def check_F_concavity(
    u: GridFunction,
    F: AdmissibleFunction,
    tol: float = 1e-9,
    pairs: str = "lattice",
    n_random: int = 200,
    seed: int = 0,
    kind: Kind = Kind.F_CONCAVE,
) -> ConcavityReport:
    """``F(u(mid)) >= (F(u(x)) + F(u(y))) / 2 - tol`` over node pairs, plus random fixed-lambda triples.

    ``pairs="lattice"`` enumerates axis and diagonal pairs in 2D,
    ``pairs="all"`` every pair with a node midpoint.  Zero values map to
    ``-inf`` so pairs touching the zero set pass automatically.
    """
    top = float(u.values.max()) if u.values.size else 0.0
    if math.isfinite(F.a) and top >= F.a - VALUE_MARGIN:
        raise ValueError(f"values reach the right end a={F.a:g} of the transform")
    g = np.asarray(F.F(u.values), dtype=float)
    worst, witness, n = _scan(u, g, kernels.CONCAVE, tol, pairs, n_random, seed)
    return ConcavityReport(kind, worst <= tol, worst, witness, n, F.label, tol)


def check_log_concavity(u: GridFunction, tol: float = 1e-9, **kwargs) -> ConcavityReport:
    return check_F_concavity(u, make_power(0.0), tol, kind=Kind.LOG_CONCAVE, **kwargs)


def check_quasi_concavity(u: GridFunction, tol: float = 1e-9, pairs: str = "lattice", n_random: int = 200, seed: int = 0) -> ConcavityReport:
    """``u(mid) >= min(u(x), u(y)) - tol`` over the same enumeration."""
    g = np.asarray(u.values, dtype=float)
    worst, witness, n = _scan(u, g, kernels.QUASI, tol, pairs, n_random, seed)
    return ConcavityReport(Kind.QUASI_CONCAVE, worst <= tol, worst, witness, n, None, tol)


# ---------------------------------------------------------------------------
# envelope


def _envelope_1d(y, x):
    out = np.full(y.shape, -np.inf)
    fin = np.flatnonzero(np.isfinite(y))
    if fin.size == 0:
        return out
    if fin.size == 1:
        out[fin[0]] = y[fin[0]]
        return out
    hull = fin[kernels.upper_hull_1d(x[fin], y[fin])]
    lo, hi = fin[0], fin[-1]
    out[lo : hi + 1] = np.interp(x[lo : hi + 1], x[hull], y[hull])
    # hull vertices carry their exact values
    out[hull] = y[hull]
    return out


def _envelope_2d(y, X, Y):
    out = np.full(y.shape, -np.inf)
    fin = np.isfinite(y)
    if not fin.any():
        return out
    pts2 = np.column_stack([X[fin], Y[fin]])
    vals = y[fin]
    try:
        support = ConvexHull(pts2)
    except QhullError as exc:
        raise ValueError("support of the grid function is degenerate (collinear)") from exc
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    scale = max(1.0, float(np.abs(pts2).max()))
    inside = np.all(nodes @ support.equations[:, :2].T + support.equations[:, 2] <= 1e-12 * scale, axis=1)

    # an exactly planar lift has no 3D hull: the envelope is that plane
    design = np.column_stack([pts2, np.ones(len(vals))])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid = np.abs(design @ coef - vals).max()
    if resid <= 1e-12 * max(1.0, np.abs(vals).max()):
        env = np.column_stack([nodes, np.ones(len(nodes))]) @ coef
    else:
        pts3 = np.column_stack([pts2, vals])
        try:
            hull = ConvexHull(pts3)
        except QhullError:
            hull = ConvexHull(pts3, qhull_options="QJ")
        eq = hull.equations
        upper = eq[eq[:, 2] > 1e-14]
        # z = -(a x + b y + d) / c on each upper facet; the majorant is their minimum
        planes = -(nodes @ upper[:, :2].T + upper[:, 3]) / upper[:, 2]
        env = planes.min(axis=1)
    flat = out.ravel()
    flat[inside] = env[inside]
    out = flat.reshape(y.shape)
    # nodes of the lifted set keep at least their own value
    out[fin] = np.maximum(out[fin], y[fin])
    return out


def f_concave_envelope(u: GridFunction, F: AdmissibleFunction, tol: float = 1e-12) -> GridFunction:
    """Least F-concave grid function above ``u``: ``f`` of the least concave majorant of ``F(u)``."""
    top = float(u.values.max()) if u.values.size else 0.0
    if math.isfinite(F.a) and top >= F.a - VALUE_MARGIN:
        raise ValueError(f"values reach the right end a={F.a:g} of the transform")
    y = np.asarray(F.F(u.values), dtype=float)
    if u.dims == 1:
        env = _envelope_1d(y, u.axis(0))
    else:
        X, Y = np.meshgrid(u.axis(0), u.axis(1), indexing="ij")
        env = _envelope_2d(y, X, Y)
    vals = np.where(np.isfinite(env), F.f(np.where(np.isfinite(env), env, 0.0)), 0.0)
    vals = np.maximum(vals, u.values)
    return GridFunction(vals, u.origin, u.spacing, u.zero_outside)


def envelope_bruteforce_1d(u: GridFunction, F: AdmissibleFunction) -> np.ndarray:
    """Sup over node pairs ``i <= k <= j`` of the chord of ``F(u)`` at node k, mapped back by f.

    Exact for the 1D majorant since two points suffice on a line.
    """
    y = np.asarray(F.F(u.values), dtype=float)
    x = u.axis(0)
    n = y.size
    best = y.copy()
    for i in range(n):
        if not np.isfinite(y[i]):
            continue
        for j in range(i + 1, n):
            if not np.isfinite(y[j]):
                continue
            k = np.arange(i, j + 1)
            lam = (x[k] - x[i]) / (x[j] - x[i])
            best[k] = np.maximum(best[k], (1 - lam) * y[i] + lam * y[j])
    return np.where(np.isfinite(best), F.f(np.where(np.isfinite(best), best, 0.0)), 0.0)


# ---------------------------------------------------------------------------
# disruption of quasi-concavity


@dataclass
class DisruptionDatum:
    phi2: GridFunction
    witness: dict
    shift: float


def _log_defect(F, center, half_gap):
    lo, hi = center - half_gap, center + half_gap
    return 0.5 * (np.log(F.f(lo)) + np.log(F.f(hi))) - np.log(F.f(center))


def find_log_violation(F: AdmissibleFunction, search_window: Window | None = None, scan_points: int = 400):
    """Triple ``(zeta, omega, 1/2)`` where ``f`` breaks log-concavity, or None.

    Coarse scan of the midpoint defect at a fixed half-gap, then a bounded
    Brent refinement of the best centre.
    """
    win = default_window(F) if search_window is None else search_window
    half_gap = 0.02 * (win.hi - win.lo)
    centers = np.linspace(win.lo + half_gap, win.hi - half_gap, scan_points)
    with np.errstate(divide="ignore", invalid="ignore"):
        defects = np.nan_to_num(_log_defect(F, centers, half_gap), nan=-np.inf)
    k = int(np.argmax(defects))
    if not defects[k] > 1e-12:
        return None
    step = centers[1] - centers[0]
    a, b = max(centers[0], centers[k] - step), min(centers[-1], centers[k] + step)
    res = minimize_scalar(lambda c: -_log_defect(F, c, half_gap), bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    center = float(res.x) if -res.fun >= defects[k] else float(centers[k])
    defect = float(_log_defect(F, center, half_gap))
    return {"zeta": center - half_gap, "omega": center + half_gap, "lambda": 0.5, "defect": defect}


def build_disruption_datum(
    F: AdmissibleFunction, search_window: Window | None = None, half_width: float = 4.0, n: int = 257
) -> DisruptionDatum:
    """Mirrored profile ``phi2(z) = f(c - |z|)`` that is F-concave but not log-concave on ``z <= 0``."""
    if not F.limit_at_zero_is_minus_infinity:
        raise PreconditionError(f"{F.label}: F(0+) is finite")
    if is_weaker(make_power(0.0), F):
        raise PreconditionError(f"{F.label} is at least as strong as log-concavity; no datum exists")
    found = find_log_violation(F, search_window)
    if found is None:
        raise PreconditionError(f"{F.label}: no log-concavity violation of f in the search window")
    omega = found["omega"]
    cap = min(F.J_hi, omega + 4.0)
    c = omega + 0.25 * (cap - omega)
    if math.isfinite(F.a) and F.f(c) >= F.a - VALUE_MARGIN:
        raise PreconditionError(f"{F.label}: profile peak reaches a")
    phi2 = GridFunction.sample(lambda z: F.f(c - np.abs(z)), -half_width, half_width, n, zero_outside=True)
    found["shift"] = c
    found["zeta_z"] = found["zeta"] - c
    found["omega_z"] = found["omega"] - c
    return DisruptionDatum(phi2, found, c)


def step_datum(half_width: float, n: int) -> GridFunction:
    """Indicator of ``[0, inf)`` sampled with value 1/2 at the origin, continued as 1 to the right."""
    return GridFunction.sample(
        lambda w: np.where(w > 0, 1.0, np.where(w == 0, 0.5, 0.0)), -half_width, half_width, n, zero_outside=False
    )


def control_profile(datum: DisruptionDatum) -> GridFunction:
    """Log-concave replacement ``phi2(0) exp(-z^2)`` on the same grid."""
    p = datum.phi2
    z = p.axis(0)
    return GridFunction(p.values[z.size // 2] * np.exp(-z * z), p.origin, p.spacing, True)


@dataclass
class DisruptionRun:
    datum: DisruptionDatum
    budget: float
    results: list = field(default_factory=list)  # (t, ConcavityReport)
    control: list = field(default_factory=list)


def run_disruption(
    F: AdmissibleFunction,
    half_width: float = 4.0,
    n: int = 257,
    t_list=(0.001, 0.01, 0.05),
    pairs: str = "all",
    with_control: bool = True,
) -> DisruptionRun:
    """Evolve ``step(w) phi2(z)`` by the plane heat flow and scan each snapshot for quasi-concavity.

    The tolerance is the solver-error budget ``C dx^2`` of the grid; the
    exact product flow has no time-stepping error.
    """
    datum = build_disruption_datum(F, half_width=half_width, n=n)
    step = step_datum(half_width, n)
    budget = solver_error_budget(0.0, step.spacing[0])
    run = DisruptionRun(datum, budget)
    profiles = [(datum.phi2, run.results)]
    if with_control:
        profiles.append((control_profile(datum), run.control))
    for phi2, sink in profiles:
        for t in t_list:
            snap = product_flow_2d(step, phi2, t)
            rep = check_quasi_concavity(snap.u, tol=budget, pairs=pairs, n_random=0)
            log.info("t=%g violation=%.3e budget=%.3e", t, rep.worst_violation, budget)
            sink.append((t, rep))
    return run
