"""Command-line experiment runner.

Each subcommand runs one experiment and writes ``report.json`` plus plot data
(``.dat`` files and a ``manifest.txt``) into ``--out``.  A config file of
``key = value`` lines supplies defaults; command-line flags override it.

Exit codes: 0 when every declared expectation holds, 1 on a mismatch,
2 on configuration or precondition errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import backend_name
from .admissible import parse_family
from .concavity import (
    PreconditionError,
    check_F_concavity,
    check_log_concavity,
    check_quasi_concavity,
    f_concave_envelope,
    run_disruption,
)
from .criterion import dhf_criterion, plaplace_initial_rate, pm_initial_rate, semilinear_criterion
from .flow import GridFunction, dirichlet_cn, load_grid, save_grid, solver_error_budget
from .hierarchy import equivalent, is_weaker, strictly_weaker
from .windows import Window, default_window

SCHEMA_VERSION = 1
MIN_NODES = 16
EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("concaflow")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentSpec:
    name: str
    family: str | None
    params: dict
    domain: str
    grid: int
    times: list
    tolerances: dict
    seed: int

    def __post_init__(self):
        if self.grid < MIN_NODES:
            raise ConfigError(f"grid needs at least {MIN_NODES} nodes per axis")
        if self.times:
            if any(t <= 0 for t in self.times) or any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ConfigError("times must be positive and strictly increasing")


# ---------------------------------------------------------------------------
# argument plumbing


def _float_list(text):
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _window(text):
    vals = _float_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("window is lo,hi,n")
    return Window(vals[0], vals[1], int(vals[2]))


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_argv(parser, cfg: dict) -> list:
    """Turn config keys into flags so argparse applies the same conversions."""
    actions = {a.dest: a for a in parser._actions}
    argv = []
    for key, value in cfg.items():
        if key in ("command", "name"):
            continue
        act = actions.get(key)
        if act is None:
            raise ConfigError(f"unknown config key {key!r}")
        flag = act.option_strings[-1]
        if isinstance(act, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(f"{key}: expected a boolean")
        else:
            # the joined form keeps values such as "-1,0" from reading as flags
            argv.append(f"{flag}={value}")
    return argv


def _common(p):
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--out", default="concaflow_out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None)
    p.add_argument("--tol", type=float, default=None, help="analytic tolerance")
    p.add_argument("--budget-multiplier", type=float, default=10.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="concaflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("criterion", help="heat-flow or semilinear preservation verdict")
    _common(p)
    p.add_argument("--family", required=False)
    p.add_argument("--semilinear", action="store_true")
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--expect", choices=["preserved", "not-preserved"])

    p = sub.add_parser("hierarchy", help="order a list of transforms by strength")
    _common(p)
    p.add_argument("--families", type=_str_list, required=False)
    p.add_argument("--expect-order", type=_str_list, default=None)

    p = sub.add_parser("evolve", help="evolve a datum and check concavity at each time")
    _common(p)
    p.add_argument("--family", required=False)
    p.add_argument("--datum", choices=["profile", "grid"], default="profile")
    p.add_argument("--grid-file", default=None)
    p.add_argument("--n", type=int, default=513)
    p.add_argument("--times", type=_float_list, default=[0.01, 0.05, 0.2])
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--check", choices=["F", "log", "quasi"], default="F")
    p.add_argument("--expect", choices=["pass", "fail"])

    p = sub.add_parser("disrupt", help="build the non-log-concave datum and scan its flow")
    _common(p)
    p.add_argument("--family", required=False)
    p.add_argument("--n", type=int, default=257)
    p.add_argument("--half-width", type=float, default=4.0)
    p.add_argument("--times", type=_float_list, default=[0.001, 0.01, 0.05])
    p.add_argument("--pairs", choices=["lattice", "all"], default="all")
    p.add_argument("--expect", choices=["disrupted", "no-datum"], default="disrupted")

    p = sub.add_parser("envelope", help="least F-concave majorant of a grid function")
    _common(p)
    p.add_argument("--family", required=False)
    p.add_argument("--grid-file", default=None)
    p.add_argument("--n", type=int, default=65)

    p = sub.add_parser("rates", help="initial-rate checks for porous-medium and p-Laplace flows")
    _common(p)
    p.add_argument("--kind", choices=["pm", "plaplace"], default="pm")
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--alphas", type=_float_list, default=[-1.0, 0.0, 0.1, 0.5, 1.0])
    return ap


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config is for '{cfg['command']}', not '{args.command}'")
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
        pre = [a for a in argv[: argv.index(args.command)]]
        post = argv[argv.index(args.command) + 1 :]
        args = parser.parse_args(pre + [args.command] + _config_argv(sub, cfg) + post)
        if args.name is None and "name" in cfg:
            args.name = cfg["name"]
    return args


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Window):
        return [obj.lo, obj.hi, obj.n]
    return obj


class Report:
    def __init__(self, command: str, spec: ExperimentSpec, out: Path):
        self.command = command
        self.spec = spec
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.verdicts = []
        self.artifacts = []
        self.expectations = []
        self.plots = []

    def add(self, operation: str, verdict: dict):
        self.verdicts.append({"operation": operation, **verdict})

    def expect(self, what: str, expected, actual):
        self.expectations.append({"what": what, "expected": expected, "actual": actual, "met": expected == actual})

    def write_dat(self, name: str, columns: dict, description: str):
        path = self.out / f"{name}.dat"
        data = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
        np.savetxt(path, data, header=" ".join(columns), fmt="%.17g")
        self.plots.append((path.name, " ".join(columns), description))
        self.artifacts.append(path.name)

    def write_grid(self, name: str, u: GridFunction):
        path = self.out / f"{name}.grid"
        save_grid(u, path)
        self.artifacts.append(path.name)

    @property
    def ok(self) -> bool:
        return all(e["met"] for e in self.expectations)

    def payload(self) -> dict:
        spec = _clean(dataclasses.asdict(self.spec))
        body = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "spec": spec,
            "verdicts": _clean(self.verdicts),
            "expectations": _clean(self.expectations),
            "artifacts": sorted(self.artifacts + (["manifest.txt"] if self.plots else [])),
            "status": "ok" if self.ok else "mismatch",
            "versions": {"tool": __version__, "backend": backend_name()},
        }
        canonical = json.dumps({"command": self.command, "spec": spec}, sort_keys=True, separators=(",", ":"))
        body["versions"]["config_hash"] = hashlib.sha256(canonical.encode()).hexdigest()
        return body

    def write(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        if self.plots:
            with (self.out / "manifest.txt").open("w") as fh:
                for fname, cols, desc in self.plots:
                    fh.write(f"{fname}\t{cols}\t{desc}\n")
        body = self.payload()
        body["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        (self.out / "report.json").write_text(json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n")
        return body


def _spec(args, params: dict, domain: str = "line", grid: int = MIN_NODES, times=()) -> ExperimentSpec:
    return ExperimentSpec(
        name=args.name or args.command,
        family=getattr(args, "family", None),
        params=params,
        domain=domain,
        grid=grid,
        times=list(times),
        tolerances={"analytic": args.tol, "budget_multiplier": args.budget_multiplier},
        seed=args.seed,
    )


def _need(args, key):
    if getattr(args, key, None) in (None, []):
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return getattr(args, key)


# ---------------------------------------------------------------------------
# subcommands


def cmd_criterion(args) -> Report:
    F = parse_family(_need(args, "family"))
    tol = args.tol if args.tol is not None else 1e-9
    params = {"semilinear": args.semilinear, "kappa": args.kappa, "p": args.p, "window": args.window}
    win = args.window or default_window(F)
    rep = Report("criterion", _spec(args, params, grid=win.n), Path(args.out))
    if args.semilinear:
        v = semilinear_criterion(F, args.kappa, args.p, win, tol)
        rep.add("criterion.semilinear_criterion", v.to_dict())
    else:
        v = dhf_criterion(F, win, tol)
        rep.add("criterion.dhf_criterion", v.to_dict())
    z = win.nodes()
    rep.write_dat("log_fprime_derivative", {"z": z, "value": F.log_fprime_derivative(z)}, "(log f')' on the window")
    if args.expect:
        rep.expect("preserved", args.expect == "preserved", v.preserved)
    print(f"{F.label}: {'preserved' if v.preserved else 'not preserved'}")
    for c in v.conditions:
        print(f"  {c.name:32s} {'pass' if c.passed else 'FAIL'}  violation={c.violation:.3e}")
    return rep


def hierarchy_chain(families, tol=1e-9):
    """Order transforms strongest first; returns (labels, links) with link in {'>', '~', '?'}."""
    Fs = [parse_family(f) for f in families]
    n = len(Fs)
    weaker = [[i == j or bool(is_weaker(Fs[i], Fs[j], tol=tol)) for j in range(n)] for i in range(n)]
    # strength = number of transforms that are weaker than this one
    strength = [sum(weaker[j][i] for j in range(n)) for i in range(n)]
    order = sorted(range(n), key=lambda i: (-strength[i], i))
    links = []
    for a, b in zip(order, order[1:]):
        if not weaker[b][a]:
            links.append("?")
        elif equivalent(Fs[b], Fs[a])[0]:
            links.append("~")
        elif strictly_weaker(Fs[b], Fs[a], tol=tol):
            links.append(">")
        else:
            links.append(">=")
    return [Fs[i].label for i in order], links, weaker


def cmd_hierarchy(args) -> Report:
    fams = _need(args, "families")
    if not fams:
        raise ConfigError("empty family list")
    tol = args.tol if args.tol is not None else 1e-9
    rep = Report("hierarchy", _spec(args, {"families": fams}), Path(args.out))
    labels, links, weaker = hierarchy_chain(fams, tol)
    chain = labels[0] + "".join(f" {lk} {lab}" for lk, lab in zip(links, labels[1:]))
    rep.add("hierarchy.is_weaker", {"order": labels, "links": links, "chain": chain, "weaker_matrix": weaker, "families": fams})
    if args.expect_order:
        expected = [parse_family(f).label for f in args.expect_order]
        rep.expect("order", expected, labels)
        rep.expect("strict", True, all(lk == ">" for lk in links))
    print(chain)
    return rep


def random_profile_datum(F, n: int, seed: int) -> GridFunction:
    """``f(g(x))`` on (0, 1) with ``g`` a random concave function tending to -inf at both ends."""
    rng = np.random.default_rng(seed)
    c0, c1 = rng.uniform(-1.0, 1.5), rng.uniform(-2.0, 2.0)
    k, c2, x0 = rng.uniform(0.3, 2.0), rng.uniform(0.0, 3.0), rng.uniform(0.3, 0.7)
    zmax = F.J_hi if math.isfinite(F.J_hi) else math.inf

    def phi(x):
        inside = (x > 0) & (x < 1)
        xs = np.where(inside, x, 0.5)
        g = c0 + c1 * (xs - x0) + k * np.log(xs * (1 - xs)) - c2 * (xs - x0) ** 2
        if math.isfinite(zmax):
            # smooth concave cap keeps g below J_hi - 1 and g stays concave
            cap = zmax - 1.0
            g = cap - np.logaddexp(0.0, cap - g)
        return np.where(inside, F.f(g), 0.0)

    return GridFunction.sample(phi, 0.0, 1.0, n)


def cmd_evolve(args) -> Report:
    F = parse_family(_need(args, "family"))
    if args.datum == "grid":
        u0 = load_grid(_need(args, "grid_file"))
    else:
        u0 = random_profile_datum(F, args.n, args.seed)
    params = {"datum": args.datum, "dt": args.dt, "check": args.check, "grid_file": args.grid_file}
    spec = _spec(args, params, "interval(0,1)" if u0.dims == 1 else "rect", max(u0.shape), args.times)
    rep = Report("evolve", spec, Path(args.out))
    snaps = dirichlet_cn(u0, args.times, args.dt)
    budget = solver_error_budget(args.dt, min(u0.spacing))
    tol = (args.tol or 0.0) + budget
    results = []
    for s in snaps:
        if args.check == "F":
            r = check_F_concavity(s.u, F, tol, seed=args.seed)
        elif args.check == "log":
            r = check_log_concavity(s.u, tol, seed=args.seed)
        else:
            r = check_quasi_concavity(s.u, tol, seed=args.seed)
        rep.add("concavity.check_" + {"F": "F_concavity", "log": "log_concavity", "quasi": "quasi_concavity"}[args.check], {"t": s.t, **r.to_dict()})
        results.append(r.passed)
        if u0.dims == 1:
            rep.write_dat(f"snapshot_t{s.t:g}", {"x": s.u.axis(0), "u": s.u.values}, f"solution at t={s.t:g}")
        else:
            rep.write_grid(f"snapshot_t{s.t:g}", s.u)
        print(f"t={s.t:<8g} {'pass' if r.passed else 'FAIL'}  violation={r.worst_violation:.3e}  tol={tol:.1e}")
    if args.expect:
        rep.expect("all_pass", args.expect == "pass", all(results))
    return rep


def cmd_disrupt(args) -> Report:
    F = parse_family(_need(args, "family"))
    params = {"half_width": args.half_width, "pairs": args.pairs}
    rep = Report("disrupt", _spec(args, params, "plane", args.n, args.times), Path(args.out))
    try:
        run = run_disruption(F, args.half_width, args.n, args.times, args.pairs)
    except PreconditionError as exc:
        rep.add("concavity.build_disruption_datum", {"precondition": False, "reason": str(exc)})
        rep.expect("datum", args.expect, "no-datum")
        print(f"{F.label}: no disruption datum ({exc})")
        if args.expect != "no-datum":
            raise
        return rep
    mult = args.budget_multiplier
    found = False
    z = run.datum.phi2.axis(0)
    rep.write_dat("phi2", {"z": z, "phi2": run.datum.phi2.values}, "mirrored profile")
    rep.add("concavity.build_disruption_datum", {"precondition": True, "witness": run.datum.witness})
    for label, rows in (("datum", run.results), ("control", run.control)):
        for t, r in rows:
            ratio = r.worst_violation / run.budget
            rep.add("concavity.run_disruption", {"profile": label, "t": t, "budget": run.budget, "ratio": ratio, **r.to_dict()})
            print(f"{label:8s} t={t:<8g} violation={r.worst_violation:.3e}  ratio={ratio:.1f}")
            if label == "datum" and ratio >= mult:
                found = True
    control_clean = all(r.worst_violation <= run.budget for _, r in run.control)
    rep.expect("datum", args.expect, "disrupted" if found else "not-disrupted")
    rep.expect("control_clean", True, control_clean)
    return rep


def cmd_envelope(args) -> Report:
    F = parse_family(_need(args, "family"))
    if args.grid_file:
        u = load_grid(args.grid_file)
    else:
        rng = np.random.default_rng(args.seed)
        vals = rng.uniform(0.0, 1.0, args.n)
        vals[0] = vals[-1] = 0.0
        if math.isfinite(F.a):
            vals *= 0.9 * F.a
        u = GridFunction(vals, (0.0,), (1.0 / (args.n - 1),))
    rep = Report("envelope", _spec(args, {"grid_file": args.grid_file}, "interval", max(u.shape)), Path(args.out))
    env = f_concave_envelope(u, F)
    r = check_F_concavity(env, F, args.tol if args.tol is not None else 1e-10)
    rep.add("concavity.f_concave_envelope", {"dominates": bool(np.all(env.values >= u.values)), "check": r.to_dict()})
    rep.write_grid("envelope", env)
    if u.dims == 1:
        rep.write_dat("envelope", {"x": u.axis(0), "u": u.values, "envelope": env.values}, "input and envelope")
    rep.expect("envelope_concave", True, r.passed)
    print(f"envelope {'F-concave' if r.passed else 'NOT F-concave'}, violation={r.worst_violation:.3e}")
    return rep


def cmd_rates(args) -> Report:
    tol = args.tol if args.tol is not None else 1e-9
    params = {"kind": args.kind, "m": args.m, "p": args.p, "alphas": args.alphas}
    rep = Report("rates", _spec(args, params), Path(args.out))
    for al in args.alphas:
        if args.kind == "pm":
            v = pm_initial_rate(args.m, al, tol=tol)
            analytic = v.analytic["analytic_concave"]
        else:
            v = plaplace_initial_rate(args.p, al, tol=tol)
            analytic = v.analytic["analytic_concave"]
        rep.add(f"criterion.{v.criterion}", v.to_dict())
        rep.expect(f"alpha={al:g}", analytic, v.preserved)
        print(f"alpha={al:<8g} concave={v.preserved!s:5s} exponent={v.analytic['exponent']}")
    return rep


COMMANDS = {
    "criterion": cmd_criterion,
    "hierarchy": cmd_hierarchy,
    "evolve": cmd_evolve,
    "disrupt": cmd_disrupt,
    "envelope": cmd_envelope,
    "rates": cmd_rates,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
    except (ConfigError, OSError) as exc:
        print(f"concaflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        rep = COMMANDS[args.command](args)
    except (ConfigError, PreconditionError, ValueError, OSError) as exc:
        print(f"concaflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rep.write()
    return EXIT_OK if rep.ok else EXIT_MISMATCH


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
