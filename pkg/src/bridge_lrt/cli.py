"""Command-line front end (``bridge-lrt``).

Exit status: 0 on success, 2 on usage or input errors, 1 on numerical
failure. Results go to standard output as JSON or CSV; diagnostics go to
standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__, decision, simulate
from .gauss_models import (
    KINDS,
    ProcessParams,
    expected_future_curve,
    format_trajectory,
    read_trajectory,
    sample_path,
)
from .smirnov import DEFAULT_TOL
from .spectral import compute_spectrum

COMMANDS = (
    "spectrum", "cdf", "quantile", "critical-value", "test",
    "power", "simulate", "validate", "expected-future",
)

# Flag defaults, applied after the config file: flags > config > defaults.
DEFAULTS = {
    "n": 20,
    "tol": DEFAULT_TOL,
    "format": "json",
    "seed": 0,
    "hypothesis": "H0",
    "statistic": "phi",
    "points": 101,
    "n_paths": 1000,
    "grid_step": 1e-3,
    "q": 0.05,
    "grid": 100,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _KindAction(argparse.Action):
    """--kind may be repeated only with the same value."""

    def __call__(self, parser, namespace, value, option_string=None):
        prev = getattr(namespace, self.dest, None)
        if prev is not None and prev != value:
            raise UsageError(f"conflicting process kinds: {prev!r} and {value!r}")
        setattr(namespace, self.dest, value)


def _add_common(p: argparse.ArgumentParser, params: bool = True) -> None:
    p.add_argument("--config", help="JSON file with the same keys as the flags")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kind", choices=KINDS, action=_KindAction, default=None)
    if params:
        p.add_argument("--alpha0", type=float, default=None)
        p.add_argument("--alpha1", type=float, default=None)
        p.add_argument("--T", dest="T", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bridge-lrt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("spectrum", help="leading eigenvalues of the kernel under mu")
    _add_common(p)
    p.add_argument("-n", dest="n", type=int, default=None)

    p = sub.add_parser("cdf", help="CDF of phi or psi")
    _add_common(p)
    p.add_argument("--x", type=float, nargs="+", default=None)
    p.add_argument("--points", type=int, default=None, help="curve size when --x is absent")
    p.add_argument("--statistic", choices=("phi", "psi"), default=None)
    p.add_argument("--hypothesis", choices=decision.HYPOTHESES, default=None)

    p = sub.add_parser("quantile", help="quantile of psi")
    _add_common(p)
    p.add_argument("--p", type=float, nargs="+", default=None)
    p.add_argument("--hypothesis", choices=decision.HYPOTHESES, default=None)

    for name, text in (("critical-value", "critical value of phi at level q"), ("power", "power at level q under H1")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--q", type=float, default=None)

    p = sub.add_parser("test", help="run the test on an observed trajectory")
    _add_common(p)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--traj", default=None)
    p.add_argument("--with-power", action="store_true", default=None)

    p = sub.add_parser("simulate", help="simulate paths; one trajectory or an ensemble of (psi, phi)")
    _add_common(p)
    p.add_argument("--n-paths", dest="n_paths", type=int, default=None)
    p.add_argument("--grid-step", dest="grid_step", type=float, default=None)
    p.add_argument("--hypothesis", choices=decision.HYPOTHESES, default=None)
    p.add_argument("--trajectory", action="store_true", default=None,
                   help="emit a single path as t,x CSV")

    p = sub.add_parser("validate", help="Monte Carlo check of the exact laws")
    _add_common(p)
    p.add_argument("--n-paths", dest="n_paths", type=int, default=None)
    p.add_argument("--grid-step", dest="grid_step", type=float, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--dump", default=None, help="CSV file for per-path (psi, phi)")

    p = sub.add_parser("expected-future", help="E[X_t | X_s = x] curve")
    _add_common(p, params=False)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    return parser


def _merge(ns: argparse.Namespace) -> dict:
    cfg: dict = {}
    if ns.config:
        with open(ns.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    opts = dict(DEFAULTS)
    opts.update(cfg)
    opts.update({k: v for k, v in vars(ns).items() if v is not None})
    return opts


def _params(opts: dict) -> ProcessParams:
    missing = [k for k in ("kind", "alpha0", "alpha1", "T") if opts.get(k) is None]
    if missing:
        raise UsageError("missing " + ", ".join("--" + k for k in missing))
    return ProcessParams(opts["kind"], float(opts["alpha0"]), float(opts["alpha1"]), float(opts["T"]))


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _emit(opts: dict, obj: dict, header=None, rows=None) -> str:
    if opts["format"] == "csv":
        if header is None:
            header = list(obj)
            rows = [[obj[k] for k in header]]
        return _csv(header, rows)
    return json.dumps(obj) + "\n"


def _floats(a) -> list:
    return [float(v) for v in np.atleast_1d(a)]


def cmd_spectrum(opts):
    spec = compute_spectrum(_params(opts), int(opts["n"]))
    d = spec.to_dict()
    rows = [[i, e["lambda"], e["kind"], e["shape_param"]] for i, e in enumerate(d["eigenvalues"])]
    return _emit(opts, d, ["index", "lambda", "kind", "shape_param"], rows)


def cmd_cdf(opts):
    params = _params(opts)
    tol, hyp = float(opts["tol"]), opts["hypothesis"]
    dist = decision.psi_distribution(params, hyp, tol)
    if opts["statistic"] == "psi":
        x = opts.get("x")
        if x is None:
            sd = np.sqrt(2.0 * compute_spectrum(params).total_sum_squares())
            mean = compute_spectrum(params).total_sum()
            x = np.linspace(0.0, mean + 6 * sd, int(opts["points"]))
        F = dist.cdf(np.asarray(x, dtype=float))
    else:
        x = opts.get("x")
        if x is None:
            lo = decision.likelihood_ratio(params, dist.quantile(0.999))
            hi = decision.phi_bound(params)
            lo, hi = min(lo, hi), max(lo, hi)
            x = np.linspace(lo, hi, int(opts["points"]))
        F = decision.lr_cdf(params, np.asarray(x, dtype=float), hyp, tol)
    xs, Fs = _floats(x), _floats(F)
    obj = {"statistic": opts["statistic"], "hypothesis": hyp, "x": xs, "cdf": Fs, "params": params.to_dict()}
    return _emit(opts, obj, ["x", "cdf"], list(zip(xs, Fs)))


def cmd_quantile(opts):
    params = _params(opts)
    if opts.get("p") is None:
        raise UsageError("quantile needs --p")
    dist = decision.psi_distribution(params, opts["hypothesis"], float(opts["tol"]))
    ps = [float(p) for p in np.atleast_1d(opts["p"])]
    qs = [float(dist.quantile(p)) for p in ps]
    obj = {"statistic": "psi", "hypothesis": opts["hypothesis"], "p": ps, "quantile": qs,
           "params": params.to_dict()}
    return _emit(opts, obj, ["p", "quantile"], list(zip(ps, qs)))


def cmd_critical_value(opts):
    params, q, tol = _params(opts), float(opts["q"]), float(opts["tol"])
    obj = {"q": q, "critical_value": decision.critical_value(params, q, tol),
           "critical_psi": decision.critical_psi(params, q, tol), "params": params.to_dict()}
    return _emit(opts, obj, ["q", "critical_value", "critical_psi"],
                 [[obj["q"], obj["critical_value"], obj["critical_psi"]]])


def cmd_power(opts):
    params, q, tol = _params(opts), float(opts["q"]), float(opts["tol"])
    obj = {"q": q, "power": decision.power(params, q, tol), "method": decision.POWER_METHOD,
           "params": params.to_dict()}
    return _emit(opts, obj, ["q", "power", "method"], [[obj["q"], obj["power"], obj["method"]]])


def cmd_test(opts):
    if not opts.get("traj"):
        raise UsageError("test needs --traj")
    params = _params(opts)
    traj = read_trajectory(opts["traj"])
    rep = decision.run_test(params, traj, float(opts["q"]), bool(opts.get("with_power")), float(opts["tol"]))
    d = rep.to_dict()
    flat = {k: v for k, v in d.items() if k != "params"}
    return _emit(opts, d, list(flat), [list(flat.values())])


def cmd_simulate(opts):
    params, seed = _params(opts), int(opts["seed"])
    hyp = opts["hypothesis"]
    if opts.get("trajectory"):
        alpha = params.alpha0 if hyp == "H0" else params.alpha1
        grid = simulate.make_grid(params, float(opts["grid_step"]))
        return format_trajectory(sample_path(params.kind, alpha, grid, seed))
    psi = simulate.simulate_psi(params, int(opts["n_paths"]), float(opts["grid_step"]), seed, hyp)
    phi = decision.likelihood_ratio(params, psi)
    psi_l, phi_l = _floats(psi), _floats(phi)
    obj = {"hypothesis": hyp, "seed": seed, "grid_step": float(opts["grid_step"]),
           "psi": psi_l, "phi": phi_l, "params": params.to_dict()}
    return _emit(opts, obj, ["psi", "phi"], list(zip(psi_l, phi_l)))


def cmd_validate(opts):
    params = _params(opts)
    rep = simulate.validate(params, int(opts["n_paths"]), float(opts["grid_step"]), float(opts["q"]),
                            int(opts["seed"]), dump=opts.get("dump"))
    d = rep.to_dict()
    flat = {k: v for k, v in d.items() if k != "params"}
    return _emit(opts, d, list(flat), [list(flat.values())])


def cmd_expected_future(opts):
    for k in ("kind", "alpha", "s", "x"):
        if opts.get(k) is None:
            raise UsageError(f"expected-future needs --{k}")
    t, m = expected_future_curve(opts["kind"], float(opts["alpha"]), float(opts["s"]), float(opts["x"]),
                                 int(opts["grid"]), opts.get("t_end"))
    ts, ms = _floats(t), _floats(m)
    if opts["format"] == "json":
        return json.dumps({"t": ts, "expected": ms}) + "\n"
    return _csv(["t", "expected"], zip(ts, ms))


DISPATCH = {
    "spectrum": cmd_spectrum,
    "cdf": cmd_cdf,
    "quantile": cmd_quantile,
    "critical-value": cmd_critical_value,
    "power": cmd_power,
    "test": cmd_test,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "expected-future": cmd_expected_future,
}


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> tuple[int, str]:
    """Run one command; returns (exit code, standard output text). Errors go to stderr."""
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        opts = _merge(ns)
        if opts["format"] not in ("json", "csv"):
            raise UsageError("format must be json or csv")
        return 0, DISPATCH[ns.command](opts)
    except UsageError as exc:
        print(f"bridge-lrt: error: {exc}", file=sys.stderr)
        return 2, ""
    except (ValueError, OSError, KeyError) as exc:
        print(f"bridge-lrt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2, ""
    except ArithmeticError as exc:
        print(f"bridge-lrt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1, ""


def main(argv: Optional[Sequence[str]] = None) -> int:
    code, out = parse_and_dispatch(argv)
    sys.stdout.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
