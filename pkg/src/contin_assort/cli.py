"""Command-line front end.

Exit codes: 0 on success, 2 for configuration errors, 3 for data errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import (LOG, TWO_THIRDS, SCHEMA_VERSION, ExperimentConfig, config_hash, fit_rate,
                    read_summary_csv, run_experiment, sign_changes, write_dat)
from .errors import BadScaleError, ConfigError, ContinAssortError, DegenerateFitError
from .instances import LowerBoundInstance, build_instance
from .kde import ExplorationLog, KernelSpec, bandwidth_and_order, estimate_piece
from .model import Assortment, Instance, PreferenceFunction, ProfitCurve, expected_revenue
from .solver import inner_max_curve, inner_value, solve, solve_uncapacitated, upper_level_set

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
GRID_KNOTS = 4097


class DataError(ContinAssortError, ValueError):
    """Unreadable or malformed data file."""


def _load_config(path) -> dict:
    if path is None:
        return {"schema_version": SCHEMA_VERSION}
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version}")
    return d


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}") from exc
    return out


def _instance_spec(cfg: dict, args) -> dict:
    spec = dict(cfg.get("instance", {"name": "bimodal"}))
    if args.capacity is not None:
        spec["c"] = args.capacity
    return spec


def _fmt(x) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    spec = _instance_spec(cfg, args)
    inst = build_instance(spec)
    digest = config_hash({"instance": spec})
    res = solve(inst)
    out = _out_dir(args)
    with open(out / "solution.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("kind,lo,hi,value\n")
        fh.write(f"rho_star,,,{_fmt(res.rho_star)}\n")
        fh.write(f"revenue,,,{_fmt(expected_revenue(inst, res.assortment))}\n")
        for a, b in res.assortment:
            fh.write(f"interval,{_fmt(a)},{_fmt(b)},\n")
    xs = np.linspace(0.0, 1.0, GRID_KNOTS)
    with open(out / "preference.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("x,v\n")
        for x, y in zip(xs, inst.v(xs)):
            fh.write(f"{_fmt(x)},{_fmt(y)}\n")
    points = args.curve if args.curve is not None else int(cfg.get("curve_points", 0))
    if points:
        rhos = np.linspace(0.0, 1.0, points)
        curve = inner_max_curve(inst, rhos) if inst.c < 1 else _uncap_curve(inst, rhos)
        write_dat(out / "inner_curve.dat", [float(r) for r in rhos], curve, ("rho", "I"), digest)
    print(f"rho* = {res.rho_star:.10f}  assortment = {res.assortment!r}")
    return EXIT_OK


def _uncap_curve(inst: Instance, rhos):
    return np.array([inner_value(inst, upper_level_set(inst, r), r) for r in rhos])


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    cfg.setdefault("schema_version", SCHEMA_VERSION)
    cfg.pop("curve_points", None)
    if args.capacity is not None:
        cfg["instance"] = _instance_spec(cfg, args)
    if args.policy is not None:
        cfg["policy"] = {**cfg.get("policy", {}), "name": args.policy.upper()}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.reps is not None:
        cfg["reps"] = args.reps
    if args.horizon is not None:
        cfg["horizons"] = args.horizon
    exp = ExperimentConfig.from_dict(cfg)
    digest = exp.digest()
    summary = run_experiment(exp)
    out = _out_dir(args)
    summary.to_csv(out / "regret.csv", digest)
    summary.to_dat(out / "regret.dat", digest)
    for T, r, msg in summary.failures:
        print(f"replication {r} at T={T} failed: {msg}", file=sys.stderr)
    print(f"MRSE = {summary.mrse:.4f}; final mean regret = {summary.mean[-1]:.6g}")
    return EXIT_OK


def _read_values(path, scale_max):
    values = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                field = line.split(",")[0]
                try:
                    values.append(float(field))
                except ValueError:
                    if lineno == 1 or not values:
                        continue  # header
                    raise DataError(f"line {lineno}: not a number: {field!r}")
    except OSError as exc:
        raise DataError(f"cannot read data: {exc}") from exc
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DataError("data file holds no purchases")
    if scale_max is not None:
        if not scale_max > 0:
            raise ConfigError("--scale-max must be positive")
        x = x / scale_max
    if not np.all(np.isfinite(x)) or np.any((x < 0) | (x > 1)):
        raise BadScaleError("purchase values fall outside [0, 1] after scaling")
    return x


def estimate_from_purchases(x, p: float, knots: int = 2048):
    """Single-piece estimate on [0, 1] with a synthetic no-purchase count.

    Returns ``(v_hat knots, values, threshold, rho_star, gain)`` where the
    gain compares the optimal upper set to offering everything.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError("p must lie strictly between 0 and 1")
    n = int(x.size)
    n_none = int(round(n * p / (1.0 - p)))
    if n == 1:
        warnings.warn("a single purchase gives a very crude estimate", stacklevel=2)
    h, order, _ = bandwidth_and_order(1.0, n)
    log = ExplorationLog(offers=n + n_none)
    log.add(x, n_none)
    grid = np.linspace(0.0, 1.0, knots)
    _, _, vals = estimate_piece(log, 0, KernelSpec(h, order, 0.0, 1.0), grid)
    vals = np.maximum(vals, 0.0)
    inst = Instance(PreferenceFunction.from_grid(grid, vals), ProfitCurve.identity(), 1.0)
    res = solve_uncapacitated(inst)
    base = expected_revenue(inst, Assortment.full())
    threshold = res.assortment.lows[0] if not res.assortment.is_empty() else 1.0
    gain = (res.rho_star - base) / base if base > 0 else 0.0
    return grid, vals, float(threshold), res.rho_star, gain


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    p = args.p if args.p is not None else cfg.get("p")
    if p is None:
        raise ConfigError("estimate needs --p")
    data = args.data or cfg.get("data")
    if data is None:
        raise ConfigError("estimate needs --data")
    scale = args.scale_max if args.scale_max is not None else cfg.get("scale_max")
    x = _read_values(data, scale)
    digest = config_hash({"p": p, "scale_max": scale, "n": int(x.size)})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grid, vals, threshold, rho, gain = estimate_from_purchases(x, float(p))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = _out_dir(args)
    with open(out / "vhat.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("x,v_hat\n")
        for a, b in zip(grid, vals):
            fh.write(f"{_fmt(a)},{_fmt(b)}\n")
    with open(out / "estimate.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("p,purchases,threshold,rho_star,relative_gain\n")
        fh.write(f"{_fmt(p)},{x.size},{_fmt(threshold)},{_fmt(rho)},{_fmt(gain)}\n")
    print(f"threshold = {threshold:.6f}; relative profit gain = {100 * gain:.3f}%")
    return EXIT_OK


def cmd_lowerbound(args) -> int:
    cfg = _load_config(args.config)
    spec = dict(cfg.get("instance", {}))
    c = args.capacity if args.capacity is not None else spec.get("c", 0.25)
    K = args.K if args.K is not None else spec.get("K", 2)
    I = args.bins if args.bins is not None else spec.get("I")
    if I is None:
        I = list(range(1, int(K) + 1))
    lb = LowerBoundInstance(float(c), int(K), tuple(I))
    digest = config_hash({"c": lb.c, "K": lb.K, "I": list(lb.I)})
    out = _out_dir(args)
    with open(out / "params.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("name,value\n")
        for name, val in (("c", lb.c), ("K", lb.K), ("s", lb.s), ("delta", lb.delta),
                          ("sigma", lb.sigma), ("n_bins", lb.n_bins), ("beta", lb.beta)):
            fh.write(f"{name},{val!r}\n")
        fh.write(f"I,{' '.join(str(i) for i in lb.I)}\n")
    xs = np.linspace(0.0, 1.0, 1001)
    bumps = np.zeros(xs.shape, dtype=bool)
    for a, b in lb.bump_union():
        bumps |= (xs >= a) & (xs < b)
    with open(out / "v_I.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("x,v0,v_I,eps_I,in_bump\n")
        for x, v0, vi, e, inb in zip(xs, lb.v0(xs), lb.v_I(xs), lb.eps_I(xs), bumps):
            fh.write(f"{_fmt(x)},{_fmt(v0)},{_fmt(vi)},{_fmt(e)},{int(inb)}\n")
    print(f"s = {lb.s:.6g}; beta = {lb.beta:.6g}; bins = {list(lb.I)} of {lb.n_bins}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    data = args.data or cfg.get("data")
    if data is None:
        raise ConfigError("fit needs --data pointing at a regret CSV")
    model = (args.model or cfg.get("model", LOG)).upper()
    if model not in (LOG, TWO_THIRDS):
        raise ConfigError(f"model must be {LOG} or {TWO_THIRDS}")
    try:
        summary = read_summary_csv(data)
    except OSError as exc:
        raise DataError(f"cannot read data: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed regret CSV: {exc}") from exc
    gamma, resid = fit_rate(summary, model)
    digest = config_hash({"model": model, "horizons": [int(t) for t in summary.horizons]})
    out = _out_dir(args)
    with open(out / "fit.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("model,gamma,sign_changes\n")
        fh.write(f"{model},{_fmt(gamma)},{sign_changes(resid)}\n")
    write_dat(out / "residuals.dat", [int(t) for t in summary.horizons], resid, ("T", "residual"), digest)
    print(f"gamma = {gamma:.6g} ({model})")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _horizons(text: str):
    try:
        return [int(float(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contin-assort", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--horizon", type=_horizons, help="comma-separated horizons")
    common.add_argument("--capacity", type=float)
    common.add_argument("--policy", choices=["SAP", "KDEP", "UCB", "TS", "sap", "kdep", "ucb", "ts"])
    common.add_argument("--p", type=float, help="assumed no-purchase probability")
    common.add_argument("--scale-max", type=float, help="divide raw purchase values by this")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="optimal assortment under full information")
    s.add_argument("--curve", type=int, help="write rho -> I(S_rho, rho) at this many points")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", parents=[common], help="seeded regret experiment")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="estimate v from purchase data")
    s.add_argument("--data", help="CSV of purchase values (first column)")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("lowerbound", parents=[common], help="dump a bumped lower-bound instance")
    s.add_argument("--K", type=int)
    s.add_argument("--bins", type=lambda t: [int(i) for i in t.split(",")], help="bump bins, 1-based")
    s.set_defaults(func=cmd_lowerbound)

    s = sub.add_parser("fit", parents=[common], help="fit gamma log T or gamma T^(2/3)")
    s.add_argument("--data", help="regret CSV written by simulate")
    s.add_argument("--model", choices=[LOG, TWO_THIRDS])
    s.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (DataError, BadScaleError, DegenerateFitError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ContinAssortError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
