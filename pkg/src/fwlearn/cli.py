"""Command-line drivers: ``fit``, ``simulate``, ``instanton``, ``action``, ``probability``.

Every run writes ``manifest.json`` holding the command and every effective
parameter; ``--config manifest.json`` re-runs it bit for bit.
"""
import argparse
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

from . import __version__, benchmark
from .dynamics import (
    DimensionMismatch,
    IntegrationError,
    Path,
    SdeConfig,
    descent_step_bound,
    descent_violations,
    ensemble,
    gradient_flow,
    write_columns,
)
from .instanton import InstantonConfig, free_path, solve_instanton, verify_control
from .largedev import RareEvent, action, log_prob_estimate, mc_hit_probability
from .problem import Dataset, DomainError, GaussianBump, QuadraticObjective

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_DIVERGED = 4
EXIT_NOT_CONVERGED = 5
EXIT_DIMENSION = 6

COMMANDS = ("fit", "simulate", "instanton", "action", "probability")
META_KEYS = ("command", "version")


class ConfigError(ValueError):
    pass


_PROBLEM_KEYS = {
    "michaelis_menten": {
        "problem": "michaelis_menten",
        "dataset": None,
        "train_indices": None,
        "test_indices": None,
        "reg_weight": 0.0,
        "theta0": benchmark.THETA0.tolist(),
        "seed": 0,
    },
    "quadratic": {
        "problem": "quadratic",
        "center": [0.0, 0.0],
        "scale": None,
        "target": "quadratic",
        "target_center": [1.0, 0.0],
        "target_width": 0.5,
        "theta0": [0.0, 0.0],
        "seed": 0,
    },
}

_INSTANTON_KEYS = ("T", "n_steps", "lambda_term", "tol", "max_iter", "damping",
                   "schedule", "relaxation", "refine")

_COMMAND_DEFAULTS = {
    "michaelis_menten": {
        "fit": {**benchmark.FIT, "csv_stride": 10},
        "simulate": {**benchmark.SIMULATE, "bins": 20},
        "instanton": {**benchmark.INSTANTON, "lambda_term": 1.0, "refine": 0,
                      "zeta": benchmark.ZETA, "epsilons": [1e-4], "csv_stride": 10},
        "action": {"path_file": None, "include_contributions": False},
        "probability": {**benchmark.INSTANTON, "lambda_term": 1.0, "refine": 0,
                        "zeta": benchmark.ZETA, "epsilons": [1e-4], "action": None,
                        "mc": False, "n_samples": 10_000, "mc_T": 10.0, "mc_n_steps": 80_000},
    },
    "quadratic": {
        "fit": {"T": 50.0, "n_steps": 50_000, "stop_tol": 1e-12, "csv_stride": 10},
        "simulate": {"epsilon": 0.01, "T": 5.0, "n_steps": 500, "N": 1000, "bootstrap": False, "bins": 20},
        "instanton": {"T": 5.0, "n_steps": 10_000, "lambda_term": 4.0, "tol": 1e-10, "max_iter": 500,
                      "damping": 1.0, "schedule": None, "relaxation": "aitken", "refine": 0,
                      "zeta": None, "epsilons": [0.1], "csv_stride": 1},
        "action": {"path_file": None, "include_contributions": False},
        "probability": {"T": 5.0, "n_steps": 500, "lambda_term": 1.0, "tol": 1e-10, "max_iter": 500,
                        "damping": 1.0, "schedule": None, "relaxation": "aitken", "refine": 0,
                        "zeta": None, "epsilons": [0.1], "action": None,
                        "mc": False, "n_samples": 10_000, "mc_T": 5.0, "mc_n_steps": 500},
    },
}


def effective_config(command, user):
    """Defaults for ``command`` and the chosen problem, overlaid by ``user``."""
    user = dict(user)
    for key in META_KEYS:
        value = user.pop(key, None)
        if key == "command" and value is not None and value != command:
            raise ConfigError(f"config was written for {value!r}, not {command!r}")
    problem = user.get("problem", "michaelis_menten")
    if problem not in _PROBLEM_KEYS:
        raise ConfigError(f"unknown problem {problem!r}")
    cfg = {**_PROBLEM_KEYS[problem], **_COMMAND_DEFAULTS[problem][command]}
    unknown = sorted(set(user) - set(cfg))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}/{problem}: {', '.join(unknown)}")
    cfg.update(user)
    return cfg


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _float(value):
    """Accept JSON numbers and the strings 'inf' / '-inf'."""
    return None if value is None else float(value)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_problem(cfg):
    """Training objective and rare event from a flat config."""
    if cfg["problem"] == "quadratic":
        spec = QuadraticObjective(cfg["center"], cfg["scale"])
        if cfg["target"] == "quadratic":
            target = QuadraticObjective(cfg["target_center"])
        elif cfg["target"] == "bump":
            target = GaussianBump(cfg["target_center"], cfg["target_width"])
        else:
            raise ConfigError(f"unknown target {cfg['target']!r}")
        return spec, RareEvent(target, _float(cfg.get("zeta"))), None
    try:
        data = Dataset.rate_data() if cfg["dataset"] is None else Dataset.from_csv(cfg["dataset"])
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec, event = benchmark.problem(data, cfg["train_indices"], cfg["test_indices"],
                                    cfg["reg_weight"], _float(cfg.get("zeta")))
    return spec, event, data


def _instanton_config(cfg, T=None, n_steps=None):
    kw = {k: cfg[k] for k in _INSTANTON_KEYS}
    if T is not None:
        kw["T"], kw["n_steps"] = T, n_steps
    return InstantonConfig(theta0=cfg["theta0"], **kw)


def _stride(cfg, n_steps):
    stride = int(cfg["csv_stride"])
    if stride < 1 or n_steps % stride:
        raise ConfigError("csv_stride must be a positive divisor of n_steps")
    return stride


def cmd_fit(cfg, out):
    spec, _, data = build_problem(cfg)
    SdeConfig(0.0, cfg["T"], cfg["n_steps"])
    if not cfg["stop_tol"] >= 0:
        raise ConfigError("stop_tol must be non-negative")
    stride = _stride(cfg, cfg["n_steps"])
    out.mkdir(parents=True, exist_ok=True)
    path, theta = gradient_flow(spec, cfg["theta0"], cfg["T"], cfg["n_steps"], cfg["stop_tol"])
    g = spec.grad(theta)
    h_max = descent_step_bound(spec, path.values[::max(1, path.n_steps // 1000)])
    write_json(out / "theta.json", {
        "theta": theta.tolist(),
        "grad_norm": float(np.linalg.norm(g)),
        "objective": float(spec.value(theta)),
        "h": path.h,
        "h_max": h_max,
        "descent_violations": int(descent_violations(spec, path).size),
    })
    Path(path.T, path.values[::stride]).to_csv(out / "trajectory.csv")
    if data is not None:
        w = np.linspace(0.0, float(data.x.max()), 201)
        curve = spec.model.predict(theta, w)
        with open(out / "fitted_curve.csv", "w") as fh:
            fh.write("x,y\n")
            for a, b in zip(w, curve):
                fh.write(f"{a!r},{float(b)!r}\n")
    return EXIT_OK


def _histogram(samples, bins):
    rows = []
    for j in range(samples.shape[1]):
        counts, edges = np.histogram(samples[:, j], bins=bins)
        rows += [(j, edges[i], edges[i + 1], int(counts[i])) for i in range(bins)]
    return rows


def cmd_simulate(cfg, out, threads=1):
    spec, _, _ = build_problem(cfg)
    sde = SdeConfig(cfg["epsilon"], cfg["T"], cfg["n_steps"], cfg["seed"])
    if cfg["N"] < 2 or cfg["bins"] < 1:
        raise ConfigError("need N >= 2 and bins >= 1")
    if cfg["bootstrap"] and cfg["problem"] != "michaelis_menten":
        raise ConfigError("bootstrap needs a data-driven problem")
    out.mkdir(parents=True, exist_ok=True)
    stats = ensemble(spec, sde, cfg["theta0"], cfg["N"], cfg["bootstrap"], threads)
    stats.to_json(out / "stats.json")
    samples = stats.terminal_samples
    with open(out / "terminal_samples.csv", "w") as fh:
        fh.write(",".join(f"theta_{j}" for j in range(samples.shape[1])) + "\n")
        for row in samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(out / "histogram.csv", "w") as fh:
        fh.write("coordinate,bin_left,bin_right,count\n")
        for j, a, b, c in _histogram(samples, int(cfg["bins"])):
            fh.write(f"{j},{float(a)!r},{float(b)!r},{c}\n")
    return EXIT_OK


def cmd_instanton(cfg, out):
    spec, event, _ = build_problem(cfg)
    icfg = _instanton_config(cfg)
    stride = _stride(cfg, icfg.n_steps)
    epsilons = [float(e) for e in cfg["epsilons"]]
    out.mkdir(parents=True, exist_ok=True)
    result = solve_instanton(spec, event, icfg)
    result.write(out / "instanton.json")
    write_columns(out / "instanton.csv", result.phi.times[::stride],
                  {"phi": result.phi.values[::stride], "psi": result.psi.values[::stride]})
    write_json(out / "control.json", verify_control(spec, result, event).to_dict())
    write_json(out / "log_prob.json", [
        {"epsilon": e, "log_estimate": log_prob_estimate(result.action, e)} for e in epsilons
    ])
    if result.status == "diverged":
        return EXIT_DIVERGED
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_action(cfg, out):
    spec, _, _ = build_problem(cfg)
    if not cfg["path_file"]:
        raise ConfigError("action needs a path file")
    try:
        path = Path.from_csv(cfg["path_file"], dim=len(cfg["theta0"]))
    except OSError as exc:
        raise ConfigError(f"cannot read path: {exc}") from None
    except DimensionMismatch:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = action(spec, path).to_dict(cfg["include_contributions"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "action.json", report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_probability(cfg, out, threads=1):
    spec, event, _ = build_problem(cfg)
    if event.zeta is None and (cfg["mc"] or cfg["action"] is None):
        raise ConfigError("probability needs an event threshold 'zeta'")
    epsilons = [float(e) for e in cfg["epsilons"]]
    if not epsilons or min(epsilons) <= 0:
        raise ConfigError("epsilons must be positive")
    icfg = _instanton_config(cfg)
    if cfg["mc"]:
        SdeConfig(epsilons[0], cfg["mc_T"], cfg["mc_n_steps"], cfg["seed"])
        if cfg["n_samples"] < 100:
            raise ConfigError("n_samples must be at least 100")
    if cfg["action"] is not None and not float(cfg["action"]) >= 0:
        raise ConfigError("action must be non-negative")
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    instanton = None
    if cfg["action"] is not None:
        S, source = float(cfg["action"]), "config"
    elif event.occurs(free_path(spec, icfg.theta0, icfg.T, icfg.n_steps).terminal):
        S, source = 0.0, "free_flow"
    else:
        result = solve_instanton(spec, event, icfg)
        S, source = result.action, "instanton"
        instanton = result.to_dict()
        if not result.converged:
            status = EXIT_DIVERGED if result.status == "diverged" else EXIT_NOT_CONVERGED
    rows = []
    for eps in epsilons:
        row = {"epsilon": eps, "log_estimate": log_prob_estimate(S, eps)}
        if cfg["mc"]:
            sde = SdeConfig(eps, cfg["mc_T"], cfg["mc_n_steps"], cfg["seed"])
            p_hat, se = mc_hit_probability(spec, sde, cfg["theta0"], event, cfg["n_samples"], threads)
            row.update(p_hat=p_hat, stderr=se, n_samples=cfg["n_samples"],
                       rate_estimate=(0.0 - eps * math.log(p_hat) if p_hat > 0 else None))
        rows.append(row)
    write_json(out / "probability.json", {"action": S, "source": source, "zeta": event.zeta, "instanton": instanton, "rows": rows})
    return status


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config (or a previous manifest.json)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    parser = argparse.ArgumentParser(prog="fwlearn", parents=[common], description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "action":
            p.add_argument("path_file", nargs="?", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = FsPath(args.out or f"fwlearn-{args.command}")
    try:
        user = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    user = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            if not isinstance(user, dict):
                raise ConfigError("config must be a JSON object")
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            user["seed"] = args.seed
        if args.command == "action" and args.path_file is not None:
            user["path_file"] = args.path_file
        cfg = effective_config(args.command, user)
        if args.threads < 1:
            raise ConfigError("threads must be positive")
        if args.command == "fit":
            code = cmd_fit(cfg, out)
        elif args.command == "simulate":
            code = cmd_simulate(cfg, out, args.threads)
        elif args.command == "instanton":
            code = cmd_instanton(cfg, out)
        elif args.command == "action":
            code = cmd_action(cfg, out)
        else:
            code = cmd_probability(cfg, out, args.threads)
    except ConfigError as exc:
        print(f"fwlearn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionMismatch as exc:
        print(f"fwlearn: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except DomainError as exc:
        print(f"fwlearn: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except IntegrationError as exc:
        print(f"fwlearn: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (TypeError, ValueError, KeyError) as exc:
        print(f"fwlearn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_json(out / "manifest.json", {"command": args.command, "version": __version__, **cfg})
    return code


if __name__ == "__main__":
    sys.exit(main())
