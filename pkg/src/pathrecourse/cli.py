"""Command-line entry point: ``pathrecourse <command> [options]``.

Commands
    train-driver   train a simulated driver and save its policy table
    gen-paths      write generated bad routes as path CSVs
    recourse       compute a recourse path (PPR or the k-change baseline)
    sweep          reward-weight sensitivity sweep
    reproduce      the full driver / PPR / baseline comparison

Every command writes into ``<output-dir>/<run-name>/`` together with a
``manifest.json``.  Options may also come from a ``key=value`` config file
given with ``--config``; explicit flags win.

Exit codes: 0 ok, 1 configuration error, 2 runtime failure, 3 validation
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .baselines import BL1Config, bl1_search, hamming
from .evaluation import (ScoreTriple, SweepGrid, policy_kl, ppr_recourse, score_triple,
                         sensitivity_sweep, visited_states)
from .gridworld import PROFILES, Grid, GridWorld, generate_bad_paths, simulate_driver_policy
from .mdp import Path, PolicyFunction, validate_path
from .personalization import LinkConfig
from .qlearn import DQNConfig, TrainConfig, TrainingDivergedError
from .reward import EnvironmentReturn, RewardWeights, total_reward

log = logging.getLogger("pathrecourse")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def _parse_value(text: str, default):
    """Coerce ``text`` to the type of ``default``."""
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if isinstance(default, tuple):
        return tuple(int(x) for x in text.split(",") if x.strip())
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if default is None:
        return None if text in ("", "none", "None") else int(text)
    return text


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(x) for x in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on.  Serialises to flat ``key=value`` lines."""

    map_path: str = ""
    driver_profile: str = "experienced"
    lambda_path: float = 0.1
    lambda_policy: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)
    link: LinkConfig = field(default_factory=lambda: LinkConfig(4))
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if self.driver_profile not in PROFILES:
            raise ConfigError(f"unknown driver profile {self.driver_profile!r}")
        if self.lambda_path < 0 or self.lambda_policy < 0:
            raise ConfigError("lambda values must be non-negative")
        if self.map_path and not FsPath(self.map_path).is_file():
            raise ConfigError(f"map file not found: {self.map_path}")

    @property
    def weights(self) -> RewardWeights:
        return RewardWeights(self.lambda_path, self.lambda_policy)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def grid(self) -> Grid | None:
        return Grid.load(self.map_path) if self.map_path else None

    def items(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("train", "link"):
                for sub in fields(value):
                    yield f"{f.name}.{sub.name}", getattr(value, sub.name)
            else:
                yield f.name, value

    def to_text(self) -> str:
        return "".join(f"{k}={_format_value(v)}\n" for k, v in self.items())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @classmethod
    def from_items(cls, pairs: dict, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        top, train, link = {}, {}, {}
        defaults = dict(base.items())
        for key, text in pairs.items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                value = _parse_value(str(text), defaults[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {text!r}") from exc
            if key.startswith("train."):
                train[key[6:]] = value
            elif key.startswith("link."):
                link[key[5:]] = value
            else:
                top[key] = value
        try:
            return replace(base, train=replace(base.train, **train),
                           link=replace(base.link, **link), **top)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        pairs = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {n} is not key=value: {line!r}")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
        return cls.from_items(pairs, base)


# --------------------------------------------------------------------------
# output helpers


class RunDir:
    def __init__(self, cfg: RunConfig, command: str, run_name: str):
        self.root = FsPath(cfg.output_dir) / run_name
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.command = command
        self.files: list[str] = []

    def write(self, name: str, text: str) -> FsPath:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        if name not in self.files:
            self.files.append(name)
        return path

    def finish(self, status: str = "ok"):
        manifest = {
            "command": self.command,
            "config": dict((k, _format_value(v)) for k, v in self.cfg.items()),
            "config_hash": self.cfg.digest(),
            "seed": self.cfg.seed,
            "status": status,
            "outputs": sorted(self.files),
            "versions": {"pathrecourse": __version__, "numpy": np.__version__},
        }
        path = self.root / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _scores_json(scores: ScoreTriple, breakdown) -> str:
    return json.dumps({"scores": scores.to_dict(), "reward": breakdown.to_dict()},
                      indent=2, sort_keys=True) + "\n"


def _load_policy(path: str, env: GridWorld) -> PolicyFunction:
    try:
        policy = PolicyFunction.from_csv(FsPath(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read policy file: {exc}") from exc
    if policy.table.shape != (env.num_states, env.num_actions):
        raise ValidationFailure(
            f"policy table is {policy.table.shape}, environment needs "
            f"{(env.num_states, env.num_actions)}")
    return policy


def _load_path(path: str, env: GridWorld) -> Path:
    try:
        tau = Path.from_csv(FsPath(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read path file: {exc}") from exc
    if not validate_path(env, tau):
        raise ValidationFailure(f"path in {path} is not valid on this map")
    return tau


def _driver_log_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "start_state", "steps", "return", "epsilon"])
    for ep, start, steps, ret, eps in history:
        w.writerow([ep, start, steps, repr(float(ret)), repr(float(eps))])
    return buf.getvalue()


def _driver(cfg: RunConfig, profile: str, episodes: int | None = None, history=None):
    dqn = DQNConfig(seed=cfg.seed) if episodes is None else DQNConfig(episodes=episodes, seed=cfg.seed)
    return simulate_driver_policy(PROFILES[profile], dqn, cfg.grid(), history=history)


# --------------------------------------------------------------------------
# commands


def cmd_train_driver(args, cfg: RunConfig) -> int:
    run = RunDir(cfg, "train-driver", args.run_name or f"driver-{cfg.driver_profile}-seed{cfg.seed}")
    history = []
    policy = _driver(cfg, cfg.driver_profile, args.episodes, history)
    run.write("policy.csv", policy.to_csv())
    run.write("driver_log.csv", _driver_log_csv(history))
    run.finish()
    print(run.root / "policy.csv")
    return EXIT_OK


def cmd_gen_paths(args, cfg: RunConfig) -> int:
    env = GridWorld(cfg.grid())
    run = RunDir(cfg, "gen-paths", args.run_name or f"paths-seed{cfg.seed}")
    for i, p in enumerate(generate_bad_paths(args.n, cfg.seed, env)):
        run.write(f"path_{i:02d}.csv", p.to_csv())
    run.finish()
    print(run.root)
    return EXIT_OK


def cmd_recourse(args, cfg: RunConfig) -> int:
    env = GridWorld(cfg.grid())
    policy = _load_policy(args.policy, env)
    tau0 = _load_path(args.path, env)
    method = args.baseline or "ppr"
    run = RunDir(cfg, "recourse", args.run_name or f"recourse-{method}-seed{cfg.seed}")
    if method == "bl1":
        tau_r = bl1_search(env, tau0, BL1Config(args.k))
        if hamming(tau_r.actions, tau0.actions) > args.k:
            raise ValidationFailure("baseline path exceeds the change budget")
    else:
        tau_r, trace = ppr_recourse(env, tau0, policy, cfg.weights, cfg.train_config(), cfg.link)
        run.write("training_log.csv", trace.to_csv())
    if not validate_path(env, tau_r):
        raise ValidationFailure("recourse path is not valid")
    breakdown = total_reward(tau_r, tau0, policy, EnvironmentReturn(env), cfg.weights,
                             cfg.link, env.token)
    run.write("tau_r.csv", tau_r.to_csv())
    run.write("scores.json", _scores_json(score_triple(tau_r, tau0, policy, env), breakdown))
    run.finish()
    print(env.render(tau_r))
    return EXIT_OK


def _read_routes(args, env, cfg) -> list[Path]:
    if args.paths:
        return [_load_path(p, env) for p in args.paths]
    return generate_bad_paths(args.n_routes, cfg.seed, env)


def cmd_sweep(args, cfg: RunConfig) -> int:
    env = GridWorld(cfg.grid())
    policy = _load_policy(args.policy, env)
    routes = _read_routes(args, env, cfg)
    try:
        grid = SweepGrid(tuple(args.lambda_path_values), tuple(args.lambda_policy_values),
                         seeds=tuple(args.seeds) if args.seeds else (cfg.seed,))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = RunDir(cfg, "sweep", args.run_name or f"sweep-seed{cfg.seed}")
    cells, text = sensitivity_sweep(env, routes, policy, grid, cfg.train, run.root / "cells")
    run.write("sweep.csv", text)
    incomplete = sum(not c.complete for c in cells)
    run.finish("ok" if not incomplete else f"{incomplete} incomplete cells")
    print(text, end="")
    return EXIT_OK if not incomplete else EXIT_RUNTIME


COMPARISON_COLUMNS = ("route", "profile", "method", "s_policy", "s_path", "s_goal",
                      "total", "highway_cells", "money", "destination")


def reproduce(cfg: RunConfig, n_routes: int = 10, run: RunDir | None = None):
    """Drivers, bad routes, PPR for both profiles and the baseline.

    Returns ``(rows, summary)``.  Rows are dicts keyed by
    ``COMPARISON_COLUMNS``; the baseline is scored under each profile's policy.
    """
    grid = cfg.grid()
    env = GridWorld(grid)
    policies = {name: _driver(cfg, name) for name in sorted(PROFILES)}
    routes = generate_bad_paths(n_routes, cfg.seed, env)
    if run is not None:
        for name, pol in policies.items():
            run.write(f"policy_{name}.csv", pol.to_csv())
        for i, r in enumerate(routes):
            run.write(f"routes/path_{i:02d}.csv", r.to_csv())
    rows, paths = [], {}
    for i, tau0 in enumerate(routes):
        bl1 = bl1_search(env, tau0, BL1Config(min(3, len(tau0.actions))))
        if run is not None:
            run.write(f"recourse/route{i:02d}_bl1.csv", bl1.to_csv())
        for name, pol in policies.items():
            tau_r, _ = ppr_recourse(env, tau0, pol, cfg.weights, cfg.train_config(), cfg.link)
            paths[(i, name)] = tau_r
            for method, p in (("ppr", tau_r), ("bl1", bl1)):
                s = score_triple(p, tau0, pol, env)
                b = total_reward(p, tau0, pol, EnvironmentReturn(env), cfg.weights, cfg.link, env.token)
                rows.append({"route": i, "profile": name, "method": method,
                             "s_policy": s.s_policy, "s_path": s.s_path, "s_goal": s.s_goal,
                             "total": b.total, "highway_cells": env.highway_cells(p),
                             "money": int(env.collected_money(p)),
                             "destination": int(env.reaches_destination(p))})
            if run is not None:
                run.write(f"recourse/route{i:02d}_{name}.csv", tau_r.to_csv())
    summary = []
    for name in sorted(policies):
        for method in ("ppr", "bl1"):
            sel = [r for r in rows if r["profile"] == name and r["method"] == method]
            entry = {"profile": name, "method": method, "n": len(sel)}
            for key in ("s_policy", "s_path", "s_goal", "highway_cells", "money", "destination"):
                entry[f"mean_{key}"] = float(np.mean([r[key] for r in sel]))
            summary.append(entry)
    exp, new = policies["experienced"], policies["new"]
    kl = [policy_kl(exp, new, visited_states(paths[(i, "experienced")], paths[(i, "new")]))
          for i in range(len(routes))]
    summary.append({"profile": "experienced||new", "method": "kl", "n": len(kl),
                    "mean_kl": float(np.mean(kl))})
    return rows, summary


def _rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in COMPARISON_COLUMNS])
    return buf.getvalue()


def cmd_reproduce(args, cfg: RunConfig) -> int:
    run = RunDir(cfg, "reproduce", args.run_name or f"reproduce-seed{cfg.seed}")
    try:
        rows, summary = reproduce(cfg, args.n_routes, run)
    except Exception:
        run.finish("failed")
        raise
    table = _rows_csv(rows)
    run.write("comparison.csv", table)
    run.write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    run.finish()
    for entry in summary:
        print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                       for k, v in entry.items()))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--map", dest="map_path", help="ASCII map file")
    common.add_argument("--output-dir", help="default: $PPR_OUTPUT_DIR or ./runs")
    common.add_argument("--run-name", help="subdirectory of the output dir")
    common.add_argument("--lambda-path", type=float)
    common.add_argument("--lambda-policy", type=float)
    common.add_argument("--max-iterations", type=int)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. train.b=100")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pathrecourse", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-driver", parents=[common], help="train a simulated driver policy")
    p.add_argument("--profile", dest="driver_profile", choices=sorted(PROFILES))
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_train_driver)

    p = sub.add_parser("gen-paths", parents=[common], help="generate bad routes")
    p.add_argument("--n", type=int, default=10)
    p.set_defaults(func=cmd_gen_paths)

    p = sub.add_parser("recourse", parents=[common], help="compute a recourse path")
    p.add_argument("--policy", required=True, help="driver policy CSV")
    p.add_argument("--path", required=True, help="original path CSV")
    p.add_argument("--baseline", choices=["bl1"])
    p.add_argument("--k", type=int, default=3, help="change budget for bl1")
    p.set_defaults(func=cmd_recourse)

    p = sub.add_parser("sweep", parents=[common], help="reward-weight sensitivity sweep")
    p.add_argument("--policy", required=True, help="driver policy CSV")
    p.add_argument("--paths", nargs="*", help="route CSVs (default: generated)")
    p.add_argument("--n-routes", type=int, default=3)
    p.add_argument("--lambda-path-values", type=_floats, default=[0.01, 0.1, 1.0])
    p.add_argument("--lambda-policy-values", type=_floats, default=[0.01, 0.1, 1.0])
    p.add_argument("--seeds", type=_ints)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", parents=[common], help="full comparison run")
    p.add_argument("--n-routes", type=int, default=10)
    p.set_defaults(func=cmd_reproduce)
    return parser


def resolve_config(args) -> RunConfig:
    base = RunConfig(output_dir=os.environ.get("PPR_OUTPUT_DIR", "runs"))
    if args.config:
        try:
            text = FsPath(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        base = RunConfig.from_text(text, base)
    pairs = {}
    for key in ("seed", "map_path", "output_dir", "lambda_path", "lambda_policy", "driver_profile"):
        value = getattr(args, key, None)
        if value is not None:
            pairs[key] = value
    if args.max_iterations is not None:
        pairs["train.max_iterations"] = args.max_iterations
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    return RunConfig.from_items(pairs, base)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingDivergedError, RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
