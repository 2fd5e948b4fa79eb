"""Command-line experiment runner.

Commands: ``train-expert``, ``gen-demos``, ``imitate``, ``estimate``,
``sweep`` and ``plot``.  Settings come from a flat ``key = value`` config
file (``#`` starts a comment); unknown keys are rejected.  Every run writes
``config.resolved`` next to its outputs, which can be fed back through
``--config`` to reproduce the CSVs byte for byte.  All floats in CSV files
use 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import diffmath as dm
from . import estimate as est
from .adversary import LossVariant, PairMode, RegConfig
from .envsim import make_env
from .errors import ConfigError, SchemaError
from .fdiv import DivergenceKind
from .imitate import (
    CURVE_COLUMNS,
    DEMO_COUNTS,
    NO_EVENT,
    SWEEP_COLUMNS,
    DemoDataset,
    TrainerConfig,
    Trajectory,
    demo_sweep,
    derive_seed,
    generate_demos,
    strip_actions,
    subsample,
    train,
)
from .policy_opt import GaussianPolicy, PPOConfig, evaluate_policy, train_expert

log = logging.getLogger(__name__)

RESOLVED_NAME = "config.resolved"
DATASET_MAGIC = "fdivdemo"
DATASET_VERSION = "v1"
ESTIMATE_COLUMNS = ("step", "batch_objective", "population_objective", "event")
PAPER_SCALE = {"n_iterations": 500, "steps_per_iteration": 50_000, "hidden": (100, 100)}


# --- value rendering ---------------------------------------------------------


def fmt(value) -> str:
    """Render a CSV cell; floats get 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, rows, columns):
    """Write ``rows`` (dicts) with exactly ``columns``; empty cells are refused."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        missing = [c for c in columns if c not in row or row[c] is None or row[c] == ""]
        if missing:
            raise SchemaError(f"row is missing values for {missing}")
        writer.writerow([fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


# --- configuration -----------------------------------------------------------


def _tuple_of(cast):
    def parse(text):
        text = str(text).strip()
        if text in ("", "()"):
            return ()
        return tuple(cast(t) for t in text.replace("(", "").replace(")", "").split(",") if t.strip())

    return parse


def _bool(text):
    text = str(text).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    text = str(text).strip().lower()
    return None if text in ("none", "") else float(text)


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: Callable
    default: object
    required: bool = False


_PPO_KEYS = {
    "clip_ratio": Key(float, 0.2),
    "gamma": Key(float, 0.995),
    "gae_lambda": Key(float, 0.97),
    "entropy_coef": Key(float, 0.001),
    "ppo_epochs": Key(int, 10),
    "minibatch_size": Key(int, 256),
    "policy_lr": Key(float, 3e-4),
    "value_lr": Key(float, 3e-4),
    "advantage_normalization": Key(_bool, True),
    "update_rule": Key(str, "ppo"),
}

_RUN_KEYS = {
    "output_dir": Key(str, "runs"),
    "seed": Key(int, 0),
}

_IMITATE_KEYS = {
    "demos": Key(str, None, required=True),
    "mode": Key(str, "il"),
    "kind": Key(str, "gan"),
    "variant": Key(str, "reparameterized"),
    "psi": Key(float, 0.0),
    "grad_clip_threshold": Key(_optional_float, None),
    "penalty_mode": Key(str, "param"),
    "n_iterations": Key(int, 50),
    "steps_per_iteration": Key(int, 4000),
    "disc_epochs": Key(int, 10),
    "disc_lr": Key(float, 1e-3),
    "disc_minibatch": Key(int, 256),
    "n_demos": Key(int, 20),
    "hidden": Key(_tuple_of(int), (64, 64)),
    "eval_episodes": Key(int, 10),
    "final_eval_episodes": Key(int, 100),
    "n_seeds": Key(int, 1),
    **_PPO_KEYS,
}

SCHEMAS = {
    "train-expert": {
        **_RUN_KEYS,
        "env_id": Key(str, None, required=True),
        "n_iterations": Key(int, 100),
        "steps_per_iteration": Key(int, 4000),
        "hidden": Key(_tuple_of(int), (64, 64)),
        "eval_episodes": Key(int, 100),
        **_PPO_KEYS,
    },
    "gen-demos": {
        **_RUN_KEYS,
        "expert": Key(str, None, required=True),
        "n_trajectories": Key(int, 50),
        "mode": Key(str, "state_action"),
    },
    "imitate": {**_RUN_KEYS, **_IMITATE_KEYS},
    "estimate": {
        **_RUN_KEYS,
        "kind": Key(str, "kl"),
        "p_weights": Key(_tuple_of(float), (1.0,)),
        "p_means": Key(_tuple_of(float), (0.0,)),
        "p_stds": Key(_tuple_of(float), (1.0,)),
        "q_weights": Key(_tuple_of(float), (1.0,)),
        "q_means": Key(_tuple_of(float), (1.0,)),
        "q_stds": Key(_tuple_of(float), (1.0,)),
        "steps": Key(int, 2000),
        "batch_size": Key(int, 1024),
        "lr": Key(float, 1e-3),
        "hidden": Key(_tuple_of(int), (32, 32)),
    },
    "sweep": {
        **_RUN_KEYS,
        **_IMITATE_KEYS,
        "sweep": Key(str, "both"),
        "grid_disc_lr": Key(_tuple_of(float), (1e-4, 1e-3)),
        "grid_ppo_epochs": Key(_tuple_of(int), (5, 10)),
        "grid_disc_epochs": Key(_tuple_of(int), (1, 5, 10)),
        "demo_counts": Key(_tuple_of(int), DEMO_COUNTS),
        "demo_kinds": Key(_tuple_of(str), ("gan", "kl")),
        "demo_modes": Key(_tuple_of(str), ("il", "ilo")),
        "demo_ilo_psi": Key(float, 10.0),
        "demo_ilo_penalty_mode": Key(str, "input"),
    },
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; blank lines and ``#`` comments ignored."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def resolve_config(command: str, raw: dict, overrides: dict | None = None) -> dict:
    """Typed settings for ``command``; unknown or missing keys raise ConfigError."""
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, spec in schema.items():
        if key in raw:
            try:
                cfg[key] = spec.parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        else:
            cfg[key] = spec.default
    for key, value in (overrides or {}).items():
        if key in schema:
            cfg[key] = value
    missing = [k for k, spec in schema.items() if spec.required and cfg[k] is None]
    if missing:
        raise ConfigError(f"missing required config key: {missing[0]}")
    return cfg


def render_config(cfg: dict) -> str:
    return "".join(f"{k} = {_render(v)}\n" for k, v in sorted(cfg.items()))


def load_config(command: str, path=None, overrides=None) -> dict:
    raw = parse_config_text(Path(path).read_text()) if path else {}
    return resolve_config(command, raw, overrides)


def _ppo_config(cfg) -> PPOConfig:
    return PPOConfig(**{k: cfg[k] for k in _PPO_KEYS})


def trainer_config(cfg, seed=None) -> TrainerConfig:
    reg = RegConfig(psi=cfg["psi"], grad_clip_threshold=cfg["grad_clip_threshold"], penalty_mode=cfg["penalty_mode"])
    return TrainerConfig(
        kind=DivergenceKind.parse(cfg["kind"]),
        variant=LossVariant.parse(cfg["variant"]),
        reg=reg,
        ppo=_ppo_config(cfg),
        n_iterations=cfg["n_iterations"],
        steps_per_iteration=cfg["steps_per_iteration"],
        disc_epochs=cfg["disc_epochs"],
        disc_lr=cfg["disc_lr"],
        disc_minibatch=cfg["disc_minibatch"],
        n_demos=cfg["n_demos"],
        seed=cfg["seed"] if seed is None else seed,
        hidden=tuple(cfg["hidden"]),
        eval_episodes=cfg["eval_episodes"],
        final_eval_episodes=cfg["final_eval_episodes"],
    )


# --- persistence -------------------------------------------------------------


def save_policy(path, policy: GaussianPolicy, env_id: str, extra: dict | None = None):
    records = [
        dm.CheckpointRecord("policy", policy.spec, policy.params, {"env_id": env_id, **(extra or {})}),
        dm.CheckpointRecord("log_std", None, policy.log_std),
    ]
    dm.write_checkpoint(path, records)


def load_policy(path):
    """Returns ``(policy, env_id)``."""
    records = dm.read_checkpoint(path)
    try:
        pol, log_std = records["policy"], records["log_std"]
    except KeyError as exc:
        raise ValueError(f"checkpoint {path} lacks a {exc.args[0]} record") from None
    env_id = pol.extra.get("env_id")
    return GaussianPolicy(pol.spec, pol.params.copy(), log_std.params.copy()), env_id


def write_dataset(path, demos: DemoDataset):
    """Header line, then one CSV row per transition."""
    mode = demos.mode
    header = (
        f"{DATASET_MAGIC} {DATASET_VERSION} {demos.env_id} {mode.value} "
        f"{demos.obs_dim} {demos.act_dim} {len(demos)} {demos.source_seed}"
    )
    buf = io.StringIO()
    buf.write(header + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for i, traj in enumerate(demos.trajectories):
        if mode is PairMode.STATE_ACTION:
            seconds = traj.actions
            states = traj.states
        else:
            states, seconds = traj.states[:-1], traj.states[1:]
        for t in range(states.shape[0]):
            writer.writerow([str(i), str(t)] + [fmt(v) for v in states[t]] + [fmt(v) for v in seconds[t]])
    Path(path).write_text(buf.getvalue())


def read_dataset(path) -> DemoDataset:
    with open(path, newline="") as fh:
        fields = fh.readline().split()
        if len(fields) != 8 or fields[0] != DATASET_MAGIC or fields[1] != DATASET_VERSION:
            raise SchemaError(f"{path}: not a {DATASET_MAGIC} {DATASET_VERSION} file")
        env_id, mode = fields[2], PairMode(fields[3])
        obs_dim, act_dim, n_traj, source_seed = (int(f) for f in fields[4:])
        width = act_dim if mode is PairMode.STATE_ACTION else obs_dim
        rows = [[float(v) for v in row] for row in csv.reader(fh)]
    data = np.array(rows, dtype=np.float64).reshape(-1, 2 + obs_dim + width)
    trajs = []
    for i in range(n_traj):
        part = data[data[:, 0] == i]
        part = part[np.argsort(part[:, 1], kind="stable")]
        s, second = part[:, 2 : 2 + obs_dim], part[:, 2 + obs_dim :]
        if mode is PairMode.STATE_ACTION:
            trajs.append(Trajectory(s, second))
        else:
            trajs.append(Trajectory(np.vstack([s, second[-1:]]), None))
    return DemoDataset(env_id, mode, trajs, source_seed)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _prepare_out(out: Path, cfg: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_NAME).write_text(render_config(cfg))


def _events_rows(events):
    return [{"iteration": e.iteration, "event": e.event, "message": e.message.replace("\n", " ")} for e in events]


# --- commands ----------------------------------------------------------------


def cmd_train_expert(cfg: dict, out: Path) -> dict:
    _prepare_out(out, cfg)
    spec = make_env(cfg["env_id"])
    t0 = time.perf_counter()
    result = train_expert(
        spec, _ppo_config(cfg), cfg["n_iterations"], cfg["steps_per_iteration"], cfg["seed"], tuple(cfg["hidden"])
    )
    rows = [
        {
            "iteration": r["iteration"],
            "env_steps": r["env_steps"],
            "mean_true_return": r["mean_true_return"],
            "std_true_return": r["std_true_return"],
            "disc_objective": 0.0,
            "penalty": 0.0,
            "mean_adv_reward": 0.0,
            "grad_norm_raw": 0.0,
            "grad_norm_applied": 0.0,
            "stability_event": NO_EVENT,
        }
        for r in result.curve
    ]
    write_csv(out / "curve.csv", rows, CURVE_COLUMNS)
    save_policy(out / "expert.ckpt", result.policy, spec.env_id)
    mean, std = evaluate_policy(result.policy, spec, cfg["eval_episodes"], derive_seed(cfg["seed"], "final-eval"))
    summary = {"final_mean_return": mean, "final_std_return": std, "wall_clock_s": time.perf_counter() - t0}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_gen_demos(cfg: dict, out: Path) -> dict:
    _prepare_out(out, cfg)
    policy, env_id = load_policy(cfg["expert"])
    spec = make_env(env_id)
    demos = generate_demos(policy, spec, cfg["n_trajectories"], cfg["seed"])
    mode = PairMode(cfg["mode"])
    if mode is PairMode.STATE_TRANSITION:
        demos = strip_actions(demos)
    write_dataset(out / "demos.csv", demos)
    return {"path": str(out / "demos.csv"), "n_trajectories": len(demos)}


def _imitation_demos(cfg, seed):
    demos = read_dataset(cfg["demos"])
    sub = subsample(demos, cfg["n_demos"], seed)
    if cfg["mode"] == "ilo" and sub.mode is PairMode.STATE_ACTION:
        sub = strip_actions(sub)
    elif cfg["mode"] not in ("il", "ilo"):
        raise ConfigError(f"mode must be il or ilo, got {cfg['mode']!r}")
    return sub


def run_imitation(cfg: dict, seed: int, out: Path) -> dict:
    """One seeded imitation run writing curve, events and summary into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sub = _imitation_demos(cfg, seed)
    result = train(make_env(sub.env_id), sub, trainer_config(cfg, seed))
    write_csv(out / "curve.csv", result.curve, CURVE_COLUMNS)
    write_csv(out / "events.csv", _events_rows(result.events), ("iteration", "event", "message"))
    summary = {
        "seed": seed,
        "final_mean_return": result.final_mean_return,
        "final_std_return": result.final_std_return,
        "env_steps": result.env_steps,
        "stability_event": result.events[0].event if result.events else NO_EVENT,
        "wall_clock_s": time.perf_counter() - t0,
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_imitate(cfg: dict, out: Path) -> dict:
    _prepare_out(out, cfg)
    summaries = [run_imitation(cfg, cfg["seed"] + i, out / f"seed_{cfg['seed'] + i}") for i in range(cfg["n_seeds"])]
    return {"runs": summaries}


def _source(weights, means, stds):
    if len(means) == 1:
        return est.Gaussian1D(means[0], stds[0])
    return est.GaussianMixture1D(tuple(weights), tuple(means), tuple(stds))


def cmd_estimate(cfg: dict, out: Path) -> dict:
    _prepare_out(out, cfg)
    p = _source(cfg["p_weights"], cfg["p_means"], cfg["p_stds"])
    q = _source(cfg["q_weights"], cfg["q_means"], cfg["q_stds"])
    config = est.EstimatorConfig(
        net=dm.NetSpec(1, tuple(cfg["hidden"]), 1),
        steps=cfg["steps"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        seed=cfg["seed"],
    )
    value, curve = est.variational_estimate(p, q, cfg["kind"], config)
    rows = [{**r, "event": r["event"] or NO_EVENT} for r in curve]
    write_csv(out / "curve.csv", rows, ESTIMATE_COLUMNS)
    summary = {"estimate": value, "quadrature": est.numeric_fdiv(p, q, cfg["kind"])}
    if isinstance(p, est.Gaussian1D) and isinstance(q, est.Gaussian1D) and DivergenceKind.parse(cfg["kind"]) is DivergenceKind.KL:
        summary["closed_form_kl"] = est.closed_form_kl(p, q)
    _write_json(out / "summary.json", summary)
    return summary


# sweep ------------------------------------------------------------------------


def grid_cells(cfg: dict):
    """Cartesian product of the hyperparameter grid with seeds, in a fixed order."""
    seeds = [cfg["seed"] + i for i in range(cfg["n_seeds"])]
    cells = []
    for lr, pe, de, seed in itertools.product(cfg["grid_disc_lr"], cfg["grid_ppo_epochs"], cfg["grid_disc_epochs"], seeds):
        name = f"lr{fmt(lr)}_ppo{pe}_disc{de}_seed{seed}"
        cells.append((name, {**cfg, "disc_lr": lr, "ppo_epochs": pe, "disc_epochs": de, "seed": seed}))
    return cells


def _grid_job(args):
    name, cell_cfg, out = args
    out = Path(out) / name
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_NAME).write_text(render_config(cell_cfg))
    try:
        summary = run_imitation(cell_cfg, cell_cfg["seed"], out)
    except Exception as exc:  # noqa: BLE001 - a failed cell is recorded, the sweep goes on
        log.error("cell %s failed: %s", name, exc)
        summary = {"final_mean_return": float("nan"), "final_std_return": float("nan"), "env_steps": 0,
                   "stability_event": type(exc).__name__}
    return {
        "cell": name,
        "disc_lr": cell_cfg["disc_lr"],
        "ppo_epochs": cell_cfg["ppo_epochs"],
        "disc_epochs": cell_cfg["disc_epochs"],
        "seed": cell_cfg["seed"],
        **{k: summary[k] for k in ("final_mean_return", "final_std_return", "env_steps", "stability_event")},
    }


GRID_COLUMNS = ("cell", "disc_lr", "ppo_epochs", "disc_epochs", "seed", "final_mean_return", "final_std_return",
                "env_steps", "stability_event")


def demo_cells(cfg: dict):
    seeds = [cfg["seed"] + i for i in range(cfg["n_seeds"])]
    return list(itertools.product(cfg["demo_modes"], cfg["demo_kinds"], seeds, cfg["demo_counts"]))


def _demo_job(args):
    cfg, mode, kind, seed, count = args
    demos = read_dataset(cfg["demos"])
    if mode == "ilo" and demos.mode is PairMode.STATE_ACTION:
        demos = strip_actions(demos)
    tcfg = replace(trainer_config(cfg, seed), kind=DivergenceKind.parse(kind))
    if mode == "ilo":
        tcfg = replace(tcfg, reg=replace(tcfg.reg, psi=cfg["demo_ilo_psi"], penalty_mode=cfg["demo_ilo_penalty_mode"]))
    return demo_sweep(make_env(demos.env_id), demos, tcfg, (count,))[0]


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_sweep(cfg: dict, out: Path, workers: int = 1) -> dict:
    _prepare_out(out, cfg)
    result = {}
    if cfg["sweep"] not in ("grid", "demo", "both"):
        raise ConfigError("sweep must be grid, demo or both")
    if cfg["sweep"] in ("grid", "both"):
        jobs = [(name, c, str(out / "grid")) for name, c in grid_cells(cfg)]
        rows = _map(_grid_job, jobs, workers)
        write_csv(out / "grid.csv", rows, GRID_COLUMNS)
        result["grid_cells"] = len(rows)
    if cfg["sweep"] in ("demo", "both"):
        jobs = [(cfg, *cell) for cell in demo_cells(cfg)]
        rows = _map(_demo_job, jobs, workers)
        write_csv(out / "demo_sweep.csv", rows, SWEEP_COLUMNS)
        result["demo_rows"] = len(rows)
    return result


# plot -------------------------------------------------------------------------


def load_curve(path):
    columns, rows = read_csv(path)
    if tuple(columns) != CURVE_COLUMNS:
        raise SchemaError(f"{path}: columns {columns} do not match the curve schema")
    steps = np.array([float(r["env_steps"]) for r in rows])
    returns = np.array([float(r["mean_true_return"]) for r in rows])
    return steps, returns


def confidence_band(curves):
    """Mean and normal-approximation 95% band over seeds.

    ``curves`` is a list of equal-length return arrays.  Returns
    ``(mean, lower, upper)``; a single curve gives a zero-width band.
    """
    data = np.vstack([np.asarray(c, dtype=np.float64) for c in curves])
    mean = data.mean(axis=0)
    n = data.shape[0]
    if n == 1:
        return mean, mean.copy(), mean.copy()
    half = 1.96 * data.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, mean - half, mean + half


def cmd_plot(paths, labels, out_path):
    """SVG with one mean line and 95% band per label; curves sharing a label are seeds."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if labels and len(labels) != len(paths):
        raise ConfigError("give one label per CSV (or none)")
    labels = labels or [Path(p).parent.name or str(p) for p in paths]
    groups = {}
    for path, label in zip(paths, labels):
        groups.setdefault(label, []).append(load_curve(path))
    matplotlib.rcParams["svg.hashsalt"] = "fvim"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curves in groups.items():
        n = min(len(s) for s, _ in curves)
        steps = curves[0][0][:n]
        if any(not np.array_equal(s[:n], steps) for s, _ in curves):
            raise SchemaError(f"curves in group {label!r} use different env_steps")
        mean, lo, hi = confidence_band([r[:n] for _, r in curves])
        (line,) = ax.plot(steps, mean, label=f"{label} (n={len(curves)})")
        ax.fill_between(steps, lo, hi, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean true return")
    ax.legend(title="95% band: mean ± 1.96·sd/√n")
    fig.tight_layout()
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return {"path": str(out_path), "groups": {k: len(v) for k, v in groups.items()}}


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fvim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train-expert", "gen-demos", "imitate", "estimate", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat key = value settings file")
        p.add_argument("--seed", type=int, help="overrides the seed key")
        p.add_argument("--out", type=Path, help="output directory (default: output_dir key)")
        if name in ("train-expert", "imitate", "sweep"):
            p.add_argument("--paper-scale", action="store_true", help="500 iterations x 50000 steps, 100x100 nets")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=1, help="parallel processes for sweep cells")
    p = sub.add_parser("plot")
    p.add_argument("csvs", nargs="+", type=Path)
    p.add_argument("--label", action="append", dest="labels", help="group label per CSV, in order")
    p.add_argument("--out", type=Path, default=Path("plot.svg"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "plot":
            result = cmd_plot([str(p) for p in args.csvs], args.labels, args.out)
        else:
            overrides = {}
            if getattr(args, "paper_scale", False):
                overrides.update(PAPER_SCALE)
            if args.seed is not None:
                overrides["seed"] = args.seed
            cfg = load_config(args.command, args.config, overrides)
            out = args.out or Path(cfg["output_dir"])
            commands = {
                "train-expert": cmd_train_expert,
                "gen-demos": cmd_gen_demos,
                "imitate": cmd_imitate,
                "estimate": cmd_estimate,
            }
            if args.command == "sweep":
                result = cmd_sweep(cfg, out, args.workers)
            else:
                result = commands[args.command](cfg, out)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"fvim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
