"""Experiment command line: generate | train | eval | compare | plot.

Configuration comes from a flat key=value text file plus key=value overrides
appended to the command line (overrides win). Unknown keys are rejected;
missing keys take the documented defaults below.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .gp import Episode, EqKernelSpec, ProtocolConfig, make_test_set
from .models import ModelConfig, forward
from .training import (
    Metrics,
    TrainConfig,
    compare_models,
    evaluate,
    train,
)

__all__ = ["main", "parse_run_config", "CONFIG_DEFAULTS"]

CONFIG_DEFAULTS: dict[str, object] = {
    "model.kind": "cgnp",
    "model.latent_dim": 8,
    "model.radius": 0.7,
    "train.lr": 1e-3,
    "train.batches": 20_000,
    "train.batch_size": 64,
    "train.eval_every": 1000,
    "seed.master": 0,
    "seed.init": 0,
    "data.length_scale": 0.4,
    "data.jitter": 1e-6,
    "data.test_episodes": 1000,
}


def _coerce(key: str, raw: str):
    default = CONFIG_DEFAULTS[key]
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key}: cannot parse {raw!r}: {exc}") from exc
    return raw


def parse_run_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Defaults, then the config file, then command-line overrides."""
    cfg = dict(CONFIG_DEFAULTS)
    entries: list[tuple[str, str]] = []
    if path is not None:
        for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key = value, got {line!r}")
            key, _, raw = line.partition("=")
            entries.append((key.strip(), raw.strip()))
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        entries.append((key.strip(), raw.strip()))
    for key, raw in entries:
        if key.startswith("paths."):
            cfg[key] = raw
        elif key in CONFIG_DEFAULTS:
            cfg[key] = _coerce(key, raw)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if cfg["model.kind"] not in ("cnp", "cgnp"):
        raise ValueError(f"model.kind must be cnp or cgnp, got {cfg['model.kind']!r}")
    return cfg


def _config_echo(cfg: dict) -> str:
    return " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        kind=cfg["model.kind"],
        latent_dim=cfg["model.latent_dim"],
        radius=cfg["model.radius"],
        init_seed=cfg["seed.init"],
    )


def _kernel(cfg: dict) -> EqKernelSpec:
    return EqKernelSpec(length_scale=cfg["data.length_scale"], jitter=cfg["data.jitter"])


def _protocol(cfg: dict) -> ProtocolConfig:
    return ProtocolConfig(
        batch_size=cfg["train.batch_size"],
        train_batches=cfg["train.batches"],
        test_episodes=cfg["data.test_episodes"],
        master_seed=cfg["seed.master"],
    )


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        model=_model_config(cfg),
        kernel=_kernel(cfg),
        protocol=_protocol(cfg),
        lr=cfg["train.lr"],
        eval_every=cfg["train.eval_every"],
    )


def _print_metrics(metrics: Metrics) -> None:
    print(
        f"nll_per_point={metrics.nll_per_point!r} "
        f"nll_per_episode={metrics.nll_per_episode!r} "
        f"mse={metrics.mse!r} "
        f"episode_count={metrics.episode_count}"
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = parse_run_config(args.config, args.overrides)
    episodes = make_test_set(_protocol(cfg), _kernel(cfg))
    formats.save_episodes(args.out, episodes)
    print(f"wrote {len(episodes)} episodes to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = parse_run_config(args.config, args.overrides)
    train_cfg = _train_config(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def log(batch_index, loss, metrics):
        print(f"batch={batch_index} loss={loss:.6f}", flush=True)
        if metrics is not None:
            print(
                f"heldout batch={batch_index} nll_per_point={metrics.nll_per_point:.6f} "
                f"mse={metrics.mse:.6f}",
                flush=True,
            )

    store, report = train(train_cfg, log=log)
    formats.save_checkpoint(out_dir / "checkpoint.json", store, train_cfg.model, extra=dict(cfg))
    if report.final_metrics is not None:
        header = f"train report config: {_config_echo(cfg)}"
        formats.atomic_write_text(
            out_dir / "report.csv", formats.metrics_csv(report.final_metrics, header)
        )
    curve = "\n".join(f"{i},{float(v)!r}" for i, v in enumerate(report.losses))
    formats.atomic_write_text(out_dir / "loss_curve.csv", "batch,loss\n" + curve + "\n")
    print(f"trained {train_cfg.model.kind} for {report.losses.size} batches "
          f"in {report.wall_seconds:.1f}s; checkpoint at {out_dir / 'checkpoint.json'}")
    return 0


def cmd_eval(args) -> int:
    store, model_cfg, _ = formats.load_checkpoint(args.checkpoint)
    episodes = formats.load_episodes(args.data)
    if not episodes:
        raise ValueError(f"{args.data}: no episodes to evaluate")
    metrics = evaluate(store, model_cfg, episodes)
    _print_metrics(metrics)
    out = args.out or str(Path(args.checkpoint).with_suffix(".metrics.csv"))
    header = (
        f"eval checkpoint={args.checkpoint} data={args.data} "
        f"data_sha256={formats.file_sha256(args.data)}"
    )
    formats.atomic_write_text(out, formats.metrics_csv(metrics, header))
    return 0


def cmd_compare(args) -> int:
    cfg = parse_run_config(args.config, args.overrides)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    test_path = out.with_name(out.stem + "_testset.jsonl")
    episodes = make_test_set(_protocol(cfg), _kernel(cfg))
    formats.save_episodes(test_path, episodes)
    test_hash = formats.file_sha256(test_path)

    results = compare_models(_train_config(cfg), args.seeds, episodes, log=print)
    header = (
        f"compare seeds={args.seeds} test_set={test_path.name} "
        f"test_set_sha256={test_hash} config: {_config_echo(cfg)}"
    )
    table = formats.comparison_csv(results, header)
    formats.atomic_write_text(out, table)
    formats.atomic_write_text(
        out.with_name(out.stem + "_seeds.csv"), formats.per_seed_csv(results, header)
    )
    print(table, end="")
    return 0


def cmd_plot(args) -> int:
    store, model_cfg, _ = formats.load_checkpoint(args.checkpoint)
    episodes = formats.load_episodes(args.data)
    if not 0 <= args.index < len(episodes):
        raise ValueError(f"episode index {args.index} outside 0..{len(episodes) - 1}")
    ep = episodes[args.index]

    # predict at every point of the episode, context points included
    xs = np.concatenate([ep.x_c, ep.x_t])
    ys = np.concatenate([ep.y_c, ep.y_t])
    is_ctx = np.concatenate([np.ones(ep.n_context, dtype=int), np.zeros(ep.n_target, dtype=int)])
    order = np.argsort(xs, kind="stable")
    xs, ys, is_ctx = xs[order], ys[order], is_ctx[order]
    pred = forward(Episode(ep.x_c, ep.y_c, xs, ys), store, model_cfg)
    lines = ["x,y_true,mu,sigma,is_context"]
    for x, y, mu, sigma, flag in zip(xs, ys, pred.mu, pred.sigma, is_ctx):
        lines.append(f"{float(x)!r},{float(y)!r},{float(mu)!r},{float(sigma)!r},{flag}")
    formats.atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {xs.size} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgnp",
        description="Train and evaluate conditional (graph) neural processes on GP regression data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p):
        p.add_argument(
            "overrides",
            nargs="*",
            metavar="key=value",
            help="config overrides, e.g. model.kind=cnp train.batches=500",
        )

    p = sub.add_parser("generate", help="write the test episode set")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    add_overrides(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    add_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an episode file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="metrics CSV (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train cnp/cgnp/edgeless-cgnp and tabulate metrics")
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--out", required=True)
    add_overrides(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="export a fit curve as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # uniform nonzero exit with a clean message
        print(f"error: {exc}", file=sys.stderr)
        return 1
