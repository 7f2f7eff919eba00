"""On-disk formats: episode JSONL, checkpoint JSON, metrics and table CSV.

Everything is plain text with '.' decimal separators and shortest
round-trip float encoding, so files diff cleanly and parse back to the
exact same doubles. All writes go through a temp file plus atomic rename;
a failed command never leaves a partial file behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict

import numpy as np

from .autodiff import BatchNormState
from .gp import Episode
from .models import ModelConfig, ParameterStore, init_params
from .training import Metrics

__all__ = [
    "atomic_write_text",
    "file_sha256",
    "save_episodes",
    "load_episodes",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_text",
    "metrics_csv",
    "comparison_csv",
]


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# episodes: one JSON object per line, keys x_c, y_c, x_t, y_t
# ---------------------------------------------------------------------------


def episode_line(ep: Episode) -> str:
    record = {
        "x_c": ep.x_c.tolist(),
        "y_c": ep.y_c.tolist(),
        "x_t": ep.x_t.tolist(),
        "y_t": ep.y_t.tolist(),
    }
    return json.dumps(record, separators=(",", ":"))


def save_episodes(path, episodes) -> None:
    lines = [episode_line(ep) for ep in episodes]
    atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def load_episodes(path) -> list[Episode]:
    episodes = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                episodes.append(
                    Episode(record["x_c"], record["y_c"], record["x_t"], record["y_t"])
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: bad episode record on line {ln}: {exc}") from exc
    return episodes


# ---------------------------------------------------------------------------
# checkpoints: one JSON document with config echo, parameters, BN statistics
# ---------------------------------------------------------------------------


def checkpoint_text(store: ParameterStore, cfg: ModelConfig, extra: dict | None = None) -> str:
    doc = {
        "model": asdict(cfg),
        "params": [
            {
                "name": p.name,
                "rows": p.value.shape[0],
                "cols": p.value.shape[1],
                "data": p.value.ravel().tolist(),  # row-major
            }
            for p in store.parameters()
        ],
        "bn": {
            name: {
                "running_mean": state.running_mean.ravel().tolist(),
                "running_var": state.running_var.ravel().tolist(),
                "momentum": state.momentum,
                "eps": state.eps,
            }
            for name, state in store.bn.items()
        },
        "extra": extra or {},
    }
    return json.dumps(doc, indent=1) + "\n"


def save_checkpoint(path, store: ParameterStore, cfg: ModelConfig, extra: dict | None = None) -> None:
    atomic_write_text(path, checkpoint_text(store, cfg, extra))


def load_checkpoint(path) -> tuple[ParameterStore, ModelConfig, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = ModelConfig(**doc["model"])
    store = init_params(cfg)
    seen = set()
    for entry in doc["params"]:
        name = entry["name"]
        if name not in store:
            raise ValueError(f"{path}: unknown parameter {name!r} for kind={cfg.kind}")
        shape = (entry["rows"], entry["cols"])
        param = store[name]
        if param.value.shape != shape:
            raise ValueError(
                f"{path}: shape mismatch for {name!r}: checkpoint {shape}, model {param.value.shape}"
            )
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != shape[0] * shape[1]:
            raise ValueError(f"{path}: {name!r} has {data.size} values for shape {shape}")
        param.value[...] = data.reshape(shape)
        seen.add(name)
    missing = set(store.params) - seen
    if missing:
        raise ValueError(f"{path}: checkpoint is missing parameters {sorted(missing)}")
    for name, entry in doc["bn"].items():
        state: BatchNormState = store.bn[name]
        mean = np.asarray(entry["running_mean"], dtype=np.float64).reshape(1, -1)
        var = np.asarray(entry["running_var"], dtype=np.float64).reshape(1, -1)
        if mean.shape[1] != state.width or var.shape[1] != state.width:
            raise ValueError(f"{path}: batch-norm width mismatch for {name!r}")
        state.running_mean = mean
        state.running_var = var
        state.momentum = float(entry["momentum"])
        state.eps = float(entry["eps"])
    return store, cfg, doc.get("extra", {})


# ---------------------------------------------------------------------------
# CSV outputs (a '#' header line carries config echo and data hashes)
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def metrics_csv(metrics: Metrics, header: str) -> str:
    return (
        f"# {header}\n"
        "nll_per_point,nll_per_episode,mse,episode_count\n"
        f"{_fmt(metrics.nll_per_point)},{_fmt(metrics.nll_per_episode)},"
        f"{_fmt(metrics.mse)},{metrics.episode_count}\n"
    )


def comparison_csv(results, header: str) -> str:
    """Summary table, one row per model; std columns are zero for one seed."""
    lines = [
        f"# {header}",
        "model,rho,nll_per_point,nll_per_episode,mse,"
        "nll_per_point_std,nll_per_episode_std,mse_std",
    ]
    for res in results:
        nll_p = res.mean_std("nll_per_point")
        nll_e = res.mean_std("nll_per_episode")
        mse = res.mean_std("mse")
        rho = "" if res.radius is None else _fmt(res.radius)
        lines.append(
            f"{res.kind},{rho},{_fmt(nll_p[0])},{_fmt(nll_e[0])},{_fmt(mse[0])},"
            f"{_fmt(nll_p[1])},{_fmt(nll_e[1])},{_fmt(mse[1])}"
        )
    return "\n".join(lines) + "\n"


def per_seed_csv(results, header: str) -> str:
    lines = [
        f"# {header}",
        "model,rho,master_seed,init_seed,nll_per_point,nll_per_episode,mse,loss_drop",
    ]
    for res in results:
        rho = "" if res.radius is None else _fmt(res.radius)
        for run in res.runs:
            m = run.metrics
            lines.append(
                f"{res.kind},{rho},{run.master_seed},{run.init_seed},"
                f"{_fmt(m.nll_per_point)},{_fmt(m.nll_per_episode)},{_fmt(m.mse)},"
                f"{_fmt(run.loss_drop)}"
            )
    return "\n".join(lines) + "\n"
