"""Experiment driver: configs, RNG streams, the bytes ledger, seeds, sweeps and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .compression import CompressorSpec, bytes_for_dim, parse_compressor
from .consensus import GossipHyperParams, adagossip_round, choco_gossip_round, consensus_distance, init_gossip_state
from .data import Dataset, generate_synthetic_classification, load_dataset, partition_iid
from .learning import OptimizerConfig, evaluate_consensus_model, init_learner_state, lr_schedule, run_round
from .models import ModelSpec, forward_backward, init_params
from .presets import preset
from .topology import MixingMatrix, parse_topology

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsRecord",
    "BytesLedger",
    "parse_config",
    "predicted_bytes_per_epoch",
    "run_seed",
    "run_experiment",
    "sweep",
    "write_metrics_csv",
    "rng_stream",
    "train_seed",
]

ALGORITHMS = ("dsgd", "deepsqueeze", "choco", "adag", "gossip_only_choco", "gossip_only_adag")
CSV_SCHEMA = "# adagossip-metrics v1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "adag"
    topology: str = "ring"
    agents: int = 16
    compressor: str = "none"
    topk_scope: str = "model"
    gamma: float | None = None
    beta: float = 0.999
    epsilon: float = 1e-8
    lr: float = 0.1
    epochs: int = 20
    batch: int = 32
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 1e-4
    seeds: tuple[int, ...] = (1, 2, 3)
    out: str | None = None
    # task
    model: str = "mlp"
    hidden: tuple[int, ...] = (32,)
    input_dim: int = 16
    classes: int = 4
    train_samples: int = 8000
    test_samples: int = 2000
    val_samples: int = 0
    separation: float = 2.0
    data_seed: int = 0
    data_format: str = "csv"
    train_path: str | None = None
    train_labels: str | None = None
    test_path: str | None = None
    test_labels: str | None = None
    # execution
    workers: int = 1
    timing: bool = False
    preset: str | None = None

    @property
    def compressor_spec(self) -> CompressorSpec:
        return parse_compressor(self.compressor)

    @property
    def hyper(self) -> GossipHyperParams:
        return GossipHyperParams(gamma=self.gamma, beta=self.beta, epsilon=self.epsilon)

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr0=self.lr,
            momentum=self.momentum,
            nesterov=self.nesterov,
            weight_decay=self.weight_decay,
            batch_size=self.batch,
            epochs=self.epochs,
        )

    @property
    def run_id(self) -> str:
        return f"{self.algorithm}-{self.topology}-n{self.agents}-{self.compressor}-g{self.gamma:g}"

    def mixing_matrix(self) -> MixingMatrix:
        # dyck/torus fix their own size; agents is reconciled in validate()
        sized = self.topology.strip().lower() in ("ring", "full")
        return parse_topology(self.topology, self.agents if sized else None)

    def replace(self, **changes) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **changes))

    def to_text(self) -> str:
        """Flat ``key=value`` form accepted by :func:`parse_config`."""
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    seed: int
    epoch: int
    lr: float
    train_loss: float
    test_accuracy: float
    consensus_distance: float
    mb_transmitted_cumulative: float
    wall_seconds: float


METRIC_FIELDS = tuple(f.name for f in dataclasses.fields(MetricsRecord))


@dataclass
class BytesLedger:
    """Per-agent cumulative bytes with one increment row per closed epoch."""

    agents: int
    cumulative: np.ndarray = field(init=False)
    per_epoch: list = field(default_factory=list)
    _open: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.cumulative = np.zeros(self.agents, dtype=np.int64)
        self._open = np.zeros(self.agents, dtype=np.int64)

    def charge(self, sent: np.ndarray) -> None:
        self.cumulative += sent
        self._open += sent

    def close_epoch(self) -> np.ndarray:
        inc = self._open.copy()
        self.per_epoch.append(inc)
        self._open[:] = 0
        return inc

    def mb_per_agent(self) -> float:
        return float(self.cumulative.mean()) / 1e6


# ---------------------------------------------------------------- config parsing


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _convert(key: str, value):
    if not isinstance(value, str):
        return tuple(value) if isinstance(value, list) else value
    kind = _FIELD_TYPES[key]
    text = value.strip()
    if "None" in kind and text.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("tuple"):
            return tuple(int(v) for v in text.split(",") if v.strip())
        if kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {key}={value!r} as {kind}") from None
    return text


def read_config_file(path: str | os.PathLike) -> dict:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    try:
        spec = cfg.compressor_spec
        w = cfg.mixing_matrix()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.topk_scope not in ("model", "layer"):
        raise ConfigError(f"topk_scope must be model or layer, got {cfg.topk_scope!r}")
    if cfg.algorithm == "dsgd" and spec.kind != "identity":
        raise ConfigError(
            f"dsgd is full-communication and cannot use compressor {cfg.compressor!r}; "
            "use deepsqueeze, choco or adag for compressed runs"
        )
    if cfg.gamma is None:
        if cfg.algorithm == "dsgd":
            cfg = dataclasses.replace(cfg, gamma=1.0)
        else:
            raise ConfigError(
                f"{cfg.algorithm} needs a consensus step-size tuned to the compressor; pass --gamma "
                "(or a preset / sweep --axis gamma to find one)"
            )
    try:
        cfg.hyper
        cfg.optimizer
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.agents != w.n:
        cfg = dataclasses.replace(cfg, agents=w.n)
    if not cfg.seeds:
        raise ConfigError("need at least one seed")
    if cfg.model not in ("mlp", "logreg"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.val_samples < 0 or cfg.val_samples >= cfg.train_samples:
        raise ConfigError("val_samples must be in [0, train_samples)")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def parse_config(file: str | os.PathLike | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a config from preset, then file, then overrides (later wins).

    Unknown keys are rejected. Values may be strings (as read from a file or
    the command line) or already-typed Python values.
    """
    raw: dict = {}
    if file is not None:
        raw.update(read_config_file(file))
    overrides = {k.replace("-", "_"): v for k, v in (overrides or {}).items() if v is not None}
    raw.update(overrides)
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values: dict = {}
    name = raw.get("preset")
    if name:
        try:
            values.update(preset(str(name).strip()))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    values.update({k: _convert(k, v) for k, v in raw.items()})
    return validate(ExperimentConfig(**values))


# ---------------------------------------------------------------- accounting


def predicted_bytes_per_epoch(
    params: int, samples: int, n: int, batch: int, topology: str | MixingMatrix, compressor: str | CompressorSpec
) -> float:
    """Megabytes each agent sends per epoch: iterations x out-degree x message size / 1e6."""
    w = topology if isinstance(topology, MixingMatrix) else parse_topology(topology, n)
    spec = compressor if isinstance(compressor, CompressorSpec) else parse_compressor(compressor)
    return predicted_bytes_int(params, samples, n, batch, w, spec) / 1e6


def predicted_bytes_int(params: int, samples: int, n: int, batch: int, w: MixingMatrix, spec: CompressorSpec) -> int:
    iterations = samples // (batch * n)
    return iterations * w.out_degree(0) * bytes_for_dim(spec, params)


# ---------------------------------------------------------------- runs


def rng_stream(seed: int, purpose: str, agent: int = -1) -> np.random.Generator:
    """Independent generator keyed by ``(seed, purpose, agent)``."""
    tag = zlib.crc32(purpose.encode())
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag, agent + 1)))


def build_task(cfg: ExperimentConfig) -> tuple[ModelSpec, Dataset, Dataset]:
    """Model plus (train, evaluation) datasets; evaluation is the validation split when requested."""
    if cfg.train_path:
        train = load_dataset(cfg.train_path, cfg.data_format, labels_path=cfg.train_labels)
        if not cfg.test_path:
            raise ConfigError("train_path given without test_path")
        test = load_dataset(cfg.test_path, cfg.data_format, labels_path=cfg.test_labels, num_classes=train.num_classes)
    else:
        full = generate_synthetic_classification(
            cfg.data_seed, cfg.train_samples + cfg.test_samples, cfg.input_dim, cfg.classes, cfg.separation
        )
        train, test = full.split(cfg.train_samples)
    if cfg.val_samples:
        train, test = train.split(len(train) - cfg.val_samples)
    dims = [train.input_dim, *(cfg.hidden if cfg.model == "mlp" else ()), train.num_classes]
    return ModelSpec(cfg.model, dims), train, test


def run_seed(cfg: ExperimentConfig, seed: int) -> list[MetricsRecord]:
    """Simulate one seed; returns one record per epoch."""
    return train_seed(cfg, seed)[0]


def train_seed(cfg: ExperimentConfig, seed: int) -> tuple[list[MetricsRecord], np.ndarray | None]:
    """Like :func:`run_seed`, also returning the final per-agent parameters.

    Gossip-only runs have no model, so their parameters come back as ``None``.
    """
    model, train, test = build_task(cfg)
    w = cfg.mixing_matrix()
    spec = cfg.compressor_spec
    if cfg.topk_scope == "layer" and spec.kind == "top_k":
        spec = dataclasses.replace(spec, segments=model.tensor_sizes)
    hp = cfg.hyper
    opt = cfg.optimizer
    n = w.n
    iterations = len(train) // (cfg.batch * n)
    if iterations < 1:
        raise ConfigError(f"{len(train)} samples cannot fill one batch of {cfg.batch} on each of {n} agents")

    if cfg.algorithm.startswith("gossip_only"):
        return _run_gossip_only(cfg, seed, model.param_count, w, spec, hp, iterations), None

    shards = partition_iid(train, n, seed=int(rng_stream(seed, "partition").integers(2**31)))
    x0 = init_params(model, rng_stream(seed, "init"))
    state = init_learner_state(np.tile(x0, (n, 1)))
    batch_rngs = [rng_stream(seed, "batches", i) for i in range(n)]
    ledger = BytesLedger(n)
    feats, labels = train.features, train.labels

    records = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = lr_schedule(opt, epoch)
        orders = [rng.permutation(shard)[: iterations * cfg.batch] for rng, shard in zip(batch_rngs, shards.shards)]
        losses = np.zeros((iterations, n))
        for t in range(iterations):

            def grad_fn(i, x, t=t):
                idx = orders[i][t * cfg.batch : (t + 1) * cfg.batch]
                loss, g = forward_backward(model, x, feats[idx], labels[idx])
                losses[t, i] = loss
                return g

            state, sent = run_round(cfg.algorithm, state, w, spec, hp, grad_fn, lr, opt)
            ledger.charge(sent)
        ledger.close_epoch()
        if not np.all(np.isfinite(state.params)):
            raise FloatingPointError(f"parameters diverged in epoch {epoch + 1}")
        acc, _ = evaluate_consensus_model(state.params, model, test.features, test.labels)
        records.append(
            MetricsRecord(
                run_id=cfg.run_id,
                seed=seed,
                epoch=epoch + 1,
                lr=lr,
                train_loss=float(losses.mean()),
                test_accuracy=acc,
                consensus_distance=consensus_distance(state.params),
                mb_transmitted_cumulative=ledger.mb_per_agent(),
                wall_seconds=round(time.perf_counter() - t0, 3) if cfg.timing else 0.0,
            )
        )
        log.debug("%s seed=%d epoch=%d acc=%.4f", cfg.run_id, seed, epoch + 1, acc)
    return records, state.params


def _run_gossip_only(cfg, seed, dim, w, spec, hp, iterations) -> list[MetricsRecord]:
    """Pure averaging of standard-normal vectors; one "epoch" is ``iterations`` rounds."""
    state = init_gossip_state(rng_stream(seed, "gossip-init").standard_normal((w.n, dim)))
    ledger = BytesLedger(w.n)
    records = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        for _ in range(iterations):
            if cfg.algorithm == "gossip_only_choco":
                state, sent = choco_gossip_round(state, w, spec, hp.gamma)
            else:
                state, sent = adagossip_round(state, w, spec, hp)
            ledger.charge(sent)
        ledger.close_epoch()
        records.append(
            MetricsRecord(
                run_id=cfg.run_id,
                seed=seed,
                epoch=epoch + 1,
                lr=0.0,
                train_loss=math.nan,
                test_accuracy=math.nan,
                consensus_distance=consensus_distance(state),
                mb_transmitted_cumulative=ledger.mb_per_agent(),
                wall_seconds=round(time.perf_counter() - t0, 3) if cfg.timing else 0.0,
            )
        )
    return records


def _safe_run(args) -> tuple[int, list[MetricsRecord], str | None]:
    cfg, seed = args
    try:
        return seed, run_seed(cfg, seed), None
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        log.warning("seed %d aborted: %s", seed, exc)
        return seed, [], f"{type(exc).__name__}: {exc}"


@dataclass
class ExperimentResult:
    records: list[MetricsRecord]
    summary: dict


def summarize(cfg: ExperimentConfig, per_seed: Sequence[tuple[int, list[MetricsRecord], str | None]]) -> dict:
    finals = [recs[-1] for _, recs, err in per_seed if err is None and recs]
    accs = np.array([r.test_accuracy for r in finals])
    dists = np.array([r.consensus_distance for r in finals])
    return {
        "run_id": cfg.run_id,
        "seeds": [s for s, _, _ in per_seed],
        "completed": len(finals),
        "mean_acc": float(accs.mean()) if len(accs) else math.nan,
        "std_acc": float(accs.std(ddof=1)) if len(accs) > 1 else math.nan,
        "mean_consensus_distance": float(dists.mean()) if len(dists) else math.nan,
        "errors": {s: err for s, _, err in per_seed if err is not None},
    }


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run every seed in ``cfg.seeds``; seeds may run in worker processes.

    Records come back in seed-list order whatever the worker count, and the
    summary holds the mean and sample std of final-epoch accuracy.
    """
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, s) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(_safe_run, jobs))
    else:
        per_seed = [_safe_run(j) for j in jobs]
    records = [r for _, recs, _ in per_seed for r in recs]
    result = ExperimentResult(records, summarize(cfg, per_seed))
    if cfg.out:
        write_metrics_csv(records, cfg.out, cfg)
    return result


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


_EXECUTION_KEYS = frozenset({"out", "workers"})


def metrics_csv_text(records: Iterable[MetricsRecord], cfg: ExperimentConfig | None = None) -> str:
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    if cfg is not None:
        # config embedded so the file alone can be replayed; execution-only
        # keys are left out so the bytes do not depend on where or how it ran
        for line in cfg.to_text().splitlines():
            if line.partition("=")[0] not in _EXECUTION_KEYS:
                buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_FIELDS)
    for r in records:
        writer.writerow([_fmt(getattr(r, f)) for f in METRIC_FIELDS])
    return buf.getvalue()


def write_metrics_csv(records: Iterable[MetricsRecord], path: str | os.PathLike, cfg: ExperimentConfig | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv_text(records, cfg))


def read_metrics_csv(path: str | os.PathLike) -> tuple[list[MetricsRecord], dict]:
    """Records plus the embedded config keys."""
    config, rows = {}, []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_SCHEMA:
        raise ValueError(f"{path}: missing schema line {CSV_SCHEMA!r}")
    body = []
    for line in lines[1:]:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            config[k] = v
        else:
            body.append(line)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != METRIC_FIELDS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    for row in reader:
        rows.append(
            MetricsRecord(
                run_id=row["run_id"],
                seed=int(row["seed"]),
                epoch=int(row["epoch"]),
                **{k: float(row[k]) for k in METRIC_FIELDS[3:]},
            )
        )
    return rows, config


SWEEP_AXES = ("beta", "agents", "gamma")


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence, out: str | os.PathLike | None = None) -> list[dict]:
    """Rerun ``cfg`` for each value on ``axis``; returns rows ``{value, mean_acc, std_acc}``.

    For a gamma sweep the row with the best mean accuracy is flagged ``best``.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    for v in values:
        sub = cfg.replace(**{axis: v, "out": None})
        summary = run_experiment(sub).summary
        rows.append({"value": v, "mean_acc": summary["mean_acc"], "std_acc": summary["std_acc"],
                     "mean_consensus_distance": summary["mean_consensus_distance"]})
    if axis == "gamma":
        scores = [r["mean_acc"] for r in rows]
        best = int(np.nanargmax(scores)) if not all(math.isnan(s) for s in scores) else 0
        for k, r in enumerate(rows):
            r["best"] = k == best
    if out:
        write_sweep_csv(rows, out, axis)
    return rows


def write_sweep_csv(rows: list[dict], path, axis: str) -> None:
    cols = ["value", "mean_acc", "std_acc", "mean_consensus_distance"] + (["best"] if rows and "best" in rows[0] else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# adagossip-sweep v1 axis={axis}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for r in rows:
            writer.writerow([_fmt(r[c]) for c in cols])
