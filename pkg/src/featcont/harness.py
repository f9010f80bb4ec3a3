"""Configuration-driven experiment runs.

A run builds (or loads) a paired dataset, trains the small CNN for a number
of epochs while the continuation schedule moves alpha, evaluates after every
epoch on both test variants (full images and focused images), and writes a
metrics CSV plus a short summary.  Everything is deterministic in
(config, seed): repeating a run reproduces the CSV byte for byte.
"""

from __future__ import annotations

import hashlib
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from . import datasets as ds
from .augment import augmented_epoch
from .network import (
    Network,
    NonFiniteLossError,
    OptimizerConfig,
    default_digit_net,
    forward,
    init_network,
    loss_and_grads,
    optimizer_step,
    save_network,
)
from .rng import TAG_SUBSET, KeyedRng
from .schedule import alpha_at, parse_schedule
from .streams import PairedDataset, StreamConfig, epoch_stream, shuffled_indices

EXPERIMENTS = ("colored-mnist", "augment-demo", "composite-demo")

METRICS_HEADER = "epoch,alpha,train_loss,test_acc_full,test_acc_focused,wall_ms"
COMPARISON_HEADER = "policy,best_acc,avg_last10_acc"

_TAG_TEST_SET = 102


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class NumericalAbortError(RuntimeError):
    """Training hit a non-finite loss; carries epoch/batch context."""

    def __init__(self, epoch: int, batch: int, sample: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}, item {sample}")
        self.epoch = epoch
        self.batch = batch
        self.sample = sample


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "colored-mnist"
    # dataset
    sigma2: float = 0.02
    train_size: int = 8000
    test_size: int = 2500
    palette_seed: int = 0
    mnist_images: str | None = None  # IDX paths; procedural digits when unset
    mnist_labels: str | None = None
    dataset: str | None = None  # directory of a synthesized container to load
    # strategy / augmentation
    strategy: str = "blending"
    augment: str = "mixup"
    lambda_dist: str = "uniform"
    beta_param: float = 1.0
    # schedule
    schedule: str = "linear"
    # optimizer
    optimizer: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 5e-4
    # training
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    # outputs
    metrics_out: str | None = None
    summary_out: str | None = None
    model_out: str | None = None
    timing: bool = False  # real wall_ms in the CSV breaks byte-reproducibility

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("train_size and test_size must be >= 1")
        try:
            parse_schedule(self.schedule)
            StreamConfig(self.strategy, 0.0, 0, self.batch_size)
            self.optimizer_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.augment not in ("mixup", "cutmix"):
            raise ConfigError(f"augment must be mixup or cutmix, got {self.augment!r}")
        if self.lambda_dist not in ("uniform", "beta"):
            raise ConfigError(f"lambda_dist must be uniform or beta, got {self.lambda_dist!r}")
        if (self.mnist_images is None) != (self.mnist_labels is None):
            raise ConfigError("mnist_images and mnist_labels must be given together")
        return self

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            kind=self.optimizer,
            learning_rate=self.lr,
            momentum=self.momentum,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
        )

    def digest(self) -> str:
        """Digest of the scientific fields (outputs and telemetry excluded)."""
        skip = {"metrics_out", "summary_out", "model_out", "timing"}
        lines = [f"{k}={v!r}" for k, v in sorted(asdict(self).items()) if k not in skip]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


# ---------------------------------------------------------------------------
# config files

def parse_config_file(path) -> dict[str, str]:
    """UTF-8 key=value lines; '#' starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    if ftype in ("int", int):
        return int(raw)
    if ftype in ("float", float):
        return float(raw)
    if ftype in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected true/false, got {raw!r}")
    return raw


def config_from(values: dict[str, str], overrides: dict[str, object] | None = None) -> RunConfig:
    """RunConfig from config-file values plus (CLI) overrides on top."""
    kwargs: dict[str, object] = {}
    for key, raw in values.items():
        name = key.replace("-", "_")
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[name] = _convert(name, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    if overrides:
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kwargs).validate()


# ---------------------------------------------------------------------------
# datasets

@dataclass
class ExperimentData:
    train: PairedDataset
    test: PairedDataset
    meta: dict = field(default_factory=dict)


def build_datasets(cfg: RunConfig) -> ExperimentData:
    """Materialize the run's train/test pairs according to the config."""
    if cfg.dataset is not None:
        root = Path(cfg.dataset)
        train = ds.load_paired(root / "train.bin")
        test = ds.load_paired(root / "test.bin")
        return ExperimentData(train, test, {"source": str(root)})

    if cfg.experiment == "composite-demo":
        train = ds.make_composite_set(cfg.train_size, cfg.seed)
        test_seed = KeyedRng(cfg.seed, _TAG_TEST_SET).next_u64()
        test = ds.make_composite_set(cfg.test_size, test_seed)
        return ExperimentData(train, test, {"source": "composite"})

    palette = ds.make_palette(cfg.palette_seed, cfg.sigma2)
    if cfg.mnist_images is not None:
        raw = ds.load_raw_mnist(cfg.mnist_images, cfg.mnist_labels)
        source = "idx"
    else:
        raw = ds.synthetic_digits(cfg.train_size + cfg.test_size, cfg.seed)
        source = "procedural"

    if cfg.experiment == "colored-mnist":
        train_set, test_set = ds.build_colored_mnist(raw, palette, cfg.train_size, cfg.test_size, cfg.seed)
        return ExperimentData(train_set.pairs, test_set.pairs, {"source": source, "palette": palette})

    # augment-demo: colors carry no class signal on either side
    perm = np.asarray(KeyedRng(cfg.seed, TAG_SUBSET).shuffled(len(raw)), dtype=np.int64)
    train_pairs = ds.colorize_subset(raw, perm[: cfg.train_size], palette, ds.TEST_UNBIASED)
    test_pairs = ds.colorize_subset(raw, perm[cfg.train_size : cfg.train_size + cfg.test_size], palette, ds.TEST_UNBIASED)
    return ExperimentData(train_pairs, test_pairs, {"source": source, "palette": palette})


# ---------------------------------------------------------------------------
# metrics

@dataclass
class MetricsRecord:
    epoch: int
    alpha: float
    train_loss: float
    test_acc_full: float
    test_acc_focused: float
    wall_ms: int


@dataclass
class Summary:
    best_acc: float
    avg_last10_acc: float
    config_digest: str


def metrics_to_csv(records: list[MetricsRecord]) -> str:
    lines = [METRICS_HEADER]
    for r in records:
        lines.append(
            f"{r.epoch},{r.alpha!r},{r.train_loss!r},{r.test_acc_full!r},{r.test_acc_focused!r},{r.wall_ms}"
        )
    return "\n".join(lines) + "\n"


def read_metrics_csv(path) -> list[MetricsRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ds.DataError(f"{path}: unexpected metrics header")
    records = []
    for line in lines[1:]:
        e, a, tl, af, ag, wm = line.split(",")
        records.append(MetricsRecord(int(e), float(a), float(tl), float(af), float(ag), int(wm)))
    return records


def summarize(records: list[MetricsRecord], cfg: RunConfig) -> Summary:
    """Best and trailing-window accuracy on the full test variant."""
    accs = [r.test_acc_full for r in records]
    tail = accs[-10:]
    return Summary(
        best_acc=max(accs),
        avg_last10_acc=float(np.mean(tail)),
        config_digest=cfg.digest(),
    )


def summary_to_text(s: Summary) -> str:
    return f"best_acc={s.best_acc!r}\navg_last10_acc={s.avg_last10_acc!r}\nconfig_digest={s.config_digest}\n"


# ---------------------------------------------------------------------------
# training

def evaluate(net: Network, images: np.ndarray, labels: np.ndarray, batch_size: int = 128) -> float:
    """Fraction of argmax-correct predictions; argmax ties resolve to the
    lowest class index.  Pure: repeated calls give identical results."""
    n = len(images)
    if n == 0:
        raise ds.DataError("empty evaluation set")
    labels = np.asarray(labels, dtype=np.int64)
    correct = 0
    for start in range(0, n, batch_size):
        logits = forward(net, np.asarray(images[start : start + batch_size], dtype=np.float64))
        correct += int((np.argmax(logits, axis=1) == labels[start : start + batch_size]).sum())
    return correct / n


def _hard_batches(
    images: np.ndarray, labels: np.ndarray, seed: int, epoch: int, batch_size: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    perm = shuffled_indices(len(images), seed, epoch)
    for start in range(0, len(images), batch_size):
        idx = perm[start : start + batch_size]
        yield np.asarray(images[idx], dtype=np.float64), labels[idx].copy()


@dataclass
class RunResult:
    records: list[MetricsRecord]
    summary: Summary
    net: Network


def run(cfg: RunConfig, data: ExperimentData | None = None, log=None) -> RunResult:
    """Execute one training run; see the module docstring for the contract."""
    cfg.validate()
    log = log if log is not None else sys.stderr
    if data is None:
        data = build_datasets(cfg)
    schedule = parse_schedule(cfg.schedule)
    opt = cfg.optimizer_config()
    channels = data.train.x0.shape[1]
    input_shape = tuple(data.train.x0.shape[1:])
    num_classes = int(max(data.train.labels.max(), data.test.labels.max())) + 1
    net = init_network(_net_for(channels, num_classes), input_shape, seed=cfg.seed)

    records: list[MetricsRecord] = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        alpha = alpha_at(schedule, epoch, cfg.epochs)
        if cfg.experiment == "augment-demo":
            batches = _hard_batches(data.train.x1, data.train.labels, cfg.seed, epoch, cfg.batch_size)
            stream = (
                (mb.images, mb.targets())
                for mb in augmented_epoch(
                    batches, alpha, cfg.augment, cfg.seed, epoch,
                    lambda_dist=cfg.lambda_dist, beta_param=cfg.beta_param,
                )
            )
        else:
            scfg = StreamConfig(cfg.strategy, alpha, cfg.seed, cfg.batch_size)
            stream = epoch_stream(data.train, scfg, epoch)

        loss_sum = 0.0
        seen = 0
        for batch_index, (images, targets) in enumerate(stream):
            try:
                loss, grads = loss_and_grads(net, images, targets)
            except NonFiniteLossError as exc:
                raise NumericalAbortError(epoch, batch_index, exc.sample_index) from exc
            optimizer_step(net, grads, opt)
            loss_sum += loss * len(images)
            seen += len(images)

        acc_full = evaluate(net, data.test.x1, data.test.labels)
        acc_focused = evaluate(net, data.test.x0, data.test.labels)
        elapsed = time.perf_counter() - t0
        wall_ms = int(round(elapsed * 1000)) if cfg.timing else 0
        records.append(MetricsRecord(epoch, alpha, loss_sum / seen, acc_full, acc_focused, wall_ms))
        if log:
            print(
                f"[{cfg.experiment} seed={cfg.seed}] epoch {epoch + 1}/{cfg.epochs} "
                f"alpha={alpha:.3f} loss={loss_sum / seen:.4f} "
                f"acc_full={acc_full:.4f} acc_focused={acc_focused:.4f} ({elapsed:.1f}s)",
                file=log,
                flush=True,
            )

    summary = summarize(records, cfg)
    if cfg.metrics_out:
        Path(cfg.metrics_out).write_text(metrics_to_csv(records), encoding="utf-8")
    if cfg.summary_out:
        Path(cfg.summary_out).write_text(summary_to_text(summary), encoding="utf-8")
    if cfg.model_out:
        save_network(net, cfg.model_out)
    return RunResult(records, summary, net)


def _net_for(channels: int, num_classes: int):
    specs = list(default_digit_net(channels))
    if num_classes != 10:
        from .network import Dense

        specs[-1] = Dense(num_classes)
    return tuple(specs)


# ---------------------------------------------------------------------------
# policy comparison and dataset synthesis

def compare_policies(
    base: RunConfig, policies: list[str], data: ExperimentData | None = None, log=None
) -> tuple[list[tuple[str, float, float]], list[str]]:
    """Run each schedule policy on shared data/seed.

    Returns (rows, errors); failed policies contribute nan rows and an error
    string instead of aborting the whole comparison.
    """
    if len(policies) < 2:
        raise ConfigError(f"need at least 2 policies, got {len(policies)}")
    for p in policies:
        try:
            parse_schedule(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    base.validate()
    if data is None:
        data = build_datasets(base)
    rows: list[tuple[str, float, float]] = []
    errors: list[str] = []
    for policy in policies:
        cfg = replace(base, schedule=policy, metrics_out=None, summary_out=None, model_out=None)
        try:
            result = run(cfg, data=data, log=log)
            rows.append((policy, result.summary.best_acc, result.summary.avg_last10_acc))
        except Exception as exc:  # partial results are still reported
            rows.append((policy, float("nan"), float("nan")))
            errors.append(f"{policy}: {exc}")
    return rows, errors


def comparison_to_csv(rows: list[tuple[str, float, float]]) -> str:
    lines = [COMPARISON_HEADER]
    for policy, best, avg in rows:
        lines.append(f"{policy},{best!r},{avg!r}")
    return "\n".join(lines) + "\n"


def synth_dataset(cfg: RunConfig, out_dir) -> Path:
    """Persist the config's paired dataset plus a key=value manifest."""
    cfg.validate()
    data = build_datasets(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_sha = ds.save_paired(data.train, out / "train.bin")
    test_sha = ds.save_paired(data.test, out / "test.bin")
    shape = "x".join(str(d) for d in data.train.x0.shape[1:])
    lines = [
        f"experiment={cfg.experiment}",
        f"sigma2={cfg.sigma2!r}",
        f"palette_seed={cfg.palette_seed}",
        f"seed={cfg.seed}",
        f"source={data.meta.get('source', 'procedural')}",
        f"train_count={len(data.train)}",
        f"test_count={len(data.test)}",
        f"image_shape={shape}",
        f"train_sha256={train_sha}",
        f"test_sha256={test_sha}",
        "size_defaults=desk-scale toolkit choices, not taken from any published setup",
        f"config_digest={cfg.digest()}",
    ]
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def read_manifest(path) -> dict[str, str]:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            values[key] = value
    return values
