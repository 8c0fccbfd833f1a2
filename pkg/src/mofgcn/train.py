"""Datasets, the mean-squared-error objective, the training loop and metrics."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .graph import AtomGraph, AtomTypeVocab, validate
from .model import SUM, GraphBatch, ModelConfig, MofGCN

log = logging.getLogger(__name__)

DATASET_FORMAT = "mofgcn-graphs"


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------- data


@dataclass
class Dataset:
    graphs: list[AtomGraph]
    targets: np.ndarray
    vocab: AtomTypeVocab
    units: str = "dimensionless"
    sources: list[str] | None = None

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if len(self.graphs) != len(self.targets):
            raise ValueError(f"{len(self.graphs)} graphs but {len(self.targets)} targets")
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be finite")

    def __len__(self) -> int:
        return len(self.graphs)

    def subset(self, index: Sequence[int]) -> "Dataset":
        index = list(index)
        return Dataset(
            [self.graphs[k] for k in index],
            self.targets[index],
            self.vocab,
            self.units,
            [self.sources[k] for k in index] if self.sources else None,
        )


def write_jsonl(dataset: Dataset, path) -> None:
    """One header line, then one record per graph: types, edge triples, target."""
    labels = dataset.vocab.labels
    with open(path, "w") as fh:
        header = {"format": DATASET_FORMAT, "version": 1, "vocab": list(labels), "units": dataset.units}
        fh.write(json.dumps(header) + "\n")
        for k, (g, y) in enumerate(zip(dataset.graphs, dataset.targets)):
            rec = {
                "node_types": [labels[t] for t in g.node_types],
                "edges": [[i, j, r] for i, j, r in g.edges],
                "target": float(y),
            }
            if dataset.sources:
                rec["source"] = dataset.sources[k]
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> Dataset:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path}: first line is not a {DATASET_FORMAT} header")
    vocab = AtomTypeVocab(header["vocab"])
    graphs, targets, sources = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        try:
            types = [vocab.index(s) for s in rec["node_types"]]
            g = AtomGraph.from_edges(types, [tuple(e) for e in rec["edges"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad record: {exc}") from exc
        problems = validate(g)
        if problems:
            raise ValueError(f"{path}:{lineno}: invalid graph: {problems[0]}")
        graphs.append(g)
        targets.append(rec["target"])
        sources.append(rec.get("source", ""))
    return Dataset(graphs, np.array(targets), vocab, header.get("units", "dimensionless"),
                   sources if any(sources) else None)


@dataclass(frozen=True)
class Normalizer:
    shift: float
    scale: float

    @classmethod
    def fit(cls, targets: np.ndarray, center: bool = True) -> "Normalizer":
        targets = np.asarray(targets, dtype=np.float64)
        shift = float(targets.mean()) if center else 0.0
        scale = float(targets.std())
        return cls(shift, scale if scale > 0 else 1.0)

    def normalize(self, y):
        return (np.asarray(y) - self.shift) / self.scale

    def denormalize(self, z):
        return self.shift + self.scale * np.asarray(z)


# ---------------------------------------------------------------- config


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 42
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    patience: int = 20
    lr_decay: float = 1.0

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        if len(self.split) != 3 or any(f < 0 for f in self.split) or not math.isclose(sum(self.split), 1.0):
            raise ValueError(f"split fractions must be three non-negative numbers summing to 1, got {self.split}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.train_loss)

    def write_csv(self, path) -> None:
        """Losses only; wall-clock times go to :meth:`write_timings` so this file is reproducible."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "best"])
            for k, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss)):
                w.writerow([k, repr(tl), repr(vl), int(k == self.best_epoch)])

    def write_timings(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "seconds"])
            for k, s in enumerate(self.seconds):
                w.writerow([k, f"{s:.6f}"])


# ---------------------------------------------------------------- core ops


def split(dataset: Dataset, config: TrainConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle into train/val/test.

    Sizes are ``floor(f * n)`` for val and test; train takes the remainder.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    f_train, f_val, f_test = config.split
    n_val = int(math.floor(f_val * n + 1e-9))
    n_test = int(math.floor(f_test * n + 1e-9))
    n_train = n - n_val - n_test
    sizes = (n_train, n_val, n_test)
    for name, frac, size in zip(("train", "val", "test"), config.split, sizes):
        if size == 0:
            raise ValueError(f"{name} split is empty ({n} samples at fraction {frac})")
    order = np.random.default_rng(config.seed).permutation(n)
    parts = np.split(order, [n_train, n_train + n_val])
    return tuple(dataset.subset(np.sort(p)) for p in parts)


def loss(predictions, targets) -> nn.Tensor:
    """Mean squared error; differentiable in ``predictions``."""
    predictions = nn.as_tensor(predictions)
    targets = np.asarray(targets, dtype=np.float64).reshape(predictions.shape)
    if predictions.data.size == 0:
        raise ValueError("loss of an empty batch")
    return nn.mean(nn.square(nn.sub(predictions, targets)))


def fit(model_config: ModelConfig, dataset: Dataset, config: TrainConfig,
        splits: tuple[Dataset, Dataset, Dataset] | None = None) -> tuple[MofGCN, TrainHistory]:
    """Minibatch Adam on standardized targets; returns the best-validation model.

    Sum-pooled models rescale targets without centering them, so the learned
    pair functions stay in target units up to one common factor.
    """
    if list(model_config.vocab) != list(dataset.vocab.labels):
        raise ValueError(f"model vocabulary {model_config.vocab} differs from dataset vocabulary {list(dataset.vocab.labels)}")
    train, val, _ = splits if splits is not None else split(dataset, config)
    norm = Normalizer.fit(train.targets, center=model_config.pooling != SUM)
    model = MofGCN(model_config, seed=config.seed, target_shift=norm.shift, target_scale=norm.scale)
    vocab = model.vocab
    y_train = norm.normalize(train.targets)
    y_val = norm.normalize(val.targets)
    val_batch = GraphBatch.collate(val.graphs, vocab)

    rng = np.random.default_rng(config.seed + 1)
    state = nn.AdamState(learning_rate=config.learning_rate)
    history = TrainHistory()
    best_val = math.inf
    best_state = model.params.state_dict()
    stale = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train))
        batch_losses = []
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            batch = GraphBatch.collate([train.graphs[k] for k in idx], vocab)
            objective = loss(model.forward(batch), y_train[idx])
            value = objective.data.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            nn.backward(objective, model.params)
            nn.adam_step(model.params, state)
            batch_losses.append(value * len(idx))
        train_loss = float(np.sum(batch_losses) / len(order))
        val_loss = loss(model.forward(val_batch), y_val).data.item()
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.seconds.append(time.perf_counter() - t0)
        if val_loss < best_val:
            best_val = val_loss
            best_state = model.params.state_dict()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        log.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
        if stale >= config.patience:
            break
        state.learning_rate *= config.lr_decay
    model.params.load_state(best_state)
    return model, history


# ---------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    n: int
    mse: float
    rmse: float
    mae: float
    r2: float
    bin_edges: list[float]
    counts: list[int]
    units: str = "dimensionless"

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_histogram_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([repr(lo), repr(hi), c])


def error_histogram(errors: np.ndarray, bin_width: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Counts of ``prediction - target`` on bins of ``bin_width`` centred on zero.

    The bins span +-(largest |error| rounded up to a whole bin), so an exact
    predictor puts everything in the single bin around zero.
    """
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    errors = np.asarray(errors, dtype=np.float64)
    half = bin_width / 2
    reach = max(float(np.max(np.abs(errors))) if errors.size else 0.0, half)
    k = int(math.ceil((reach - half) / bin_width - 1e-12))
    edges = half + bin_width * np.arange(-k - 1, k + 1)
    counts, _ = np.histogram(errors, bins=edges)
    return edges, counts


def metrics(predictions, targets, bin_width: float = 1.0, units: str = "dimensionless") -> EvalReport:
    pred = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot evaluate an empty split")
    err = pred - y
    mse = float(np.mean(err**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(err**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    edges, counts = error_histogram(err, bin_width)
    return EvalReport(len(y), mse, math.sqrt(mse), float(np.mean(np.abs(err))), r2,
                      edges.tolist(), counts.tolist(), units)


def evaluate(model: MofGCN, data: Dataset, bin_width: float = 1.0) -> EvalReport:
    if len(data) == 0:
        raise ValueError("cannot evaluate an empty split")
    if list(model.vocab.labels) != list(data.vocab.labels):
        raise ValueError("checkpoint vocabulary does not match the dataset")
    return metrics(model.predict(data.graphs), data.targets, bin_width, data.units)
