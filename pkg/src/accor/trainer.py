"""Training and evaluation loops, the alpha ablation and multi-seed runs."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .ctensor import backward, fft
from .frames import Dataset
from .loss import LossConfig, hybrid_loss
from .model.network import AccorNetwork, ModelConfig, forward, predict_logits
from .optim import make_optimizer

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite or exceeded the divergence threshold."""

    def __init__(self, message: str, epoch: int, step: int, loss: float):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.loss = loss


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    shuffle: bool = True
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        return d


@dataclass
class Metrics:
    overall_accuracy: float
    per_class_accuracy: np.ndarray
    confusion_matrix: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int, loss_history=()) -> "Metrics":
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (y_true, y_pred), 1)
        support = cm.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            per_class = np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)
        overall = float(np.trace(cm) / cm.sum()) if cm.sum() else float("nan")
        return cls(overall, per_class, cm, list(loss_history))


def profiles_for(dataset: Dataset, ids=None, chunk: int = 256) -> np.ndarray:
    """Range profiles (complex128) of the selected frames."""
    ids = np.arange(len(dataset)) if ids is None else np.asarray(ids, dtype=np.int64)
    out = np.empty((len(ids),) + dataset.data.shape[1:], dtype=np.complex128)
    for start in range(0, len(ids), chunk):
        sel = ids[start : start + chunk]
        out[start : start + len(sel)] = fft(dataset.data[sel].astype(np.complex128), axis=-1)
    return out


def batch_indices(n: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True) -> list[np.ndarray]:
    """Mini-batches for one epoch; a trailing singleton joins the previous batch."""
    order = np.random.default_rng([seed, epoch]).permutation(n) if shuffle else np.arange(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def train(
    network: AccorNetwork,
    dataset: Dataset,
    split,
    config: TrainConfig,
    profiles: np.ndarray | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[AccorNetwork, list[float]]:
    """Mini-batch training on the hybrid loss; updates ``network`` in place.

    ``split`` is ``(train_ids, test_ids)`` or just the train ids.  Passing
    precomputed ``profiles`` for the train ids skips the range transform.
    Returns the network and the per-epoch mean training loss.
    """
    train_ids = np.asarray(split[0] if isinstance(split, tuple) else split, dtype=np.int64)
    if len(train_ids) == 0:
        raise ValueError("training split is empty")
    x = profiles if profiles is not None else profiles_for(dataset, train_ids)
    return fit_profiles(network, x, dataset.labels[train_ids], dataset.n_classes, config, on_epoch)


def fit_profiles(
    network: AccorNetwork,
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    config: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[AccorNetwork, list[float]]:
    """Training loop over in-memory range profiles ``x`` with labels ``y``."""
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("training split is empty")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} profiles but {len(y)} labels")
    bad = np.nonzero(~np.isfinite(x).reshape(len(x), -1).all(axis=1))[0]
    if len(bad):
        raise ValueError(f"training input {bad[0]} contains non-finite samples")
    if config.batch_size > len(y):
        raise ValueError(f"batch_size {config.batch_size} exceeds train size {len(y)}")
    weights = config.loss.class_weights
    if weights is not None and len(weights) != n_classes:
        raise ValueError(f"expected {n_classes} class weights, got {len(weights)}")
    opt = make_optimizer(config.optimizer, network.params, config.learning_rate)
    history: list[float] = []
    for epoch in range(config.epochs):
        total = 0.0
        for step, idx in enumerate(batch_indices(len(y), config.batch_size, config.seed, epoch, config.shuffle)):
            logits, emb = forward(network, x[idx], training=True)
            if not (np.all(np.isfinite(logits.data)) and np.all(np.isfinite(emb.data))):
                raise TrainingDivergedError(
                    f"non-finite network output at epoch {epoch}, step {step}", epoch, step, float("nan")
                )
            loss = hybrid_loss(logits, emb, y[idx], config.loss)
            value = float(loss.data)
            if not math.isfinite(value) or abs(value) > config.divergence_threshold:
                raise TrainingDivergedError(
                    f"loss {value!r} at epoch {epoch}, step {step}", epoch, step, value
                )
            backward(loss)
            opt.step()
            total += value * len(idx)
        history.append(total / len(y))
        log.info("epoch %d loss %.6f", epoch, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return network, history


def evaluate(
    network: AccorNetwork,
    dataset: Dataset,
    test_ids=None,
    profiles: np.ndarray | None = None,
    batch_size: int = 64,
) -> Metrics:
    """Inference-mode accuracy; argmax ties go to the lowest class index."""
    ids = np.arange(len(dataset)) if test_ids is None else np.asarray(test_ids, dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("test split is empty")
    x = profiles if profiles is not None else profiles_for(dataset, ids)
    pred = np.argmax(predict_logits(network, x, batch_size), axis=1)
    return Metrics.from_predictions(dataset.labels[ids], pred, dataset.n_classes)


@dataclass
class RunResult:
    run_id: int
    alpha: float
    seed: int
    band: int
    metrics: Metrics
    network: AccorNetwork | None = None


def run_once(
    dataset: Dataset,
    split,
    model_config: ModelConfig,
    config: TrainConfig,
    run_id: int = 0,
    keep_network: bool = False,
    cache: dict | None = None,
) -> RunResult:
    """Initialise from ``config.seed``, train, evaluate on the test split."""
    train_ids, test_ids = split
    if cache is None:
        cache = {}
    if "train" not in cache:
        cache["train"] = profiles_for(dataset, train_ids)
        cache["test"] = profiles_for(dataset, test_ids)
    net = AccorNetwork.init(model_config, seed=config.seed)
    _, history = train(net, dataset, split, config, profiles=cache["train"])
    metrics = evaluate(net, dataset, test_ids, profiles=cache["test"])
    metrics.loss_history = history
    return RunResult(
        run_id=run_id,
        alpha=config.loss.alpha,
        seed=config.seed,
        band=int(dataset.band),
        metrics=metrics,
        network=net if keep_network else None,
    )


def _run_all(jobs, n_jobs: int):
    if n_jobs == 1:
        return [fn(*args) for fn, args in jobs]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for fn, args in jobs)


def ablate_alpha(
    base: TrainConfig,
    alphas: Sequence[float],
    dataset: Dataset,
    split,
    model_config: ModelConfig,
    n_jobs: int = 1,
) -> list[RunResult]:
    """Train one model per alpha with otherwise identical settings."""
    if not len(alphas):
        raise ValueError("at least one alpha value is required")
    cache: dict = {} if n_jobs == 1 else None
    jobs = []
    for i, a in enumerate(alphas):
        cfg = replace(base, loss=replace(base.loss, alpha=float(a)))
        jobs.append((run_once, (dataset, split, model_config, cfg, i, False, cache)))
    return _run_all(jobs, n_jobs)


@dataclass
class MultiSeedResult:
    runs: list[RunResult]
    mean_accuracy: float
    std_accuracy: float


def multi_seed_run(
    config: TrainConfig,
    n_runs: int,
    dataset: Dataset,
    split,
    model_config: ModelConfig,
    n_jobs: int = 1,
) -> MultiSeedResult:
    """Train/evaluate with seeds ``config.seed .. config.seed + n_runs - 1``.

    The split is shared; only initialisation and batch order change.  The
    reported spread is the sample standard deviation (0 for one run).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    cache: dict = {} if n_jobs == 1 else None
    jobs = [
        (run_once, (dataset, split, model_config, replace(config, seed=config.seed + i), i, False, cache))
        for i in range(n_runs)
    ]
    runs = _run_all(jobs, n_jobs)
    acc = np.array([r.metrics.overall_accuracy for r in runs])
    std = float(np.std(acc, ddof=1)) if n_runs > 1 else 0.0
    return MultiSeedResult(runs, float(acc.mean()), std)


# -- reports -----------------------------------------------------------------------
def format_alpha_table(rows: Sequence[RunResult]) -> str:
    """Text table with one ``alpha = ...`` row per ablation point."""
    bands = sorted({r.band for r in rows})
    head = ["ACCOR Model Setting"] + [f"Accuracy {b} GHz" for b in bands]
    body = []
    for alpha in dict.fromkeys(r.alpha for r in rows):
        label = f"alpha = {alpha:g}" + (" (only CE)" if alpha == 0 else "")
        cells = [label]
        for b in bands:
            accs = [r.metrics.overall_accuracy for r in rows if r.alpha == alpha and r.band == b]
            cells.append(f"{100 * np.mean(accs):.2f} %" if accs else "-")
        body.append(cells)
    return _render(head, body)


def format_runs_table(runs: Sequence[RunResult], title: str = "Model") -> str:
    head = ["Run", "Seed", "alpha", f"Accuracy {runs[0].band} GHz" if runs else "Accuracy"]
    body = [[str(r.run_id), str(r.seed), f"{r.alpha:g}", f"{100 * r.metrics.overall_accuracy:.2f} %"] for r in runs]
    return _render(head, body)


def _render(head: list[str], body: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"

    def line(cells):
        return "| " + " | ".join(c.center(w) for c, w in zip(cells, widths)) + " |"

    return "\n".join([sep, line(head), sep] + [line(r) for r in body] + [sep]) + "\n"


def runs_to_csv(runs: Sequence[RunResult], n_classes: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["run_id", "alpha", "seed", "band", "overall_accuracy"] + [f"per_class_{c}" for c in range(n_classes)]
    )
    for r in runs:
        writer.writerow(
            [r.run_id, repr(float(r.alpha)), r.seed, r.band, repr(float(r.metrics.overall_accuracy))]
            + [repr(float(v)) for v in r.metrics.per_class_accuracy]
        )
    return buf.getvalue()
