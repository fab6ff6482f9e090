"""Optimization loop (Adam with decoupled weight decay), per-epoch metrics,
multi-seed repetition and grid search with k-fold cross validation.

Each record row is one training epoch (numbered from 0); train-side metrics
are running means over that epoch's minibatches, so row 0 already reflects
the nearly-untrained model and NFE growth can be read directly off the log.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import tensorgrad as tg
from .tensorgrad import CompGraph, ParamSet, Tensor, backward
from .odeint import DivergenceError, SolverConfig, StepLimitError
from .data import LabeledSet, batches
from .models import Model, ModelSpec, node_forward


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    weight_decay: float = 0.0
    loss: str = "mse"           # "mse" or "cross_entropy"
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.loss not in ("mse", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None
    val_acc: float | None
    nfe_forward_mean: float
    wall_ms: float


@dataclass
class TrainRecord:
    epochs: list[EpochStats] = field(default_factory=list)
    final_params: dict[str, np.ndarray] | None = None
    error: str | None = None
    metadata: dict = field(default_factory=dict)

    CSV_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,nfe_forward_mean,wall_ms"

    def to_csv(self, path) -> None:
        def fmt(v):
            return "" if v is None else format(v, ".9g")

        with open(path, "w", newline="") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for e in self.epochs:
                fh.write(",".join([str(e.epoch), fmt(e.train_loss), fmt(e.train_acc),
                                   fmt(e.val_loss), fmt(e.val_acc),
                                   fmt(e.nfe_forward_mean), fmt(e.wall_ms)]) + "\n")

    def deterministic_rows(self) -> list[tuple]:
        """Epoch rows without wall_ms, which is the one nondeterministic field."""
        return [(e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc,
                 e.nfe_forward_mean) for e in self.epochs]

    def metric(self, name: str) -> np.ndarray:
        vals = [getattr(e, name) for e in self.epochs]
        return np.array([np.nan if v is None else v for v in vals])


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: ParamSet, state: AdamState, cfg: TrainConfig) -> None:
    """Bias-corrected Adam update with decoupled weight decay applied as
    theta <- theta * (1 - lr*wd) before the Adam step; zeros gradients after."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        if cfg.weight_decay > 0.0:
            p.data *= 1.0 - cfg.lr * cfg.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    params.zero_grad()


def _loss_and_acc(out: Tensor, targets: np.ndarray, loss_kind: str):
    if loss_kind == "mse":
        y = Tensor(np.asarray(targets, dtype=np.float64).reshape(out.shape))
        diff = out - y
        loss = tg.tmean(tg.mul(diff, diff))
        acc = float(np.mean(np.sign(out.data.reshape(-1)) == np.sign(targets)))
    else:
        labels = np.asarray(targets, dtype=np.int64)
        loss = tg.softmax_cross_entropy(out, labels)
        acc = float(np.mean(out.data.argmax(axis=1) == labels))
    return loss, acc


def evaluate(model: Model, dataset: LabeledSet, cfg: TrainConfig,
             batch_size: int | None = None) -> tuple[float, float, float]:
    """(loss, accuracy, mean forward NFE) over the dataset, no recording."""
    bs = batch_size or cfg.batch_size
    tot_loss = tot_acc = tot_nfe = 0.0
    n_batches = 0
    n = 0
    with tg.no_grad():
        for xb, yb in batches(dataset, bs):
            out, nfe = node_forward(model, Tensor(xb), cfg.solver)
            loss, acc = _loss_and_acc(out, yb, cfg.loss)
            tot_loss += loss.item() * len(xb)
            tot_acc += acc * len(xb)
            tot_nfe += nfe
            n += len(xb)
            n_batches += 1
    return tot_loss / n, tot_acc / n, tot_nfe / max(1, n_batches)


def fit(model: Model, train_set: LabeledSet, val_set: LabeledSet | None,
        cfg: TrainConfig,
        epoch_callback: Callable[[int, Model], None] | None = None) -> TrainRecord:
    """Minibatch training with one metrics row per training epoch (0-based).

    Train loss/accuracy/NFE are running means over that epoch's batches, so
    row 0 reflects the nearly-untrained model.  The optional callback fires
    once before training (index 0) and after each epoch (1..epochs), for
    feature-snapshot exports.  A StepLimit on a batch skips that batch
    (counted in metadata); a Divergence halts training and returns the
    partial record with the error field set."""
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    record = TrainRecord(metadata={"seed": cfg.seed, "kind": model.spec.kind,
                                   "p": model.spec.aug, "skipped_batches": 0})
    if model.spec.kind == "resnet":
        record.metadata["nfe_is_layer_count"] = True
    state = AdamState()
    t_start = time.perf_counter()

    if epoch_callback is not None:
        epoch_callback(0, model)
    for epoch in range(cfg.epochs):
        tot_loss = tot_acc = tot_nfe = 0.0
        n = 0
        n_batches = 0
        shuffle_seed = (cfg.seed * 1_000_003 + epoch) & 0x7FFFFFFF
        for bi, (xb, yb) in enumerate(batches(train_set, cfg.batch_size,
                                              shuffle_seed)):
            try:
                with CompGraph() as g:
                    out, nfe = node_forward(model, Tensor(xb), cfg.solver)
                    loss, acc = _loss_and_acc(out, yb, cfg.loss)
                backward(g, loss)
                adam_step(model.params, state, cfg)
            except StepLimitError:
                record.metadata["skipped_batches"] += 1
                model.params.zero_grad()
                continue
            except DivergenceError as exc:
                record.error = f"divergence at epoch {epoch} batch {bi}: {exc}"
                record.final_params = model.params.copy_values()
                return record
            tot_loss += loss.item() * len(xb)
            tot_acc += acc * len(xb)
            tot_nfe += nfe
            n += len(xb)
            n_batches += 1
        if n == 0:
            record.error = f"all batches skipped at epoch {epoch}"
            record.final_params = model.params.copy_values()
            return record
        vl = va = None
        if val_set is not None and len(val_set) > 0:
            vl, va, _ = evaluate(model, val_set, cfg)
        wall = (time.perf_counter() - t_start) * 1000.0
        record.epochs.append(EpochStats(epoch, tot_loss / n, tot_acc / n, vl, va,
                                        tot_nfe / n_batches, wall))
        if epoch_callback is not None:
            epoch_callback(epoch + 1, model)
    record.final_params = model.params.copy_values()
    return record


@dataclass
class RunAggregate:
    records: list[TrainRecord]
    failed_seeds: list[int]

    def metric_mean(self, name: str) -> np.ndarray:
        return np.mean([r.metric(name) for r in self._ok()], axis=0)

    def metric_std(self, name: str) -> np.ndarray:
        return np.std([r.metric(name) for r in self._ok()], axis=0)

    def _ok(self) -> list[TrainRecord]:
        ok = [r for r in self.records if r.error is None]
        if not ok:
            raise RuntimeError("all runs failed")
        return ok


def repeat_runs(build_model: Callable[[int], Model],
                build_data: Callable[[int], tuple[LabeledSet, LabeledSet | None]],
                cfg: TrainConfig, n_repeats: int) -> RunAggregate:
    """Repeat fit() with seeds cfg.seed + 0..n-1; failures are recorded per
    seed, not fatal."""
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    records: list[TrainRecord] = []
    failed: list[int] = []
    for i in range(n_repeats):
        seed = cfg.seed + i
        run_cfg = replace(cfg, seed=seed)
        model = build_model(seed)
        train_set, val_set = build_data(seed)
        rec = fit(model, train_set, val_set, run_cfg)
        records.append(rec)
        if rec.error is not None:
            failed.append(seed)
    return RunAggregate(records, failed)


@dataclass
class GridCellResult:
    cell: dict
    fold_losses: list[float]
    error: str | None = None

    @property
    def mean_val_loss(self) -> float:
        return float(np.mean(self.fold_losses)) if self.fold_losses else float("inf")


def _kfold(n: int, folds: int, seed: int):
    order = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(order, folds)
    for i in range(folds):
        val = parts[i]
        train = np.concatenate([parts[j] for j in range(folds) if j != i])
        yield train, val


def grid_search(grid: dict[str, Sequence], build_model: Callable[[dict, int], Model],
                dataset: LabeledSet, epochs: int, cv_folds: int = 3,
                base_cfg: TrainConfig | None = None) -> list[GridCellResult]:
    """Evaluate the Cartesian product of the grid with k-fold cross
    validation; returns results sorted by mean validation loss.

    Cell keys 'lr' and 'batch_size' override the training config; all keys are
    passed to build_model."""
    if not grid:
        raise ValueError("empty grid")
    base_cfg = base_cfg or TrainConfig()
    keys = list(grid)
    results: list[GridCellResult] = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, values))
        cfg = replace(base_cfg, epochs=epochs,
                      lr=cell.get("lr", base_cfg.lr),
                      batch_size=cell.get("batch_size", base_cfg.batch_size))
        res = GridCellResult(cell, [])
        for fold, (tr_idx, va_idx) in enumerate(_kfold(len(dataset), cv_folds,
                                                       base_cfg.seed)):
            try:
                model = build_model(cell, base_cfg.seed + fold)
                rec = fit(model, dataset.subset(tr_idx), dataset.subset(va_idx),
                          replace(cfg, seed=base_cfg.seed + fold))
                if rec.error is not None:
                    raise RuntimeError(rec.error)
                res.fold_losses.append(rec.epochs[-1].val_loss)
            except Exception as exc:  # cell marked failed, search continues
                res.error = f"fold {fold}: {exc}"
                break
        results.append(res)
    results.sort(key=lambda r: (r.error is not None, r.mean_val_loss))
    return results
