"""Mini-batch SGD training, k-fold cross-validation, gradient checking.

The optimizer is the plain update W <- W - lr * dW with batch-averaged
gradients; everything is driven by a single seed so a (seed, data,
config) triple fully determines the trained weights.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import (ConfigError, DivergenceError, NumericDomainError,
                     ShapeError)
from .grid import (GridModel, ModelConfig, apply_gradients, backward_batch,
                   forward_batch, mse_loss)
from .kernels import make_rng
from .metrics import ConfusionCounts, auc_per_class, metric_summary


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 10
    seed: int = 0
    shuffle: bool = True
    folds: int = 5
    log_every: int = 1

    def __post_init__(self):
        # lr = 0 is allowed: it makes training the identity, which the
        # tests rely on.
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.folds < 2:
            raise ConfigError("cross-validation needs folds >= 2")


def _one_hot(labels, classes: int) -> np.ndarray:
    return np.eye(classes)[np.asarray(labels, dtype=np.int64)]


def _check_dataset_dims(model: GridModel, dataset: Dataset) -> None:
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    first = dataset.samples[0]
    grid = model.grid
    if (first.rows, first.cols) != (grid.rows, grid.cols):
        raise ShapeError(f"dataset grid {first.rows}x{first.cols} does not match "
                         f"model grid {grid.rows}x{grid.cols}")
    if first.input_dim != grid.input_dim:
        raise ShapeError(f"dataset input_dim {first.input_dim} does not match "
                         f"model input_dim {grid.input_dim}")
    if dataset.classes != model.classes:
        raise ShapeError(f"dataset has {dataset.classes} classes, model has {model.classes}")


def train(model: GridModel, dataset: Dataset, cfg: TrainConfig,
          val_dataset: Dataset | None = None, log_stream=None) -> list:
    """Train in place; returns the per-epoch mean-loss history.

    Per batch: forward every sample, average the exact gradients, apply
    one SGD step to the shared core(s) and the head. When log_stream is
    given, tab-separated lines (epoch, mean loss[, val accuracy]) are
    written every cfg.log_every epochs.
    """
    _check_dataset_dims(model, dataset)
    if val_dataset is not None and len(val_dataset):
        _check_dataset_dims(model, val_dataset)
    rng = make_rng(cfg.seed)
    n = len(dataset)
    all_values = dataset.stacked_values()
    all_targets = _one_hot(dataset.labels(), model.classes)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            values = all_values[idx]
            targets = all_targets[idx]
            try:
                y_hat, tape = forward_batch(model, values)
            except NumericDomainError as exc:
                raise DivergenceError(
                    f"non-finite activations at epoch {epoch}, batch {b}: {exc}") from exc
            batch_loss = sum(mse_loss(y_hat[i], targets[i]) for i in range(len(idx)))
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            epoch_loss += batch_loss
            core_grads, head_grads = backward_batch(model, tape, targets)
            scale = 1.0 / len(idx)
            for g in core_grads:
                g.scale_(scale)
            head_grads.scale_(scale)
            apply_gradients(model, core_grads, head_grads, cfg.learning_rate)
        mean_loss = epoch_loss / n
        history.append(mean_loss)
        if log_stream is not None and epoch % cfg.log_every == 0:
            fields = [str(epoch), f"{mean_loss:.10g}"]
            if val_dataset is not None and len(val_dataset):
                fields.append(f"{evaluate(model, val_dataset)['overall_accuracy']:.6g}")
            log_stream.write("\t".join(fields) + "\n")
    return history


def predict(model: GridModel, dataset: Dataset):
    """Class-probability scores (n, c) and argmax predictions (n,)."""
    _check_dataset_dims(model, dataset)
    scores = np.empty((len(dataset), model.classes))
    batch = 32
    values = dataset.stacked_values()
    for start in range(0, len(dataset), batch):
        y_hat, _ = forward_batch(model, values[start:start + batch])
        scores[start:start + len(y_hat)] = y_hat
    return scores, scores.argmax(axis=1)


def evaluate(model: GridModel, dataset: Dataset) -> dict:
    """Metric summary plus per-class AUC on a dataset."""
    scores, predictions = predict(model, dataset)
    labels = dataset.labels()
    counts = ConfusionCounts.from_pairs(labels, predictions, model.classes)
    report = metric_summary(counts)
    report["auc"] = auc_per_class(scores, labels)
    report["counts"] = counts
    report["scores"] = scores
    report["predictions"] = predictions
    return report


# ---------------------------------------------------------------------------
# k-fold cross-validation


@dataclass
class FoldResult:
    fold: int
    metrics: dict
    auc: list
    loss_history: list = field(default_factory=list)


def fold_indices(n: int, folds: int, seed: int):
    """Deterministic near-equal partition: a seeded permutation cut into
    folds of size n//folds, the first n%folds of them one larger."""
    if folds > n:
        raise ConfigError(f"cannot split {n} samples into {folds} folds")
    perm = make_rng(seed).permutation(n)
    base = n // folds
    sizes = [base + 1 if i < n % folds else base for i in range(folds)]
    out = []
    start = 0
    for size in sizes:
        out.append(np.sort(perm[start:start + size]))
        start += size
    return out


def kfold(model_cfg: ModelConfig, dataset: Dataset, cfg: TrainConfig,
          log_stream=None):
    """Hold each fold out once; re-initialize the model per fold from a
    fold-indexed seed. Returns (fold results, {metric: (mean, std)})
    with the population std."""
    test_folds = fold_indices(len(dataset), cfg.folds, cfg.seed)
    results = []
    for fold, test_idx in enumerate(test_folds):
        train_mask = np.ones(len(dataset), dtype=bool)
        train_mask[test_idx] = False
        train_set = dataset.subset(np.flatnonzero(train_mask))
        test_set = dataset.subset(test_idx)
        model = model_cfg.build(np.random.default_rng((cfg.seed, fold)))
        fold_cfg = replace(cfg, seed=cfg.seed * 100003 + fold + 1)
        history = train(model, train_set, fold_cfg)
        report = evaluate(model, test_set)
        metrics = dict(report["macro"])
        metrics["overall_accuracy"] = report["overall_accuracy"]
        results.append(FoldResult(fold=fold, metrics=metrics, auc=report["auc"],
                                  loss_history=history))
        if log_stream is not None:
            log_stream.write(f"fold {fold}\taccuracy {metrics['overall_accuracy']:.4f}\n")
    summary = {}
    for name in results[0].metrics:
        vals = [r.metrics[name] for r in results]
        if any(v is None for v in vals):
            summary[name] = (None, None)
        else:
            summary[name] = (float(np.mean(vals)), float(np.std(vals)))
    return results, summary


# ---------------------------------------------------------------------------
# Gradient checking


def precise_loss(model: GridModel, values, y, dtype=np.longdouble):
    """The network loss evaluated in extended precision (dtype scalar).

    A straight-line re-implementation of the rollout, head, and loss
    (no tape) run in ``dtype``. Finite differencing against this keeps
    the rounding-noise floor around eps(dtype)*|loss|/step instead of
    the float64 floor, which would swamp small gradient entries. Gate
    activations are the raw formulas (no open-interval clamping), so
    only unsaturated regimes (|pre-activation| < ~35) are comparable to
    the production forward - which is all a gradient probe ever visits.
    """
    from .grid import _aggregate, _neighbor_matrix

    grid = model.grid
    rows, cols, g = grid.rows, grid.cols, grid.hidden_dim
    q = grid.neighbor_outputs
    vals = np.asarray(values).astype(dtype)
    if vals.ndim != 4:
        raise ShapeError(f"values must be (J, K, T, m), got shape {vals.shape}")
    steps = vals.shape[2]

    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    finals = []
    for d, core in enumerate(model.cores):
        p = {name: arr.astype(dtype) for name, arr in core.named_arrays()}
        h = np.zeros((1, rows, cols, g), dtype=dtype)
        s = np.zeros_like(h)
        order = range(steps - 1, -1, -1) if d == 1 else range(steps)
        for t in order:
            n = _neighbor_matrix(h, q).reshape(-1, 4 * q)
            x = vals[:, :, t, :].reshape(-1, grid.input_dim)
            hp, sp = h.reshape(-1, g), s.reshape(-1, g)
            pre = {}
            for gate, w, wn, u in (("i", "W_i", "W_Ni", "U_i"), ("f", "W_f", "W_Nf", "U_f"),
                                   ("o", "W_o", "W_No", "U_o"), ("g", "W_s", "W_Ns", "U_s")):
                z = x @ p[w].T + n @ p[wn].T + hp @ p[u].T
                if core.use_bias:
                    z = z + p["b_" + ("s" if gate == "g" else gate)]
                pre[gate] = z
            i, f, o = sig(pre["i"]), sig(pre["f"]), sig(pre["o"])
            s_flat = f * sp + i * np.tanh(pre["g"])
            h = (o * np.tanh(s_flat)).reshape(1, rows, cols, g)
            s = s_flat.reshape(1, rows, cols, g)
        finals.append(h)
    big_h = _aggregate(grid, finals)[0]
    head = model.head
    ff = sig(head.W_ff.astype(dtype) @ big_h + head.b_ff.astype(dtype))
    z_out = head.W_out.astype(dtype) @ ff + head.b_out.astype(dtype)
    e = np.exp(z_out - z_out.max())
    y_hat = e / e.sum()
    diff = np.asarray(y, dtype=dtype) - y_hat
    # returned unconverted: the FD subtraction must happen in ``dtype``
    return 0.5 * (diff @ diff)


def finite_difference_grads(model: GridModel, values, y, eps: float = 1e-6) -> dict:
    """Central finite differences of the loss over every parameter entry."""
    out = {}
    for name, arr in model.named_arrays():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = precise_loss(model, values, y)
            flat[idx] = orig - eps
            down = precise_loss(model, values, y)
            flat[idx] = orig
            gflat[idx] = float((up - down) / (2.0 * eps))
        out[name] = grad
    return out


def analytic_grads(model: GridModel, values, y) -> dict:
    from .grid import backward, forward
    _, tape = forward(model, values)
    core_grads, head_grads = backward(model, tape, y)
    labels = ("fwd", "bwd")
    out = {}
    for d, grads in enumerate(core_grads):
        for name, arr in grads.named_arrays():
            out[f"{labels[d]}.{name}"] = arr
    for name, arr in head_grads.named_arrays():
        out[f"head.{name}"] = arr
    return out


def relative_error(a, b, floor: float = 1e-8) -> float:
    """max over entries of |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@dataclass
class GradCheckReport:
    worst_by_block: dict
    tolerance: float
    trials: int
    seconds: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.worst_by_block.values())

    @property
    def max_error(self) -> float:
        return max(self.worst_by_block.values())

    def lines(self):
        for name in sorted(self.worst_by_block):
            err = self.worst_by_block[name]
            flag = "ok" if err <= self.tolerance else "FAIL"
            yield f"{name}\t{err:.3e}\t{flag}"
        verdict = "PASS" if self.passed else "FAIL"
        yield (f"{verdict}\tmax relative error {self.max_error:.3e} "
               f"(tolerance {self.tolerance:g}, {self.trials} trials, {self.seconds:.1f}s)")


def _random_probe_config(rng) -> ModelConfig:
    from .grid import GridConfig
    rows = int(rng.integers(1, 4))
    cols = int(rng.integers(1, 4))
    hidden = int(rng.integers(2, 5))
    return ModelConfig(
        grid=GridConfig(
            rows=rows, cols=cols,
            input_dim=int(rng.integers(1, 3)),
            hidden_dim=hidden,
            neighbor_outputs=int(rng.integers(1, hidden + 1)),
            direction=("unidirectional", "bidirectional")[int(rng.integers(0, 2))],
            aggregation=("full-hidden", "last-unit-only")[int(rng.integers(0, 2))],
        ),
        ff_dim=int(rng.integers(2, 7)),
        classes=int(rng.integers(2, 4)),
    )


def gradcheck(trials: int = 10, tolerance: float = 1e-5, seed: int = 0,
              configs=None, eps: float = 1e-6, steps_range=(2, 6)) -> GradCheckReport:
    """Compare analytic gradients to central differences on small random
    models; reports the worst relative error per parameter block."""
    rng = make_rng(seed)
    worst = {}
    t0 = time.perf_counter()
    for trial in range(trials):
        model_cfg = configs[trial % len(configs)] if configs else _random_probe_config(rng)
        model = model_cfg.build(rng)
        grid = model.grid
        steps = int(rng.integers(steps_range[0], steps_range[1] + 1))
        values = rng.normal(0.0, 1.0, size=(grid.rows, grid.cols, steps, grid.input_dim))
        y = np.zeros(model.classes)
        y[int(rng.integers(0, model.classes))] = 1.0
        ana = analytic_grads(model, values, y)
        num = finite_difference_grads(model, values, y, eps)
        for name in ana:
            err = relative_error(ana[name], num[name])
            block = name.split(".", 1)[1] if "." in name else name
            worst[block] = max(worst.get(block, 0.0), err)
    return GradCheckReport(worst_by_block=worst, tolerance=tolerance, trials=trials,
                           seconds=time.perf_counter() - t0)
