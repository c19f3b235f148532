"""Training recipe: Adam with step decay, class-weighted cross-entropy,
seeded mini-batch shuffling, early stopping with best-epoch restore, the
80/20 stratified split, k-fold cross-validation, and grid search.

Every random draw derives from ``(seed, purpose, ...)`` streams, so one
config + seed is bit-reproducible, and folds or grid points can run in any
order (or in parallel) without changing results.
"""

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigError,
    DivergenceError,
    EmptyError,
    LabelError,
    StratifyError,
)
from .keypoints import DatasetManifest
from .metrics import EvalReport, evaluate, report_from_predictions
from .model import Model, ModelSpec, build_model
from .nn import AdamState, adam_step, softmax_xent
from .rng import derive_rng, derive_seed


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 12
    min_delta: float = 0.0
    lr0: float = 0.001
    decay_factor: float = 0.1
    decay_every: int = 50
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float
    wall_ms: float


class EarlyStopper:
    """Stop after ``patience`` consecutive epochs without the monitored
    loss improving by more than ``min_delta``; remembers the best epoch."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best - self.min_delta:
            self.best = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(manifest: DatasetManifest, train_frac: float = 0.8, seed: int = 0):
    """Per class, round-half-up(n_c * train_frac) sequences go to train,
    the rest to test; deterministic in ``seed``; disjoint and exhaustive."""
    if not 0 < train_frac < 1:
        raise ConfigError("train_frac must be in (0, 1)")
    by_class = {c: [] for c in manifest.classes}
    for idx, (path, label) in enumerate(manifest.sequences):
        if label not in by_class:
            raise LabelError(f"label {label!r} not in classes")
        by_class[label].append(idx)
    train_idx = set()
    for label, indices in by_class.items():
        if len(indices) < 2:
            raise StratifyError(
                f"class {label!r} has {len(indices)} sample(s); need >= 2"
            )
        rng = derive_rng(seed, "split", label)
        order = rng.permutation(len(indices))
        n_train = _round_half_up(len(indices) * train_frac)
        train_idx.update(indices[i] for i in order[:n_train])
    train_seqs = [s for i, s in enumerate(manifest.sequences) if i in train_idx]
    test_seqs = [s for i, s in enumerate(manifest.sequences) if i not in train_idx]
    mk = lambda seqs: DatasetManifest(
        classes=manifest.classes, sequences=seqs, seed=manifest.seed
    )
    return mk(train_seqs), mk(test_seqs)


def class_weights(labels, n_classes: int) -> np.ndarray:
    """w_c = N / (C * n_c); satisfies sum_c n_c * w_c = N."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=n_classes)
    if (counts == 0).any():
        missing = int(np.argmin(counts))
        raise LabelError(f"class index {missing} has no samples")
    n = labels.size
    return n / (n_classes * counts.astype(np.float64))


def _batch_iter(n, batch_size, order=None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield idx[start : start + batch_size]


def _eval_loss_acc(model: Model, X, y, weights, batch_size):
    total_loss = 0.0
    correct = 0
    for batch in _batch_iter(len(X), batch_size):
        logits = model.forward(X[batch], train=False)
        loss, probs, _ = softmax_xent(logits, y[batch], weights)
        total_loss += loss * len(batch)
        correct += int((probs.argmax(axis=1) == y[batch]).sum())
    return total_loss / len(X), correct / len(X)


def train(model: Model, train_data, val_data, config: TrainConfig, timer=None):
    """Run the full recipe; returns (model restored to its best-validation
    epoch, list of EpochRecord).

    ``timer``: optional zero-arg callable for wall-clock seconds; left as
    None, wall_ms records 0.0 so histories are bit-reproducible.
    """
    X_train, y_train = train_data
    X_val, y_val = val_data
    if len(X_train) == 0 or len(X_val) == 0:
        raise EmptyError("training and validation sets must be non-empty")
    if config.dtype != model.spec.dtype:
        raise ConfigError(
            f"config dtype {config.dtype!r} != model dtype {model.spec.dtype!r}"
        )
    n_classes = model.spec.classes
    weights = class_weights(y_train, n_classes)
    X_train = np.ascontiguousarray(X_train, dtype=model.spec.np_dtype)
    X_val = np.ascontiguousarray(X_val, dtype=model.spec.np_dtype)

    shuffle_rng = derive_rng(config.seed, "shuffle")
    dropout_rng = derive_rng(config.seed, "dropout")
    adam = AdamState(
        lr0=config.lr0,
        decay_factor=config.decay_factor,
        decay_every=config.decay_every,
    )
    stopper = EarlyStopper(config.patience, config.min_delta)
    best_params = model.snapshot_params()
    best_state = {k: v.copy() for k, v in model.running.items()}
    history = []

    for epoch in range(config.max_epochs):
        tic = timer() if timer else 0.0
        order = shuffle_rng.permutation(len(X_train))
        epoch_loss = 0.0
        correct = 0
        for batch in _batch_iter(len(X_train), config.batch_size, order):
            model.zero_grads()
            logits = model.forward(X_train[batch], train=True, rng=dropout_rng)
            loss, probs, dlogits = softmax_xent(logits, y_train[batch], weights)
            if not np.isfinite(loss):
                model.load_param_values(best_params)
                model.load_state_values(best_state)
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}"
                )
            model.backward(dlogits)
            adam_step(model.params, model.grads, adam, epoch=epoch)
            epoch_loss += loss * len(batch)
            correct += int((probs.argmax(axis=1) == y_train[batch]).sum())
        train_loss = epoch_loss / len(X_train)
        train_acc = correct / len(X_train)
        val_loss, val_acc = _eval_loss_acc(
            model, X_val, y_val, weights, config.batch_size
        )
        wall_ms = ((timer() - tic) * 1000.0) if timer else 0.0
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
                lr=adam.lr(epoch),
                wall_ms=wall_ms,
            )
        )
        if val_loss < stopper.best - config.min_delta:
            best_params = model.snapshot_params()
            best_state = {k: v.copy() for k, v in model.running.items()}
        if stopper.update(epoch, val_loss):
            break

    model.load_param_values(best_params)
    model.load_state_values(best_state)
    return model, history


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc,lr,wall_ms"]
    for rec in history:
        lines.append(
            f"{rec.epoch},{rec.train_loss!r},{rec.train_acc!r},"
            f"{rec.val_loss!r},{rec.val_acc!r},{rec.lr!r},{rec.wall_ms!r}"
        )
    return "\n".join(lines) + "\n"


def _stratified_folds(y, k, seed):
    """Fold index per sample: per class, shuffled then dealt into k chunks."""
    y = np.asarray(y)
    folds = np.full(len(y), -1, dtype=np.int64)
    for label in np.unique(y):
        indices = np.flatnonzero(y == label)
        if len(indices) < k:
            raise StratifyError(
                f"class index {int(label)} has {len(indices)} samples; need >= {k}"
            )
        rng = derive_rng(seed, "kfold", int(label))
        order = indices[rng.permutation(len(indices))]
        for pos, idx in enumerate(order):
            folds[idx] = pos % k
    return folds


def kfold_cv(data, model_spec: ModelSpec, config: TrainConfig, k: int = 5):
    """Stratified k-fold cross-validation; every sample validates exactly
    once. Returns (per-fold EvalReport list, macro-F1 mean, macro-F1 std)."""
    if k < 2:
        raise ConfigError("k must be >= 2")
    X, y = data
    folds = _stratified_folds(y, k, config.seed)
    reports = []
    class_names = model_spec.class_names or tuple(
        f"class{i}" for i in range(model_spec.classes)
    )
    for fold in range(k):
        val_mask = folds == fold
        fold_spec = replace(
            model_spec, seed=derive_seed(model_spec.seed, "fold", fold) % (2**31)
        )
        fold_config = replace(
            config, seed=derive_seed(config.seed, "fold", fold) % (2**31)
        )
        model = build_model(fold_spec)
        model, _ = train(
            model,
            (X[~val_mask], y[~val_mask]),
            (X[val_mask], y[val_mask]),
            fold_config,
        )
        reports.append(evaluate(model, X[val_mask], y[val_mask], class_names))
    f1s = np.array([r.macro_f1 for r in reports])
    return reports, float(f1s.mean()), float(f1s.std())


def grid_search(space: dict, data, model_spec: ModelSpec, config: TrainConfig):
    """Train every combination of ``space`` (keys: lr0, kernel_size,
    lstm_units) on one fixed stratified split; rank by validation macro-F1,
    then validation loss, then the config tuple itself."""
    keys = list(space.keys())
    allowed = {"lr0", "kernel_size", "lstm_units"}
    unknown = set(keys) - allowed
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}")
    values = [space[k] for k in keys]
    if not keys or any(len(v) == 0 for v in values):
        raise ConfigError("grid space must be non-empty")

    X, y = data
    # fixed stratified 80/20 split over sample indices
    dummy = DatasetManifest(
        classes=tuple(str(c) for c in range(model_spec.classes)),
        sequences=[(str(i), str(int(label))) for i, label in enumerate(y)],
        seed=config.seed,
    )
    train_m, val_m = stratified_split(dummy, 0.8, seed=config.seed)
    train_idx = np.array([int(p) for p, _ in train_m.sequences])
    val_idx = np.array([int(p) for p, _ in val_m.sequences])

    results = []
    for combo in itertools.product(*values):
        point = dict(zip(keys, combo))
        spec = replace(
            model_spec,
            kernel_size=point.get("kernel_size", model_spec.kernel_size),
            lstm_units=point.get("lstm_units", model_spec.lstm_units),
        )
        run_config = replace(config, lr0=point.get("lr0", config.lr0))
        model = build_model(spec)
        model, _ = train(
            model,
            (X[train_idx], y[train_idx]),
            (X[val_idx], y[val_idx]),
            run_config,
        )
        class_names = spec.class_names or tuple(
            f"class{i}" for i in range(spec.classes)
        )
        report = evaluate(model, X[val_idx], y[val_idx], class_names)
        weights = class_weights(y[train_idx], spec.classes)
        val_loss, _ = _eval_loss_acc(
            model, X[val_idx], y[val_idx], weights, run_config.batch_size
        )
        results.append(
            {
                "config": point,
                "macro_f1": report.macro_f1,
                "val_loss": val_loss,
            }
        )
    order_key = lambda r: (
        -r["macro_f1"],
        r["val_loss"],
        tuple(r["config"][k] for k in keys),
    )
    results.sort(key=order_key)
    for rank, r in enumerate(results, start=1):
        r["rank"] = rank
    return results
