import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..data import batch_iter
from ..evaluation import ConfusionMatrix, macro_f1, per_class_f1
from ..nn import Adam, Dropout, softmax_cross_entropy
from .checkpoint import ModelCheckpoint, config_hash

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "loss", "train_acc", "val_loss", "val_acc", "val_macro_f1")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 500
    batch_size: int = 50
    seed: int = 0
    dropout: bool = True
    # per-feature standardization of inputs; None = on for MFCC models only
    standardize: bool = None
    balanced: bool = False
    # stop as soon as eval-mode training accuracy reaches this fraction
    target_train_accuracy: float = None

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    log: list
    best_epoch: int


def _evaluate(model, x, y):
    probs = model.predict_proba(x)
    n = len(y)
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    pred = probs.argmax(axis=1)
    cm = ConfusionMatrix.from_labels(y, pred, n_classes=probs.shape[1])
    return loss, float((pred == y).mean()), macro_f1(per_class_f1(cm)[2])


def _balanced_order(y, rng):
    counts = np.bincount(y)
    w = 1.0 / counts[y]
    return rng.choice(len(y), size=len(y), replace=True, p=w / w.sum())


def train_model(model, train, val, cfg):
    """Mini-batch Adam training on ``train = (x, y)``; selects by validation macro-F1.

    Returns a :class:`TrainResult`; ``model`` is left holding the selected
    parameters. Ties in validation F1 go to the lower validation loss.
    """
    x_tr, y_tr = np.asarray(train[0]), np.asarray(train[1], dtype=np.int64)
    x_va, y_va = np.asarray(val[0]), np.asarray(val[1], dtype=np.int64)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("training and validation sets must be non-empty")
    model.audit()

    standardize = cfg.standardize
    if standardize is None:
        standardize = model.name in ("cnn1d", "lstm")
    if standardize:
        flat = x_tr.reshape(-1, x_tr.shape[-1]).astype(np.float64)
        model.set_normalization(flat.mean(axis=0), flat.std(axis=0) + 1e-8)

    drop_rng = np.random.default_rng([cfg.seed, 1])
    for layer in model.layers:
        if isinstance(layer, Dropout):
            layer.rng = drop_rng
    sample_rng = np.random.default_rng([cfg.seed, 2])

    opt = Adam(model.parameters(), lr=cfg.lr)
    history = []
    best_key, best_state, best_epoch = None, model.state_dict(), 0
    for epoch in range(1, cfg.epochs + 1):
        order = _balanced_order(y_tr, sample_rng) if cfg.balanced else np.arange(len(y_tr))
        total, seen = 0.0, 0
        for idx in batch_iter(order, cfg.batch_size, cfg.seed, epoch):
            model.zero_grad()
            logits = model.forward(x_tr[idx], training=cfg.dropout)
            loss, _, grad = softmax_cross_entropy(logits, y_tr[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"{model.name}: non-finite loss at epoch {epoch} after {seen} samples (lr={cfg.lr})"
                )
            model.backward(grad.astype(model.dtype, copy=False))
            opt.step(model.gradients())
            total += loss * len(idx)
            seen += len(idx)
        _, train_acc, _ = _evaluate(model, x_tr, y_tr)
        val_loss, val_acc, val_f1 = _evaluate(model, x_va, y_va)
        row = {"epoch": epoch, "loss": total / seen, "train_acc": train_acc,
               "val_loss": val_loss, "val_acc": val_acc, "val_macro_f1": val_f1}
        history.append(row)
        log.info("%s epoch %d loss %.5f train_acc %.4f val_f1 %.2f",
                 model.name, epoch, row["loss"], train_acc, val_f1)
        key = (val_f1, -val_loss)
        if best_key is None or key > best_key:
            best_key, best_state, best_epoch = key, model.state_dict(), epoch
        if cfg.target_train_accuracy is not None and train_acc >= cfg.target_train_accuracy:
            break
    model.load_state_dict(best_state)
    meta = {"epoch": best_epoch, "seed": cfg.seed, "config_hash": config_hash(asdict(cfg)),
            "train_config": asdict(cfg), "epochs_run": len(history)}
    return TrainResult(ModelCheckpoint.from_model(model, **meta), history, best_epoch)


def write_log_csv(history, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
