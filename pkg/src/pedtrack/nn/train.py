import logging
from dataclasses import asdict, dataclass

import numpy as np

from .model import ModelConfig, init_params, mae_loss, model_backward, model_forward, predict
from .optim import RMSProp

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch: int = 5
    lr0: float = 0.001
    lr_factor: float = 0.2
    lr_patience: int = 10
    min_delta: float = 1e-4
    rho: float = 0.9
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must be in (0, 1)")

    def to_dict(self):
        return asdict(self)


class PlateauSchedule:
    """Multiply the learning rate by ``factor`` once validation MAE has failed
    to beat the best value by ``min_delta`` for more than ``patience`` epochs."""

    def __init__(self, lr0, factor, patience, min_delta):
        self.lr = lr0
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.wait = 0

    def update(self, val_mae):
        if val_mae < self.best - self.min_delta:
            self.best = val_mae
            self.wait = 0
        else:
            self.wait += 1
            if self.wait > self.patience:
                self.lr *= self.factor
                self.wait = 0
        return self.lr


def _stack(windows, target):
    X = np.stack([w.x for w in windows])
    y = np.array([getattr(w, target) for w in windows], dtype=np.float64)
    return X, y


def fit(X_train, y_train, X_val, y_val, model_cfg=None, cfg=None, params=None, callback=None):
    """Train one scalar regressor with MAE loss and RMSProp.

    Returns ``(params, history)``; ``history[0]`` is the untrained model
    (both MAEs in inference mode), later rows report the mean training batch
    loss, the validation MAE and the learning rate used in that epoch.
    """
    model_cfg = model_cfg or ModelConfig(input_dim=X_train.shape[2])
    cfg = cfg or TrainConfig()
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("train and validation sets must be non-empty")
    params = params if params is not None else init_params(model_cfg, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = RMSProp(rho=cfg.rho, eps=cfg.eps)
    sched = PlateauSchedule(cfg.lr0, cfg.lr_factor, cfg.lr_patience, cfg.min_delta)

    history = [
        {
            "epoch": 0,
            "train_mae": mae_loss(predict(params, X_train), y_train)[0],
            "val_mae": mae_loss(predict(params, X_val), y_val)[0],
            "lr": cfg.lr0,
        }
    ]
    n = len(X_train)
    for epoch in range(1, cfg.epochs + 1):
        lr = sched.lr
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch):
            idx = order[s : s + cfg.batch]
            y_hat, cache = model_forward(X_train[idx], params, mode="train", rng=rng)
            loss, dy = mae_loss(y_hat, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}, batch starting {s}")
            grads = model_backward(cache, dy, params)
            opt.step(params.arrays, grads, lr)
            total += loss * len(idx)
        val = mae_loss(predict(params, X_val), y_val)[0]
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation MAE at epoch {epoch}")
        row = {"epoch": epoch, "train_mae": total / n, "val_mae": val, "lr": lr}
        history.append(row)
        log.info("epoch %d train %.4f val %.4f lr %.2g", epoch, row["train_mae"], val, lr)
        if callback is not None:
            callback(row)
        sched.update(val)
    return params, history


def train_model(split, cfg=None, target="dx", model_cfg=None):
    if target not in ("dx", "dy"):
        raise ValueError(f"target must be 'dx' or 'dy', got {target!r}")
    X_tr, y_tr = _stack(split.train, target)
    X_va, y_va = _stack(split.val, target)
    return fit(X_tr, y_tr, X_va, y_va, model_cfg=model_cfg, cfg=cfg)


def write_history(history, path):
    with open(path, "w") as f:
        f.write("epoch,train_mae,val_mae,lr\n")
        for r in history:
            f.write(f"{r['epoch']},{float(r['train_mae'])!r},{float(r['val_mae'])!r},{float(r['lr'])!r}\n")


def read_history(path):
    rows = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        for line in f:
            if line.strip():
                vals = line.strip().split(",")
                rows.append({k: (int(v) if k == "epoch" else float(v)) for k, v in zip(header, vals)})
    return rows
