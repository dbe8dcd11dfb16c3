"""Mini-batch training with Adam, gradient clipping and early stopping."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import Prepared
from .models import KINDS, ModelConfig, batch_scores, cross_entropy, init_params
from .optim import ADAM_PRESETS, AdamState, adam_step, clip_gradients
from .tensor import Tensor, backward, no_grad
from . import tensor as T

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 100
    max_epochs: int = 30
    patience: int = 5
    clip_norm: float = 10.0
    lr: float = 0.002
    adam: str = "standard"
    beta1: float | None = None   # overrides the preset when set
    beta2: float | None = None
    eps: float = 1e-8
    seed: int = 0
    precision: str = "float64"
    eval_batch_size: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.adam not in ADAM_PRESETS:
            raise ValueError(f"unknown Adam preset {self.adam!r}")
        if self.precision not in ("float64", "float32"):
            raise ValueError("precision must be float64 or float32")

    @classmethod
    def paper(cls, **kw) -> "TrainConfig":
        base = dict(batch_size=100, lr=0.002, adam="paper", clip_norm=10.0)
        base.update(kw)
        return cls(**base)

    def adam_state(self) -> AdamState:
        st = AdamState.preset(self.adam, lr=self.lr, eps=self.eps)
        if self.beta1 is not None:
            st.beta1 = self.beta1
        if self.beta2 is not None:
            st.beta2 = self.beta2
        return st

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


class EarlyStopping:
    """Stop after ``patience`` epochs without a strict improvement."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, score: float, epoch: int) -> tuple[bool, bool]:
        """Record ``score``; returns ``(improved, should_stop)``."""
        if score > self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return True, False
        self.bad_epochs += 1
        return False, self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainResult:
    kind: str
    params: dict[str, Tensor]
    history: list[EpochRecord]
    best_epoch: int
    model_config: ModelConfig
    train_config: TrainConfig


def history_csv(history) -> str:
    rows = ["epoch,train_loss,val_accuracy"]
    rows += [f"{h.epoch},{h.train_loss!r},{h.val_accuracy!r}" for h in history]
    return "\n".join(rows) + "\n"


def predict(kind: str, params, data: Prepared, batch_size: int = 100, dtype=None) -> np.ndarray:
    """Class probabilities, shape (n, 8), in instance order."""
    dtype = dtype or next(iter(params.values())).dtype
    out = []
    with no_grad():
        for start in range(0, len(data), batch_size):
            b = data.batch(np.arange(start, min(start + batch_size, len(data))), dtype)
            s = batch_scores(kind, params, b.videos, b.tokens, b.mask)
            out.append(T.softmax(s, axis=-1).data)
    return np.concatenate(out, axis=0)


def accuracy(probs: np.ndarray, gt) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(gt)))


def _snapshot(params) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def train(kind: str, train_set: Prepared, val_set: Prepared, config: TrainConfig | None = None,
          model_config: ModelConfig | None = None, params=None, epoch_callback=None) -> TrainResult:
    """Fit ``kind`` on ``train_set``; keep the weights of the best validation epoch."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    config = config or TrainConfig()
    model_config = copy.deepcopy(model_config or ModelConfig.small())
    model_config.dtype = config.precision
    dtype = np.dtype(config.precision)
    if params is None:
        params = init_params(model_config, kind, config.seed)
    order_rng = np.random.default_rng([config.seed, 1])
    state = config.adam_state()
    stopper = EarlyStopping(config.patience)
    names = list(params)
    leaves = [params[k] for k in names]
    best = _snapshot(params)
    history: list[EpochRecord] = []

    for epoch in range(1, config.max_epochs + 1):
        perm = order_rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for b_idx, start in enumerate(range(0, len(perm), config.batch_size)):
            idx = perm[start:start + config.batch_size]
            batch = train_set.batch(idx, dtype)
            scores = batch_scores(kind, params, batch.videos, batch.tokens, batch.mask)
            loss = cross_entropy(scores, batch.gt)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b_idx}")
            grads = dict(zip(names, backward(loss, leaves)))
            grads = clip_gradients(grads, config.clip_norm)
            adam_step(params, grads, state)
            total += value * len(idx)
            seen += len(idx)
        val_acc = accuracy(predict(kind, params, val_set, config.eval_batch_size, dtype), val_set.gt)
        rec = EpochRecord(epoch, total / seen, val_acc)
        history.append(rec)
        log.info("%s epoch %d: train_loss=%.4f val_acc=%.4f", kind, epoch, rec.train_loss, val_acc)
        improved, stop = stopper.update(val_acc, epoch)
        if improved:
            best = _snapshot(params)
        if epoch_callback is not None:
            epoch_callback(rec)
        if stop:
            break

    for k, arr in best.items():
        params[k].data = arr
    return TrainResult(kind, params, history, stopper.best_epoch, model_config, config)


def params_from_arrays(arrays: dict, dtype="float64") -> dict[str, Tensor]:
    return {k: Tensor(np.asarray(v, dtype=dtype), requires_grad=True, name=k) for k, v in arrays.items()}
