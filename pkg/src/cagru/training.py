"""Mini-batch Adam training with early stopping, and checkpoint I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError
from .forecaster import ForecastModel, ModelConfig, bce_loss
from .metrics import auc_score

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainState:
    m: dict
    v: dict
    step: int = 0
    best_score: float = -np.inf
    epochs_since_improvement: int = 0


@dataclass
class TrainingTrace:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    def as_rows(self):
        return [dict(epoch=i + 1, **e) for i, e in enumerate(self.epochs)]


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = TrainState(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )

    def step(self, params, grads):
        st = self.state
        st.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** st.step
        c2 = 1.0 - b2 ** st.step
        for k in params:
            g = grads[k]
            st.m[k] = b1 * st.m[k] + (1.0 - b1) * g
            st.v[k] = b2 * st.v[k] + (1.0 - b2) * g * g
            params[k] -= self.lr * (st.m[k] / c1) / (np.sqrt(st.v[k] / c2) + self.eps)


def _val_score(model, windows):
    prob = model.forward(windows.inputs)
    labels = windows.labels
    if 0 < labels.sum() < len(labels):
        return auc_score(labels, prob), prob
    # single-class validation set: fall back to negative loss
    return -bce_loss(labels, prob), prob


def fit(windows_train, windows_val, config: ModelConfig):
    """Train one forecaster and return ``(model, trace)``.

    Parameters are initialised from ``config.seed``; batches are reshuffled
    each epoch from the same seeded stream. After every epoch the validation
    AUC is checked and the best parameters so far are kept; training stops
    once ``patience`` epochs pass without improvement (``patience=0`` stops
    after the first epoch). With an empty validation set every epoch runs and
    the final parameters are returned.
    """
    if len(windows_train) == 0:
        raise DataError("cannot fit on an empty training set")
    X, y = windows_train.inputs, windows_train.labels.astype(np.float64)
    model = ForecastModel(config, X.shape[2])
    opt = Adam(model.params, lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    trace = TrainingTrace()
    best = model.copy()
    st = opt.state
    has_val = windows_val is not None and len(windows_val) > 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = model.loss_and_grad(X[idx], y[idx])
            opt.step(model.params, grads)
            total += loss * len(idx)
        record = {"train_loss": total / len(y)}
        if has_val:
            score, prob = _val_score(model, windows_val)
            record["val_loss"] = bce_loss(windows_val.labels, prob)
            record["val_score"] = score
            if score > st.best_score:
                st.best_score = score
                st.epochs_since_improvement = 0
                best = model.copy()
                trace.best_epoch = epoch + 1
            else:
                st.epochs_since_improvement += 1
        trace.epochs.append(record)
        log.debug("epoch %d %s", epoch + 1, record)
        if has_val and st.epochs_since_improvement >= config.patience:
            break

    if not has_val:
        best = model
        trace.best_epoch = len(trace.epochs)
    return best, trace


def save_checkpoint(model: ForecastModel, path):
    """Write an ``.npz`` holding the config echo and little-endian float64 tensors."""
    header = {
        "format": "cagru-checkpoint",
        "version": CHECKPOINT_VERSION,
        "n_features": model.n_features,
        "config": model.config.to_dict(),
        "params": list(model.params),
    }
    arrays = {f"param/{k}": v.astype("<f8") for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path) -> ForecastModel:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "cagru-checkpoint":
            raise ParseError(f"{path} is not a checkpoint")
        if header["version"] != CHECKPOINT_VERSION:
            raise ParseError(f"unsupported checkpoint version {header['version']}")
        params = {k: z[f"param/{k}"].astype(np.float64) for k in header["params"]}
    return ForecastModel(ModelConfig(**header["config"]), header["n_features"], params)
