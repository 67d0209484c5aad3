"""Mini-batch SGD with momentum and validation-based early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .network import Network, ShapeError, backward, forward, loss

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and stopping settings.

    ``lr_convention="summed"`` reads ``learning_rate`` as tuned for a loss of
    half the squared error summed over outputs (and averaged over the batch);
    the step actually taken on the mean-over-outputs loss used here is then
    ``learning_rate * output_dim / 2``, which gives identical updates.
    """

    learning_rate: float = 2e-4
    momentum: float = 0.9
    batch_size: int = 128
    patience: int = 3
    max_epochs: int = 50
    seed: int = 0
    train_fraction: float = 0.7
    lr_convention: str = "mean"

    def __post_init__(self):
        if self.lr_convention not in ("mean", "summed"):
            raise ValueError("lr_convention must be 'mean' or 'summed'")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def step_size(self, output_dim: int) -> float:
        if self.lr_convention == "summed":
            return self.learning_rate * output_dim / 2.0
        return self.learning_rate


def sgd_step(net: Network, grads: list[dict[str, np.ndarray]], cfg: TrainConfig) -> Network:
    """``v <- momentum*v - lr*g``, ``theta <- theta + v``, in place."""
    if len(grads) != len(net.params):
        raise ShapeError("one gradient dict per layer expected")
    lr = cfg.step_size(net.output_dim)
    for p, v, g in zip(net.params, net.velocity, grads):
        for name, theta in p.items():
            if g[name].shape != theta.shape:
                raise ShapeError(f"gradient for {name!r} has shape {g[name].shape}, parameter {theta.shape}")
            v[name] *= cfg.momentum
            v[name] -= lr * g[name].astype(theta.dtype, copy=False)
            theta += v[name]
    net.version += 1
    return net


class EarlyStopping:
    """Tracks the best validation score; ``update`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def normalize(net: Network, inputs: np.ndarray) -> np.ndarray:
    if net.input_mean is None:
        return inputs.astype(net.dtype, copy=False)
    out = (inputs - net.input_mean) / net.input_std
    return out.astype(net.dtype, copy=False)


def predict_batches(net: Network, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference over raw (un-normalized) inputs."""
    outs = [forward(net, normalize(net, inputs[i : i + batch_size])) for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs) if outs else np.empty((0, net.output_dim), net.dtype)


def label_nmse(prediction: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-sample ``||z - z_hat|| / ||z||`` (equal to the complex-channel norm ratio)."""
    err = np.linalg.norm(prediction.astype(np.float64) - labels, axis=1)
    return float(np.mean(err / np.linalg.norm(labels.astype(np.float64), axis=1)))


def evaluate(net: Network, inputs: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> tuple[float, float]:
    pred = predict_batches(net, inputs, batch_size)
    return float(np.mean((pred.astype(np.float64) - labels) ** 2)), label_nmse(pred, labels)


def train(net: Network, train_set, val_set, cfg: TrainConfig, callback=None) -> tuple[Network, list[dict]]:
    """Fit ``net`` on ``train_set`` and stop on validation MSE.

    Each dataset needs ``inputs``, ``labels`` and ``stats`` (per-channel mean
    and std, fitted on the training data).  Epochs shuffle the training set
    and run mini-batches in train mode; after each epoch the validation MSE is
    measured in infer mode.  Training ends after ``cfg.patience`` epochs
    without improvement or at ``cfg.max_epochs``, and the parameters of the
    best epoch are restored.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be nonempty")
    if train_set.inputs.shape[1:] != net.input_shape or train_set.labels.shape[1] != net.output_dim:
        raise ShapeError(
            f"dataset shapes {train_set.inputs.shape[1:]} -> {train_set.labels.shape[1]} do not fit "
            f"the network {net.input_shape} -> {net.output_dim}"
        )
    mean, std = train_set.stats
    net.input_mean, net.input_std = np.asarray(mean, np.float64), np.asarray(std, np.float64)
    rng = np.random.default_rng(cfg.seed)
    x_train = normalize(net, train_set.inputs)
    y_train = train_set.labels.astype(net.dtype, copy=False)
    y_val = val_set.labels.astype(np.float64)

    stopper = EarlyStopping(cfg.patience)
    best_params = net.copy_params()
    best_velocity = [{k: v.copy() for k, v in p.items()} for p in net.velocity]
    history = []
    n = len(train_set)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            pred = forward(net, xb, "train", rng)
            batch_loss = loss(pred, yb)
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            sgd_step(net, backward(net, xb, yb), cfg)
            total += batch_loss * len(idx)
        val_mse, val_nmse = evaluate(net, val_set.inputs, y_val)
        if not math.isfinite(val_mse):
            raise TrainingDivergedError(f"non-finite validation MSE at epoch {epoch}")
        row = {"epoch": epoch, "train_loss": total / n, "val_mse": val_mse, "val_nmse": val_nmse}
        history.append(row)
        log.info("epoch %d train %.5g val_mse %.5g val_nmse %.4f", epoch, row["train_loss"], val_mse, val_nmse)
        if callback is not None:
            callback(row)
        stop = stopper.update(epoch, val_mse)
        if stopper.best_epoch == epoch:
            best_params = net.copy_params()
            best_velocity = [{k: v.copy() for k, v in p.items()} for p in net.velocity]
        if stop:
            break
    net.params, net.velocity = best_params, best_velocity
    net.version += 1
    for row in history:
        row["best"] = row["epoch"] == stopper.best_epoch
    net.log = history
    return net, history
