"""Layer specifications and the forward/backward kernels behind them.

Activations are channels-last: ``(N, H, W, C)`` for feature maps and
``(N, D)`` after the first fully connected layer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

LAYER_KINDS = ("input", "conv", "fully_connected", "dropout", "regression_output")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel: tuple[int, int] = (3, 3)
    units: int = 0
    rate: float = 0.0
    activation: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.kind == "conv" and (self.filters < 1 or min(self.kernel) < 1):
            raise ValueError("conv layers need filters >= 1 and a positive kernel")
        if self.kind == "fully_connected" and self.units < 1:
            raise ValueError("fully connected layers need units >= 1")
        if self.kind == "dropout" and not 0 <= self.rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = list(self.kernel)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LayerSpec:
        return cls(**d)


def channelnet_preset(filters: int = 256, kernel=(3, 3), units=(1024, 2048), dropout: float = 0.5) -> list[LayerSpec]:
    """The nine-layer ChannelNet stack; the defaults are the published sizes."""
    return [
        LayerSpec("input"),
        LayerSpec("conv", filters=filters, kernel=kernel),
        LayerSpec("conv", filters=filters, kernel=kernel),
        LayerSpec("conv", filters=filters, kernel=kernel),
        LayerSpec("fully_connected", units=units[0]),
        LayerSpec("dropout", rate=dropout),
        LayerSpec("fully_connected", units=units[1]),
        LayerSpec("dropout", rate=dropout),
        LayerSpec("regression_output", activation=False),
    ]


# -- convolution, stride 1, zero padding that keeps H x W ---------------------


def _pads(kernel: tuple[int, int]) -> tuple[tuple[int, int], tuple[int, int]]:
    kh, kw = kernel
    return ((kh - 1) // 2, kh // 2), ((kw - 1) // 2, kw // 2)


def conv_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """``x`` (N,H,W,C), ``W`` (kh,kw,C,F) -> (N,H,W,F); cache holds the im2col matrix."""
    N, H, Wd, C = x.shape
    kh, kw, _, F = W.shape
    (pt, pb), (pl, pr) = _pads((kh, kw))
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = np.empty((N, H, Wd, kh, kw, C), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i : i + H, j : j + Wd, :]
    cols = cols.reshape(N * H * Wd, kh * kw * C)
    out = cols @ W.reshape(kh * kw * C, F) + b
    return out.reshape(N, H, Wd, F), cols


def conv_backward(dout: np.ndarray, cols: np.ndarray, x_shape, W: np.ndarray):
    N, H, Wd, C = x_shape
    kh, kw, _, F = W.shape
    d2 = dout.reshape(-1, F)
    dW = (cols.T @ d2).reshape(W.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ W.reshape(-1, F).T).reshape(N, H, Wd, kh, kw, C)
    (pt, pb), (pl, pr) = _pads((kh, kw))
    dxp = np.zeros((N, H + pt + pb, Wd + pl + pr, C), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + H, j : j + Wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, pt : pt + H, pl : pl + Wd, :], dW, db


# -- dense ---------------------------------------------------------------------


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    flat = x.reshape(x.shape[0], -1)
    return flat @ W + b, flat


def dense_backward(dout: np.ndarray, flat: np.ndarray, x_shape, W: np.ndarray):
    return (dout @ W.T).reshape(x_shape), flat.T @ dout, dout.sum(axis=0)


# -- regression loss -----------------------------------------------------------


def mse(prediction: np.ndarray, label: np.ndarray) -> float:
    """Mean squared error over every element (samples x output dimensions)."""
    prediction, label = np.asarray(prediction), np.asarray(label)
    if prediction.shape != label.shape:
        raise ValueError(f"prediction {prediction.shape} and label {label.shape} differ in shape")
    return float(np.mean((prediction - label) ** 2))


def mse_grad(prediction: np.ndarray, label: np.ndarray) -> np.ndarray:
    return 2.0 * (prediction - label) / prediction.size
