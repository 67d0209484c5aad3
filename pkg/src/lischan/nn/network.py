"""Trainable network state: parameters, momentum buffers and the forward/backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as ly
from .layers import LayerSpec


class ShapeError(ValueError):
    pass


class StaleActivationsError(RuntimeError):
    """``backward`` was called without a matching, up-to-date ``forward``."""


@dataclass
class _Record:
    x: np.ndarray
    version: int
    caches: list
    output: np.ndarray


@dataclass
class Network:
    """Parameters and optimizer state of one regressor.

    ``params[i]`` and ``velocity[i]`` map names (``"W"``, ``"b"``) to arrays
    for layer ``i``; parameter-free layers get empty dicts.  ``input_mean`` and
    ``input_std`` are the per-channel normalization applied by
    :func:`lischan.nn.predict.normalize`.
    """

    specs: list[LayerSpec]
    input_shape: tuple[int, int, int]
    output_dim: int
    params: list[dict[str, np.ndarray]]
    velocity: list[dict[str, np.ndarray]]
    seed: int = 0
    kind: str = ""
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None
    log: list[dict] = field(default_factory=list)
    version: int = 0
    _record: _Record | None = field(default=None, repr=False, compare=False)

    @property
    def dtype(self) -> np.dtype:
        for p in self.params:
            for arr in p.values():
                return arr.dtype
        return np.dtype(np.float64)

    def n_parameters(self) -> int:
        return sum(a.size for p in self.params for a in p.values())

    def copy_params(self) -> list[dict[str, np.ndarray]]:
        return [{k: v.copy() for k, v in p.items()} for p in self.params]


def build_network(
    specs: list[LayerSpec],
    input_shape: tuple[int, int, int],
    output_dim: int,
    seed: int = 0,
    dtype=np.float32,
    init: str = "uniform",
    kind: str = "",
) -> Network:
    """Allocate parameters for ``specs`` on a ``(H, W, C)`` input.

    ``init="uniform"`` draws weights from ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``
    with zero biases; ``init="zeros"`` zeroes everything.
    """
    if not specs or specs[0].kind != "input":
        raise ShapeError("the first layer must be an input layer")
    if specs[-1].kind != "regression_output":
        raise ShapeError("the last layer must be a regression output layer")
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in input_shape)
    flat = False
    params: list[dict[str, np.ndarray]] = []

    def weights(w_shape, fan_in):
        if init == "zeros":
            return np.zeros(w_shape, dtype)
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, w_shape).astype(dtype)

    for spec in specs:
        p: dict[str, np.ndarray] = {}
        if spec.kind == "conv":
            if flat:
                raise ShapeError("conv layers cannot follow fully connected layers")
            kh, kw = spec.kernel
            C = shape[-1]
            p["W"] = weights((kh, kw, C, spec.filters), kh * kw * C)
            p["b"] = np.zeros(spec.filters, dtype)
            shape = shape[:-1] + (spec.filters,)
        elif spec.kind in ("fully_connected", "regression_output"):
            n_in = int(np.prod(shape))
            n_out = output_dim if spec.kind == "regression_output" else spec.units
            p["W"] = weights((n_in, n_out), n_in)
            p["b"] = np.zeros(n_out, dtype)
            shape, flat = (n_out,), True
        params.append(p)
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    return Network(
        specs=list(specs),
        input_shape=tuple(int(s) for s in input_shape),
        output_dim=output_dim,
        params=params,
        velocity=velocity,
        seed=seed,
        kind=kind,
    )


def forward(net: Network, x: np.ndarray, mode: str = "infer", rng: np.random.Generator | None = None) -> np.ndarray:
    """Run a batch ``(N, H, W, C)`` (or a single ``(H, W, C)`` sample) through the net.

    Dropout is inverted: in ``"train"`` mode kept units are scaled by
    ``1/(1-rate)`` and masks come from ``rng``; ``"infer"`` is deterministic.
    Activations are recorded for :func:`backward`.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match the network's {net.input_shape}")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs a generator for dropout masks")
    a = x.astype(net.dtype, copy=False)
    caches = []
    for spec, p in zip(net.specs, net.params):
        if spec.kind == "conv":
            z, cols = ly.conv_forward(a, p["W"], p["b"])
            cache = ("conv", cols, a.shape)
        elif spec.kind in ("fully_connected", "regression_output"):
            z, flat = ly.dense_forward(a, p["W"], p["b"])
            cache = ("dense", flat, a.shape)
        elif spec.kind == "dropout":
            if mode == "train" and spec.rate > 0:
                keep = (rng.random(a.shape) >= spec.rate) / (1.0 - spec.rate)
                keep = keep.astype(a.dtype)
                z = a * keep
            else:
                keep, z = None, a
            cache = ("dropout", keep, None)
        else:
            z, cache = a, ("input", None, None)
        relu_mask = None
        if spec.activation and spec.kind in ("conv", "fully_connected"):
            relu_mask = z > 0
            z = z * relu_mask
        caches.append(cache + (relu_mask,))
        a = z
    net._record = _Record(x=x, version=net.version, caches=caches, output=a)
    return a[0] if single else a


def loss(prediction: np.ndarray, label: np.ndarray) -> float:
    return ly.mse(prediction, label)


def backward(net: Network, x: np.ndarray, label: np.ndarray) -> list[dict[str, np.ndarray]]:
    """Gradients of :func:`loss` at the activations recorded by the last forward on ``x``."""
    rec = net._record
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if rec is None or rec.version != net.version or (rec.x is not x and not np.array_equal(rec.x, x)):
        raise StaleActivationsError("run forward() on this input with the current parameters first")
    label = np.asarray(label, dtype=rec.output.dtype).reshape(rec.output.shape)
    grad = ly.mse_grad(rec.output, label)
    grads: list[dict[str, np.ndarray]] = [{} for _ in net.specs]
    for i in range(len(net.specs) - 1, -1, -1):
        kind, cache, in_shape, relu_mask = rec.caches[i]
        p = net.params[i]
        if relu_mask is not None:
            grad = grad * relu_mask
        if kind == "conv":
            grad, dW, db = ly.conv_backward(grad, cache, in_shape, p["W"])
            grads[i] = {"W": dW, "b": db}
        elif kind == "dense":
            grad, dW, db = ly.dense_backward(grad, cache, in_shape, p["W"])
            grads[i] = {"W": dW, "b": db}
        elif kind == "dropout" and cache is not None:
            grad = grad * cache
    return grads
