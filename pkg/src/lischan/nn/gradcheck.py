"""Central finite-difference check of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .network import Network, backward, forward, loss


def numerical_gradients(
    net: Network, x: np.ndarray, label: np.ndarray, step: float = 1e-4, mode: str = "infer", mask_seed: int = 0
) -> list[dict[str, np.ndarray]]:
    """``(f(theta + h) - f(theta - h)) / 2h`` for every parameter entry.

    In ``"train"`` mode each evaluation reseeds the dropout generator with
    ``mask_seed`` so all evaluations share one set of masks.
    """

    def f():
        rng = np.random.default_rng(mask_seed) if mode == "train" else None
        return loss(forward(net, x, mode, rng), label)

    grads = []
    for p in net.params:
        g = {}
        for name, theta in p.items():
            out = np.zeros_like(theta)
            flat, gflat = theta.reshape(-1), out.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = f()
                flat[i] = orig - step
                down = f()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * step)
            g[name] = out
        grads.append(g)
    return grads


def check_gradients(
    net: Network, x: np.ndarray, label: np.ndarray, step: float = 1e-4, mode: str = "infer", mask_seed: int = 0
) -> dict[tuple[int, str], float]:
    """Relative error ``||analytic - numeric|| / max(||analytic||, ||numeric||)`` per (layer, parameter).

    Use a float64 network; float32 round-off swamps the finite differences.
    """
    rng = np.random.default_rng(mask_seed) if mode == "train" else None
    forward(net, x, mode, rng)
    analytic = backward(net, x, label)
    numeric = numerical_gradients(net, x, label, step, mode, mask_seed)
    errors = {}
    for i, (a, n) in enumerate(zip(analytic, numeric)):
        for name in a:
            scale = max(np.linalg.norm(a[name]), np.linalg.norm(n[name]), 1e-12)
            errors[i, name] = float(np.linalg.norm(a[name] - n[name]) / scale)
    return errors
