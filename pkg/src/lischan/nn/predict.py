"""Channel estimates from a trained direct/cascaded network pair."""

from __future__ import annotations

import numpy as np

from ..dataset import build_input_cascaded, build_input_direct, label_to_cascaded, label_to_direct
from ..estimators import ChannelEstimate
from .network import Network, ShapeError
from .train import predict_batches


def direct_inputs(y_direct: np.ndarray, net: Network) -> np.ndarray:
    y = np.atleast_2d(y_direct)
    shape = net.input_shape[:2]
    return np.stack([build_input_direct(row, row.size, shape) for row in y])


def cascaded_inputs(y_cols: np.ndarray) -> np.ndarray:
    y = np.asarray(y_cols)
    if y.ndim == 2:
        y = y[None]
    return np.stack([build_input_cascaded(rows) for rows in y])


def predict_direct(net: Network, y_direct: np.ndarray) -> np.ndarray:
    """``(K, M)`` direct-channel estimates from ``(K, P)`` phase-I rows."""
    z = predict_batches(net, direct_inputs(y_direct, net))
    return label_to_direct(z.astype(np.float64))


def predict_cascaded(net: Network, y_cols: np.ndarray, M: int, L: int) -> np.ndarray:
    """``(K, M, L)`` cascaded estimates from ``(K, L, P)`` phase-II rows (or ``(K, L, ML/L)`` joint rows)."""
    z = predict_batches(net, cascaded_inputs(y_cols))
    return label_to_cascaded(z.astype(np.float64), M, L)


def predict_channel(
    net_direct: Network, net_cascaded: Network | None, y_direct: np.ndarray, y_cols: np.ndarray | None, M: int, L: int
) -> ChannelEstimate:
    """Twin-network estimate for every user.

    ``net_cascaded`` may be None, in which case ``G_hat`` is all zeros and only
    the direct estimate is meaningful.
    """
    if net_direct.output_dim != 2 * M:
        raise ShapeError(f"direct network outputs {net_direct.output_dim} values, expected 2M={2 * M}")
    h_hat = predict_direct(net_direct, y_direct)
    if net_cascaded is None:
        G_hat = np.zeros(h_hat.shape + (L,), dtype=complex)
    else:
        if net_cascaded.output_dim != 2 * M * L:
            raise ShapeError(f"cascaded network outputs {net_cascaded.output_dim} values, expected 2ML={2 * M * L}")
        G_hat = predict_cascaded(net_cascaded, y_cols, M, L)
    return ChannelEstimate(h_hat, G_hat, "ChannelNet")
