"""Closed-form least-squares channel estimators.

Each estimator accepts a single user's received rows or a stack over users
(leading axis ``K``) and returns matching shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pilots import PilotMatrix, ReceivedPilots

METHODS = ("LS-direct", "LS-per-column", "LS-joint", "ChannelNet")
RANK_TOL = 1e-12


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class ChannelEstimate:
    h_direct_hat: np.ndarray
    G_hat: np.ndarray
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown estimation method {self.method!r}")
        if self.G_hat.shape[:-2] != self.h_direct_hat.shape[:-1] or self.G_hat.shape[-2] != self.h_direct_hat.shape[-1]:
            raise ValueError("G_hat must be (..., M, L) for h_direct_hat of shape (..., M)")


def _right_pinv(X: np.ndarray) -> np.ndarray:
    """``X^H (X X^H)^{-1}`` through the SVD of ``X``; rejects rank-deficient pilots."""
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[-1] < RANK_TOL * s[0] or X.shape[0] > X.shape[1]:
        raise RankDeficientError("pilot matrix does not have full row rank")
    return (Vh.conj().T / s) @ U.conj().T


def _ls_rows(y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Solve ``c^H X = y`` in the LS sense for every row of ``y``; returns ``c``."""
    y = np.asarray(y)
    if y.shape[-1] != X.shape[1]:
        raise ValueError(f"received rows have length {y.shape[-1]}, pilots have {X.shape[1]} columns")
    return (y @ _right_pinv(X)).conj()


def ls_direct(y_direct: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``h_hat = (y X^H (X X^H)^{-1})^H``."""
    return _ls_rows(y_direct, X)


def ls_cascaded_per_column(
    y_cols: np.ndarray, X: np.ndarray, h_direct_hat: np.ndarray, n_elements: int | None = None
) -> np.ndarray:
    """Per-element LS: column ``l`` is the LS fit of frame ``l`` minus ``h_direct_hat``.

    ``y_cols`` is ``(L, P)`` or ``(K, L, P)``; the result is ``(M, L)`` or ``(K, M, L)``.
    """
    y_cols = np.asarray(y_cols)
    if n_elements is not None and y_cols.shape[-2] != n_elements:
        raise ValueError(f"expected {n_elements} element frames, got {y_cols.shape[-2]}")
    h = np.asarray(h_direct_hat)
    if h.shape[:-1] != y_cols.shape[:-2]:
        raise ValueError("h_direct_hat and y_cols disagree on the user axis")
    cols = _ls_rows(y_cols, X) - h[..., None, :]
    return np.swapaxes(cols, -1, -2)


def ls_cascaded_joint(y_joint: np.ndarray, X_bar: np.ndarray, h_direct_hat: np.ndarray) -> np.ndarray:
    """Joint LS over the stacked ``ML`` vector, de-stacked into ``(..., M, L)``."""
    h = np.asarray(h_direct_hat)
    M = h.shape[-1]
    n = np.asarray(y_joint).shape[-1]
    if n % M:
        raise ValueError(f"joint received length {n} is not a multiple of M={M}")
    L = n // M
    g_bar = _ls_rows(y_joint, X_bar) - np.tile(h, L)
    cols = g_bar.reshape(g_bar.shape[:-1] + (L, M))
    return np.swapaxes(cols, -1, -2)


def estimate_ls(received: ReceivedPilots, pilots: PilotMatrix, approach: str = "per_column") -> ChannelEstimate:
    """Both LS stages using the receiver's nominal (clean) pilots."""
    h_hat = ls_direct(received.y_direct, pilots.X_clean)
    if approach == "per_column":
        G_hat = ls_cascaded_per_column(received.y_cascaded_cols, pilots.X_clean, h_hat)
        return ChannelEstimate(h_hat, G_hat, "LS-per-column")
    if approach == "joint":
        if received.y_cascaded_joint is None or pilots.X_bar_clean is None:
            raise ValueError("joint approach needs joint received pilots and X_bar")
        G_hat = ls_cascaded_joint(received.y_cascaded_joint, pilots.X_bar_clean, h_hat)
        return ChannelEstimate(h_hat, G_hat, "LS-joint")
    raise ValueError(f"unknown approach {approach!r}")
