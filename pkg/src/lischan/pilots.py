"""Orthogonal pilots and the two-phase received-pilot simulator.

Phase I switches every LIS element off and observes the direct channel.
Phase II either switches elements on one at a time (per-column approach,
one ``P``-symbol frame per element) or switches all of them on and sounds the
stacked ``ML`` vector with the joint pilot matrix ``X_bar``.

Receive functions return one row per user: ``(K, P)`` for phase I and each
per-element frame, ``(K, M*L)`` for the joint variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, LisState, complex_normal, reflect_vector, single_element_state
from .config import db_to_ratio


@dataclass
class PilotMatrix:
    """Transmitted pilot matrices plus the nominal ones known at the receiver.

    ``X_clean``/``X_bar_clean`` equal ``X``/``X_bar`` unless the pilots were
    corrupted, in which case estimators must keep using the clean ones.
    """

    X: np.ndarray
    X_bar: np.ndarray | None = None
    symbol_power: float = 1.0
    X_clean: np.ndarray | None = None
    X_bar_clean: np.ndarray | None = None

    def __post_init__(self):
        if self.X_clean is None:
            self.X_clean = self.X
        if self.X_bar_clean is None:
            self.X_bar_clean = self.X_bar

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        return self.X.shape[1]

    @property
    def is_corrupted(self) -> bool:
        return self.X is not self.X_clean or self.X_bar is not self.X_bar_clean


def _dft_rows(n_rows: int, n_cols: int) -> np.ndarray:
    m = np.arange(n_rows)[:, None]
    p = np.arange(n_cols)[None, :]
    return np.exp(-2j * np.pi * m * p / n_cols)


def make_pilots(M: int, P: int, L: int | None = None, symbol_power: float = 1.0) -> PilotMatrix:
    """DFT pilots: rows of a ``P``-point DFT (``M x P``) and an ``ML``-point DFT for ``X_bar``.

    Entries have modulus ``sqrt(symbol_power)`` so ``X X^H = symbol_power * P * I``.
    """
    if P < M:
        raise ValueError(f"need P >= M for orthogonal pilots, got P={P}, M={M}")
    scale = np.sqrt(symbol_power)
    X = scale * _dft_rows(M, P)
    X_bar = None if L is None else scale * _dft_rows(M * L, M * L)
    return PilotMatrix(X=X, X_bar=X_bar, symbol_power=symbol_power)


def corrupt_pilots(
    pilots: PilotMatrix, snr_x_db: float, rng: np.random.Generator, convention: str = "amplitude"
) -> PilotMatrix:
    """Add CN(0, sigma_X^2) to every transmitted pilot entry.

    ``sigma_X^2`` solves ``SNR_X = 20*log10(|x|^2 / sigma_X^2)`` (or ``10*log10``
    under ``convention="power"``) for the pilots' per-entry power.  The result
    is one fixed corrupted codebook: every frame sent with it shares the same
    corruption.  ``snr_x_db = +inf`` returns the pilots unchanged.
    """
    if math.isinf(snr_x_db) and snr_x_db > 0:
        return pilots
    if not math.isfinite(snr_x_db):
        raise ValueError("snr_x_db must be finite or +inf")
    variance = pilots.symbol_power / db_to_ratio(snr_x_db, convention)
    X = pilots.X_clean + complex_normal(rng, pilots.X_clean.shape, variance)
    X_bar = None
    if pilots.X_bar_clean is not None:
        X_bar = pilots.X_bar_clean + complex_normal(rng, pilots.X_bar_clean.shape, variance)
    return PilotMatrix(
        X=X,
        X_bar=X_bar,
        symbol_power=pilots.symbol_power,
        X_clean=pilots.X_clean,
        X_bar_clean=pilots.X_bar_clean,
    )


def _check_dims(ch: ChannelRealization, X: np.ndarray) -> None:
    if ch.h_direct.shape[1] != X.shape[0]:
        raise ValueError(f"pilot matrix has {X.shape[0]} rows but the channel has M={ch.h_direct.shape[1]}")


def _receive(effective: np.ndarray, X: np.ndarray, noise_power: float, rng) -> np.ndarray:
    # effective: (K, n) rows already conjugated, i.e. c^H for each user
    y = effective @ X
    if noise_power > 0:
        y = y + complex_normal(rng, y.shape, noise_power)
    return y


def phase1_receive(
    ch: ChannelRealization,
    lis: LisState,
    pilots: PilotMatrix,
    noise_power: float,
    rng: np.random.Generator,
    require_off: bool = True,
) -> np.ndarray:
    """``y = (h_D^H + psi^H G^H) X + n`` with the LIS in state ``lis``.

    Phase I needs every element off; pass ``require_off=False`` to evaluate
    the same received-signal model for an arbitrary reflect state.
    """
    _check_dims(ch, pilots.X)
    if lis.n_elements != ch.n_elements:
        raise ValueError("LIS state size does not match the channel")
    if require_off and np.any(lis.beta > lis.eps_off):
        raise ValueError("phase I expects every LIS element switched off")
    psi = reflect_vector(lis)
    effective = (ch.h_direct + ch.G_cascaded @ psi).conj()
    return _receive(effective, pilots.X, noise_power, rng)


def phase2_element_receive(
    ch: ChannelRealization,
    l: int,
    pilots: PilotMatrix,
    noise_power: float,
    eps_on: float,
    eps_off: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Frame ``l`` of the per-column approach: only element ``l`` on."""
    _check_dims(ch, pilots.X)
    psi = reflect_vector(single_element_state(l, ch.n_elements, eps_on, eps_off))
    effective = (ch.h_direct + ch.G_cascaded @ psi).conj()
    return _receive(effective, pilots.X, noise_power, rng)


def phase2_all_elements(
    ch: ChannelRealization,
    pilots: PilotMatrix,
    noise_power: float,
    eps_on: float,
    eps_off: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """All ``L`` per-element frames, fresh noise per frame; shape ``(K, L, P)``."""
    frames = [
        phase2_element_receive(ch, l, pilots, noise_power, eps_on, eps_off, rng) for l in range(ch.n_elements)
    ]
    return np.stack(frames, axis=1)


def phase2_joint_receive(
    ch: ChannelRealization, pilots: PilotMatrix, noise_power: float, eps_on: float, rng: np.random.Generator
) -> np.ndarray:
    """All elements on: ``y_bar = (1_L kron h_D + (1 - eps_on) g_bar)^H X_bar + n``."""
    if pilots.X_bar is None:
        raise ValueError("joint phase II needs pilots built with L (X_bar missing)")
    K, M, L = ch.G_cascaded.shape
    if pilots.X_bar.shape[0] != M * L:
        raise ValueError(f"X_bar has {pilots.X_bar.shape[0]} rows, expected M*L={M * L}")
    h_bar = np.tile(ch.h_direct, (1, L))
    # column-major vec(G_k): columns g_k1, ..., g_kL stacked
    g_bar = ch.G_cascaded.transpose(0, 2, 1).reshape(K, M * L)
    effective = (h_bar + (1.0 - eps_on) * g_bar).conj()
    return _receive(effective, pilots.X_bar, noise_power, rng)


@dataclass
class ReceivedPilots:
    y_direct: np.ndarray
    y_cascaded_cols: np.ndarray
    y_cascaded_joint: np.ndarray | None
    snr_db: float


def simulate_pilots(
    ch: ChannelRealization,
    pilots: PilotMatrix,
    noise_power: float,
    rng: np.random.Generator,
    eps_on: float = 0.0,
    eps_off: float = 0.0,
    joint: bool = True,
    snr_db: float = math.nan,
) -> ReceivedPilots:
    """Run phase I and phase II for every user.

    Noise is drawn in a fixed order (phase I, the ``L`` element frames, then
    the joint frame) so results depend only on the generator state.
    """
    off = LisState.all_off(ch.n_elements, eps_on=eps_on, eps_off=eps_off)
    y_d = phase1_receive(ch, off, pilots, noise_power, rng)
    y_cols = phase2_all_elements(ch, pilots, noise_power, eps_on, eps_off, rng)
    y_joint = phase2_joint_receive(ch, pilots, noise_power, eps_on, rng) if joint else None
    return ReceivedPilots(y_direct=y_d, y_cascaded_cols=y_cols, y_cascaded_joint=y_joint, snr_db=snr_db)
