"""Geometric (Saleh-Valenzuela) channels for the BS, the LIS and the users.

All arrays are complex128.  For ``K`` users the per-user quantities are
stacked along the first axis: ``h_direct`` is ``(K, M)``, ``h_lis_user`` is
``(K, L)`` and ``G_cascaded`` is ``(K, M, L)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig

TWO_PI = 2.0 * np.pi


def steering_vector(n_elements: int, theta: float) -> np.ndarray:
    """Unit-norm half-wavelength ULA response: ``exp(j*n*pi*sin(theta)) / sqrt(n_elements)``."""
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    n = np.arange(n_elements)
    return np.exp(1j * np.pi * n * np.sin(theta)) / np.sqrt(n_elements)


def steering_matrix(n_elements: int, thetas) -> np.ndarray:
    """Steering vectors for several angles, one per column."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    n = np.arange(n_elements)[:, None]
    return np.exp(1j * np.pi * n * np.sin(thetas)[None, :]) / np.sqrt(n_elements)


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """CN(0, variance) samples; each real component carries half the variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass
class PathParams:
    """Gains and angles of the paths of one channel.

    For the BS-LIS channel ``angles`` are the arrival angles at the LIS and
    ``departure_angles`` the departure angles at the BS.
    """

    gains: np.ndarray
    angles: np.ndarray
    departure_angles: np.ndarray | None = None

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex)
        self.angles = np.asarray(self.angles, dtype=float)
        if self.gains.shape != self.angles.shape:
            raise ValueError("gains and angles must have the same length")
        if self.departure_angles is not None:
            self.departure_angles = np.asarray(self.departure_angles, dtype=float)
            if self.departure_angles.shape != self.gains.shape:
                raise ValueError("departure_angles must match the path count")

    @property
    def n_paths(self) -> int:
        return self.gains.shape[0]


@dataclass
class ChannelRealization:
    h_direct: np.ndarray
    h_lis_user: np.ndarray
    H_bs_lis: np.ndarray
    G_cascaded: np.ndarray
    direct_paths: list[PathParams] = field(default_factory=list)
    lis_user_paths: list[PathParams] = field(default_factory=list)
    bs_lis_paths: PathParams | None = None

    @property
    def n_users(self) -> int:
        return self.h_direct.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h_direct.shape[1]

    @property
    def n_elements(self) -> int:
        return self.G_cascaded.shape[2]

    def with_channels(self, h_direct: np.ndarray, G_cascaded: np.ndarray) -> ChannelRealization:
        """Copy carrying substitute direct/cascaded channels (e.g. noisy labels).

        The copy no longer satisfies ``G = H diag(h_A)``; only the pilot
        simulators, which read ``h_direct`` and ``G_cascaded``, should use it.
        """
        return dataclasses.replace(self, h_direct=h_direct, G_cascaded=G_cascaded)


def _sv_vector(n_elements: int, paths: PathParams) -> np.ndarray:
    A = steering_matrix(n_elements, paths.angles)
    return np.sqrt(n_elements / paths.n_paths) * (A @ paths.gains)


def _sv_bs_lis(M: int, L: int, paths: PathParams) -> np.ndarray:
    A_bs = steering_matrix(M, paths.departure_angles)
    A_lis = steering_matrix(L, paths.angles)
    return np.sqrt(M * L / paths.n_paths) * (A_bs * paths.gains) @ A_lis.conj().T


def cascaded_channel(H: np.ndarray, h_lis_user: np.ndarray) -> np.ndarray:
    """``G_k = H diag(h_A,k)`` for every user (broadcast over the first axis)."""
    return H[None, :, :] * h_lis_user[:, None, :]


def build_channels(
    M: int,
    L: int,
    direct_paths: list[PathParams],
    lis_user_paths: list[PathParams],
    bs_lis_paths: PathParams,
) -> ChannelRealization:
    """Deterministically assemble all channels from explicit path parameters."""
    if len(direct_paths) != len(lis_user_paths):
        raise ValueError("need one direct and one LIS-user path set per user")
    h_direct = np.stack([_sv_vector(M, p) for p in direct_paths])
    h_lis_user = np.stack([_sv_vector(L, p) for p in lis_user_paths])
    H = _sv_bs_lis(M, L, bs_lis_paths)
    return ChannelRealization(
        h_direct=h_direct,
        h_lis_user=h_lis_user,
        H_bs_lis=H,
        G_cascaded=cascaded_channel(H, h_lis_user),
        direct_paths=list(direct_paths),
        lis_user_paths=list(lis_user_paths),
        bs_lis_paths=bs_lis_paths,
    )


def draw_channels(config: ScenarioConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one realization of every channel in the scenario.

    Gains are CN(0, 1) and all angles uniform on ``config.angle_range``.  The
    BS-LIS paths are drawn first, then each user's direct and LIS paths, so the
    output is a pure function of the generator state.
    """
    lo, hi = config.angle_range

    def angles(n):
        return rng.uniform(lo, hi, n)

    bs_lis = PathParams(
        gains=complex_normal(rng, config.N_H),
        departure_angles=angles(config.N_H),
        angles=angles(config.N_H),
    )
    direct, lis_user = [], []
    for _ in range(config.K):
        direct.append(PathParams(gains=complex_normal(rng, config.N_D), angles=angles(config.N_D)))
        lis_user.append(PathParams(gains=complex_normal(rng, config.N_A), angles=angles(config.N_A)))
    return build_channels(config.M, config.L, direct, lis_user, bs_lis)


def realization_generator(seed: int, index: int) -> np.random.Generator:
    """Generator for the ``index``-th channel realization of a seeded run.

    Dataset generation and the pooled evaluation mode both go through here so
    they agree on which channel realization ``v`` is.
    """
    return np.random.default_rng([seed, index])


@dataclass
class LisState:
    """Per-element on/off amplitudes and phase shifts of the LIS."""

    beta: np.ndarray
    phi: np.ndarray
    eps_on: float = 0.0
    eps_off: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.beta.shape != self.phi.shape or self.beta.ndim != 1:
            raise ValueError("beta and phi must be vectors of equal length")
        if self.eps_on < 0 or self.eps_off < 0 or 1 - self.eps_on < self.eps_off:
            raise ValueError("need eps_on, eps_off >= 0 and 1 - eps_on >= eps_off")
        if np.any((self.beta < 0) | (self.beta > 1)):
            raise ValueError("beta must lie in [0, 1]")
        if np.any((self.phi < 0) | (self.phi >= TWO_PI)):
            raise ValueError("phi must lie in [0, 2*pi)")

    @classmethod
    def from_mask(cls, on, eps_on: float = 0.0, eps_off: float = 0.0, phi=None) -> LisState:
        on = np.asarray(on, dtype=bool)
        beta = np.where(on, 1.0 - eps_on, eps_off)
        if phi is None:
            phi = np.zeros(on.shape)
        return cls(beta=beta, phi=phi, eps_on=eps_on, eps_off=eps_off)

    @classmethod
    def all_off(cls, n_elements: int, eps_on: float = 0.0, eps_off: float = 0.0) -> LisState:
        return cls.from_mask(np.zeros(n_elements, bool), eps_on, eps_off)

    @classmethod
    def all_on(cls, n_elements: int, eps_on: float = 0.0, eps_off: float = 0.0) -> LisState:
        return cls.from_mask(np.ones(n_elements, bool), eps_on, eps_off)

    @property
    def n_elements(self) -> int:
        return self.beta.shape[0]


def reflect_vector(state: LisState) -> np.ndarray:
    return state.beta * np.exp(1j * state.phi)


def single_element_state(l: int, n_elements: int, eps_on: float = 0.0, eps_off: float = 0.0) -> LisState:
    """Only element ``l`` switched on, with zero phase."""
    if not 0 <= l < n_elements:
        raise IndexError(f"LIS element {l} out of range for L={n_elements}")
    on = np.zeros(n_elements, bool)
    on[l] = True
    return LisState.from_mask(on, eps_on, eps_off)


def perturb_angles(paths: PathParams, sigma: float, rng: np.random.Generator) -> PathParams:
    """Add zero-mean Gaussian noise of std ``sigma`` (radians) to the arrival angles.

    Gains and departure angles are copied untouched.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return PathParams(
        gains=paths.gains.copy(),
        angles=paths.angles + rng.normal(0.0, sigma, paths.angles.shape),
        departure_angles=None if paths.departure_angles is None else paths.departure_angles.copy(),
    )


def perturb_user_angles(ch: ChannelRealization, sigma: float, rng: np.random.Generator) -> ChannelRealization:
    """Angle-mismatched copy of ``ch``: every user-path AOA jittered, BS-LIS link kept."""
    direct, lis_user = [], []
    for d, a in zip(ch.direct_paths, ch.lis_user_paths):
        direct.append(perturb_angles(d, sigma, rng))
        lis_user.append(perturb_angles(a, sigma, rng))
    M, L = ch.n_antennas, ch.n_elements
    return build_channels(M, L, direct, lis_user, ch.bs_lis_paths)
