"""Scenario configuration shared by every stage of the pipeline."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

DB_CONVENTIONS = ("amplitude", "power")


class ConfigError(ValueError):
    """Raised for invalid or unreadable configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """System dimensions, path counts and noise knobs for one experiment.

    ``P`` defaults to ``M``.  ``noise_power`` is the linear thermal noise
    variance used when no explicit SNR is given.  ``db_convention`` selects
    how the pilot/label corruption SNRs are read: ``"amplitude"`` applies
    ``20*log10(|x|^2 / sigma^2)`` literally, ``"power"`` uses ``10*log10``.
    """

    M: int = 16
    L: int = 8
    K: int = 2
    P: int | None = None
    N_D: int = 10
    N_A: int = 10
    N_H: int = 10
    angle_range: tuple[float, float] = (-math.pi, math.pi)
    noise_power: float = 0.1
    seed: int = 0
    eps_on: float = 0.0
    eps_off: float = 0.0
    symbol_power: float = 1.0
    db_convention: str = "amplitude"

    def __post_init__(self):
        if self.P is None:
            object.__setattr__(self, "P", self.M)
        object.__setattr__(self, "angle_range", tuple(float(a) for a in self.angle_range))
        self.validate()

    def validate(self) -> None:
        for name in ("M", "L", "K", "P", "N_D", "N_A", "N_H"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.P < self.M:
            raise ConfigError(f"P ({self.P}) must be >= M ({self.M})")
        if len(self.angle_range) != 2 or not self.angle_range[0] <= self.angle_range[1]:
            raise ConfigError(f"angle_range must be an ordered pair, got {self.angle_range!r}")
        if not self.noise_power >= 0:
            raise ConfigError("noise_power must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.eps_on < 0 or self.eps_off < 0 or 1 - self.eps_on < self.eps_off:
            raise ConfigError("switching imperfections need eps_on, eps_off >= 0 and 1 - eps_on >= eps_off")
        if not self.symbol_power > 0:
            raise ConfigError("symbol_power must be positive")
        if self.db_convention not in DB_CONVENTIONS:
            raise ConfigError(f"db_convention must be one of {DB_CONVENTIONS}")

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["angle_range"] = list(self.angle_range)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> ScenarioConfig:
        return cls.from_dict(read_json(path))

    def config_hash(self) -> str:
        return stable_hash(self.to_dict())


def read_json(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object at top level")
    return data


def stable_hash(obj: Any, length: int = 12) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:length]


def parse_db(value: Any) -> float:
    """Read an SNR value from JSON; ``null``, ``"inf"`` and ``Infinity`` mean no noise."""
    if value is None:
        return math.inf
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"not an SNR value: {value!r}") from exc
    return float(value)


def db_to_ratio(snr_db: float, convention: str = "amplitude") -> float:
    """Linear ``|x|^2 / sigma^2`` ratio implied by an SNR in dB."""
    if convention == "amplitude":
        return 10.0 ** (snr_db / 20.0)
    if convention == "power":
        return 10.0 ** (snr_db / 10.0)
    raise ConfigError(f"unknown dB convention {convention!r}")


def snr_to_noise_power(snr_db: float, symbol_power: float = 1.0) -> float:
    """Thermal noise variance for a received SNR of ``10*log10(symbol_power / sigma^2)``."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return symbol_power / 10.0 ** (snr_db / 10.0)
