"""Monte Carlo NMSE sweeps over SNR, pilot corruption, angle mismatch and switching error.

Every random draw comes from a generator seeded by ``(spec.seed, stream, j)``
for trial ``j``, independent of the grid point.  Grid points therefore see
common random numbers: the same channels, noise shapes and angle jitters,
only scaled by the swept knob.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .channel import ChannelRealization, draw_channels, perturb_user_angles, realization_generator
from .config import ScenarioConfig, parse_db, snr_to_noise_power, stable_hash
from .estimators import ls_cascaded_joint, ls_cascaded_per_column, ls_direct
from .pilots import corrupt_pilots, make_pilots, simulate_pilots

SWEEP_KINDS = ("snr", "pilot_snr", "angle_mismatch", "epsilon")
ESTIMATORS = ("ls_per_column", "ls_joint", "channelnet")
TARGETS = ("direct", "cascaded")
CHANNEL_MODES = ("shared", "fresh", "pool")

# generator stream ids
_CHANNEL, _FRESH, _POOL, _ANGLE, _PILOT, _NOISE = range(6)


class SweepError(ValueError):
    pass


def _ratio(truth: np.ndarray, estimate: np.ndarray, squared: bool = False) -> float:
    den = np.linalg.norm(truth)
    if den == 0:
        raise ValueError("NMSE is undefined for an all-zero true channel")
    r = np.linalg.norm(truth - estimate) / den
    return float(r * r if squared else r)


def nmse(truth: np.ndarray, estimates, squared: bool = False) -> float:
    """``(1/J) * sum_j ||truth - est_j||_F / ||truth||_F``.

    ``squared=True`` squares each ratio, the more common definition in other work.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    return sum(_ratio(truth, e, squared) for e in estimates) / len(estimates)


def to_db(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else -math.inf


@dataclass
class SweepSpec:
    """One experiment.  Grid units: dB for ``snr``/``pilot_snr``, degrees for
    ``angle_mismatch``, linear for ``epsilon`` (applied as eps_on = eps_off).

    The fixed knobs apply wherever they are not swept.  ``snr_db`` may be a
    list, in which case trial ``j`` uses ``snr_db[j % len(snr_db)]``.
    ``channel_mode`` picks the true channels: ``"shared"`` draws one
    realization for the whole sweep, ``"fresh"`` one per trial and ``"pool"``
    reuses realization ``v`` (uniform over ``pool_size``) of a dataset
    generated from the scenario seed.
    """

    kind: str
    grid: list[float]
    trials: int = 100
    estimators: list[str] = field(default_factory=lambda: ["ls_per_column", "ls_joint"])
    seed: int = 0
    snr_db: float | list[float] = 10.0
    snr_x_db: float = math.inf
    sigma_theta_deg: float = 0.0
    eps: float | None = None
    channel_mode: str = "shared"
    pool_size: int | None = None
    squared: bool = False

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise SweepError(f"unknown sweep kind {self.kind!r}")
        self.grid = [parse_db(g) for g in self.grid]
        if not self.grid:
            raise SweepError("grid must be nonempty")
        if self.trials < 1:
            raise SweepError("trials must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise SweepError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        if self.channel_mode not in CHANNEL_MODES:
            raise SweepError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.channel_mode == "pool" and not (self.pool_size and self.pool_size >= 1):
            raise SweepError("pool mode needs pool_size >= 1")
        self.snr_db = [parse_db(s) for s in self.snr_db] if isinstance(self.snr_db, list) else parse_db(self.snr_db)
        self.snr_x_db = parse_db(self.snr_x_db)
        if self.kind == "angle_mismatch" and any(g < 0 for g in self.grid):
            raise SweepError("angle mismatch std must be nonnegative")
        if self.kind == "epsilon" and any(not 0 <= g <= 0.5 for g in self.grid):
            raise SweepError("epsilon grid values must lie in [0, 0.5]")

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SweepSpec:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SweepError(f"unknown sweep fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SweepError(str(exc)) from exc

    def trial_snr(self, j: int, grid_value: float) -> float:
        if self.kind == "snr":
            return grid_value
        if isinstance(self.snr_db, list):
            return self.snr_db[j % len(self.snr_db)]
        return self.snr_db


@dataclass
class SweepResult:
    """NMSE per (grid value, estimator, target).

    ``rows`` hold ``grid_value, estimator, target, nmse, nmse_db, J`` plus
    ``per_user`` (list of per-user NMSE; ``nmse`` is their mean).
    ``run_info`` carries wall-clock data; it is ignored by equality and is
    not written to result files, which keeps those byte-reproducible.
    """

    kind: str
    grid: list[float]
    rows: list[dict[str, Any]]
    spec: dict[str, Any]
    scenario: dict[str, Any]
    run_info: dict[str, Any] = field(default_factory=dict, compare=False)

    def value(self, grid_value: float, estimator: str, target: str) -> float:
        for row in self.rows:
            if row["grid_value"] == grid_value and row["estimator"] == estimator and row["target"] == target:
                return row["nmse"]
        raise KeyError((grid_value, estimator, target))

    def curve(self, estimator: str, target: str) -> list[float]:
        return [self.value(g, estimator, target) for g in self.grid]

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SweepResult:
        d = _unjsonable(d)
        return cls(**d)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _unjsonable(obj):
    if isinstance(obj, str) and obj in ("inf", "-inf", "nan"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _unjsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unjsonable(v) for v in obj]
    return obj


def _trial_channel(spec: SweepSpec, scenario: ScenarioConfig, j: int, shared: ChannelRealization | None):
    if spec.channel_mode == "shared":
        return shared
    if spec.channel_mode == "fresh":
        return draw_channels(scenario, np.random.default_rng([spec.seed, _FRESH, j]))
    v = int(np.random.default_rng([spec.seed, _POOL, j]).integers(spec.pool_size))
    return draw_channels(scenario, realization_generator(scenario.seed, v))


def _run_trial(spec: SweepSpec, scenario: ScenarioConfig, grid_value: float, j: int, shared, nets) -> dict:
    ch = _trial_channel(spec, scenario, j, shared)
    sigma_deg = grid_value if spec.kind == "angle_mismatch" else spec.sigma_theta_deg
    if sigma_deg > 0:
        ch = perturb_user_angles(ch, math.radians(sigma_deg), np.random.default_rng([spec.seed, _ANGLE, j]))

    pilots = make_pilots(scenario.M, scenario.P, scenario.L, scenario.symbol_power)
    snr_x = grid_value if spec.kind == "pilot_snr" else spec.snr_x_db
    pilots = corrupt_pilots(pilots, snr_x, np.random.default_rng([spec.seed, _PILOT, j]), scenario.db_convention)

    if spec.kind == "epsilon":
        eps_on = eps_off = grid_value
    elif spec.eps is not None:
        eps_on = eps_off = spec.eps
    else:
        eps_on, eps_off = scenario.eps_on, scenario.eps_off
    snr = spec.trial_snr(j, grid_value)
    noise_power = snr_to_noise_power(snr, scenario.symbol_power)
    needs_joint = "ls_joint" in spec.estimators
    rx = simulate_pilots(
        ch, pilots, noise_power, np.random.default_rng([spec.seed, _NOISE, j]), eps_on, eps_off, needs_joint, snr
    )

    truth = {"direct": ch.h_direct, "cascaded": ch.G_cascaded}
    estimates: dict[tuple[str, str], np.ndarray] = {}
    if "ls_per_column" in spec.estimators or needs_joint:
        h_ls = ls_direct(rx.y_direct, pilots.X_clean)
        if "ls_per_column" in spec.estimators:
            estimates["ls_per_column", "direct"] = h_ls
            estimates["ls_per_column", "cascaded"] = ls_cascaded_per_column(rx.y_cascaded_cols, pilots.X_clean, h_ls)
        if needs_joint:
            estimates["ls_joint", "direct"] = h_ls
            estimates["ls_joint", "cascaded"] = ls_cascaded_joint(rx.y_cascaded_joint, pilots.X_bar_clean, h_ls)
    if "channelnet" in spec.estimators:
        from .nn.predict import predict_cascaded, predict_direct

        if nets.get("direct") is not None:
            estimates["channelnet", "direct"] = predict_direct(nets["direct"], rx.y_direct)
        if nets.get("cascaded") is not None:
            estimates["channelnet", "cascaded"] = predict_cascaded(
                nets["cascaded"], rx.y_cascaded_cols, scenario.M, scenario.L
            )
    return {
        key: np.array([_ratio(truth[key[1]][k], est[k], spec.squared) for k in range(scenario.K)])
        for key, est in estimates.items()
    }


def run_sweep(spec: SweepSpec, scenario: ScenarioConfig, nets: dict | None = None, threads: int = 1) -> SweepResult:
    """Run ``spec.trials`` trials at every grid point for every listed estimator.

    ``nets`` maps ``"direct"``/``"cascaded"`` to trained networks and is needed
    only when ``"channelnet"`` is listed; a missing network simply drops that
    target for the learned estimator.
    """
    nets = nets or {}
    if "channelnet" in spec.estimators and not any(nets.get(t) is not None for t in TARGETS):
        raise SweepError("the channelnet estimator needs at least one trained network")
    shared = None
    if spec.channel_mode == "shared":
        shared = draw_channels(scenario, np.random.default_rng([spec.seed, _CHANNEL]))

    rows, timing = [], []
    for g in spec.grid:
        t0 = time.perf_counter()

        def job(j, g=g):
            return _run_trial(spec, scenario, g, j, shared, nets)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                trials = list(pool.map(job, range(spec.trials)))
        else:
            trials = [job(j) for j in range(spec.trials)]
        for est in spec.estimators:
            for target in TARGETS:
                if (est, target) not in trials[0]:
                    continue
                per_user = sum(t[est, target] for t in trials) / spec.trials
                value = float(per_user.mean())
                rows.append(
                    {
                        "grid_value": g,
                        "estimator": est,
                        "target": target,
                        "nmse": value,
                        "nmse_db": to_db(value),
                        "J": spec.trials,
                        "per_user": [float(x) for x in per_user],
                    }
                )
        timing.append(time.perf_counter() - t0)
    return SweepResult(
        kind=spec.kind,
        grid=list(spec.grid),
        rows=rows,
        spec=asdict(spec),
        scenario=scenario.to_dict(),
        run_info={"elapsed_s": timing},
    )


# ---------------------------------------------------------------------------
# output files


def result_csv(result: SweepResult) -> str:
    n_users = max((len(r["per_user"]) for r in result.rows), default=0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["grid_value", "estimator", "target", "nmse", "nmse_db", "J"] + [f"nmse_user{k}" for k in range(n_users)])
    for r in result.rows:
        writer.writerow(
            [repr(float(r["grid_value"])), r["estimator"], r["target"], repr(r["nmse"]), repr(r["nmse_db"]), r["J"]]
            + [repr(x) for x in r["per_user"]]
        )
    return buf.getvalue()


def provenance(result: SweepResult) -> dict[str, Any]:
    return {
        "config_hash": stable_hash(_jsonable({"scenario": result.scenario, "spec": result.spec})),
        "sweep_seed": result.spec["seed"],
        "scenario_seed": result.scenario["seed"],
        "versions": {"lischan": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }


def emit(result: SweepResult, out_dir: str | Path, timestamp: str | None = None) -> tuple[Path, Path]:
    """Write ``<kind>_<timestamp>_<confighash>.csv`` and ``.json`` into ``out_dir``.

    The timestamp appears only in the file names, so the contents are
    identical for identical (spec, scenario, networks).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    prov = provenance(result)
    stem = f"{result.kind}_{timestamp}_{prov['config_hash']}"
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    body = result.to_dict()
    body.pop("run_info")
    payload = {"result": body, "provenance": prov}
    for path, text in ((csv_path, result_csv(result)), (json_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")):
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        tmp.replace(path)
    return csv_path, json_path


def load_result(path: str | Path) -> SweepResult:
    payload = json.loads(Path(path).read_text())
    return SweepResult.from_dict(payload["result"])

