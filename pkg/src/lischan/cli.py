"""``lischan`` command line: generate datasets, train networks, predict, run sweeps.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, parse_db, read_json
from .dataset import DatasetFormatError, generate, load_dataset, save_dataset, split
from .estimators import RankDeficientError
from .evaluation import SweepError, SweepSpec, emit, run_sweep
from .nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn.layers import channelnet_preset
from .nn.network import ShapeError, build_network
from .nn.train import TrainConfig, TrainingDivergedError, train

log = logging.getLogger("lischan")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(
    out_dir: Path, subcommand: str, config: dict, inputs: list, outputs: list, seed, started: float, extra_timings=None, tag: str = ""
) -> Path:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timings": {"finished": _now(), "wall_seconds": round(time.perf_counter() - started, 3)} | (extra_timings or {}),
    }
    path = out_dir / f"manifest_{subcommand}{tag}.json"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    tmp.replace(path)
    return path


def _load_scenario(data: dict, seed: int | None) -> ScenarioConfig:
    scenario = ScenarioConfig.from_dict(data)
    return scenario.replace(seed=seed) if seed is not None else scenario


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    started = time.perf_counter()
    cfg = read_json(args.config)
    if "scenario" not in cfg:
        raise ConfigError(f"{args.config}: missing 'scenario' section")
    scenario = _load_scenario(cfg["scenario"], args.seed)
    gen = dict(cfg.get("generation", {}))
    unknown = set(gen) - {"U", "V", "label_snrs", "train_snrs", "cascaded_input", "dtype"}
    if unknown:
        raise ConfigError(f"unknown generation fields: {sorted(unknown)}")
    try:
        U, V = int(gen.get("U", 1)), int(gen.get("V", 1))
        label_snrs = [parse_db(s) for s in gen.get("label_snrs", [None])]
        train_snrs = [parse_db(s) for s in gen.get("train_snrs", [20])]
        dtype = np.dtype(gen.get("dtype", "float32"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid generation section: {exc}") from exc
    ds_dc, ds_cc = generate(
        scenario,
        U,
        V,
        label_snrs,
        train_snrs,
        cascaded_input=gen.get("cascaded_input", "per_column"),
        threads=args.threads,
        dtype=dtype,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [save_dataset(ds_dc, out / "direct.lisd"), save_dataset(ds_cc, out / "cascaded.lisd")]
    resolved = {"scenario": scenario.to_dict(), "generation": ds_dc.gen_params | {"dtype": dtype.name}}
    write_manifest(out, "generate", _json_safe(resolved), [args.config], paths, scenario.seed, started)
    print(f"wrote {len(ds_dc)} samples per dataset to {out}")
    return 0


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = read_json(args.config)
    network_cfg = dict(cfg.pop("network", {}))
    dtype = np.dtype(cfg.pop("dtype", "float32"))
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        tcfg = TrainConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training config: {exc}") from exc
    ds = load_dataset(args.dataset)
    specs = channelnet_preset(
        filters=network_cfg.get("filters", 256),
        kernel=tuple(network_cfg.get("kernel", (3, 3))),
        units=tuple(network_cfg.get("units", (1024, 2048))),
        dropout=network_cfg.get("dropout", 0.5),
    )
    train_set, val_set = split(ds, tcfg.train_fraction, np.random.default_rng(tcfg.seed))
    net = build_network(specs, ds.inputs.shape[1:], ds.labels.shape[1], seed=tcfg.seed, dtype=dtype, kind=ds.kind)
    net, history = train(net, train_set, val_set, tcfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(net, out / f"{ds.kind}.ckpt")
    log_path = out / f"{ds.kind}_log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_mse", "val_nmse", "best"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_mse"]), repr(row["val_nmse"]), int(row["best"])])
    resolved = {"train": tcfg.to_dict(), "network": [s.to_dict() for s in specs], "dtype": dtype.name}
    write_manifest(out, "train", resolved, [args.dataset, args.config], [ckpt, log_path], tcfg.seed, started, tag=f"_{ds.kind}")
    best = min(history, key=lambda r: r["val_mse"])
    print(f"trained {len(history)} epochs; best epoch {best['epoch']} val_nmse {best['val_nmse']:.4f}")
    return 0


def _load_nets(args) -> dict:
    nets = {}
    for target in ("direct", "cascaded"):
        path = getattr(args, f"checkpoint_{target}")
        if path:
            nets[target] = load_checkpoint(path)
    return nets


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    spec_data = read_json(args.config)
    if args.seed is not None:
        spec_data["seed"] = args.seed
    spec = SweepSpec.from_dict(spec_data)
    scenario = ScenarioConfig.from_json(args.scenario)
    nets = _load_nets(args)
    if "channelnet" in spec.estimators and not nets:
        raise CliError("sweep lists 'channelnet' but no --checkpoint-direct/--checkpoint-cascaded was given", EXIT_CONFIG)
    result = run_sweep(spec, scenario, nets, threads=args.threads)
    out = Path(args.out)
    paths = emit(result, out)
    inputs = [args.config, args.scenario] + [p for p in (args.checkpoint_direct, args.checkpoint_cascaded) if p]
    resolved = {"spec": spec.to_dict(), "scenario": scenario.to_dict()}
    write_manifest(out, "sweep", resolved, inputs, paths, spec.seed, started, extra_timings=result.run_info)
    for p in paths:
        print(p)
    return 0


def cmd_predict(args) -> int:
    """Estimate one seeded channel draw with the networks and report NMSE against the truth."""
    from .channel import draw_channels
    from .evaluation import nmse
    from .nn.predict import predict_channel
    from .pilots import make_pilots, simulate_pilots

    started = time.perf_counter()
    scenario = _load_scenario(read_json(args.scenario), args.seed)
    nets = _load_nets(args)
    if "direct" not in nets:
        raise CliError("predict needs --checkpoint-direct", EXIT_CONFIG)
    rng = np.random.default_rng(scenario.seed)
    ch = draw_channels(scenario, rng)
    pilots = make_pilots(scenario.M, scenario.P, scenario.L, scenario.symbol_power)
    rx = simulate_pilots(ch, pilots, scenario.noise_power, rng, scenario.eps_on, scenario.eps_off, joint=False)
    est = predict_channel(nets["direct"], nets.get("cascaded"), rx.y_direct, rx.y_cascaded_cols, scenario.M, scenario.L)
    report = {
        "snr_db": 10 * np.log10(scenario.symbol_power / scenario.noise_power) if scenario.noise_power else "inf",
        "nmse_direct": [nmse(ch.h_direct[k], [est.h_direct_hat[k]]) for k in range(scenario.K)],
        "h_direct_hat": [[[z.real, z.imag] for z in row] for row in est.h_direct_hat],
    }
    if "cascaded" in nets:
        report["nmse_cascaded"] = [nmse(ch.G_cascaded[k], [est.G_hat[k]]) for k in range(scenario.K)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "prediction.json"
    path.write_text(json.dumps(report, indent=1) + "\n")
    write_manifest(out, "predict", {"scenario": scenario.to_dict()}, [args.scenario], [path], scenario.seed, started)
    print(path)
    return 0


def _json_safe(obj):
    from .evaluation import _jsonable

    return _jsonable(obj)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lischan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lischan {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help):
        p.add_argument("--config", required=True, help=config_help)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the seed from the config")
        p.add_argument("--threads", type=int, default=1, help="parallelism cap")

    p = sub.add_parser("generate", help="build direct and cascaded training datasets")
    common(p, "JSON with 'scenario' and 'generation' sections")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one network on a dataset file")
    common(p, "training config JSON")
    p.add_argument("--dataset", required=True, help="dataset file written by 'generate'")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run an NMSE sweep")
    common(p, "sweep spec JSON")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--checkpoint-direct", default=None)
    p.add_argument("--checkpoint-cascaded", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="estimate one seeded channel draw with trained networks")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint-direct", default=None)
    p.add_argument("--checkpoint-cascaded", default=None)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"lischan: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SweepError) as exc:
        print(f"lischan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetFormatError, CheckpointError, ShapeError) as exc:
        print(f"lischan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"lischan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, RankDeficientError, FloatingPointError) as exc:
        print(f"lischan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"lischan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
