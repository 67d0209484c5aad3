"""Training-set generation for the twin regressor and its binary file format.

Inputs are three-channel real tensors (real part, imaginary part, modulus of
the received pilots).  Labels are ``[Re(vec(c)), Im(vec(c))]`` for the direct
channel ``h`` or the column-major ``vec(G)``.

File layout (all integers little-endian)::

    offset 0   8 bytes   magic b"LISDSET\\0"
    offset 8   1 byte    format version (currently 1)
    offset 9   4 bytes   uint32 header length H
    offset 13  H bytes   UTF-8 JSON header
    then       the arrays listed in header["arrays"], in order, raw C-order
               bytes with the dtype and shape given there

The header also carries the scenario, the generation parameters and the
per-channel input normalization statistics.
"""

from __future__ import annotations

import itertools
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .channel import ChannelRealization, complex_normal, draw_channels, realization_generator
from .config import ScenarioConfig, db_to_ratio, snr_to_noise_power
from .pilots import PilotMatrix, make_pilots, phase2_joint_receive, simulate_pilots

MAGIC = b"LISDSET\0"
VERSION = 1
KINDS = ("direct", "cascaded")
META_FIELDS = (("user", "<i4"), ("u", "<i4"), ("v", "<i4"), ("snr_db", "<f8"), ("label_snr_db", "<f8"))


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


# ---------------------------------------------------------------------------
# per-sample building blocks


def noisy_label(values: np.ndarray, snr_label_db: float, rng: np.random.Generator, convention: str = "amplitude"):
    """Perturb every entry by CN(0, sigma^2) with sigma^2 solved per entry from its own magnitude."""
    values = np.asarray(values)
    if math.isinf(snr_label_db) and snr_label_db > 0:
        return values.copy()
    variance = np.abs(values) ** 2 / db_to_ratio(snr_label_db, convention)
    return values + complex_normal(rng, values.shape) * np.sqrt(variance)


def three_channel(matrix: np.ndarray) -> np.ndarray:
    return np.stack([matrix.real, matrix.imag, np.abs(matrix)], axis=-1)


def rectangular_shape(n: int) -> tuple[int, int]:
    """Most nearly square ``rows x cols`` factorization of ``n`` with rows <= cols."""
    rows = math.isqrt(n)
    while n % rows:
        rows -= 1
    return rows, n // rows


def build_input_direct(y_direct: np.ndarray, M: int, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Fold the phase-I row into a ``sqrt(M) x sqrt(M) x 3`` tensor, column-major.

    ``shape`` overrides the fold, e.g. ``rectangular_shape(P)`` when ``P != M``
    or ``M`` is not a perfect square.
    """
    y = np.asarray(y_direct).ravel()
    if shape is None:
        side = math.isqrt(M)
        if y.size != M:
            raise ValueError(f"phase-I row has {y.size} samples but M={M}; pass an explicit shape")
        if side * side != M:
            raise ValueError(f"M={M} is not a perfect square; pass shape=rectangular_shape(M)")
        shape = (side, side)
    if shape[0] * shape[1] != y.size:
        raise ValueError(f"cannot fold {y.size} samples into {shape}")
    return three_channel(y.reshape(shape, order="F"))


def build_input_cascaded(y_cols: np.ndarray) -> np.ndarray:
    """Stack the ``L`` phase-II rows into one ``LP`` vector and fold it ``L x P`` column-major."""
    rows = [np.asarray(r).ravel() for r in y_cols]
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"phase-II rows have inconsistent lengths {sorted(lengths)}")
    stacked = np.concatenate(rows)
    return three_channel(stacked.reshape((len(rows), lengths.pop()), order="F"))


def unfold_input(tensor: np.ndarray) -> np.ndarray:
    """Complex signal (column-major vector) behind a three-channel input tensor."""
    return (tensor[..., 0] + 1j * tensor[..., 1]).ravel(order="F")


def build_labels(h_direct: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``z_DC`` (length 2M) and ``z_CC`` (length 2ML) for one user."""
    h = np.asarray(h_direct).ravel()
    g = np.asarray(G).ravel(order="F")
    return np.concatenate([h.real, h.imag]), np.concatenate([g.real, g.imag])


def label_to_direct(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    half = z.shape[-1] // 2
    return z[..., :half] + 1j * z[..., half:]


def label_to_cascaded(z: np.ndarray, M: int, L: int) -> np.ndarray:
    """Invert the column-major ``z_CC`` vectorization; works on a leading batch axis too."""
    g = label_to_direct(z)
    return np.swapaxes(g.reshape(g.shape[:-1] + (L, M)), -1, -2)


# ---------------------------------------------------------------------------
# containers


@dataclass
class Sample:
    input: np.ndarray
    label: np.ndarray
    kind: str
    meta: dict[str, Any]


@dataclass
class Dataset:
    """Column-oriented store of samples of one kind.

    ``inputs`` is ``(T, rows, cols, 3)``, ``labels`` is ``(T, D)``, and every
    entry of ``meta`` is a length-``T`` array.
    """

    kind: str
    inputs: np.ndarray
    labels: np.ndarray
    meta: dict[str, np.ndarray]
    config: ScenarioConfig
    gen_params: dict[str, Any] = field(default_factory=dict)
    stats: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on the sample count")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, t: int) -> Sample:
        meta = {k: v[t].item() for k, v in self.meta.items()}
        return Sample(self.inputs[t], self.labels[t], self.kind, meta)

    def __iter__(self):
        return (self[t] for t in range(len(self)))

    @property
    def dtype(self) -> np.dtype:
        return self.inputs.dtype

    def subset(self, index: np.ndarray) -> Dataset:
        return Dataset(
            kind=self.kind,
            inputs=self.inputs[index],
            labels=self.labels[index],
            meta={k: v[index] for k, v in self.meta.items()},
            config=self.config,
            gen_params=dict(self.gen_params),
            stats=self.stats,
        )


def normalization_stats(inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over all samples and positions."""
    flat = inputs.reshape(-1, inputs.shape[-1]).astype(np.float64)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


# ---------------------------------------------------------------------------
# Algorithm: V realizations x SNR combinations x U noisy copies x K users


def _realization_samples(
    config: ScenarioConfig,
    v: int,
    U: int,
    combos: list[tuple[float, float]],
    pilots: PilotMatrix,
    cascaded_input: str,
    shape: tuple[int, int] | None,
):
    rng = realization_generator(config.seed, v)
    ch = draw_channels(config, rng)
    M, L = config.M, config.L
    x_dc, x_cc, z_dc, z_cc, meta = [], [], [], [], []
    for snr_db, label_snr_db in combos:
        noise_power = snr_to_noise_power(snr_db, config.symbol_power)
        for u in range(U):
            h_noisy = noisy_label(ch.h_direct, label_snr_db, rng, config.db_convention)
            G_noisy = noisy_label(ch.G_cascaded, label_snr_db, rng, config.db_convention)
            labelled = ch.with_channels(h_noisy, G_noisy)
            rx = simulate_pilots(labelled, pilots, noise_power, rng, config.eps_on, config.eps_off, joint=False)
            if cascaded_input == "joint":
                y_joint = phase2_joint_receive(labelled, pilots, noise_power, config.eps_on, rng)
            for k in range(config.K):
                x_dc.append(build_input_direct(rx.y_direct[k], M, shape))
                if cascaded_input == "joint":
                    x_cc.append(build_input_cascaded(y_joint[k].reshape(L, M)))
                else:
                    x_cc.append(build_input_cascaded(rx.y_cascaded_cols[k]))
                zd, zc = build_labels(h_noisy[k], G_noisy[k])
                z_dc.append(zd)
                z_cc.append(zc)
                meta.append((k, u, v, snr_db, label_snr_db))
    return x_dc, x_cc, z_dc, z_cc, meta


def generate(
    config: ScenarioConfig,
    U: int,
    V: int,
    label_snrs=(math.inf,),
    train_snrs=(20.0,),
    *,
    cascaded_input: str = "per_column",
    direct_shape: tuple[int, int] | None = None,
    threads: int = 1,
    dtype=np.float32,
) -> tuple[Dataset, Dataset]:
    """Build the direct and cascaded training sets.

    For each realization ``v`` (its own generator, derived from
    ``(config.seed, v)``), every (train SNR, label SNR) pair and every noisy
    copy ``u``, the noisy channels are sounded with the pilot protocol and one
    sample per user is emitted.  Length is ``U*V*K*len(train_snrs)*len(label_snrs)``.
    The per-column approach feeds the cascaded inputs unless
    ``cascaded_input="joint"``.
    """
    if U < 1 or V < 1:
        raise ValueError("U and V must be >= 1")
    if cascaded_input not in ("per_column", "joint"):
        raise ValueError(f"unknown cascaded_input {cascaded_input!r}")
    if not label_snrs or not train_snrs:
        raise ValueError("need at least one train SNR and one label SNR")
    if direct_shape is None and config.P != config.M:
        direct_shape = rectangular_shape(config.P)
    elif direct_shape is None and math.isqrt(config.M) ** 2 != config.M:
        direct_shape = rectangular_shape(config.M)
    combos = list(itertools.product([float(s) for s in train_snrs], [float(s) for s in label_snrs]))
    pilots = make_pilots(config.M, config.P, config.L, config.symbol_power)

    def job(v):
        return _realization_samples(config, v, U, combos, pilots, cascaded_input, direct_shape)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(V)))
    else:
        parts = [job(v) for v in range(V)]

    x_dc, x_cc, z_dc, z_cc, meta = (list(itertools.chain.from_iterable(p[i] for p in parts)) for i in range(5))
    meta_arrays = {
        name: np.array([row[i] for row in meta], dtype=np.dtype(dt).newbyteorder("="))
        for i, (name, dt) in enumerate(META_FIELDS)
    }
    gen_params = {
        "U": U,
        "V": V,
        "label_snrs": list(map(float, label_snrs)),
        "train_snrs": list(map(float, train_snrs)),
        "cascaded_input": cascaded_input,
    }
    datasets = []
    for kind, xs, zs in (("direct", x_dc, z_dc), ("cascaded", x_cc, z_cc)):
        inputs = np.asarray(xs, dtype=dtype)
        ds = Dataset(
            kind=kind,
            inputs=inputs,
            labels=np.asarray(zs, dtype=dtype),
            meta={k: a.copy() for k, a in meta_arrays.items()},
            config=config,
            gen_params=dict(gen_params),
            stats=normalization_stats(inputs),
        )
        datasets.append(ds)
    return datasets[0], datasets[1]


def split(ds: Dataset, train_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Shuffled disjoint partition; normalization stats are refit on the training part."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = math.floor(len(ds) * train_fraction)
    if n_train == 0 or n_train == len(ds):
        raise ValueError(f"split of {len(ds)} samples at {train_fraction} leaves a partition empty")
    order = rng.permutation(len(ds))
    train, val = ds.subset(np.sort(order[:n_train])), ds.subset(np.sort(order[n_train:]))
    stats = normalization_stats(train.inputs)
    train.stats = val.stats = stats
    return train, val


# ---------------------------------------------------------------------------
# serialization


def _json_float(x: float):
    return x if math.isfinite(x) else repr(float(x))


def _header(ds: Dataset) -> dict[str, Any]:
    gen = dict(ds.gen_params)
    for key in ("label_snrs", "train_snrs"):
        if key in gen:
            gen[key] = [_json_float(x) for x in gen[key]]
    arrays = [("inputs", ds.inputs), ("labels", ds.labels)] + [(name, ds.meta[name]) for name, _ in META_FIELDS]
    return {
        "kind": ds.kind,
        "length": len(ds),
        "scenario": ds.config.to_dict(),
        "gen_params": gen,
        "stats": None if ds.stats is None else {"mean": ds.stats[0].tolist(), "std": ds.stats[1].tolist()},
        "arrays": [{"name": n, "dtype": a.dtype.newbyteorder("<").str, "shape": list(a.shape)} for n, a in arrays],
    }


def dumps(ds: Dataset) -> bytes:
    header = json.dumps(_header(ds), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<BI", VERSION, len(header)), header]
    for name in ("inputs", "labels") + tuple(n for n, _ in META_FIELDS):
        arr = ds.inputs if name == "inputs" else ds.labels if name == "labels" else ds.meta[name]
        parts.append(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(ds))
    tmp.replace(path)
    return path


def loads(blob: bytes) -> Dataset:
    if blob[:8] != MAGIC:
        raise DatasetFormatError("not a dataset file: bad magic", 0)
    if len(blob) < 13:
        raise DatasetFormatError("truncated preamble", len(blob))
    version, header_len = struct.unpack_from("<BI", blob, 8)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset format version {version}", 8)
    start = 13
    if start + header_len > len(blob):
        raise DatasetFormatError("truncated JSON header", len(blob))
    try:
        header = json.loads(blob[start : start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"corrupted JSON header: {exc}", start) from exc
    offset = start + header_len
    arrays = {}
    try:
        descriptors = header["arrays"]
        for desc in descriptors:
            dt = np.dtype(desc["dtype"])
            shape = tuple(desc["shape"])
            nbytes = dt.itemsize * math.prod(shape)
            if offset + nbytes > len(blob):
                raise DatasetFormatError(f"array {desc['name']!r} truncated", offset)
            arr = np.frombuffer(blob, dtype=dt, count=math.prod(shape), offset=offset).reshape(shape)
            arrays[desc["name"]] = arr.astype(dt.newbyteorder("="))
            offset += nbytes
        if offset != len(blob):
            raise DatasetFormatError(f"{len(blob) - offset} trailing bytes after the last array", offset)
        gen = dict(header["gen_params"])
        for key in ("label_snrs", "train_snrs"):
            if key in gen:
                gen[key] = [float(x) for x in gen[key]]
        stats = header.get("stats")
        return Dataset(
            kind=header["kind"],
            inputs=arrays["inputs"],
            labels=arrays["labels"],
            meta={name: arrays[name] for name, _ in META_FIELDS},
            config=ScenarioConfig.from_dict(header["scenario"]),
            gen_params=gen,
            stats=None if stats is None else (np.array(stats["mean"]), np.array(stats["std"])),
        )
    except DatasetFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"inconsistent header: {exc}", start) from exc


def load_dataset(path: str | Path) -> Dataset:
    return loads(Path(path).read_bytes())
