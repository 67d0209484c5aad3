"""Network checkpoints: JSON header followed by raw little-endian parameter blobs.

Layout::

    b"LISNET\\0\\0" | uint8 version | uint32 header length | JSON header | blobs

Blobs are, for each layer in order, each parameter (sorted by name) and
then its momentum buffer.  They are stored in the network's own float width
(float32 for trained networks), so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .layers import LayerSpec
from .network import Network

MAGIC = b"LISNET\0\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(net: Network) -> bytes:
    dtype = np.dtype(net.dtype).newbyteorder("<")
    blobs, manifest = [], []
    for i, (p, v) in enumerate(zip(net.params, net.velocity)):
        for name in sorted(p):
            for part, arr in (("param", p[name]), ("momentum", v[name])):
                manifest.append({"layer": i, "name": name, "part": part, "shape": list(arr.shape)})
                blobs.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    header = {
        "layers": [s.to_dict() for s in net.specs],
        "input_shape": list(net.input_shape),
        "output_dim": net.output_dim,
        "dtype": dtype.str,
        "seed": net.seed,
        "kind": net.kind,
        "input_mean": None if net.input_mean is None else [float(x) for x in net.input_mean],
        "input_std": None if net.input_std is None else [float(x) for x in net.input_std],
        "log": net.log,
        "blobs": manifest,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    return b"".join([MAGIC, struct.pack("<BI", VERSION, len(raw)), raw] + blobs)


def loads(blob: bytes) -> Network:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic at byte offset 0)")
    version, n = struct.unpack_from("<BI", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[13 : 13 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header at byte offset 13: {exc}") from exc
    dtype = np.dtype(header["dtype"])
    specs = [LayerSpec.from_dict(d) for d in header["layers"]]
    params = [{} for _ in specs]
    velocity = [{} for _ in specs]
    offset = 13 + n
    for entry in header["blobs"]:
        count = math.prod(entry["shape"])
        if offset + count * dtype.itemsize > len(blob):
            raise CheckpointError(f"truncated parameter blob at byte offset {offset}")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(entry["shape"])
        target = params if entry["part"] == "param" else velocity
        target[entry["layer"]][entry["name"]] = arr.astype(dtype.newbyteorder("="))
        offset += count * dtype.itemsize
    if offset != len(blob):
        raise CheckpointError(f"unexpected trailing bytes at byte offset {offset}")
    mean, std = header.get("input_mean"), header.get("input_std")
    return Network(
        specs=specs,
        input_shape=tuple(header["input_shape"]),
        output_dim=header["output_dim"],
        params=params,
        velocity=velocity,
        seed=header["seed"],
        kind=header.get("kind", ""),
        input_mean=None if mean is None else np.array(mean),
        input_std=None if std is None else np.array(std),
        log=header.get("log", []),
    )


def save_checkpoint(net: Network, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(net))
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Network:
    return loads(Path(path).read_bytes())
