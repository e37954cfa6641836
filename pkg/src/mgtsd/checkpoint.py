"""Binary checkpoint format.

Layout: magic ``MGTSD\\0``, little-endian u16 format version, u32 header
length, canonical JSON header, then the parameter payload as little-endian
float32 arrays at the offsets recorded in the manifest. The header echoes
the training config, stores the base schedule betas as decimal strings
(``repr`` round-trips doubles exactly, so sampling reuses the training
schedules bit-for-bit), and lists every parameter's name, shape and
offset. Saving is canonical: save -> load -> save reproduces the file
byte-for-byte.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import Model, TrainConfig
from .tensor import Tensor

MAGIC = b"MGTSD\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised on malformed or truncated checkpoint files."""


def save_checkpoint(path, model: Model) -> None:
    params = model.named_params()
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(params):
        arr = params[name].data.astype("<f4")
        manifest.append(
            {"name": name, "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(arr.tobytes())
        offset += len(blobs[-1])
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "data_dim": model.data_dim,
        "schedule": {
            "num_steps": model.base_schedule.num_steps,
            "betas": [repr(float(b)) for b in model.base_schedule.betas],
            "start_indices": [gs.start_index for gs in model.gran_schedules],
        },
        "manifest": manifest,
        "payload_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 6 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<H", raw, pos)
    pos += 2
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported format version {version} (expected {FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if pos + header_len > len(raw):
        raise CheckpointError("truncated header")
    try:
        header = json.loads(raw[pos : pos + header_len].decode())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt header JSON: {e}") from None
    pos += header_len
    payload = raw[pos:]
    expected = header.get("payload_bytes")
    if expected is None or len(payload) != expected:
        raise CheckpointError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}"
        )
    cfg = TrainConfig.from_dict(header["config"])
    betas = np.array([float(s) for s in header["schedule"]["betas"]])
    model = Model.build(cfg, int(header["data_dim"]), betas=betas)
    if header["schedule"]["start_indices"] != [
        gs.start_index for gs in model.gran_schedules
    ]:
        raise CheckpointError("schedule start indices disagree with the config")
    params = model.named_params()
    manifest = header["manifest"]
    names = [m["name"] for m in manifest]
    if sorted(names) != sorted(params):
        raise CheckpointError("manifest parameter names disagree with the config")
    spans = []
    flat: dict[str, Tensor] = {}
    for m in manifest:
        shape = tuple(m["shape"])
        count = int(np.prod(shape)) if shape else 1
        start, end = int(m["offset"]), int(m["offset"]) + 4 * count
        if start < 0 or end > len(payload):
            raise CheckpointError(f"manifest offset out of bounds for {m['name']!r}")
        spans.append((start, end, m["name"]))
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape)
        if params[m["name"]].data.shape != shape:
            raise CheckpointError(
                f"shape mismatch for {m['name']!r}: file {shape}, "
                f"config {params[m['name']].data.shape}"
            )
        flat[m["name"]] = Tensor(arr.astype(np.float64))
    spans.sort()
    for (s1, e1, n1), (s2, e2, n2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise CheckpointError(f"overlapping manifest spans: {n1!r} and {n2!r}")
    model.set_params(flat)
    return model
