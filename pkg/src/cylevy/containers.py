"""Binary persistence for noise panels and integral samples.

Layout (all little-endian)::

    magic     4 bytes   b"CLNP" (panel) or b"CLIS" (integral sample)
    version   u32
    replicas  u64
    steps     u64       panel steps, or number of observation times
    dim       u64       d_U for panels, d_V for samples
    seed      u64       master seed
    meta_len  u32
    meta      meta_len bytes of UTF-8 JSON
    times     float64 x (steps + 1) for panels, x steps for samples
    data      float64 x replicas*steps*dim, row-major (replica, step, coordinate)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .integrator import IntegralSample
from .levy import NoisePanel

VERSION = 1
_HEADER = struct.Struct("<4sIQQQQI")
PANEL_MAGIC = b"CLNP"
SAMPLE_MAGIC = b"CLIS"


class ContainerError(ValueError):
    """Malformed or mismatched binary container."""


def _pack(magic: bytes, data: np.ndarray, times: np.ndarray, seed: int, meta: dict) -> bytes:
    blob = json.dumps(meta, sort_keys=True).encode()
    R, M, d = data.shape
    head = _HEADER.pack(magic, VERSION, R, M, d, seed & 0xFFFFFFFFFFFFFFFF, len(blob))
    return b"".join([
        head,
        blob,
        np.ascontiguousarray(times, dtype="<f8").tobytes(),
        np.ascontiguousarray(data, dtype="<f8").tobytes(),
    ])


def _unpack(raw: bytes, magic: bytes, extra_time: int):
    if len(raw) < _HEADER.size:
        raise ContainerError("file shorter than the header")
    got, version, R, M, d, seed, meta_len = _HEADER.unpack_from(raw)
    if got != magic:
        raise ContainerError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = _HEADER.size
    meta = json.loads(raw[pos:pos + meta_len].decode())
    pos += meta_len
    n_t = M + extra_time
    expected = pos + 8 * (n_t + R * M * d)
    if len(raw) != expected:
        raise ContainerError(f"size mismatch: {len(raw)} bytes, expected {expected}")
    times = np.frombuffer(raw, dtype="<f8", count=n_t, offset=pos).astype(np.float64)
    pos += 8 * n_t
    data = np.frombuffer(raw, dtype="<f8", count=R * M * d, offset=pos).astype(np.float64)
    return data.reshape(R, M, d), times, seed, meta


def panel_bytes(panel: NoisePanel) -> bytes:
    meta = {"model": panel.model_config, "replica_offset": panel.replica_offset}
    return _pack(PANEL_MAGIC, panel.increments, panel.times, panel.master_seed, meta)


def panel_from_bytes(raw: bytes) -> NoisePanel:
    data, times, seed, meta = _unpack(raw, PANEL_MAGIC, 1)
    return NoisePanel(data, times, seed, meta.get("replica_offset", 0), meta.get("model"))


def sample_bytes(sample: IntegralSample) -> bytes:
    seed = int(sample.provenance.get("master_seed", 0))
    return _pack(SAMPLE_MAGIC, sample.values, sample.observation_times, seed, sample.provenance)


def sample_from_bytes(raw: bytes) -> IntegralSample:
    data, times, _, meta = _unpack(raw, SAMPLE_MAGIC, 0)
    return IntegralSample(data, times, meta)


def write_panel(panel: NoisePanel, path) -> None:
    Path(path).write_bytes(panel_bytes(panel))


def read_panel(path) -> NoisePanel:
    return panel_from_bytes(Path(path).read_bytes())


def write_sample(sample: IntegralSample, path) -> None:
    Path(path).write_bytes(sample_bytes(sample))


def read_sample(path) -> IntegralSample:
    return sample_from_bytes(Path(path).read_bytes())
