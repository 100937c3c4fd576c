"""Weight-blob writer/reader implemented against the documented byte layout.

This is an independent implementation of the container described in the
consumer's docs/weight_blob.md (magic "PNWB", version 1.0, little-endian,
trailing CRC-32). Keeping it separate from the consumer's own codec means
the two sides cross-validate the format through the fixture tests.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .model import LAYER_DIMS, PointFeatureNet

MAGIC = b"PNWB"
VERSION = (1, 0)
_WIDTH_CODES = {32: 0, 64: 1}
_WIDTH_DTYPES = {32: "<f4", 64: "<f8"}


def layer_arrays(model: PointFeatureNet) -> list[dict[str, np.ndarray]]:
    """Extract per-layer parameter arrays in blob record order."""
    out = []
    for linear, norm in zip(model.linears, model.norms):
        out.append(
            {
                "weight": linear.weight.detach().cpu().numpy(),
                "bias": linear.bias.detach().cpu().numpy(),
                "bn_weight": norm.weight.detach().cpu().numpy(),
                "bn_bias": norm.bias.detach().cpu().numpy(),
                "bn_mean": norm.running_mean.detach().cpu().numpy(),
                "bn_var": norm.running_var.detach().cpu().numpy(),
                "epsilon": float(norm.eps),
            }
        )
    return out


def build_blob(model: PointFeatureNet, *, width_bits: int = 32, qformat_n: int = 0) -> bytes:
    dtype = np.dtype(_WIDTH_DTYPES[width_bits])
    parts = [
        MAGIC,
        struct.pack("<HHBBH", *VERSION, _WIDTH_CODES[width_bits], qformat_n, len(LAYER_DIMS)),
    ]
    for (k, l), record in zip(LAYER_DIMS, layer_arrays(model)):
        parts.append(struct.pack("<II", k, l))
        for field in ("weight", "bias", "bn_weight", "bn_bias", "bn_mean", "bn_var"):
            parts.append(np.ascontiguousarray(record[field], dtype=dtype).tobytes())
        parts.append(np.array([record["epsilon"]], dtype=dtype).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def write_blob(path, model: PointFeatureNet, *, width_bits: int = 32, qformat_n: int = 0) -> None:
    Path(path).write_bytes(build_blob(model, width_bits=width_bits, qformat_n=qformat_n))


def load_blob_into_model(path) -> PointFeatureNet:
    """Read a blob back into a fresh model (for resuming or inspection)."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError("bad magic")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise ValueError("checksum mismatch")
    major, _, width_code, _, layer_count = struct.unpack("<HHBBH", blob[4:12])
    if major > VERSION[0]:
        raise ValueError(f"unsupported major version {major}")
    if layer_count != len(LAYER_DIMS):
        raise ValueError("unexpected layer count")
    dtype = np.dtype({v: _WIDTH_DTYPES[k] for k, v in _WIDTH_CODES.items()}[width_code])

    offset = 12
    model = PointFeatureNet()
    for (k, l), linear, norm in zip(LAYER_DIMS, model.linears, model.norms):
        got_k, got_l = struct.unpack_from("<II", blob, offset)
        offset += 8
        if (got_k, got_l) != (k, l):
            raise ValueError(f"layer dims {(got_k, got_l)} do not match {(k, l)}")

        def take(count):
            nonlocal offset
            out = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).astype(np.float64)
            offset += count * dtype.itemsize
            return torch.from_numpy(out.copy())

        with torch.no_grad():
            linear.weight.copy_(take(k * l).reshape(l, k))
            linear.bias.copy_(take(l))
            norm.weight.copy_(take(l))
            norm.bias.copy_(take(l))
            norm.running_mean.copy_(take(l))
            norm.running_var.copy_(take(l))
            norm.eps = float(take(1)[0])
    return model
