"""Policy checkpoint: ``CPOL`` binary with a JSON config echo and float32 arrays.

Layout (little-endian)::

    b"CPOL" | u32 version | u32 header_len | header JSON (utf-8)
    | f32 arrays in header["arrays"] order | u32 crc32 of all preceding bytes

Weights are stored as float32 and widened to float64 on load.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..action_codec import PcaModel
from ..errors import ChecksumMismatch, FormatError, FormatVersionMismatch, Io
from .net import Layout, PolicyNet

MAGIC = b"CPOL"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<4sII")
_CRC = struct.Struct("<I")


def _arrays(net: PolicyNet):
    items = [(f"param/{k}", v) for k, v in net.params.items()]
    items += [(f"buffer/{k}", net.buffers[k]) for k in net.layout.buffer_shapes()]
    if net.pca is not None:
        items += [("pca/mean", net.pca.mean), ("pca/components", net.pca.components),
                  ("pca/explained_variance", net.pca.explained_variance)]
    return items


def encode_policy(net: PolicyNet) -> bytes:
    items = _arrays(net)
    header = {
        "layout": net.layout.__dict__,
        "encoded": net.encoded,
        "config": net.config,
        "pca_total_variance": None if net.pca is None else net.pca.total_variance,
        "arrays": [[name, list(arr.shape)] for name, arr in items],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = _HEAD.pack(MAGIC, CHECKPOINT_VERSION, len(hbytes)) + hbytes
    body += b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in items)
    return body + _CRC.pack(zlib.crc32(body))


def decode_policy(blob: bytes) -> PolicyNet:
    if len(blob) < _HEAD.size + _CRC.size:
        raise ChecksumMismatch("checkpoint too short")
    magic, version, hlen = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatVersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    body = blob[:-_CRC.size]
    if zlib.crc32(body) != _CRC.unpack_from(blob, len(body))[0]:
        raise ChecksumMismatch("checkpoint CRC32 mismatch")
    header = json.loads(body[_HEAD.size:_HEAD.size + hlen])
    offset = _HEAD.size + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        if offset + 4 * count > len(body):
            raise ChecksumMismatch(f"checkpoint ends inside array {name}")
        arrays[name] = np.frombuffer(body, "<f4", count, offset).reshape(shape).astype(np.float64)
        offset += 4 * count
    pca = None
    if "pca/mean" in arrays:
        pca = PcaModel(arrays["pca/mean"], arrays["pca/components"], arrays["pca/explained_variance"],
                       header["pca_total_variance"])
    return PolicyNet(
        layout=Layout(**header["layout"]),
        params={k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("param/")},
        buffers={k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("buffer/")},
        pca=pca,
        encoded=header["encoded"],
        config=header["config"],
    )


def save_policy(net: PolicyNet, path) -> None:
    try:
        Path(path).write_bytes(encode_policy(net))
    except OSError as exc:
        raise Io(str(exc)) from exc


def load_policy(path) -> PolicyNet:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise Io(str(exc)) from exc
    return decode_policy(blob)
