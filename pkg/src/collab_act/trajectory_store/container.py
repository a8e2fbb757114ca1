"""Dataset container: a directory with ``manifest.json`` plus one binary file per trajectory.

Binary layout (little-endian)::

    b"CACT" | u32 version | u32 n_frames | field arrays in FIELD_LAYOUT order | u32 crc32

The CRC covers every byte that precedes it.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import ChecksumMismatch, FormatError, FormatVersionMismatch, Io
from .types import FIELD_LAYOUT, Trajectory, field_shape

MAGIC = b"CACT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_CRC = struct.Struct("<I")


def encode_trajectory(traj: Trajectory) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(traj))]
    for name, dtype, _ in FIELD_LAYOUT:
        parts.append(np.ascontiguousarray(getattr(traj, name), dtype=dtype).tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def decode_trajectory(blob: bytes, n_views: int, rate_hz: float, task_id: str, collaborator_id: str) -> Trajectory:
    if len(blob) < _HEADER.size + _CRC.size:
        raise ChecksumMismatch("file too short to hold header and checksum")
    magic, version, n = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"trajectory format version {version}, expected {FORMAT_VERSION}")
    body, (crc,) = blob[:-_CRC.size], _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch("CRC32 mismatch (truncated or corrupted file)")
    arrays = {}
    offset = _HEADER.size
    for name, dtype, shape in FIELD_LAYOUT:
        shape = (n,) + field_shape(shape, n_views)
        count = int(np.prod(shape))
        nbytes = count * np.dtype(dtype).itemsize
        if offset + nbytes > len(body):
            raise ChecksumMismatch(f"payload ends inside field {name}")
        arrays[name] = np.frombuffer(body, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(body):
        raise ChecksumMismatch("trailing bytes after the last field")
    return Trajectory(**arrays, rate_hz=rate_hz, task_id=task_id, collaborator_id=collaborator_id)


def save_dataset(trajs: list[Trajectory], path, meta: dict | None = None) -> None:
    """Write one binary file per trajectory plus ``manifest.json``; ``meta`` is echoed verbatim."""
    path = Path(path)
    if not trajs:
        raise ValueError("refusing to write an empty dataset")
    rates = {t.rate_hz for t in trajs}
    views = {t.n_views for t in trajs}
    if len(rates) != 1 or len(views) != 1:
        raise ValueError("all trajectories in a dataset must share rate_hz and n_views")
    entries = []
    try:
        path.mkdir(parents=True, exist_ok=True)
        for i, traj in enumerate(trajs):
            fname = f"traj_{i:05d}.bin"
            (path / fname).write_bytes(encode_trajectory(traj))
            entries.append({
                "file": fname,
                "task_id": traj.task_id,
                "collaborator_id": traj.collaborator_id,
                "n_frames": len(traj),
            })
        manifest = {
            "format_version": FORMAT_VERSION,
            "rate_hz": rates.pop(),
            "n_views": views.pop(),
            "trajectories": entries,
        }
        if meta is not None:
            manifest["meta"] = meta
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise Io(str(exc)) from exc


def load_dataset(path) -> list[Trajectory]:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise Io(f"no manifest.json in {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise Io(f"unreadable manifest in {path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"manifest format_version {manifest.get('format_version')}, expected {FORMAT_VERSION}"
        )
    trajs = []
    for entry in manifest["trajectories"]:
        try:
            blob = (path / entry["file"]).read_bytes()
        except OSError as exc:
            raise Io(str(exc)) from exc
        traj = decode_trajectory(
            blob, manifest["n_views"], manifest["rate_hz"], entry["task_id"], entry["collaborator_id"]
        )
        if len(traj) != entry["n_frames"]:
            raise FormatError(f"{entry['file']}: {len(traj)} frames, manifest says {entry['n_frames']}")
        trajs.append(traj)
    return trajs
