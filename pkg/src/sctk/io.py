"""On-disk formats: SCTV volumes, JSON-lines manifests, CSV tables and PGM dumps.

SCTV layout (little-endian)::

    b"SCTV" | u32 version | u32 axis tag | u32 dims[3] | u32 meta length | meta JSON | f32 payload

Dims are (S, H, W) for images and (S, V, D) for sinograms; the payload is
channel-major. Metadata is canonical JSON (sorted keys) so identical inputs
give identical bytes.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VOLUME_MAGIC = b"SCTV"
VOLUME_VERSION = 1
AXIS_TAGS = {"image": 0, "sinogram": 1}
_HEADER = struct.Struct("<4sIIIIII")


@dataclass
class Volume:
    data: np.ndarray
    axis: str
    meta: dict = field(default_factory=dict)


def _atomic_write(path: Path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def encode_volume(data: np.ndarray, axis: str, meta: dict | None = None) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise ValueError(f"volumes are 3-D, got shape {arr.shape}")
    if axis not in AXIS_TAGS:
        raise ValueError(f"axis must be one of {sorted(AXIS_TAGS)}")
    meta_blob = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode()
    header = _HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, AXIS_TAGS[axis], *arr.shape, len(meta_blob))
    return header + meta_blob + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def write_volume(path, data: np.ndarray, axis: str, meta: dict | None = None) -> None:
    _atomic_write(Path(path), encode_volume(data, axis, meta))


def decode_volume(blob: bytes, name: str = "<bytes>") -> Volume:
    if len(blob) < _HEADER.size:
        raise ValueError(f"{name}: too short for a volume header")
    magic, version, tag, s, h, w, meta_len = _HEADER.unpack_from(blob)
    if magic != VOLUME_MAGIC:
        raise ValueError(f"{name}: bad magic {magic!r}")
    if version != VOLUME_VERSION:
        raise ValueError(f"{name}: unsupported volume version {version}")
    axes = {v: k for k, v in AXIS_TAGS.items()}
    if tag not in axes:
        raise ValueError(f"{name}: unknown axis tag {tag}")
    start = _HEADER.size + meta_len
    count = s * h * w
    if len(blob) != start + 4 * count:
        raise ValueError(f"{name}: payload has {len(blob) - start} bytes, dims need {4 * count}")
    meta = json.loads(blob[_HEADER.size:start].decode())
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(s, h, w).astype(np.float32)
    return Volume(data, axes[tag], meta)


def read_volume(path) -> Volume:
    with open(path, "rb") as fh:
        return decode_volume(fh.read(), str(path))


def write_json(path, obj) -> None:
    _atomic_write(Path(path), (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode())


def write_manifest(path, records: list[dict]) -> None:
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    _atomic_write(Path(path), lines.encode())


def read_manifest(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: bad manifest line ({exc})") from None
    return records


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])


def append_csv_row(path, header: list[str], row) -> None:
    path = Path(path)
    fresh = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(header)
        writer.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_pgm(path, img: np.ndarray, vmin: float = 0.0, vmax: float = 7.66) -> None:
    """8-bit binary PGM of one channel, linearly mapped from [vmin, vmax]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM dumps take a single 2-D channel")
    scaled = np.clip((img - vmin) / (vmax - vmin), 0.0, 1.0)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    _atomic_write(Path(path), f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())


def dump_channels_pgm(directory, stem: str, stack: np.ndarray, vmax: float = 7.66) -> list[Path]:
    directory = Path(directory)
    paths = []
    for c, channel in enumerate(stack):
        p = directory / f"{stem}_ch{c:02d}.pgm"
        write_pgm(p, channel, 0.0, vmax)
        paths.append(p)
    return paths
