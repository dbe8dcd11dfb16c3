"""Binary and text file formats: checkpoints, frame features, embeddings, JSONL.

All writers go through :func:`atomic_write` (temp file in the same directory,
then ``os.replace``).
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

CKPT_MAGIC = b"FWCK"
CKPT_VERSION = 1
VFEAT_MAGIC = b"VFEA"
VFEAT_VERSION = 1


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write(path, text.encode("utf-8"))


# -- checkpoints ------------------------------------------------------------

def encode_checkpoint(params: dict) -> bytes:
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(params))]
    for name, value in params.items():
        arr = np.asarray(value.data if hasattr(value, "requires_grad") else value, dtype="<f8")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"parameter {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != CKPT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims)
            off += 8 * size
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    if off != len(buf):
        raise FormatError("trailing bytes after checkpoint payload")
    return out


def save_checkpoint(path, params: dict) -> None:
    atomic_write(path, encode_checkpoint(params))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return decode_checkpoint(Path(path).read_bytes())


# -- per-video frame features -------------------------------------------------

def write_vfeat(path, features: np.ndarray) -> None:
    arr = np.asarray(features, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise FormatError(f"features must be (n_raw>=1, d_v), got {arr.shape}")
    header = VFEAT_MAGIC + struct.pack("<III", VFEAT_VERSION, arr.shape[0], arr.shape[1])
    atomic_write(path, header + np.ascontiguousarray(arr).tobytes())


def read_vfeat(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != VFEAT_MAGIC:
        raise FormatError(f"{path}: not a frame-feature file (bad magic)")
    version, n_raw, d_v = struct.unpack_from("<III", buf, 4)
    if version != VFEAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(buf) != 16 + 4 * n_raw * d_v:
        raise FormatError(f"{path}: size does not match header ({n_raw}x{d_v})")
    return np.frombuffer(buf, dtype="<f4", offset=16).reshape(n_raw, d_v).astype(np.float32)


def vfeat_path(features_dir, video_id: str) -> Path:
    return Path(features_dir) / f"{video_id}.vfeat"


# -- JSON lines ----------------------------------------------------------------

def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return rows


def dumps_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=False) + "\n" for r in rows)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    atomic_write_text(path, dumps_jsonl(rows))
