"""Binary checkpoint files: named tensors plus a JSON manifest.

Layout: 4-byte magic ``RKCP``, uint32 format version, uint64 manifest
length, UTF-8 JSON manifest, then the concatenated raw little-endian
tensor blobs at the offsets the manifest records. The manifest also
carries a sha256 hash of the canonical model-config JSON so a loader can
refuse weights built for a different architecture.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RKCP"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIQ")


class CheckpointError(RuntimeError):
    pass


def config_hash(config: dict) -> str:
    """sha256 over the canonical (sorted, compact) JSON encoding."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save_checkpoint(
    path: str | Path,
    tensors: dict[str, np.ndarray],
    config: dict,
    extra: dict | None = None,
) -> None:
    """Write tensors and metadata; ``extra`` holds JSON-safe sidecar data."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.str,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash(config),
        "config": config,
        "extra": extra or {},
        "tensors": entries,
    }
    payload = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(payload)))
        f.write(payload)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read (tensors, manifest); validates magic, version, and blob sizes."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise CheckpointError(f"{path}: truncated header")
        magic, version, manifest_len = _HEADER.unpack(header)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        try:
            manifest = json.loads(f.read(manifest_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
        blob = f.read()
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise CheckpointError(f"{path}: tensor {entry['name']!r} extends past end of file")
        arr = np.frombuffer(blob[start : start + nbytes], dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return tensors, manifest
