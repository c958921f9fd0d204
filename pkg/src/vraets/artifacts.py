"""Versioned on-disk artifacts exchanged between pipeline stages.

Format: one UTF-8 JSON header line (sorted keys) followed by the raw
little-endian float64/int64 bytes of each named array, in header order.
The encoding is fully deterministic, so re-writing identical content
yields byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import numpy as np

from vraets.errors import DataError

FORMAT_VERSION = 1
_MAGIC = "vraets-artifact"

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def save_artifact(path, kind: str, meta: dict[str, Any],
                  arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            arr = np.ascontiguousarray(arr, dtype="<f8")
        elif arr.dtype.kind in "iub":
            arr = np.ascontiguousarray(arr, dtype="<i8")
        else:
            raise DataError(f"save_artifact: unsupported dtype {arr.dtype} for {name!r}")
        if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
            raise DataError(f"save_artifact: non-finite values in {name!r}")
        entries.append({"name": name, "dtype": arr.dtype.str,
                        "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {"magic": _MAGIC, "format_version": FORMAT_VERSION,
              "kind": kind, "meta": meta, "arrays": entries}
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_artifact(path, expect_kind: str | None = None):
    """Returns (kind, meta, arrays). Validates magic, version, and shapes."""
    if not os.path.exists(path):
        raise DataError(f"missing artifact: {path}")
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: not a vraets artifact ({exc})") from exc
        if header.get("magic") != _MAGIC:
            raise DataError(f"{path}: bad magic")
        if header.get("format_version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported format version "
                            f"{header.get('format_version')}")
        arrays = {}
        for ent in header["arrays"]:
            dtype = _DTYPES.get(ent["dtype"])
            if dtype is None:
                raise DataError(f"{path}: unknown dtype {ent['dtype']}")
            shape = tuple(int(s) for s in ent["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise DataError(f"{path}: truncated array {ent['name']!r}")
            arrays[ent["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise DataError(f"{path}: expected {expect_kind!r} artifact, found {kind!r}")
    return kind, header["meta"], arrays


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(artifact_path, config: dict[str, Any],
                   inputs: dict[str, str], seed: int | None) -> str:
    """Writes a reproducibility manifest next to an artifact."""
    manifest = {
        "artifact": os.path.basename(str(artifact_path)),
        "config": config,
        "input_hashes": {k: sha256_file(v) for k, v in inputs.items()},
        "seed": seed,
    }
    path = str(artifact_path) + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
