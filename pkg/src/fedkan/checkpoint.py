"""Parameter checkpoints: a JSON manifest beside a raw little-endian float64 payload.

``model.json`` lists every tensor's name, shape and byte range inside
``model.bin`` together with the payload size and SHA-256, so a truncated or
edited payload is detected on load.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import IntegrityError
from .models import ModelParameters

FORMAT = "fedkan-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(params: ModelParameters, manifest_path: str | Path, metadata: dict[str, Any] | None = None) -> Path:
    manifest_path = Path(manifest_path)
    payload_path = manifest_path.with_suffix(".bin")
    tensors, chunks, offset = [], [], 0
    for name, values in params.items():
        raw = np.ascontiguousarray(values, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(values.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "dtype": "float64",
        "byteorder": "little",
        "payload": payload_path.name,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "tensors": tensors,
        "metadata": metadata or {},
    }
    payload_path.write_bytes(payload)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def read_manifest(manifest_path: str | Path) -> dict[str, Any]:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise IntegrityError(f"checkpoint manifest not found: {manifest_path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{manifest_path}: manifest is not valid JSON ({exc})") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise IntegrityError(f"{manifest_path}: not a {FORMAT} manifest")
    if manifest.get("version") != FORMAT_VERSION:
        raise IntegrityError(f"{manifest_path}: unsupported version {manifest.get('version')}")
    return manifest


def load_checkpoint(manifest_path: str | Path) -> tuple[ModelParameters, dict[str, Any]]:
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    payload_path = manifest_path.parent / manifest["payload"]
    try:
        payload = payload_path.read_bytes()
    except FileNotFoundError:
        raise IntegrityError(f"checkpoint payload not found: {payload_path}") from None
    if len(payload) != manifest["payload_bytes"]:
        raise IntegrityError(
            f"{payload_path}: payload has {len(payload)} bytes, manifest says {manifest['payload_bytes']}"
        )
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise IntegrityError(f"{payload_path}: payload checksum mismatch")
    items, expected_offset = [], 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if entry["offset"] != expected_offset or entry["nbytes"] != nbytes:
            raise IntegrityError(f"tensor {entry['name']!r}: byte range inconsistent with its shape")
        chunk = payload[entry["offset"] : entry["offset"] + nbytes]
        items.append((entry["name"], np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)))
        expected_offset += nbytes
    if expected_offset != len(payload):
        raise IntegrityError(f"{payload_path}: {len(payload) - expected_offset} trailing bytes not described by the manifest")
    try:
        params = ModelParameters(items)
    except ValueError as exc:
        raise IntegrityError(str(exc)) from None
    return params, manifest.get("metadata", {})
