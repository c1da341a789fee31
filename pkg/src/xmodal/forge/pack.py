"""TensorPack: a manifest plus raw little-endian float64 row-major files.

Layout::

    <dir>/manifest.json
    <dir>/<entry>.f64

The manifest is validated in full (dtype, byte order, layout, byte length)
before any payload is read; payloads are then checked against their sha256.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_SAFE = re.compile(r"[^A-Za-z0-9_.-]")


class PackError(ValueError):
    def __init__(self, entry: str, reason: str):
        self.entry = entry
        self.reason = reason
        super().__init__(f"tensor pack entry '{entry}': {reason}")


def _filename(name: str) -> str:
    return _SAFE.sub("_", name) + ".f64"


def write_pack(directory: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    used = set()
    for name in sorted(tensors):
        arr = np.array(tensors[name], dtype="<f8", order="C")
        fname = _filename(name)
        if fname in used:
            raise PackError(name, f"file name collision on {fname}")
        used.add(fname)
        payload = arr.tobytes(order="C")
        (directory / fname).write_bytes(payload)
        entries.append({
            "name": name,
            "dtype": "f64",
            "shape": list(arr.shape),
            "file": fname,
            "byte_order": "little",
            "layout": "row-major",
            "sha256": hashlib.sha256(payload).hexdigest(),
        })
    manifest = {"format_version": FORMAT_VERSION, "entries": entries}
    if meta is not None:
        manifest["meta"] = meta
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                             encoding="utf-8")
    return directory


def _validate(directory: Path) -> dict:
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise PackError("manifest", f"no manifest.json in {directory}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PackError("manifest", f"unreadable manifest: {exc}") from None
    if not isinstance(manifest, dict) or manifest.get("format_version") != FORMAT_VERSION:
        raise PackError("manifest", f"unsupported format_version {manifest.get('format_version')!r}"
                        if isinstance(manifest, dict) else "manifest is not an object")
    entries = manifest.get("entries")
    if not isinstance(entries, list):
        raise PackError("manifest", "missing entries list")
    seen = set()
    for e in entries:
        name = e.get("name", "?")
        if name in seen:
            raise PackError(name, "duplicate entry name")
        seen.add(name)
        if e.get("dtype") != "f64":
            raise PackError(name, f"unknown dtype {e.get('dtype')!r}")
        if e.get("byte_order") != "little":
            raise PackError(name, f"unsupported byte order {e.get('byte_order')!r}")
        if e.get("layout") != "row-major":
            raise PackError(name, f"unsupported layout {e.get('layout')!r}")
        shape = e.get("shape")
        if not isinstance(shape, list) or any(not isinstance(s, int) or s < 0 for s in shape):
            raise PackError(name, f"bad shape {shape!r}")
        fpath = directory / str(e.get("file", ""))
        if not fpath.is_file():
            raise PackError(name, f"missing file {e.get('file')!r}")
        expected = 8 * int(np.prod(shape, dtype=np.int64))
        actual = fpath.stat().st_size
        if actual != expected:
            raise PackError(name, f"byte length {actual} does not match shape {shape} ({expected} bytes)")
    return manifest


def read_pack(directory: str | Path, with_meta: bool = False):
    directory = Path(directory)
    manifest = _validate(directory)
    out = {}
    for e in manifest["entries"]:
        payload = (directory / e["file"]).read_bytes()
        digest = e.get("sha256")
        if digest is not None and hashlib.sha256(payload).hexdigest() != digest:
            raise PackError(e["name"], "checksum mismatch")
        out[e["name"]] = np.frombuffer(payload, dtype="<f8").reshape(e["shape"]).astype(np.float64)
    if with_meta:
        return out, manifest.get("meta", {})
    return out
