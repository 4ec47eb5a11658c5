"""Run-record manifests and file hashing."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Dict, Optional


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir,
    command: str,
    seed: Optional[int],
    inputs: Optional[Dict[str, Path]] = None,
    params: Optional[dict] = None,
) -> Path:
    """Deterministic manifest.json (no wall-clock fields, so reruns are
    byte-identical)."""
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recorded = {}
    for name, path in sorted((inputs or {}).items()):
        path = Path(path)
        if path.is_file():
            recorded[name] = {"path": str(path), "sha256": sha256_file(path)}
        else:
            recorded[name] = {"path": str(path), "sha256": None}
    manifest = {
        "tool": "ehrpipe",
        "version": __version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
        "command": command,
        "seed": seed,
        "inputs": recorded,
        "params": params or {},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
