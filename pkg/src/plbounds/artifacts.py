"""Canonical JSON, configuration digests and artifact writing."""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

OUTPUT_ROOT_ENV = "PLBOUNDS_OUTPUT_ROOT"


def _plain(obj):
    """Convert numpy and complex values to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if hasattr(obj, "to_json"):
        return _plain(obj.to_json())
    return obj


def canonical_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, repr floats, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, ensure_ascii=True) + "\n"


def config_digest(config: dict) -> str:
    """Stable content digest of a logical configuration."""
    text = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def output_root(explicit=None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "plbounds-runs"))


def run_directory(command: str, config: dict, root=None) -> Path:
    d = output_root(root) / f"{command}-{config_digest(config)[:16]}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj), encoding="ascii")
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="ascii")
    return path
