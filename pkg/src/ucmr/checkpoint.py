"""Versioned JSON checkpoint container with named, shape-checked arrays.

Arrays are stored as base64 of their raw little-endian bytes so a
save/load round-trip is bitwise exact; loading validates the full shape
table against the expectation of whoever opens the file.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    kind: str,
    config: dict,
    step: int,
    seed: int,
    arrays: Mapping[str, np.ndarray],
) -> None:
    payload = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "step": step,
        "seed": seed,
        "arrays": {
            name: {
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
                "data": base64.b64encode(
                    np.ascontiguousarray(arr).astype(arr.dtype, copy=False).tobytes()
                ).decode("ascii"),
            }
            for name, arr in arrays.items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(
    path: str | Path,
    kind: str,
    expected_shapes: Optional[Mapping[str, tuple[int, ...]]] = None,
) -> dict:
    """Load a checkpoint; returns {config, step, seed, arrays}.

    When expected_shapes is given, the stored shape table must match it
    exactly (same names, same shapes).
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    if payload.get("kind") != kind:
        raise CheckpointError(f"checkpoint kind {payload.get('kind')!r}, expected {kind!r}")
    arrays = {}
    for name, spec in payload["arrays"].items():
        data = base64.b64decode(spec["data"])
        arrays[name] = np.frombuffer(data, dtype=np.dtype(spec["dtype"])).reshape(
            spec["shape"]
        ).copy()
    if expected_shapes is not None:
        stored = {name: tuple(arr.shape) for name, arr in arrays.items()}
        expected = {name: tuple(s) for name, s in expected_shapes.items()}
        if stored != expected:
            missing = sorted(set(expected) - set(stored))
            extra = sorted(set(stored) - set(expected))
            wrong = sorted(
                n for n in set(stored) & set(expected) if stored[n] != expected[n]
            )
            raise CheckpointError(
                f"shape table mismatch: missing={missing} extra={extra} wrong={wrong}"
            )
    return {
        "config": payload["config"],
        "step": payload["step"],
        "seed": payload["seed"],
        "arrays": arrays,
    }
