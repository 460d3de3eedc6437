"""JSON checkpoint: parameter name -> shape + row-major values.

Names follow ``<role>.<type-name>[.<modality>].<weight|bias>``.  Floats are
written with ``repr`` precision, so a save/load round trip is bit exact.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

FORMAT = "hgnn-ima-checkpoint"
VERSION = 1


def checkpoint_dict(params: Mapping[str, Tensor], meta: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "meta": meta or {},
        "parameters": {
            name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }


def save_checkpoint(path, params: Mapping[str, Tensor], meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(params, meta), indent=None))


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = {}
    for name, block in doc["parameters"].items():
        shape = tuple(block["shape"])
        values = np.asarray(block["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"{path}: {name} has {values.size} values for shape {shape}")
        params[name] = Tensor(values.reshape(shape), requires_grad=True, name=name)
    return params, doc.get("meta", {})
