"""Versioned plain-text checkpoints.

Layout::

    mollikit-checkpoint 1 <kind> <dim> <json model spec>
    param <name> <ndim> <extent...>
    <row-major float64 values, space separated>
    buffer <name> <ndim> <extent...>
    <values>
    ...

Values are written with ``repr`` so every float64 survives a round trip
bit for bit.  Files are written to a temporary sibling and renamed into
place, so a crash never leaves a truncated checkpoint behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .flows import build_flow
from .vae import build_vae

FORMAT = "mollikit-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def build_model(spec: dict, rng: np.random.Generator | None = None):
    kind = spec["kind"]
    if kind in ("realnvp", "maf"):
        return build_flow(spec, rng)
    if kind == "vae":
        return build_vae(spec, rng)
    raise CheckpointError(f"unknown model kind {kind!r}")


def _block(tag: str, name: str, arr: np.ndarray) -> str:
    arr = np.asarray(arr, dtype=np.float64)
    head = " ".join([tag, name, str(arr.ndim)] + [str(s) for s in arr.shape])
    return head + "\n" + " ".join(map(repr, arr.ravel().tolist())) + "\n"


def dumps(model) -> str:
    spec = model.spec
    parts = [f"{FORMAT} {VERSION} {spec['kind']} {spec['dim']} {json.dumps(spec, sort_keys=True)}\n"]
    for name, p in model.named_parameters():
        parts.append(_block("param", name, p.data))
    for name, b in model.named_buffers():
        parts.append(_block("buffer", name, b))
    return "".join(parts)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(model, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps(model))


def _set_buffer(model, dotted: str, value: np.ndarray) -> None:
    *path, attr = dotted.split(".")
    obj = model
    for part in path:
        obj = obj[int(part)] if part.isdigit() else getattr(obj, part)
    setattr(obj, attr, value)


def loads(text: str):
    lines = text.splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint")
    head = lines[0].split(" ", 4)
    if len(head) != 5 or head[0] != FORMAT:
        raise CheckpointError("not a mollikit checkpoint")
    if int(head[1]) != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {head[1]}")
    spec = json.loads(head[4])
    if spec.get("kind") != head[2] or int(spec.get("dim", -1)) != int(head[3]):
        raise CheckpointError("header fields disagree with the model spec")
    model = build_model(spec)
    params = dict(model.named_parameters())
    seen = set()
    if (len(lines) - 1) % 2:
        raise CheckpointError("truncated checkpoint")
    buffers = {name for name, _ in model.named_buffers()}
    for i in range(1, len(lines), 2):
        fields = lines[i].split()
        try:
            tag, name, ndim = fields[0], fields[1], int(fields[2])
            shape = tuple(int(s) for s in fields[3:3 + ndim])
            values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        except (IndexError, ValueError):
            raise CheckpointError(f"malformed block at line {i + 1}") from None
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: expected {int(np.prod(shape))} values, got {values.size}")
        values = values.reshape(shape)
        if tag == "param":
            if name not in params or params[name].shape != shape:
                raise CheckpointError(f"unexpected parameter block {name} {shape}")
            params[name].data = values
        elif tag == "buffer":
            if name not in buffers:
                raise CheckpointError(f"unexpected buffer block {name}")
            _set_buffer(model, name, values)
        else:
            raise CheckpointError(f"unknown block tag {tag!r}")
        seen.add(name)
    missing = (set(params) | buffers) - seen
    if missing:
        raise CheckpointError(f"missing blocks: {sorted(missing)}")
    return model


def load(path: str | os.PathLike):
    return loads(Path(path).read_text(encoding="utf-8"))
