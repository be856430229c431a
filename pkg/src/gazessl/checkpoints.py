"""Versioned binary checkpoint container.

Layout, little-endian: magic "SSCL", u32 format version, u32 header length,
UTF-8 JSON header, then float64 tensors in declaration order. The header
carries a "kind" tag, the tensor shapes, and kind-specific metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from .contrastive import EncoderConfig, ModelParams, TrainConfig
from .glove import GloveModel
from .grids import FormatError
from .probe import ProbeModel

MAGIC = b"SSCL"
VERSION = 1
_HEAD = struct.Struct("<4sII")


def write_checkpoint(
    path: str | Path, kind: str, meta: dict[str, Any], tensors: list[np.ndarray]
) -> None:
    tensors = [np.asarray(t, dtype=np.float64) for t in tensors]
    header = dict(meta)
    header["kind"] = kind
    header["tensor_shapes"] = [list(t.shape) for t in tensors]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for tensor in tensors:
            fh.write(tensor.astype("<f8").tobytes(order="C"))


def read_checkpoint(path: str | Path) -> tuple[str, dict[str, Any], list[np.ndarray]]:
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, header_len = _HEAD.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version > VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        blob = fh.read(header_len)
        if len(blob) < header_len:
            raise FormatError(f"{path}: truncated JSON header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: invalid JSON header") from exc
        shapes = [tuple(s) for s in header.pop("tensor_shapes")]
        expected = sum(int(np.prod(s)) if s else 1 for s in shapes) * 8
        payload = fh.read(expected + 1)
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated tensor data ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FormatError(f"{path}: trailing bytes after tensors")
    kind = header.pop("kind")
    tensors, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        tensors.append(
            np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        )
        offset += count * 8
    return kind, header, tensors


def _flatten_params(params: ModelParams) -> list[np.ndarray]:
    tensors = []
    for side in (params.theta_q, params.theta_k):
        for weight, bias in side:
            tensors.extend([weight, bias])
    return tensors


def save_model(
    path: str | Path,
    params: ModelParams,
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    step: int,
) -> None:
    meta = {
        "encoder": asdict(enc_cfg),
        "training": asdict(train_cfg),
        "step": step,
        "seed": train_cfg.seed,
        "layers_per_side": len(params.theta_q),
    }
    write_checkpoint(path, "model", meta, _flatten_params(params))


def load_model(path: str | Path) -> tuple[ModelParams, EncoderConfig, TrainConfig, int]:
    kind, meta, tensors = read_checkpoint(path)
    if kind != "model":
        raise FormatError(f"{path}: expected a model checkpoint, got kind {kind!r}")
    enc = meta["encoder"]
    enc_cfg = EncoderConfig(
        input_dim=enc["input_dim"],
        hidden_dims=tuple(enc["hidden_dims"]),
        embed_dim=enc["embed_dim"],
        proj_hidden_dim=enc["proj_hidden_dim"],
        activation=enc["activation"],
    )
    train_cfg = TrainConfig(**meta["training"])
    n_layers = meta["layers_per_side"]
    if len(tensors) != 4 * n_layers:
        raise FormatError(f"{path}: tensor count does not match layer count")
    half = 2 * n_layers
    theta_q = [(tensors[i], tensors[i + 1]) for i in range(0, half, 2)]
    theta_k = [(tensors[half + i], tensors[half + i + 1]) for i in range(0, half, 2)]
    return ModelParams(theta_q=theta_q, theta_k=theta_k), enc_cfg, train_cfg, meta["step"]


def save_probe(path: str | Path, model: ProbeModel, meta: dict[str, Any] | None = None) -> None:
    write_checkpoint(path, "probe", meta or {}, [model.weights, model.bias])


def load_probe(path: str | Path) -> tuple[ProbeModel, dict[str, Any]]:
    kind, meta, tensors = read_checkpoint(path)
    if kind != "probe":
        raise FormatError(f"{path}: expected a probe checkpoint, got kind {kind!r}")
    return ProbeModel(weights=tensors[0], bias=tensors[1]), meta


def save_glove(path: str | Path, model: GloveModel, labels: tuple[str, ...], seed: int) -> None:
    meta = {"labels": list(labels), "seed": seed}
    write_checkpoint(path, "glove", meta, [model.embeddings, model.biases])


def load_glove(path: str | Path) -> tuple[GloveModel, tuple[str, ...], int]:
    kind, meta, tensors = read_checkpoint(path)
    if kind != "glove":
        raise FormatError(f"{path}: expected a glove checkpoint, got kind {kind!r}")
    return (
        GloveModel(embeddings=tensors[0], biases=tensors[1]),
        tuple(meta["labels"]),
        meta["seed"],
    )
