"""Single-file checkpoint container.

Layout: a magic string, an 8-byte little-endian header length, a canonical
JSON header, then the raw tensor payloads (little-endian float32) in the
exact order listed by the header. The header records the model config, the
checkpoint kind (time-conditioned vs baseline), the resolved dropout choice,
and each tensor's name/shape/offset, so loading always starts with a shape
audit against the config.

Canonical JSON (sorted keys, fixed separators) plus name-sorted payloads
make save -> load -> save byte-identical.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .exceptions import ConfigurationError, ShapeAuditError
from .networks import BaselineNet, TimeConditionedNet, audit_state_shapes, build_network

MAGIC = b"FFCKPT1\n"
FORMAT_VERSION = 1

KIND_TIME_CONDITIONED = "time_conditioned"
KIND_BASELINE = "baseline"
KIND_TRAIN_STATE = "train_state"
_KINDS = (KIND_TIME_CONDITIONED, KIND_BASELINE, KIND_TRAIN_STATE)


@dataclass
class CheckpointData:
    kind: str
    model_config: ModelConfig
    tensors: dict[str, np.ndarray]
    extra: dict

    def parameter_tensors(self) -> dict[str, np.ndarray]:
        """Model parameters only (strips optimizer-state tensors)."""
        return {k: v for k, v in self.tensors.items() if not k.startswith("adam.")}


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, kind: str, model_config: ModelConfig,
                    tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown checkpoint kind {kind!r}")
    names = sorted(tensors)
    entries = []
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "float32",
             "offset": offset, "nbytes": int(arr.nbytes)}
        )
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "model_config": model_config.to_dict(),
        "tensors": entries,
        "extra": extra or {},
    }
    blob = _canonical_json(header)
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path) -> CheckpointData:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ConfigurationError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
    header_start = len(MAGIC) + 8
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(
            f"{path}: unsupported checkpoint format version {header.get('format_version')}"
        )
    kind = header["kind"]
    if kind not in _KINDS:
        raise ConfigurationError(f"{path}: unknown checkpoint kind {kind!r}")
    config = ModelConfig.from_dict(header["model_config"])
    payload_start = header_start + header_len
    tensors = {}
    for entry in header["tensors"]:
        start = payload_start + entry["offset"]
        buf = raw[start : start + entry["nbytes"]]
        if len(buf) != entry["nbytes"]:
            raise ConfigurationError(f"{path}: truncated payload for {entry['name']}")
        arr = np.frombuffer(buf, dtype="<f4").reshape(entry["shape"]).copy()
        tensors[entry["name"]] = arr

    param_shapes = {
        name: tuple(arr.shape)
        for name, arr in tensors.items()
        if not name.startswith("adam.")
    }
    try:
        audit_state_shapes(param_shapes, config)
    except ShapeAuditError as exc:
        raise ShapeAuditError(f"{path}: {exc}") from exc
    return CheckpointData(kind=kind, model_config=config, tensors=tensors,
                          extra=header.get("extra", {}))


# ----------------------------------------------------------------------
# Network-level helpers
# ----------------------------------------------------------------------


def network_kind(net) -> str:
    if isinstance(net, TimeConditionedNet):
        return KIND_TIME_CONDITIONED
    if isinstance(net, BaselineNet):
        return KIND_BASELINE
    raise ConfigurationError(f"cannot checkpoint object of type {type(net).__name__}")


def network_tensors(net) -> dict[str, np.ndarray]:
    return {
        name: tensor.detach().cpu().numpy().astype("<f4")
        for name, tensor in net.state_dict().items()
    }


def save_network(path, net, extra: dict | None = None) -> None:
    """Write a parameter-only checkpoint of a network."""
    save_checkpoint(path, network_kind(net), net.config, network_tensors(net), extra)


def load_network(path, expect_kind: str | None = None):
    """Rebuild a network from a parameter checkpoint.

    ``expect_kind`` guards callers that require a specific variant: asking
    for a time-conditioned model and getting a baseline checkpoint (or the
    reverse) is an error, not a silent fallback.
    """
    data = load_checkpoint(path)
    if data.kind == KIND_TRAIN_STATE:
        raise ConfigurationError(
            f"{path} is a training-state checkpoint; resume training or use "
            "its final parameter checkpoint instead"
        )
    if expect_kind is not None and data.kind != expect_kind:
        raise ConfigurationError(
            f"{path} holds a {data.kind} checkpoint, but a {expect_kind} "
            "model is required here"
        )
    net = build_network(data.model_config)
    state = {name: torch.from_numpy(arr) for name, arr in data.parameter_tensors().items()}
    net.load_state_dict(state)
    net.eval()
    return net
