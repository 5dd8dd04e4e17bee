"""Binary tensor container used for checkpoints and feature files.

Layout (all integers little-endian)::

    b"SENS" | version u16 | header length u32 | JSON header | tensor data

The JSON header carries a ``tensors`` directory of ``{name, shape, offset}``
records; offsets are relative to the start of the data block and every
tensor is stored as row-major little-endian float32.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..nn import ShapeError
from .architectures import ArchitectureDescriptor, Model

MAGIC = b"SENS"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class ContainerError(ValueError):
    pass


class CorruptContainerError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class CheckpointShapeError(ContainerError, ShapeError):
    pass


def write_container(path, header, tensors):
    directory, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        directory.append({"name": name, "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    head = json.dumps({**header, "tensors": directory}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(head)))
        fh.write(head)
        for b in blobs:
            fh.write(b)


def read_container(path):
    """Return ``(header, tensors)``; tensors come back as float32 arrays."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise CorruptContainerError(f"{path}: corrupt container (file shorter than prefix)")
    magic, version, head_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptContainerError(f"{path}: corrupt container (bad magic {magic!r})")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version} (expected {VERSION})")
    start = _PREFIX.size
    if len(raw) < start + head_len:
        raise CorruptContainerError(f"{path}: corrupt container (truncated header)")
    try:
        header = json.loads(raw[start:start + head_len].decode("utf-8"))
        directory = header.pop("tensors")
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, AttributeError) as exc:
        raise CorruptContainerError(f"{path}: corrupt container (bad header: {exc})") from None
    data = memoryview(raw)[start + head_len:]
    tensors = {}
    for rec in directory:
        shape = tuple(rec["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 4
        lo = rec["offset"]
        if lo < 0 or lo + n > len(data):
            raise CorruptContainerError(f"{path}: corrupt container (tensor {rec['name']!r} truncated)")
        tensors[rec["name"]] = np.frombuffer(data[lo:lo + n], dtype="<f4").reshape(shape).astype(np.float32)
    return header, tensors


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ModelCheckpoint:
    descriptor: ArchitectureDescriptor
    tensors: dict
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, **metadata):
        return cls(model.descriptor, model.state_dict(), metadata)

    def to_model(self):
        model = Model(self.descriptor, seed=0, dtype=np.float32)
        expected = model.parameters()
        for name, p in expected.items():
            if name not in self.tensors:
                raise CheckpointShapeError(f"checkpoint lacks tensor {name!r}")
            if tuple(self.tensors[name].shape) != p.shape:
                raise CheckpointShapeError(
                    f"tensor {name!r} has shape {tuple(self.tensors[name].shape)}, descriptor expects {p.shape}"
                )
        model.load_state_dict(self.tensors)
        return model


def save_checkpoint(model_or_ckpt, path, **metadata):
    ckpt = model_or_ckpt
    if isinstance(ckpt, Model):
        ckpt = ModelCheckpoint.from_model(ckpt, **metadata)
    else:
        ckpt = ModelCheckpoint(ckpt.descriptor, ckpt.tensors, {**ckpt.metadata, **metadata})
    header = {"kind": "model", "descriptor": ckpt.descriptor.to_dict(), "metadata": ckpt.metadata}
    write_container(path, header, ckpt.tensors)


def load_checkpoint_raw(path):
    header, tensors = read_container(path)
    if header.get("kind") != "model" or "descriptor" not in header:
        raise CorruptContainerError(f"{path}: corrupt container (not a model checkpoint)")
    return ModelCheckpoint(ArchitectureDescriptor.from_dict(header["descriptor"]), tensors,
                           header.get("metadata", {}))


def load_checkpoint(path):
    """Load a checkpoint file straight into a float32 :class:`Model`."""
    return load_checkpoint_raw(path).to_model()
