"""Weight store and its ``UNW1`` binary format.

Layout (all integers uint32 little-endian)::

    b"UNW1" | version | len | descriptor text (utf-8)
    then, for every layer in inventory order:
    len | name (utf-8) | rank | dims[rank] | float32 LE values
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FingerprintError, LayerMismatchError, MagicError, TruncationError, WeightFormatError
from .descriptor import ArchDescriptor, layer_inventory

MAGIC = b"UNW1"
VERSION = 1
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class WeightStore:
    descriptor: ArchDescriptor
    tensors: dict

    def __post_init__(self):
        expected = layer_inventory(self.descriptor)
        names = list(self.tensors)
        if names != [n for n, _ in expected]:
            missing = [n for n, _ in expected if n not in self.tensors]
            extra = [n for n in names if n not in dict(expected)]
            raise LayerMismatchError(
                f"layers do not match descriptor (missing {missing[:3]}, unexpected {extra[:3]}, or misordered)"
            )
        frozen = {}
        for name, shape in expected:
            arr = np.array(self.tensors[name], dtype="<f4", order="C", copy=True)
            if arr.shape != shape:
                raise LayerMismatchError(f"{name}: expected shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "tensors", frozen)

    @property
    def fingerprint(self):
        return self.descriptor.fingerprint

    def __getitem__(self, name):
        return self.tensors[name]

    def __eq__(self, other):
        if not isinstance(other, WeightStore):
            return NotImplemented
        return self.descriptor == other.descriptor and all(
            np.array_equal(a, other.tensors[n]) for n, a in self.tensors.items()
        )

    __hash__ = None

    def check(self, descriptor: ArchDescriptor):
        if descriptor.fingerprint != self.fingerprint:
            raise FingerprintError(
                f"weights built for {self.fingerprint} ({self.descriptor.to_text()}), "
                f"descriptor is {descriptor.fingerprint}"
            )


def init_weights(desc: ArchDescriptor, seed=0) -> WeightStore:
    """He-normal conv weights, unit norm scale, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in layer_inventory(desc):
        if name.endswith(".weight") and len(shape) == 5:
            fan_in = shape[1] * math.prod(shape[2:]) if ".up." not in name else shape[0] * 8
            tensors[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        elif ".norm" in name and name.endswith(".weight"):
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return WeightStore(desc, tensors)


def zero_weights(desc: ArchDescriptor) -> WeightStore:
    """All conv weights and biases zero; norm affine at identity (scale 1, shift 0)."""
    tensors = {}
    for name, shape in layer_inventory(desc):
        fill = 1.0 if ".norm" in name and name.endswith(".weight") else 0.0
        tensors[name] = np.full(shape, fill)
    return WeightStore(desc, tensors)


def save_weights(store: WeightStore) -> bytes:
    text = store.descriptor.to_text().encode()
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(text)), text]
    for name, arr in store.tensors.items():
        enc = name.encode()
        parts += [_U32.pack(len(enc)), enc, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
        parts.append(arr.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncationError(what, f"needs {n} bytes at offset {self.pos}, only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def load_weights(data: bytes) -> WeightStore:
    data = bytes(data)
    if data[:4] != MAGIC:
        raise MagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    r = _Reader(data)
    r.pos = 4
    version = r.u32("header")
    if version != VERSION:
        raise WeightFormatError(f"unsupported UNW1 version {version}")
    text = r.take(r.u32("header"), "descriptor").decode("utf-8", errors="replace")
    desc = ArchDescriptor.from_text(text)
    tensors = {}
    for expected_name, expected_shape in layer_inventory(desc):
        n = r.u32(expected_name)
        if n > 1024:
            raise LayerMismatchError(f"{expected_name}: implausible name length {n}")
        name = r.take(n, expected_name).decode("utf-8", errors="replace")
        if name != expected_name:
            raise LayerMismatchError(f"expected layer {expected_name!r}, found {name!r}")
        rank = r.u32(name)
        if rank > 8:
            raise LayerMismatchError(f"{name}: implausible rank {rank}")
        shape = tuple(r.u32(name) for _ in range(rank))
        if shape != expected_shape:
            raise LayerMismatchError(f"{name}: expected shape {expected_shape}, got {shape}")
        count = math.prod(shape)
        raw = r.take(4 * count, name)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if r.pos != len(data):
        raise WeightFormatError(f"{len(data) - r.pos} trailing bytes after last layer")
    return WeightStore(desc, tensors)


def read_weights_file(path) -> WeightStore:
    with open(path, "rb") as fh:
        return load_weights(fh.read())


def write_weights_file(store: WeightStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_weights(store))
