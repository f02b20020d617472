"""PCT1 dense tensor container and the sparsity config text format.

PCT1 layout (all integers u32 little-endian)::

    b"PCT1" | layer_count
    per layer: out_c in_c input_h input_w stride padding
               out_c * in_c * 9 float32 LE (out_c outer, in_c inner, row-major values)

Config files hold one ``layer <i> n <n> v <v>`` record per line; ``#`` starts a comment.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .binio import ByteReader
from .errors import ConfigurationError, DomainError, FormatError
from .model import Geometry, LayerSparsity, LayerWeights, SparsityConfig

PCT1_MAGIC = b"PCT1"


def dump_pct1(layers) -> bytes:
    out = [PCT1_MAGIC, struct.pack("<I", len(layers))]
    for layer in layers:
        if not layer.prunable:
            raise DomainError("PCT1 only stores 3x3 layers")
        g = layer.geometry
        out.append(
            struct.pack("<6I", layer.out_channels, layer.in_channels, g.input_h, g.input_w, g.stride, g.padding)
        )
        out.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
    return b"".join(out)


def load_pct1(data: bytes, source: str | None = None) -> list[LayerWeights]:
    r = ByteReader(data, source)
    r.magic(PCT1_MAGIC)
    (count,) = r.unpack("I", "layer count")
    layers = []
    for i in range(count):
        start = r.pos
        out_c, in_c, h, w, stride, padding = r.unpack("6I", f"layer {i} header")
        if out_c == 0 or in_c == 0:
            raise r.error(f"layer {i} has zero channels", offset=start)
        values = r.array(np.float32, out_c * in_c * 9, f"layer {i} weights")
        try:
            geometry = Geometry(h, w, stride, padding)
        except DomainError as exc:
            raise r.error(f"layer {i}: {exc}", offset=start) from None
        layers.append(LayerWeights(values.reshape(out_c, in_c, 9), geometry))
    r.expect_end()
    return layers


def write_pct1(path, layers) -> None:
    Path(path).write_bytes(dump_pct1(layers))


def read_pct1(path) -> list[LayerWeights]:
    return load_pct1(Path(path).read_bytes(), str(path))


def dump_config(config: SparsityConfig) -> str:
    return "".join(f"layer {i} n {e.n} v {e.v}\n" for i, e in sorted(config.entries.items()))


def load_config(text: str, source: str | None = None) -> SparsityConfig:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 6 or tok[0] != "layer" or tok[2] != "n" or tok[4] != "v":
            raise FormatError(f"line {lineno}: expected 'layer <i> n <n> v <v>', got {line!r}", source)
        try:
            i, n, v = int(tok[1]), int(tok[3]), int(tok[5])
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field in {line!r}", source) from None
        if i in entries:
            raise ConfigurationError(f"{source or 'config'} line {lineno}: duplicate entry for layer {i}")
        try:
            entries[i] = LayerSparsity(n, v)
        except DomainError as exc:
            raise FormatError(f"line {lineno}: {exc}", source) from None
    return SparsityConfig(entries)


def read_config(path) -> SparsityConfig:
    return load_config(Path(path).read_text(), str(path))
