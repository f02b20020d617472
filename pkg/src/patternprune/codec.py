"""SPM encoding of projected layers, decoding, index accounting and the PCP1 container.

PCP1 layout (little-endian)::

    b"PCP1" | u32 layer_count
    per layer: u8 n | u16 |P| | u8 code_width | f32 scale | u32 out_c | u32 in_c
               |P| x u16 mask table (low 9 bits used)
               per-kernel codes, code_width bits each, MSB-first, padded to a byte
               out_c * in_c * n int8 non-zero values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import ByteReader, pack_codes, packed_code_bytes, unpack_codes
from .distill import DistillReport, match_kernels
from .errors import ConfigurationError, ConsistencyError, DomainError, FormatError
from .model import Geometry, LayerWeights, PrunedLayer, PrunedModel
from .patterns import DENSE_MASK, KERNEL_SIZE, PatternSet, code_width_for, mask_positions

PCP1_MAGIC = b"PCP1"
QMAX = 127
WEIGHT_BITS = 8
TABLE_ENTRY_BITS = KERNEL_SIZE


def position_table(patterns: PatternSet) -> np.ndarray:
    """``(|P|, n)`` kernel positions of each pattern's set bits, ascending."""
    return np.array([mask_positions(m) for m in patterns], dtype=np.int64).reshape(len(patterns), patterns.n)


def layer_scale(weights) -> float:
    """Symmetric per-layer scale ``max|w| / 127`` rounded to float32; 1.0 for an all-zero layer."""
    peak = float(np.max(np.abs(weights))) if np.size(weights) else 0.0
    return float(np.float32(peak / QMAX)) if peak > 0 else 1.0


def quantize(values, scale: float) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) / scale), -QMAX, QMAX).astype(np.int8)


def encode_layer(layer: LayerWeights, patterns: PatternSet) -> PrunedLayer:
    kernels = layer.kernels()
    codes, resid = match_kernels(kernels, patterns)
    bad = np.flatnonzero(resid > 0)
    if bad.size:
        raise ConsistencyError(
            f"kernel {int(bad[0])} (and {bad.size - 1} more) has support outside the pattern set; project first"
        )
    scale = layer_scale(kernels)
    picked = kernels[np.arange(len(kernels))[:, None], position_table(patterns)[codes]]
    return PrunedLayer(
        pattern_set=patterns,
        codes=codes,
        nz_values=quantize(picked, scale),
        scale=scale,
        out_channels=layer.out_channels,
        in_channels=layer.in_channels,
        geometry=layer.geometry,
    )


def encode(layers, report: DistillReport) -> PrunedModel:
    """Encode projected layers. Passed-through (non-3x3) layers are not part of the result."""
    layers = list(layers)
    if len(layers) != len(report.layers):
        raise ConfigurationError(f"report covers {len(report.layers)} layers, model has {len(layers)}")
    out = []
    for i, (layer, entry) in enumerate(zip(layers, report.layers)):
        if entry is None:
            continue
        if not layer.prunable or layer.num_kernels != entry.num_kernels:
            raise ConfigurationError(f"layer {i} does not match its report entry")
        out.append(encode_layer(layer, entry.selected))
    return PrunedModel(tuple(out))


def decode_layer(layer: PrunedLayer) -> LayerWeights:
    codes = layer.codes
    if codes.size and (codes.min() < 0 or codes.max() >= len(layer.pattern_set)):
        raise FormatError("SPM code outside the mapping table")
    dense = np.zeros((layer.num_kernels, KERNEL_SIZE))
    rows = np.arange(layer.num_kernels)[:, None]
    dense[rows, position_table(layer.pattern_set)[codes]] = layer.nz_values.astype(np.float64) * layer.scale
    # the container carries no geometry; a 3x3 'same' placeholder keeps LayerWeights well-formed
    geometry = layer.geometry or Geometry(3, 3, 1, 1)
    return LayerWeights(dense.reshape(layer.out_channels, layer.in_channels, KERNEL_SIZE), geometry)


def decode(pruned: PrunedModel) -> list[LayerWeights]:
    return [decode_layer(layer) for layer in pruned]


@dataclass(frozen=True)
class IndexOverhead:
    index_bits: int
    weight_bits: int

    @property
    def ratio(self) -> float:
        total = self.index_bits + self.weight_bits
        return self.index_bits / total if total else 0.0


def layer_index_bits(num_kernels: int, num_patterns: int) -> int:
    return num_kernels * code_width_for(num_patterns) + num_patterns * TABLE_ENTRY_BITS


def index_overhead(pruned: PrunedModel) -> IndexOverhead:
    """Bits spent on SPM codes plus mapping tables versus bits of stored weights."""
    index_bits = sum(layer_index_bits(l.num_kernels, len(l.pattern_set)) for l in pruned)
    weight_bits = sum(l.num_kernels * l.n * WEIGHT_BITS for l in pruned)
    return IndexOverhead(index_bits, weight_bits)


def index_overhead_for(num_kernels: int, n: int, num_patterns: int) -> IndexOverhead:
    """Closed-form :func:`index_overhead` for a single layer of the given shape."""
    return IndexOverhead(layer_index_bits(num_kernels, num_patterns), num_kernels * n * WEIGHT_BITS)


# -- PCP1 container -------------------------------------------------------

_LAYER_HEADER = "<BHBfII"


def dump_mask_table(patterns: PatternSet) -> bytes:
    return np.asarray(patterns.patterns, dtype="<u2").tobytes()


def read_mask_table(r: ByteReader, n: int, count: int, what: str) -> PatternSet:
    start = r.pos
    table = r.array(np.uint16, count, what)
    if np.any(table > DENSE_MASK):
        raise r.error(f"{what}: mask uses bits above bit 8", offset=start)
    try:
        pats = PatternSet(n, tuple(int(m) for m in table))
    except DomainError as exc:
        raise r.error(f"{what}: {exc}", offset=start) from None
    if pats.patterns != tuple(int(m) for m in table):
        raise r.error(f"{what}: masks not in ascending order", offset=start)
    return pats


def dump_pcp1(pruned: PrunedModel) -> bytes:
    out = [PCP1_MAGIC, struct.pack("<I", len(pruned))]
    for layer in pruned:
        out.append(
            struct.pack(
                _LAYER_HEADER,
                layer.n,
                len(layer.pattern_set),
                layer.code_width,
                layer.scale,
                layer.out_channels,
                layer.in_channels,
            )
        )
        out.append(dump_mask_table(layer.pattern_set))
        out.append(pack_codes(layer.codes, layer.code_width))
        out.append(layer.nz_values.astype(np.int8).tobytes())
    return b"".join(out)


def load_pcp1(data: bytes, source: str | None = None) -> PrunedModel:
    r = ByteReader(data, source)
    r.magic(PCP1_MAGIC)
    (count,) = r.unpack("I", "layer count")
    layers = []
    for i in range(count):
        start = r.pos
        n, num_p, width, scale, out_c, in_c = r.unpack(_LAYER_HEADER[1:], f"layer {i} header")
        if not 1 <= n <= KERNEL_SIZE or num_p == 0 or out_c == 0 or in_c == 0:
            raise r.error(f"layer {i}: invalid header (n={n}, |P|={num_p}, {out_c}x{in_c})", offset=start)
        if width != code_width_for(num_p):
            raise r.error(f"layer {i}: code width {width} does not match |P|={num_p}", offset=start)
        if not np.isfinite(scale) or scale <= 0:
            raise r.error(f"layer {i}: bad scale {scale}", offset=start)
        patterns = read_mask_table(r, n, num_p, f"layer {i} mask table")
        kernels = out_c * in_c
        code_start = r.pos
        codes = unpack_codes(r.take(packed_code_bytes(kernels, width), f"layer {i} codes"), kernels, width)
        if codes.size and codes.max() >= num_p:
            raise r.error(f"layer {i}: SPM code {int(codes.max())} outside table of {num_p}", offset=code_start)
        nz = r.array(np.int8, kernels * n, f"layer {i} non-zero values")
        layers.append(PrunedLayer(patterns, codes, nz.reshape(kernels, n), scale, out_c, in_c))
    r.expect_end()
    return PrunedModel(tuple(layers))


def write_pcp1(path, pruned: PrunedModel) -> None:
    Path(path).write_bytes(dump_pcp1(pruned))


def read_pcp1(path) -> PrunedModel:
    return load_pcp1(Path(path).read_bytes(), str(path))
