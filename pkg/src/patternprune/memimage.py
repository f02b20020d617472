"""Weight SRAM / Pattern SRAM images and the PaC (pattern config) records.

Weight image: for each layer, non-zero sequences in kernel order, grouped
into 60-byte register fills of ``60 // n`` whole kernels. For ``n`` in 1..6
a full fill has no padding; for 7..9 the tail of every fill is zero. The
last fill of each layer is zero-padded to 60 bytes.

Pattern image: for each layer, the ``|P|`` x u16 LE mask table followed by
the MSB-first packed SPM code stream, padded to a byte.

Images larger than one SRAM load (128 KiB weights, 4 KiB patterns) are
split into numbered segments; weight segments end on register-fill
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import ByteReader, pack_codes, packed_code_bytes, unpack_codes
from .codec import dump_mask_table, read_mask_table
from .errors import FormatError
from .model import PrunedLayer, PrunedModel
from .patterns import KERNEL_SIZE, code_width_for

REGISTER_WORDS = 60
WEIGHT_SRAM_BYTES = 128 * 1024
PATTERN_SRAM_BYTES = 4 * 1024


def kernels_per_fill(n: int) -> int:
    return REGISTER_WORDS // n


def fill_count(num_kernels: int, n: int) -> int:
    return -(-num_kernels // kernels_per_fill(n))


def weight_bytes(num_kernels: int, n: int) -> int:
    return fill_count(num_kernels, n) * REGISTER_WORDS


@dataclass(frozen=True)
class PacRecord:
    layer: int
    n: int
    patterns: int
    code_width: int
    kernels: int
    out_c: int
    in_c: int
    scale: float

    def to_text(self) -> str:
        return (
            f"layer {self.layer} n {self.n} patterns {self.patterns} code_width {self.code_width} "
            f"kernels {self.kernels} out_c {self.out_c} in_c {self.in_c} scale {float(self.scale).hex()}"
        )

    _KEYS = ("layer", "n", "patterns", "code_width", "kernels", "out_c", "in_c", "scale")

    @classmethod
    def from_text(cls, line: str, source=None, lineno=None) -> PacRecord:
        tok = line.split()
        if len(tok) != 2 * len(cls._KEYS) or tuple(tok[0::2]) != cls._KEYS:
            raise FormatError(f"malformed PaC record {line!r}", source, lineno)
        try:
            ints = [int(t) for t in tok[1:-2:2]]
            scale = float.fromhex(tok[-1])
        except ValueError:
            raise FormatError(f"non-numeric PaC field in {line!r}", source, lineno) from None
        return cls(*ints, scale)


@dataclass(frozen=True)
class MemoryImage:
    weight_image: bytes
    pattern_image: bytes
    pac: tuple[PacRecord, ...]

    def weight_segments(self, limit: int = WEIGHT_SRAM_BYTES) -> list[bytes]:
        step = (limit // REGISTER_WORDS) * REGISTER_WORDS
        return _split(self.weight_image, step)

    def pattern_segments(self, limit: int = PATTERN_SRAM_BYTES) -> list[bytes]:
        return _split(self.pattern_image, limit)

    def pac_text(self) -> str:
        return "".join(rec.to_text() + "\n" for rec in self.pac)


def _split(data: bytes, step: int) -> list[bytes]:
    if not data:
        return [b""]
    return [data[i : i + step] for i in range(0, len(data), step)]


def layer_fills(layer: PrunedLayer) -> bytes:
    n = layer.n
    per_fill = kernels_per_fill(n)
    fills = fill_count(layer.num_kernels, n)
    buf = np.zeros((fills * per_fill, n), dtype=np.int8)
    buf[: layer.num_kernels] = layer.nz_values
    regs = np.zeros((fills, REGISTER_WORDS), dtype=np.int8)
    regs[:, : per_fill * n] = buf.reshape(fills, per_fill * n)
    return regs.tobytes()


def pack(pruned: PrunedModel) -> MemoryImage:
    weights, patterns, pac = [], [], []
    for i, layer in enumerate(pruned):
        weights.append(layer_fills(layer))
        patterns.append(dump_mask_table(layer.pattern_set))
        patterns.append(pack_codes(layer.codes, layer.code_width))
        pac.append(
            PacRecord(
                i,
                layer.n,
                len(layer.pattern_set),
                layer.code_width,
                layer.num_kernels,
                layer.out_channels,
                layer.in_channels,
                layer.scale,
            )
        )
    return MemoryImage(b"".join(weights), b"".join(patterns), tuple(pac))


def unpack(image: MemoryImage) -> PrunedModel:
    wr = ByteReader(image.weight_image, "weight image")
    pr = ByteReader(image.pattern_image, "pattern image")
    layers = []
    for i, rec in enumerate(image.pac):
        if rec.layer != i:
            raise FormatError(f"PaC record {i} is labelled layer {rec.layer}", "PaC", i)
        if not 1 <= rec.n <= KERNEL_SIZE or rec.patterns < 1 or rec.out_c < 1 or rec.in_c < 1:
            raise FormatError(f"invalid PaC record for layer {i}", "PaC", i)
        if rec.kernels != rec.out_c * rec.in_c:
            raise FormatError(f"layer {i}: {rec.kernels} kernels declared for {rec.out_c}x{rec.in_c}", "PaC", i)
        if rec.code_width != code_width_for(rec.patterns):
            raise FormatError(f"layer {i}: code width {rec.code_width} inconsistent with {rec.patterns}", "PaC", i)

        table = read_mask_table(pr, rec.n, rec.patterns, f"layer {i} mask table")
        code_start = pr.pos
        raw = pr.take(packed_code_bytes(rec.kernels, rec.code_width), f"layer {i} codes")
        codes = unpack_codes(raw, rec.kernels, rec.code_width)
        if codes.size and codes.max() >= rec.patterns:
            raise pr.error(f"layer {i}: SPM code outside table", offset=code_start)
        if _tail_bits(raw, rec.kernels * rec.code_width):
            raise pr.error(f"layer {i}: non-zero code padding bits", offset=code_start)

        fill_start = wr.pos
        per_fill = kernels_per_fill(rec.n)
        fills = fill_count(rec.kernels, rec.n)
        regs = wr.array(np.int8, fills * REGISTER_WORDS, f"layer {i} register fills").reshape(fills, REGISTER_WORDS)
        if np.any(regs[:, per_fill * rec.n :]):
            raise wr.error(f"layer {i}: non-zero register padding", offset=fill_start)
        seq = regs[:, : per_fill * rec.n].reshape(-1, rec.n)
        if np.any(seq[rec.kernels :]):
            raise wr.error(f"layer {i}: data after the last declared kernel", offset=fill_start)
        layers.append(PrunedLayer(table, codes, seq[: rec.kernels], rec.scale, rec.out_c, rec.in_c))
    wr.expect_end()
    pr.expect_end()
    return PrunedModel(tuple(layers))


def _tail_bits(raw, used_bits: int) -> bool:
    bits = np.unpackbits(np.frombuffer(bytes(raw), dtype=np.uint8), bitorder="big")
    return bool(bits[used_bits:].any())


# -- text forms -----------------------------------------------------------


def hex_dump(data: bytes, base: int = 0) -> str:
    """16 bytes per line, prefixed with the 8-digit hex offset."""
    lines = []
    for off in range(0, len(data), 16):
        chunk = data[off : off + 16]
        lines.append(f"{base + off:08x}: " + " ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_hex_dump(text: str, source=None) -> bytes:
    out = bytearray()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            off, body = line.split(":", 1)
            if int(off, 16) != len(out):
                raise ValueError("offset out of sequence")
            out.extend(bytes.fromhex(body))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}", source) from None
    return bytes(out)


def parse_pac(text: str, source=None) -> tuple[PacRecord, ...]:
    recs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            recs.append(PacRecord.from_text(line, source, lineno))
    return tuple(recs)


MANIFEST = "manifest.txt"


def write_image_dir(directory, image: MemoryImage) -> list[Path]:
    """Write segments (``.bin`` + ``.hex``), ``pac.txt`` and a manifest into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = ["# segment kind offset length"]
    for kind, segments in (("weight", image.weight_segments()), ("pattern", image.pattern_segments())):
        offset = 0
        for k, seg in enumerate(segments):
            stem = f"{kind}_{k:03d}"
            (directory / f"{stem}.bin").write_bytes(seg)
            (directory / f"{stem}.hex").write_text(hex_dump(seg, offset))
            written += [directory / f"{stem}.bin", directory / f"{stem}.hex"]
            manifest.append(f"{stem}.bin {kind} {offset} {len(seg)}")
            offset += len(seg)
    (directory / "pac.txt").write_text(image.pac_text())
    (directory / MANIFEST).write_text("\n".join(manifest) + "\n")
    return written + [directory / "pac.txt", directory / MANIFEST]


def read_image_dir(directory) -> MemoryImage:
    directory = Path(directory)
    mpath = directory / MANIFEST
    if not mpath.exists():
        raise FormatError("missing manifest", str(mpath))
    parts = {"weight": [], "pattern": []}
    for lineno, line in enumerate(mpath.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 4 or tok[1] not in parts:
            raise FormatError(f"line {lineno}: malformed manifest entry", str(mpath))
        name, kind, offset, length = tok[0], tok[1], int(tok[2]), int(tok[3])
        seg_path = directory / name
        if not seg_path.exists():
            raise FormatError(f"missing segment {name}", str(mpath), lineno)
        data = seg_path.read_bytes()
        have = sum(len(p) for p in parts[kind])
        if len(data) != length or offset != have:
            raise FormatError(f"segment {name} does not match manifest", str(seg_path), have)
        parts[kind].append(data)
    pac_path = directory / "pac.txt"
    if not pac_path.exists():
        raise FormatError("missing PaC", str(pac_path))
    return MemoryImage(
        b"".join(parts["weight"]),
        b"".join(parts["pattern"]),
        parse_pac(pac_path.read_text(), str(pac_path)),
    )
