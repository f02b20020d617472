"""Greedy per-layer pattern selection and kernel projection.

Each kernel is first matched to the closest mask among all popcount-``n``
masks (closest in the L2 sense, which is the same as keeping its ``n``
largest magnitudes). The ``v`` most frequently chosen masks become the
layer's pattern set and every kernel is then re-matched against that set.
Ties, both in distance and in frequency, go to the lower mask value.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, FormatError
from .model import LayerWeights, SparsityConfig
from .patterns import (
    KERNEL_SIZE,
    PatternSet,
    binomial,
    full_pattern_set,
    mask_from_str,
    mask_to_bits,
    mask_to_str,
)

_CHUNK = 8192


def project(kernel, mask: int) -> np.ndarray:
    """Zero every position of ``kernel`` outside ``mask``."""
    kernel = np.asarray(kernel, dtype=np.float64).reshape(-1)
    if kernel.size != KERNEL_SIZE:
        raise DomainError(f"kernel must have 9 values, got {kernel.size}")
    return np.where(mask_to_bits(mask).astype(bool), kernel, 0.0)


def _dropped_energy(kernels: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """``(N, T)`` squared L2 norm of what each candidate mask would zero out."""
    outside = 1.0 - (candidates[:, None] >> np.arange(KERNEL_SIZE) & 1).astype(np.float64)
    sq = np.square(kernels)
    return sq @ outside.T


def match_kernels(kernels, candidates: PatternSet) -> tuple[np.ndarray, np.ndarray]:
    """Index into ``candidates`` of the nearest mask per kernel, and the L2 residual.

    Args:
        kernels: ``(N, 9)`` array.
        candidates: the allowed masks.

    Returns:
        ``(codes, residuals)`` each of length ``N``.
    """
    kernels = np.asarray(kernels, dtype=np.float64).reshape(-1, KERNEL_SIZE)
    cand = candidates.as_array()
    codes = np.empty(len(kernels), dtype=np.int64)
    resid = np.empty(len(kernels), dtype=np.float64)
    for start in range(0, len(kernels), _CHUNK):
        dropped = _dropped_energy(kernels[start : start + _CHUNK], cand)
        # argmin returns the first minimum; candidates are sorted so that is the lowest mask
        best = np.argmin(dropped, axis=1)
        codes[start : start + _CHUNK] = best
        resid[start : start + _CHUNK] = np.sqrt(dropped[np.arange(len(best)), best])
    return codes, resid


def nearest_pattern(kernel, candidates: PatternSet) -> tuple[int, float]:
    if candidates is None or len(candidates) == 0:
        raise DomainError("empty candidate set")
    codes, resid = match_kernels(np.asarray(kernel).reshape(1, -1), candidates)
    return candidates.mask_of(int(codes[0])), float(resid[0])


@dataclass(frozen=True)
class LayerDistillation:
    """Outcome of pattern selection for one layer.

    ``frequency[i]`` counts the kernels whose nearest full-set mask is
    ``full_pattern_set(n).patterns[i]``.
    """

    n: int
    v: int
    selected: PatternSet
    frequency: tuple[int, ...]
    residual: float
    num_kernels: int

    def frequency_of(self, mask: int) -> int:
        return self.frequency[full_pattern_set(self.n).code_of(mask)]


@dataclass(frozen=True)
class DistillReport:
    """Per-layer results in model order; ``None`` marks a passed-through (non-3x3) layer."""

    layers: tuple[LayerDistillation | None, ...]

    @property
    def total_residual(self) -> float:
        return sum(e.residual for e in self.layers if e is not None)


def top_patterns(frequency, candidates: PatternSet, v: int) -> PatternSet:
    """The ``v`` most frequent candidates; equal counts favour the lower mask."""
    freq = np.asarray(frequency)
    # stable sort on -count keeps ascending mask order among equal counts
    order = np.argsort(-freq, kind="stable")[:v]
    return PatternSet(candidates.n, tuple(candidates.patterns[i] for i in order))


def distill_layer(layer: LayerWeights, n: int, v: int) -> LayerDistillation:
    if not layer.prunable:
        raise DomainError("only 3x3 layers can be distilled")
    full = full_pattern_set(n)
    if not 1 <= v <= len(full):
        raise DomainError(f"pattern budget v={v} outside [1, {len(full)}] for n={n}")
    kernels = layer.kernels()
    codes, _ = match_kernels(kernels, full)
    frequency = np.bincount(codes, minlength=len(full))
    selected = top_patterns(frequency, full, v)
    _, resid = match_kernels(kernels, selected)
    return LayerDistillation(
        n=n,
        v=v,
        selected=selected,
        frequency=tuple(int(f) for f in frequency),
        residual=math.fsum(resid),
        num_kernels=len(kernels),
    )


def distill_model(layers, config: SparsityConfig, max_workers: int | None = None) -> DistillReport:
    """Distill every prunable layer; non-3x3 layers get a ``None`` entry.

    ``max_workers`` > 1 distills layers on a thread pool; results stay in layer order.
    """
    layers = list(layers)
    config.check_against(layers)

    def run(i):
        if not layers[i].prunable:
            return None
        e = config.get(i)
        return distill_layer(layers[i], e.n, e.v)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            entries = list(pool.map(run, range(len(layers))))
    else:
        entries = [run(i) for i in range(len(layers))]
    return DistillReport(tuple(entries))


def project_layer(layer: LayerWeights, selected: PatternSet) -> tuple[LayerWeights, np.ndarray]:
    """Project each kernel onto its nearest selected mask.

    Returns:
        The projected layer and the per-kernel SPM codes into ``selected``.
    """
    kernels = layer.kernels()
    codes, _ = match_kernels(kernels, selected)
    keep = (selected.as_array()[codes][:, None] >> np.arange(KERNEL_SIZE)) & 1
    return layer.with_weights(np.where(keep.astype(bool), kernels, 0.0)), codes


def project_model(layers, report: DistillReport) -> list[LayerWeights]:
    layers = list(layers)
    if len(layers) != len(report.layers):
        raise ConfigurationError(f"report covers {len(report.layers)} layers, model has {len(layers)}")
    out = []
    for i, (layer, entry) in enumerate(zip(layers, report.layers)):
        if entry is None:
            out.append(layer)
            continue
        if not layer.prunable or layer.num_kernels != entry.num_kernels:
            raise ConfigurationError(f"layer {i} does not match its report entry")
        out.append(project_layer(layer, entry.selected)[0])
    return out


# -- text report ----------------------------------------------------------

REPORT_HEADER = "# pattern distillation report v1"


def format_report(report: DistillReport) -> str:
    """Plain-text report; masks are 9-character binary strings, bit 8 first."""
    lines = [REPORT_HEADER, f"layers {len(report.layers)}"]
    for i, e in enumerate(report.layers):
        if e is None:
            lines.append(f"layer {i} passthrough")
            continue
        lines.append(f"layer {i} n {e.n} v {e.v} kernels {e.num_kernels} residual {e.residual!r}")
        lines.append("selected " + " ".join(mask_to_str(m) for m in e.selected))
        full = full_pattern_set(e.n)
        for mask, count in zip(full.patterns, e.frequency):
            if count:
                lines.append(f"freq {mask_to_str(mask)} {count}")
        lines.append("end")
    return "\n".join(lines) + "\n"


def parse_report(text: str, source: str | None = None) -> DistillReport:
    lines = [ln.strip() for ln in text.splitlines()]
    pos = 0

    def fail(msg):
        return FormatError(f"line {pos + 1}: {msg}", source)

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos]:
            pos += 1
        if pos >= len(lines):
            raise fail("unexpected end of report")
        line = lines[pos]
        pos += 1
        return line

    if next_line() != REPORT_HEADER:
        pos -= 1
        raise fail("missing report header")
    tok = next_line().split()
    if len(tok) != 2 or tok[0] != "layers":
        raise fail("expected 'layers <count>'")
    count = int(tok[1])
    entries = []
    try:
        for i in range(count):
            tok = next_line().split()
            if tok[:2] != ["layer", str(i)]:
                raise fail(f"expected record for layer {i}")
            if tok[2:] == ["passthrough"]:
                entries.append(None)
                continue
            if len(tok) != 10 or tok[2::2] != ["n", "v", "kernels", "residual"]:
                raise fail("malformed layer record")
            n, v, kernels, residual = int(tok[3]), int(tok[5]), int(tok[7]), float(tok[9])
            sel = next_line().split()
            if sel[0] != "selected":
                raise fail("expected 'selected' record")
            selected = PatternSet(n, tuple(mask_from_str(s) for s in sel[1:]))
            full = full_pattern_set(n)
            freq = [0] * len(full)
            while True:
                tok = next_line().split()
                if tok == ["end"]:
                    break
                if len(tok) != 3 or tok[0] != "freq":
                    raise fail("expected 'freq <mask> <count>' or 'end'")
                freq[full.code_of(mask_from_str(tok[1]))] = int(tok[2])
            if len(selected) != v or v > binomial(KERNEL_SIZE, n) or sum(freq) != kernels:
                raise fail(f"layer {i} record is inconsistent")
            entries.append(LayerDistillation(n, v, selected, tuple(freq), residual, kernels))
    except (ValueError, IndexError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise fail(str(exc) or "malformed record") from None
    return DistillReport(tuple(entries))


def write_report(path, report: DistillReport) -> None:
    Path(path).write_text(format_report(report))


def read_report(path) -> DistillReport:
    return parse_report(Path(path).read_text(), str(path))
