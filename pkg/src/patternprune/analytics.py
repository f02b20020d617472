"""Compression and FLOP accounting, plus the tabular report.

FLOPs are counted as 2 per MAC (one multiply, one add).
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec import WEIGHT_BITS, index_overhead
from .errors import ConsistencyError
from .memimage import PATTERN_SRAM_BYTES, WEIGHT_SRAM_BYTES
from .model import LayerSparsity, PrunedModel, SparsityConfig
from .patterns import KERNEL_SIZE

FLOPS_PER_MAC = 2


@dataclass(frozen=True)
class CompressionRates:
    weight_only: float
    weight_plus_idx: float
    dense_bits: int
    weight_bits: int
    index_bits: int


def compression_rates(pruned: PrunedModel, baseline_bits_per_weight: int = 8) -> CompressionRates:
    """Dense storage over pruned storage, without and with SPM index bits.

    The dense model is assumed to have the same geometry with all nine
    weights of every kernel stored at ``baseline_bits_per_weight``.
    """
    dense_bits = sum(l.num_kernels * KERNEL_SIZE * baseline_bits_per_weight for l in pruned)
    idx = index_overhead(pruned)
    return CompressionRates(
        weight_only=dense_bits / idx.weight_bits,
        weight_plus_idx=dense_bits / (idx.weight_bits + idx.index_bits),
        dense_bits=dense_bits,
        weight_bits=idx.weight_bits,
        index_bits=idx.index_bits,
    )


@dataclass(frozen=True)
class LayerFlops:
    layer: int
    kernel_size: int
    dense_flops: int
    pruned_flops: float
    params: int
    pruned_params: int


@dataclass(frozen=True)
class FlopsReport:
    layers: tuple[LayerFlops, ...]

    @property
    def dense_flops(self) -> int:
        return sum(l.dense_flops for l in self.layers)

    @property
    def pruned_flops(self) -> float:
        return sum(l.pruned_flops for l in self.layers)

    @property
    def pruned_fraction(self) -> float:
        return 1.0 - self.pruned_flops / self.dense_flops

    @property
    def dense_params(self) -> int:
        return sum(l.params for l in self.layers)

    @property
    def pruned_params(self) -> int:
        return sum(l.pruned_params for l in self.layers)


def flops_report(layers, config: SparsityConfig) -> FlopsReport:
    """FLOPs of every layer, dense and after pruning.

    A 3x3 layer with a config entry costs ``n/9`` of its dense FLOPs; every
    other layer (including 1x1 layers) is counted at full cost.
    """
    rows = []
    for i, layer in enumerate(layers):
        oh, ow = layer.geometry.output_hw(layer.kernel_size)
        k2 = layer.kernel_size**2
        macs = layer.out_channels * layer.in_channels * k2 * oh * ow
        dense = FLOPS_PER_MAC * macs
        params = layer.num_kernels * k2
        entry = config.get(i) if layer.prunable else None
        if entry is None:
            rows.append(LayerFlops(i, layer.kernel_size, dense, dense, params, params))
        else:
            rows.append(
                LayerFlops(i, 3, dense, dense * entry.n / KERNEL_SIZE, params, layer.num_kernels * entry.n)
            )
    return FlopsReport(tuple(rows))


def config_from_pruned(pruned: PrunedModel, layers) -> SparsityConfig:
    """Sparsity config implied by ``pruned``, aligned with the prunable layers of ``layers``."""
    idx = [i for i, layer in enumerate(layers) if layer.prunable]
    if len(idx) != len(pruned):
        raise ConsistencyError(f"pruned model has {len(pruned)} layers, baseline has {len(idx)} 3x3 layers")
    entries = {}
    for i, pl in zip(idx, pruned):
        base = layers[i]
        if (base.out_channels, base.in_channels) != (pl.out_channels, pl.in_channels):
            raise ConsistencyError(
                f"layer {i}: baseline is {base.out_channels}x{base.in_channels}, "
                f"pruned is {pl.out_channels}x{pl.in_channels}"
            )
        entries[i] = LayerSparsity(pl.n, len(pl.pattern_set))
    return SparsityConfig(entries)


def sram_index_share(weight_sram_bytes: int = WEIGHT_SRAM_BYTES, pattern_sram_bytes: int = PATTERN_SRAM_BYTES):
    """Pattern SRAM capacity relative to weight SRAM capacity (on-chip provisioning view)."""
    return pattern_sram_bytes / weight_sram_bytes


def format_table(pruned: PrunedModel, layers, label: str = "Pruned", baseline_bits_per_weight: int = 8) -> str:
    config = config_from_pruned(pruned, layers)
    flops = flops_report(layers, config)
    rates = compression_rates(pruned, baseline_bits_per_weight)
    ns = sorted({e.n for e in config.entries.values()})
    setting = f"n = {ns[0]}" if len(ns) == 1 else "n = " + "-".join(str(config.entries[i].n) for i in sorted(config.entries))

    head = ("Benchmark", "CONV FLOPs", "FLOPs Pruned", "CONV Parameters", "Compression (weight)", "Compression (weight+idx)")
    rows = [
        (f"{label}, Baseline", f"{flops.dense_flops:.3e}", "-", f"{flops.dense_params:.3e}", "-", "-"),
        (
            f"{label}, {setting}",
            f"{flops.pruned_flops:.3e}",
            f"{100 * flops.pruned_fraction:.1f}%",
            f"{flops.pruned_params:.3e}",
            f"{rates.weight_only:.2f}x",
            f"{rates.weight_plus_idx:.2f}x",
        ),
    ]
    widths = [max(len(r[c]) for r in [head, *rows]) for c in range(len(head))]

    def line(r):
        return " | ".join(cell.ljust(wd) for cell, wd in zip(r, widths)).rstrip()

    out = [
        f"# FLOPs = {FLOPS_PER_MAC} x MACs; baseline weights {baseline_bits_per_weight}-bit; "
        f"pruned weights {WEIGHT_BITS}-bit; index = SPM codes + 9-bit mask tables",
        line(head),
        "-+-".join("-" * wd for wd in widths),
        *(line(r) for r in rows),
        "",
        "layer | n | patterns | code_bits | kernels | dense FLOPs | pruned FLOPs",
    ]
    pl_iter = iter(pruned)
    for lf in flops.layers:
        if lf.layer in config.entries:
            pl = next(pl_iter)
            out.append(
                f"{lf.layer} | {pl.n} | {len(pl.pattern_set)} | {pl.code_width} | {pl.num_kernels} | "
                f"{lf.dense_flops} | {lf.pruned_flops:.0f}"
            )
    out.append("")
    out.append(
        f"bits: dense {rates.dense_bits} weights {rates.weight_bits} index {rates.index_bits} "
        f"index_share {rates.index_bits / (rates.index_bits + rates.weight_bits):.4f}"
    )
    return "\n".join(out) + "\n"
