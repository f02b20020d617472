"""Cycle-level model of the pattern-aware PE group.

Mapping used throughout:

* output channels are tiled over 64 PEs (``ceil(out_c / 64)`` tiles);
* each PE's 4 MAC lanes take 4 consecutive input channels of the same
  convolution window, and the window's activations are broadcast to all PEs;
* lane ``k`` needs ``popcount(weight_mask & activation_mask)`` cycles for its
  kernel, and a channel group advances only when every lane of every PE in
  the tile is done (the broadcast keeps PEs in lock-step);
* a layer costs the sum of those group maxima plus 3 cycles to fill the
  4-stage pipeline (pre-process, pointer generation, MAC, accumulate+ReLU).

Arithmetic is integer: 8-bit weights times 8-bit activations accumulated in
32 bits, with the two scales applied to the output only.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .codec import position_table
from .errors import ConfigurationError, DomainError
from .model import Geometry, PrunedLayer, PrunedModel
from .patterns import DENSE_MASK, KERNEL_SIZE, POPCOUNT

NUM_PES = 64
LANES = 4
MACS_PER_CYCLE = NUM_PES * LANES
PIPELINE_STAGES = ("preprocess", "pointer", "mac", "accumulate")
FILL_CYCLES = len(PIPELINE_STAGES) - 1
ACT_QMAX = 127

_GATHER_BUDGET = 1 << 22


@dataclass(frozen=True)
class PointerOffsets:
    offsets: tuple[int, ...]
    pointers: tuple[int, ...]


def pointer_offsets(mask: int) -> PointerOffsets:
    """Effectual positions of a sparsity mask and the zero-run before each.

    The zero count before every position comes from a running sum over the
    inverted mask; the offset of an effectual entry is the difference of
    those sums between it and the previous effectual entry.
    """
    if not 0 <= mask <= DENSE_MASK:
        raise DomainError(f"mask {mask} outside [0, 511]")
    inverted = ~mask & DENSE_MASK
    zeros_before = [POPCOUNT[inverted & ((1 << i) - 1)] for i in range(KERNEL_SIZE)]
    offsets, pointers = [], []
    prev_zeros = 0
    for i in range(KERNEL_SIZE):
        if mask >> i & 1:
            offset = int(zeros_before[i]) - prev_zeros
            pointers.append((pointers[-1] + 1 if pointers else 0) + offset)
            offsets.append(offset)
            prev_zeros = int(zeros_before[i])
    return PointerOffsets(tuple(offsets), tuple(pointers))


# -- feature maps ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Quantized activations ``(C, H, W)`` in ``[0, 127]`` with a real scale."""

    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise DomainError(f"feature map must be (C, H, W), got shape {v.shape}")
        if not np.issubdtype(v.dtype, np.integer):
            raise DomainError("feature map values must be integers")
        if v.size and (v.min() < -128 or v.max() > 127):
            raise DomainError("feature map values must fit in 8 bits")
        v = v.astype(np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def dequantized(self) -> np.ndarray:
        return self.values * self.scale


def synthesize_activations(channels: int, height: int, width: int, density: float, seed: int) -> FeatureMap:
    """Random 8-bit activations with each value kept with probability ``density``.

    Values and keep-draws come from one seeded generator in a fixed order, so
    the zero set at a lower density always contains the zero set at a higher one.
    """
    if not 0 < density <= 1:
        raise DomainError(f"activation density {density} outside (0, 1]")
    rng = np.random.default_rng(seed)
    shape = (channels, height, width)
    values = rng.integers(1, ACT_QMAX + 1, size=shape)
    keep = rng.random(shape) < density
    return FeatureMap(np.where(keep, values, 0))


def max_pool2(fmap: FeatureMap) -> FeatureMap:
    c, h, w = fmap.shape
    if h < 2 or w < 2:
        raise ConfigurationError(f"cannot 2x2-pool a {h}x{w} feature map")
    v = fmap.values[:, : h // 2 * 2, : w // 2 * 2].reshape(c, h // 2, 2, w // 2, 2)
    return FeatureMap(v.max(axis=(2, 4)), fmap.scale)


def windows(fmap: FeatureMap, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    """``(OH*OW, C, 9)`` activation patches of every 3x3 window."""
    v = np.pad(fmap.values, ((0, 0), (padding, padding), (padding, padding)))
    c, h, w = v.shape
    if h < 3 or w < 3:
        raise ConfigurationError(f"3x3 kernel does not fit a {h}x{w} padded input")
    view = np.lib.stride_tricks.sliding_window_view(v, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    oh, ow = view.shape[1], view.shape[2]
    return view.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c, KERNEL_SIZE), oh, ow


# -- reports --------------------------------------------------------------


@dataclass
class LayerSim:
    """Cycle accounting for one layer.

    ``cycles`` uses the real weight and activation masks; ``dense_cycles`` is
    the same run with every weight present. ``weight_only_cycles`` treats all
    activations as non-zero and ``baseline_cycles`` exploits no sparsity at all.
    """

    layer: int
    out_channels: int
    in_channels: int
    output_hw: tuple[int, int]
    cycles: int
    dense_cycles: int
    weight_only_cycles: int
    baseline_cycles: int
    effectual_macs: int
    pe_busy: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def total_mac_slots(self) -> int:
        return self.cycles * MACS_PER_CYCLE

    @property
    def utilization(self) -> float:
        return self.effectual_macs / self.total_mac_slots

    @property
    def speedup(self) -> float:
        return self.dense_cycles / self.cycles

    @property
    def weight_only_speedup(self) -> float:
        return self.baseline_cycles / self.weight_only_cycles

    @property
    def combined_speedup(self) -> float:
        return self.baseline_cycles / self.cycles

    @property
    def stage_occupancy(self) -> dict[str, float]:
        busy = self.cycles - FILL_CYCLES
        return {stage: busy / self.cycles for stage in PIPELINE_STAGES}

    @property
    def balanced(self) -> bool:
        """Every PE that holds output channels in a tile was busy for the same number of cycles."""
        return all(np.all(tile == tile[0]) for tile in self.pe_busy)


@dataclass
class SimReport:
    layers: list[LayerSim]

    def _sum(self, attr):
        return sum(getattr(l, attr) for l in self.layers)

    @property
    def total_cycles(self) -> int:
        return self._sum("cycles")

    cycles = total_cycles

    @property
    def dense_cycles(self) -> int:
        return self._sum("dense_cycles")

    @property
    def weight_only_cycles(self) -> int:
        return self._sum("weight_only_cycles")

    @property
    def baseline_cycles(self) -> int:
        return self._sum("baseline_cycles")

    @property
    def effectual_macs(self) -> int:
        return self._sum("effectual_macs")

    @property
    def total_mac_slots(self) -> int:
        return self.total_cycles * MACS_PER_CYCLE

    @property
    def utilization(self) -> float:
        return self.effectual_macs / self.total_mac_slots

    @property
    def speedup(self) -> float:
        return self.dense_cycles / self.total_cycles

    @property
    def weight_only_speedup(self) -> float:
        return self.baseline_cycles / self.weight_only_cycles

    @property
    def combined_speedup(self) -> float:
        return self.baseline_cycles / self.total_cycles

    @property
    def stage_occupancy(self) -> dict[str, float]:
        busy = self.total_cycles - FILL_CYCLES * len(self.layers)
        return {stage: busy / self.total_cycles for stage in PIPELINE_STAGES}

    CSV_FIELDS = (
        "layer",
        "cycles",
        "dense_cycles",
        "effectual_macs",
        "utilization",
        "speedup",
        "weight_only_speedup",
        "combined_speedup",
    )

    def _rows(self):
        for l in self.layers:
            yield l.layer, l
        yield "total", self

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        for name, r in self._rows():
            writer.writerow(
                [
                    name,
                    r.cycles,
                    r.dense_cycles,
                    r.effectual_macs,
                    f"{r.utilization:.6f}",
                    f"{r.speedup:.6f}",
                    f"{r.weight_only_speedup:.6f}",
                    f"{r.combined_speedup:.6f}",
                ]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"pe_array {NUM_PES}x{LANES} macs_per_cycle {MACS_PER_CYCLE} pipeline_fill {FILL_CYCLES}",
        ]
        for l in self.layers:
            oh, ow = l.output_hw
            lines.append(
                f"layer {l.layer} shape {l.out_channels}x{l.in_channels} out {oh}x{ow} "
                f"cycles {l.cycles} dense_cycles {l.dense_cycles} weight_only_cycles {l.weight_only_cycles} "
                f"baseline_cycles {l.baseline_cycles} effectual_macs {l.effectual_macs} "
                f"utilization {l.utilization:.6f} speedup {l.speedup:.6f} "
                f"weight_only_speedup {l.weight_only_speedup:.6f} balanced {str(l.balanced).lower()}"
            )
        lines.append(
            f"total cycles {self.total_cycles} dense_cycles {self.dense_cycles} "
            f"effectual_macs {self.effectual_macs} utilization {self.utilization:.6f} "
            f"speedup {self.speedup:.6f} weight_only_speedup {self.weight_only_speedup:.6f} "
            f"combined_speedup {self.combined_speedup:.6f}"
        )
        occ = " ".join(f"{k} {v:.6f}" for k, v in self.stage_occupancy.items())
        lines.append(f"stage_occupancy {occ}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class LayerOutput:
    """Post-ReLU 32-bit accumulators ``(O, OH, OW)`` and the real-valued output."""

    acc: np.ndarray
    scale: float

    @property
    def values(self) -> np.ndarray:
        return self.acc * self.scale

    def requantize(self) -> FeatureMap:
        """Map the accumulators back to 8-bit activations for the next layer."""
        peak = int(self.acc.max()) if self.acc.size else 0
        if peak == 0:
            return FeatureMap(np.zeros_like(self.acc), 1.0)
        q = (self.acc * ACT_QMAX + peak // 2) // peak
        return FeatureMap(q, self.scale * peak / ACT_QMAX)


# -- simulation -----------------------------------------------------------


def _group_max(counts: np.ndarray, tiles: int, groups: int) -> tuple[np.ndarray, np.ndarray]:
    """Reduce ``(w, O, C)`` lane cycle counts to per-group tile maxima and per-PE busy cycles."""
    w, o, c = counts.shape
    padded = np.zeros((w, tiles * NUM_PES, groups * LANES), dtype=np.int64)
    padded[:, :o, :c] = counts
    lanes = padded.reshape(w, tiles, NUM_PES, groups, LANES)
    pe_group = lanes.max(axis=4)  # (w, T, PE, G)
    return pe_group.max(axis=2), pe_group.sum(axis=3)


def simulate_layer(
    layer: PrunedLayer,
    activations: FeatureMap,
    stride: int = 1,
    padding: int = 1,
    index: int = 0,
) -> tuple[LayerOutput, LayerSim]:
    """Run one SPM-encoded layer through the PE group.

    Args:
        layer: the encoded layer.
        activations: ``(in_c, H, W)`` input.
        stride, padding: convolution geometry.
        index: layer number used in the report.

    Returns:
        The post-ReLU output and the cycle report.
    """
    if activations.shape[0] != layer.in_channels:
        raise ConfigurationError(
            f"layer {index} expects {layer.in_channels} input channels, got {activations.shape[0]}"
        )
    patches, oh, ow = windows(activations, stride, padding)
    nwin = patches.shape[0]
    o, c, n = layer.out_channels, layer.in_channels, layer.n
    tiles, groups = -(-o // NUM_PES), -(-c // LANES)

    wmask = layer.masks().reshape(o, c)
    positions = position_table(layer.pattern_set)[layer.codes].reshape(o, c, n)
    nz = layer.nz_values.astype(np.int64).reshape(o, c, n)
    amask = (patches != 0).astype(np.int64) << np.arange(KERNEL_SIZE)
    amask = amask.sum(axis=2)  # (win, C)

    acc = np.empty((nwin, o), dtype=np.int64)
    cycles = dense = effectual = 0
    pe_busy = np.zeros((tiles, NUM_PES), dtype=np.int64)
    chan = np.arange(c)[None, :, None]
    step = max(1, _GATHER_BUDGET // (o * c * n))
    for s in range(0, nwin, step):
        p = patches[s : s + step]
        # fetch the activation each stored weight pairs with, via its kernel position
        fetched = p[:, chan, positions]  # (w, O, C, n)
        acc[s : s + step] = np.einsum("wocn,ocn->wo", fetched, nz)

        am = amask[s : s + step]
        counts = POPCOUNT[wmask[None, :, :] & am[:, None, :]]
        effectual += int(counts.sum(dtype=np.int64))
        group_cycles, busy = _group_max(counts, tiles, groups)
        cycles += int(group_cycles.sum(dtype=np.int64))
        pe_busy += busy.sum(axis=0)

        dense_counts = POPCOUNT[am].astype(np.int64)  # (w, C), identical on every PE
        padded = np.zeros((dense_counts.shape[0], groups * LANES), dtype=np.int64)
        padded[:, :c] = dense_counts
        dense += tiles * int(padded.reshape(-1, groups, LANES).max(axis=2).sum())

    wcounts = POPCOUNT[wmask][None].astype(np.int64)
    wo_group, _ = _group_max(wcounts, tiles, groups)
    weight_only = nwin * int(wo_group.sum())
    baseline = nwin * tiles * groups * KERNEL_SIZE

    if np.abs(acc).max(initial=0) >= 2**31:
        raise ConfigurationError(f"layer {index}: accumulator overflows 32 bits")
    acc = np.maximum(acc, 0).T.reshape(o, oh, ow)

    busy_tiles = [pe_busy[t, : min(NUM_PES, o - t * NUM_PES)] for t in range(tiles)]
    report = LayerSim(
        layer=index,
        out_channels=o,
        in_channels=c,
        output_hw=(oh, ow),
        cycles=cycles + FILL_CYCLES,
        dense_cycles=dense + FILL_CYCLES,
        weight_only_cycles=weight_only + FILL_CYCLES,
        baseline_cycles=baseline + FILL_CYCLES,
        effectual_macs=effectual,
        pe_busy=busy_tiles,
    )
    return LayerOutput(acc.astype(np.int64), layer.scale * activations.scale), report


def _plan_pooling(pruned: PrunedModel, input_hw, pool_after):
    """Decide after which layers a 2x2 max-pool is inserted.

    With ``pool_after`` given it is used verbatim. Otherwise the optional
    per-layer geometry decides: a following layer that expects half the
    current spatial size implies a pool.
    """
    if pool_after is not None:
        return set(pool_after)
    pools = set()
    h, w = input_hw
    for i, layer in enumerate(pruned):
        g = layer.geometry
        stride, padding = (g.stride, g.padding) if g else (1, 1)
        if g is not None and (g.input_h, g.input_w) != (h, w):
            raise ConfigurationError(f"layer {i} expects {g.input_h}x{g.input_w} input, got {h}x{w}")
        h, w = Geometry(h, w, stride, padding).output_hw()
        nxt = pruned[i + 1].geometry if i + 1 < len(pruned) else None
        if nxt is not None and (nxt.input_h, nxt.input_w) == (h // 2, w // 2) != (h, w):
            pools.add(i)
            h, w = h // 2, w // 2
    return pools


def simulate_model(
    pruned: PrunedModel,
    inputs,
    act_density: float = 1.0,
    seed: int = 0,
    pool_after=None,
    return_outputs: bool = False,
):
    """Simulate every layer, feeding each layer's ReLU output to the next.

    Args:
        pruned: the encoded model.
        inputs: a :class:`FeatureMap`, or an ``(H, W, C)`` shape from which
            activations are synthesized with ``act_density`` and ``seed``.
        act_density: fraction of non-zero synthesized input activations.
        seed: generator seed for synthesized inputs.
        pool_after: layer indices followed by a 2x2 max-pool; by default
            inferred from layer geometry when present.
        return_outputs: also return every layer's :class:`LayerOutput`.
    """
    if not len(pruned):
        raise ConfigurationError("model has no layers")
    if isinstance(inputs, FeatureMap):
        fmap = inputs
    else:
        h, w, c = inputs
        fmap = synthesize_activations(c, h, w, act_density, seed)
    pools = _plan_pooling(pruned, fmap.shape[1:], pool_after)
    reports, outputs = [], []
    for i, layer in enumerate(pruned):
        g = layer.geometry
        stride, padding = (g.stride, g.padding) if g else (1, 1)
        out, rep = simulate_layer(layer, fmap, stride, padding, index=i)
        reports.append(rep)
        outputs.append(out)
        fmap = out.requantize()
        if i in pools:
            fmap = max_pool2(fmap)
    report = SimReport(reports)
    return (report, outputs) if return_outputs else report
