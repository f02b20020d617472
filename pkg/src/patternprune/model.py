"""Dense layers, sparsity configuration and the pruned (SPM-encoded) model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .patterns import KERNEL_SIZE, PatternSet, binomial


@dataclass(frozen=True)
class Geometry:
    input_h: int
    input_w: int
    stride: int = 1
    padding: int = 1

    def __post_init__(self):
        if self.input_h < 1 or self.input_w < 1:
            raise DomainError(f"input size must be positive, got {self.input_h}x{self.input_w}")
        if self.stride < 1 or self.padding < 0:
            raise DomainError(f"bad stride/padding {self.stride}/{self.padding}")

    def output_hw(self, kernel_size: int = 3) -> tuple[int, int]:
        oh = (self.input_h + 2 * self.padding - kernel_size) // self.stride + 1
        ow = (self.input_w + 2 * self.padding - kernel_size) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ConfigurationError(
                f"{kernel_size}x{kernel_size} kernel does not fit a {self.input_h}x{self.input_w} input"
            )
        return oh, ow


@dataclass(frozen=True, eq=False)
class LayerWeights:
    """One convolution layer.

    ``weights`` has shape ``(out_channels, in_channels, kernel_size**2)`` with
    kernels flattened row-major. Only 3x3 layers are prunable; other kernel
    sizes are carried along for FLOP accounting and passed through untouched.
    """

    weights: np.ndarray
    geometry: Geometry
    kernel_size: int = 3

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim == 4:
            w = w.reshape(w.shape[0], w.shape[1], -1)
        if w.ndim != 3 or w.shape[2] != self.kernel_size**2:
            raise DomainError(
                f"weights must be (out_c, in_c, {self.kernel_size**2}), got {np.shape(self.weights)}"
            )
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise DomainError("layer needs at least one input and one output channel")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def num_kernels(self) -> int:
        return self.out_channels * self.in_channels

    @property
    def prunable(self) -> bool:
        return self.kernel_size == 3

    def kernels(self) -> np.ndarray:
        """All kernels as ``(N_l, k*k)``, output channel outermost."""
        return self.weights.reshape(-1, self.kernel_size**2)

    def with_weights(self, weights) -> LayerWeights:
        return LayerWeights(np.asarray(weights).reshape(self.weights.shape), self.geometry, self.kernel_size)

    def __eq__(self, other):
        if not isinstance(other, LayerWeights):
            return NotImplemented
        return (
            self.kernel_size == other.kernel_size
            and self.geometry == other.geometry
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True)
class LayerSparsity:
    n: int
    v: int

    def __post_init__(self):
        if not 1 <= self.n <= KERNEL_SIZE:
            raise DomainError(f"non-zero count n={self.n} outside [1, 9]")
        if not 1 <= self.v <= binomial(KERNEL_SIZE, self.n):
            raise DomainError(f"pattern budget v={self.v} outside [1, C(9,{self.n})={binomial(9, self.n)}]")


@dataclass(frozen=True)
class SparsityConfig:
    """Per-layer ``(n, v)`` keyed by the layer's index in the model.

    Only prunable (3x3) layers carry entries.
    """

    entries: dict[int, LayerSparsity] = field(default_factory=dict)

    @classmethod
    def uniform(cls, layers, n: int, v: int | None = None) -> SparsityConfig:
        v = binomial(KERNEL_SIZE, n) if v is None else v
        return cls({i: LayerSparsity(n, v) for i, layer in enumerate(layers) if layer.prunable})

    @classmethod
    def from_list(cls, layers, settings) -> SparsityConfig:
        """Assign ``settings`` (a list of ``(n, v)``) to the prunable layers in order."""
        idx = [i for i, layer in enumerate(layers) if layer.prunable]
        if len(idx) != len(settings):
            raise ConfigurationError(f"{len(settings)} settings for {len(idx)} prunable layers")
        return cls({i: LayerSparsity(n, v) for i, (n, v) in zip(idx, settings)})

    def get(self, index: int) -> LayerSparsity | None:
        return self.entries.get(index)

    def check_against(self, layers) -> None:
        for i in self.entries:
            if not 0 <= i < len(layers):
                raise ConfigurationError(f"config names layer {i} but the model has {len(layers)} layers")
            if not layers[i].prunable:
                raise ConfigurationError(f"config names layer {i}, which is not a 3x3 layer")
        missing = [i for i, layer in enumerate(layers) if layer.prunable and i not in self.entries]
        if missing:
            raise ConfigurationError(f"no sparsity entry for prunable layer(s) {missing}")


@dataclass(frozen=True, eq=False)
class PrunedLayer:
    """One SPM-encoded layer.

    ``codes`` holds one SPM code per kernel (output channel outermost) and
    ``nz_values`` the ``n`` signed 8-bit weights of each kernel in ascending
    mask-bit order. ``geometry`` is informational; it is not part of the
    binary container and is ignored by equality.
    """

    pattern_set: PatternSet
    codes: np.ndarray
    nz_values: np.ndarray
    scale: float
    out_channels: int
    in_channels: int
    geometry: Geometry | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
        nz = np.asarray(self.nz_values, dtype=np.int8).reshape(-1, self.pattern_set.n)
        count = self.out_channels * self.in_channels
        if codes.size != count or nz.shape[0] != count:
            raise DomainError(f"expected {count} kernels, got {codes.size} codes and {nz.shape[0]} sequences")
        if codes.size and (codes.min() < 0 or codes.max() >= len(self.pattern_set)):
            raise DomainError(f"SPM code outside [0, {len(self.pattern_set)})")
        codes.setflags(write=False)
        nz.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "nz_values", nz)
        object.__setattr__(self, "scale", float(np.float32(self.scale)))

    @property
    def n(self) -> int:
        return self.pattern_set.n

    @property
    def num_kernels(self) -> int:
        return self.out_channels * self.in_channels

    @property
    def code_width(self) -> int:
        return self.pattern_set.code_width

    def masks(self) -> np.ndarray:
        """Per-kernel 9-bit weight masks decoded from the SPM codes."""
        return self.pattern_set.as_array()[self.codes]

    def __eq__(self, other):
        if not isinstance(other, PrunedLayer):
            return NotImplemented
        return (
            self.pattern_set == other.pattern_set
            and self.out_channels == other.out_channels
            and self.in_channels == other.in_channels
            and self.scale == other.scale
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.nz_values, other.nz_values)
        )


@dataclass(frozen=True)
class PrunedModel:
    layers: tuple[PrunedLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]
