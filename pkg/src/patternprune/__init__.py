"""Kernel sparsity-pattern pruning: pattern distillation, SPM encoding, SRAM images and PE-group simulation."""

from .codec import decode, encode, index_overhead, read_pcp1, write_pcp1
from .distill import DistillReport, distill_layer, distill_model, nearest_pattern, project, project_model
from .errors import ConfigurationError, ConsistencyError, DomainError, FormatError, PatternPruneError
from .memimage import MemoryImage, pack, unpack
from .model import Geometry, LayerSparsity, LayerWeights, PrunedLayer, PrunedModel, SparsityConfig
from .patterns import PatternSet, binomial, full_pattern_set
from .sim import FeatureMap, SimReport, pointer_offsets, simulate_layer, simulate_model
from .tensorio import read_config, read_pct1, write_pct1

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConsistencyError",
    "DistillReport",
    "DomainError",
    "FeatureMap",
    "FormatError",
    "Geometry",
    "LayerSparsity",
    "LayerWeights",
    "MemoryImage",
    "PatternPruneError",
    "PatternSet",
    "PrunedLayer",
    "PrunedModel",
    "SimReport",
    "SparsityConfig",
    "binomial",
    "decode",
    "distill_layer",
    "distill_model",
    "encode",
    "full_pattern_set",
    "index_overhead",
    "nearest_pattern",
    "pack",
    "pointer_offsets",
    "project",
    "project_model",
    "read_config",
    "read_pcp1",
    "read_pct1",
    "simulate_layer",
    "simulate_model",
    "unpack",
    "write_pcp1",
    "write_pct1",
]
