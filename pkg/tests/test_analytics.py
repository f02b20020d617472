import numpy as np
import pytest

from patternprune import ConsistencyError, LayerSparsity, PatternSet, PrunedLayer, PrunedModel, SparsityConfig, full_pattern_set
from patternprune.analytics import compression_rates, config_from_pruned, flops_report, format_table
from patternprune.shapes import generate, parse_shape, resnet18_layout, vgg16_layout

from conftest import prune_layers, random_layer


def _layer(n, num_patterns, o, c):
    ps = full_pattern_set(n)
    if num_patterns < len(ps):
        ps = PatternSet(n, ps.patterns[:num_patterns])
    codes = np.arange(o * c) % len(ps)
    return PrunedLayer(ps, codes, np.ones((o * c, n)), 1.0, o, c)


@pytest.mark.parametrize("n", range(1, 10))
def test_weight_only_compression_is_nine_over_n(n):
    rates = compression_rates(PrunedModel((_layer(n, 1, 16, 16),)))
    assert rates.weight_only == pytest.approx(9 / n)
    assert rates.weight_plus_idx < rates.weight_only


def test_weight_plus_index_compression_n4_full_set():
    rates = compression_rates(PrunedModel((_layer(4, 126, 256, 256),)))
    assert rates.weight_plus_idx == pytest.approx(72 / 39, rel=1e-3)


def test_float_baseline_scales_by_four():
    model = PrunedModel((_layer(2, 8, 8, 8),))
    assert compression_rates(model, 32).weight_only == pytest.approx(4 * compression_rates(model).weight_only)


@pytest.mark.parametrize("n", range(1, 10))
def test_pruned_fraction_uniform(n):
    layers = generate(vgg16_layout(16, 16), seed=0)
    report = flops_report(layers, SparsityConfig.uniform(layers, n))
    assert report.pruned_fraction == pytest.approx(1 - n / 9)


def test_pruned_fraction_examples():
    layers = generate(vgg16_layout(16, 16), seed=0)
    assert flops_report(layers, SparsityConfig.uniform(layers, 1)).pruned_fraction == pytest.approx(0.889, abs=5e-4)
    assert flops_report(layers, SparsityConfig.uniform(layers, 9)).pruned_fraction == 0


def test_resnet_shortcuts_keep_full_cost():
    layers = generate(resnet18_layout(16, 16), seed=0)
    assert sum(1 for l in layers if l.kernel_size == 1) == 3
    assert sum(1 for l in layers if l.prunable) == 17
    report = flops_report(layers, SparsityConfig.uniform(layers, 4))
    assert 0 < report.pruned_fraction < 5 / 9


def test_flops_counts_two_per_mac():
    layers = [random_layer(np.random.default_rng(0), 2, 3, 4, 4)]
    report = flops_report(layers, SparsityConfig({0: LayerSparsity(3, 2)}))
    assert report.dense_flops == 2 * 2 * 3 * 9 * 16
    assert report.pruned_flops == pytest.approx(report.dense_flops / 3)
    assert report.pruned_params == 2 * 3 * 3


def test_config_from_pruned_mismatch():
    rng = np.random.default_rng(1)
    layers = [random_layer(rng, 4, 3), random_layer(rng, 5, 4)]
    pruned = prune_layers(layers, 2, 3)[0]
    assert config_from_pruned(pruned, layers).get(1) == LayerSparsity(2, 3)
    with pytest.raises(ConsistencyError):
        config_from_pruned(pruned, layers[:1])
    with pytest.raises(ConsistencyError):
        config_from_pruned(pruned, [layers[0], random_layer(rng, 6, 4)])


def test_format_table_rows():
    layers = generate(parse_shape("8x8x3:16,M,16"), seed=2)
    pruned = prune_layers(layers, 2, 8)[0]
    table = format_table(pruned, layers, label="Tiny")
    assert "Tiny, Baseline" in table and "Tiny, n = 2" in table
    assert "4.50x" in table
    assert "77.8%" in table
