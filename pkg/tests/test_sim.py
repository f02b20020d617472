import numpy as np
import pytest

from patternprune import ConfigurationError, DomainError, FeatureMap, Geometry, PatternSet, PrunedLayer, PrunedModel
from patternprune import full_pattern_set, pointer_offsets, simulate_layer, simulate_model
from patternprune.codec import decode_layer
from patternprune.sim import FILL_CYCLES, NUM_PES, max_pool2, synthesize_activations

from conftest import oracle_conv, oracle_scan_pointers, prune_layers, random_layer


def test_pointer_offsets_example():
    po = pointer_offsets(0b101100101)
    assert po.pointers == (0, 2, 5, 6, 8)
    assert po.offsets == (0, 1, 2, 0, 1)


def test_pointer_offsets_exhaustive():
    for m in range(512):
        po = pointer_offsets(m)
        offsets, pointers = oracle_scan_pointers(m)
        assert list(po.offsets) == offsets and list(po.pointers) == pointers
    assert pointer_offsets(0).pointers == ()
    with pytest.raises(DomainError):
        pointer_offsets(512)


def test_synthesized_density_nested():
    dense = synthesize_activations(4, 8, 8, 1.0, 3).values
    half = synthesize_activations(4, 8, 8, 0.5, 3).values
    sparse = synthesize_activations(4, 8, 8, 0.2, 3).values
    assert dense.min() >= 1 and dense.max() <= 127
    assert np.all((half == 0) | (half == dense))
    assert np.all(half[sparse != 0] != 0)


def _int_weights(layer):
    dec = decode_layer(layer)
    return np.rint(dec.weights / layer.scale).astype(int)


@pytest.mark.parametrize("seed", range(50))
def test_matches_reference_convolution(seed):
    rng = np.random.default_rng(seed)
    o, c = int(rng.integers(1, 6)), int(rng.integers(1, 7))
    h, w = int(rng.integers(3, 7)), int(rng.integers(3, 7))
    stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    n = int(rng.integers(1, 10))
    pruned = prune_layers([random_layer(rng, o, c, h, w, stride, padding)], n, 4 if n < 9 else 1)[0].layers[0]
    acts = synthesize_activations(c, h, w, float(rng.uniform(0.3, 1.0)), seed)
    out, rep = simulate_layer(pruned, acts, stride, padding)
    expected = oracle_conv(_int_weights(pruned).tolist(), acts.values.tolist(), stride, padding)
    assert out.acc.tolist() == expected
    assert np.allclose(out.values, np.asarray(expected) * pruned.scale)
    assert rep.output_hw == (len(expected[0]), len(expected[0][0]))


def test_one_by_one_output_cycles():
    rng = np.random.default_rng(1)
    pruned = prune_layers([random_layer(rng, 8, 10, 3, 3, 1, 0)], 9, 1)[0].layers[0]
    _, rep = simulate_layer(pruned, synthesize_activations(10, 3, 3, 1.0, 0), 1, 0)
    assert rep.cycles == 3 * 9 + FILL_CYCLES  # ceil(10 / 4) groups of 9 cycles


def _uniform_layer(n, o, c, seed=0):
    """Layer whose every kernel keeps ``n`` weights; patterns drawn at random."""
    rng = np.random.default_rng(seed)
    ps = PatternSet(n, full_pattern_set(n).patterns[:8])
    codes = rng.integers(0, len(ps), o * c)
    nz = rng.integers(1, 128, (o * c, n)) * rng.choice([-1, 1], (o * c, n))
    return PrunedLayer(ps, codes, nz, 0.01, o, c)


@pytest.mark.parametrize("n", range(1, 10))
def test_workload_balanced_and_speedup_law(n):
    layer = _uniform_layer(n, NUM_PES * 2, 16)
    acts = synthesize_activations(16, 10, 10, 1.0, 0)
    _, rep = simulate_layer(layer, acts, 1, 0)
    assert rep.balanced
    assert rep.weight_only_speedup == pytest.approx(9 / n, rel=0.02)
    assert rep.speedup == pytest.approx(9 / n, rel=0.02)
    assert set(rep.stage_occupancy) == {"preprocess", "pointer", "mac", "accumulate"}


def test_cycles_monotone_in_activation_density():
    layer = _uniform_layer(4, 32, 16, seed=2)
    cycles = [simulate_layer(layer, synthesize_activations(16, 8, 8, d, 5), 1, 1)[1].cycles for d in (1.0, 0.8, 0.5, 0.2)]
    assert all(a >= b for a, b in zip(cycles, cycles[1:]))
    assert cycles[0] > cycles[-1]


def test_dense_model_speedup_is_one():
    rng = np.random.default_rng(3)
    layers = [random_layer(rng, 8, 3, 6, 6), random_layer(rng, 8, 8, 6, 6)]
    pruned = prune_layers(layers, 9, 1)[0]
    rep = simulate_model(pruned, (6, 6, 3), act_density=0.7, seed=1)
    assert rep.speedup == 1.0
    assert rep.weight_only_speedup == 1.0


def test_determinism():
    rng = np.random.default_rng(4)
    pruned = prune_layers([random_layer(rng, 8, 3, 6, 6), random_layer(rng, 8, 8, 6, 6)], 3, 8)[0]
    a = simulate_model(pruned, (6, 6, 3), act_density=0.6, seed=9)
    b = simulate_model(pruned, (6, 6, 3), act_density=0.6, seed=9)
    assert a.to_csv() == b.to_csv() and a.to_text() == b.to_text()


def test_channel_mismatch():
    layer = _uniform_layer(2, 4, 4)
    with pytest.raises(ConfigurationError):
        simulate_layer(layer, synthesize_activations(3, 4, 4, 1.0, 0))
    with pytest.raises(ConfigurationError):
        simulate_model(PrunedModel((layer,)), (4, 4, 5))


def test_utilization_relation():
    pruned_layer = _uniform_layer(3, 64, 16)
    dense_layer = _uniform_layer(9, 64, 16)
    for density, padding in ((1.0, 0), (0.5, 0)):
        acts = synthesize_activations(16, 8, 8, density, 0)
        up = simulate_layer(pruned_layer, acts, 1, padding)[1].utilization
        ud = simulate_layer(dense_layer, acts, 1, padding)[1].utilization
        if density == 1.0:
            # full occupancy both ways, up to pipeline-fill amortization
            assert up == pytest.approx(ud, abs=0.01)
            assert up > 0.99
        else:
            # fewer effectual products per lane make the per-group barrier cost more
            assert up < ud


def test_model_chains_requantized_outputs():
    rng = np.random.default_rng(5)
    layers = [random_layer(rng, 4, 3, 8, 8), random_layer(rng, 6, 4, 4, 4)]
    pruned = prune_layers(layers, 4, 8)[0]
    rep, outs = simulate_model(pruned, (8, 8, 3), seed=2, return_outputs=True)
    assert outs[0].acc.shape == (4, 8, 8)
    assert outs[1].acc.shape == (6, 4, 4)  # pool inferred from the next layer's geometry
    fmap = max_pool2(outs[0].requantize())
    assert fmap.values.max() <= 127 and fmap.values.min() >= 0
    direct, _ = simulate_layer(pruned.layers[1], fmap, 1, 1)
    assert np.array_equal(direct.acc, outs[1].acc)
    assert rep.total_cycles == sum(l.cycles for l in rep.layers)


def test_feature_map_validation():
    with pytest.raises(DomainError):
        FeatureMap(np.zeros((2, 2)))
    with pytest.raises(DomainError):
        FeatureMap(np.full((1, 2, 2), 300))
    with pytest.raises(ConfigurationError):
        max_pool2(FeatureMap(np.zeros((1, 1, 4), dtype=int)))


def test_csv_layout():
    rng = np.random.default_rng(6)
    pruned = prune_layers([random_layer(rng, 4, 3, 5, 5)], 2, 4)[0]
    csv = simulate_model(pruned, (5, 5, 3)).to_csv().splitlines()
    assert csv[0].split(",")[:3] == ["layer", "cycles", "dense_cycles"]
    assert csv[-1].startswith("total,")
    assert len(csv) == 3
    assert Geometry(5, 5).output_hw() == (5, 5)
