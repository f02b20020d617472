import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patternprune import ConsistencyError, FormatError, Geometry, LayerWeights, PatternSet, binomial, decode
from patternprune.codec import (
    dump_pcp1,
    encode_layer,
    index_overhead,
    index_overhead_for,
    layer_scale,
    load_pcp1,
    read_pcp1,
    write_pcp1,
)
from patternprune.analytics import sram_index_share
from patternprune.patterns import mask_from_positions, support_masks

from conftest import prune_layers, random_layer


def _one_kernel(values):
    return LayerWeights(np.asarray(values, dtype=float).reshape(1, 1, 9), Geometry(3, 3))


def test_quantize_example():
    layer = _one_kernel([0, 0, 0, 3, 0, 0, 0, 0, 5])
    pruned = encode_layer(layer, PatternSet(2, (mask_from_positions([3, 8]),)))
    assert pruned.nz_values.tolist() == [[76, 127]]
    assert pruned.scale == pytest.approx(5 / 127, rel=1e-7)
    assert pruned.codes.tolist() == [0]


def test_zero_layer_scale():
    assert layer_scale(np.zeros(9)) == 1.0


def test_encode_requires_projection(rng):
    layer = random_layer(rng, 2, 2)
    with pytest.raises(ConsistencyError):
        encode_layer(layer, PatternSet(2, (0b11,)))


def test_code_width_for_16_patterns(rng):
    layers = [random_layer(rng, 16, 16)]
    pruned, _, _ = prune_layers(layers, 4, 16)
    assert pruned.layers[0].code_width == 4


@pytest.mark.parametrize("n,v", [(1, 1), (2, 5), (4, 32), (4, 126), (6, 7), (9, 1)])
def test_decode_support_and_error(rng, n, v):
    layers = [random_layer(rng, 6, 5), random_layer(rng, 3, 6)]
    pruned, projected, report = prune_layers(layers, n, v)
    decoded = decode(pruned)
    for orig, dec, layer, entry in zip(projected, decoded, pruned, report.layers):
        # support of every decoded kernel is exactly its pattern (where the value survives quantization)
        masks = support_masks(dec.kernels())
        expected = np.asarray(entry.selected.patterns)[layer.codes]
        assert np.all((masks & ~expected) == 0)
        assert np.all(support_masks(orig.kernels()) & ~expected == 0)
        assert np.max(np.abs(orig.weights - dec.weights)) <= layer.scale / 2 + 1e-12


def test_index_overhead_examples():
    # 32768 kernels with 4 non-zeros at 8 bits each
    ov = index_overhead_for(32768, 4, 16)
    assert ov.weight_bits == 1_048_576
    assert ov.index_bits == 32768 * 4 + 16 * 9
    single = index_overhead_for(1, 9, 1)
    assert (single.index_bits, single.weight_bits) == (10, 72)
    assert single.ratio == pytest.approx(10 / 82)
    assert sram_index_share() == pytest.approx(0.03125)


def test_index_overhead_model(rng):
    layers = [random_layer(rng, 4, 4), random_layer(rng, 2, 4)]
    pruned, _, _ = prune_layers(layers, 3, 5)
    ov = index_overhead(pruned)
    assert ov.weight_bits == (16 + 8) * 3 * 8
    assert ov.index_bits == (16 + 8) * 3 + 2 * 5 * 9


def test_pcp1_roundtrip(rng, tmp_path):
    layers = [random_layer(rng, 5, 3), random_layer(rng, 7, 5)]
    pruned, _, _ = prune_layers(layers, 3, 6)
    data = dump_pcp1(pruned)
    assert load_pcp1(data) == pruned
    path = tmp_path / "m.pcp"
    write_pcp1(path, pruned)
    assert read_pcp1(path) == pruned
    assert path.read_bytes() == data


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_pcp1_roundtrip_property(n, v, seed):
    rng = np.random.default_rng(seed)
    layers = [random_layer(rng, int(rng.integers(1, 6)), int(rng.integers(1, 6)), zero_frac=0.3)]
    pruned, _, _ = prune_layers(layers, n, min(v, binomial(9, n)))
    assert load_pcp1(dump_pcp1(pruned)) == pruned


def _sample(rng):
    pruned, _, _ = prune_layers([random_layer(rng, 4, 4)], 2, 3)
    return dump_pcp1(pruned)


def test_pcp1_bad_magic(rng):
    data = _sample(rng)
    with pytest.raises(FormatError) as exc:
        load_pcp1(b"XXXX" + data[4:], "x.pcp")
    assert exc.value.offset == 0


def test_pcp1_truncated(rng):
    data = _sample(rng)
    for cut in (3, 10, len(data) - 1):
        with pytest.raises(FormatError):
            load_pcp1(data[:cut])


def test_pcp1_trailing_bytes(rng):
    with pytest.raises(FormatError):
        load_pcp1(_sample(rng) + b"\0")


def test_pcp1_code_out_of_range(rng):
    data = bytearray(_sample(rng))
    header = 8 + struct.calcsize("<BHBfII")
    codes_at = header + 3 * 2
    data[codes_at] = 0xFF  # width 2, |P| = 3 -> code 3 is invalid
    with pytest.raises(FormatError) as exc:
        load_pcp1(bytes(data))
    assert exc.value.offset == codes_at


def test_pcp1_bad_mask_table(rng):
    data = bytearray(_sample(rng))
    header = 8 + struct.calcsize("<BHBfII")
    data[header : header + 2] = struct.pack("<H", 0b111)  # popcount 3 in an n=2 table
    with pytest.raises(FormatError):
        load_pcp1(bytes(data))
