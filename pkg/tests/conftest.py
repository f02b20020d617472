import itertools
import math

import numpy as np
import pytest

from patternprune import (
    Geometry,
    LayerSparsity,
    LayerWeights,
    SparsityConfig,
    distill_model,
    encode,
    project_model,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_layer(rng, out_c, in_c, h=4, w=4, stride=1, padding=1, zero_frac=0.0):
    weights = rng.normal(size=(out_c, in_c, 9))
    if zero_frac:
        weights[rng.random(weights.shape) < zero_frac] = 0.0
    return LayerWeights(weights, Geometry(h, w, stride, padding))


def prune_layers(layers, n, v):
    config = SparsityConfig({i: LayerSparsity(n, v) for i in range(len(layers))})
    report = distill_model(layers, config)
    projected = project_model(layers, report)
    return encode(projected, report), projected, report


# -- brute-force oracles, deliberately independent of the package --------


def oracle_masks_with_popcount(n):
    return sorted(m for m in range(512) if bin(m).count("1") == n)


def oracle_residual(kernel, mask):
    return math.sqrt(sum(float(kernel[i]) ** 2 for i in range(9) if not (mask >> i) & 1))


def oracle_nearest(kernel, masks):
    best = None
    for m in sorted(masks):
        r = oracle_residual(kernel, m)
        if best is None or r < best[1]:
            best = (m, r)
    return best


def oracle_top_n_support(kernel, n):
    """Support of the n largest magnitudes; equal magnitudes prefer lower positions."""
    order = sorted(range(9), key=lambda i: (-abs(float(kernel[i])), i))
    return sum(1 << i for i in order[:n])


def oracle_scan_pointers(mask):
    pointers = [i for i in range(9) if (mask >> i) & 1]
    offsets = []
    prev = -1
    for p in pointers:
        offsets.append(p - prev - 1)
        prev = p
    return offsets, pointers


def oracle_conv(int_weights, acts, stride, padding):
    """Triple-loop integer convolution followed by ReLU.

    int_weights: nested lists [o][c][9]; acts: nested lists [c][h][w].
    """
    out_c, in_c = len(int_weights), len(int_weights[0])
    h, w = len(acts[0]), len(acts[0][0])
    oh = (h + 2 * padding - 3) // stride + 1
    ow = (w + 2 * padding - 3) // stride + 1
    out = [[[0] * ow for _ in range(oh)] for _ in range(out_c)]
    for o, y, x in itertools.product(range(out_c), range(oh), range(ow)):
        total = 0
        for c in range(in_c):
            for kr in range(3):
                for kc in range(3):
                    iy, ix = y * stride + kr - padding, x * stride + kc - padding
                    if 0 <= iy < h and 0 <= ix < w:
                        total += int_weights[o][c][kr * 3 + kc] * acts[c][iy][ix]
        out[o][y][x] = max(total, 0)
    return out
