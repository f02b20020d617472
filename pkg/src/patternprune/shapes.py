"""Synthetic layer layouts for desk-scale experiments.

A shape string is either a preset (``vgg16``, ``resnet18``, optionally
``@<input size>`` and ``/<channel divisor>``, e.g. ``vgg16@8/4``) or an
explicit layout ``HxWxC:64,64,M,128`` where numbers are 3x3 same-padded
conv layers and ``M`` halves the spatial size (2x2 max-pool).
"""

from __future__ import annotations

import re

import numpy as np

from .errors import DomainError
from .model import Geometry, LayerWeights

VGG16_LAYOUT = "64,64,M,128,128,M,256,256,256,M,512,512,512,M,512,512,512"


def _layout(h, w, c, items):
    layers = []
    for item in items:
        if item == "M":
            if not layers:
                raise DomainError("layout cannot start with a pool")
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise DomainError("pooling reduced the feature map below 1x1")
            continue
        out = int(item)
        layers.append((out, c, Geometry(h, w, 1, 1), 3))
        c = out
    return layers


def vgg16_layout(size=32, div=1, in_channels=3):
    items = [i if i == "M" else str(max(1, int(i) // div)) for i in VGG16_LAYOUT.split(",")]
    return _layout(size, size, in_channels, items)


def resnet18_layout(size=32, div=1, in_channels=3):
    """CIFAR-style ResNet-18: 17 3x3 convs plus three strided 1x1 shortcut convs."""
    ch = [max(1, c // div) for c in (64, 128, 256, 512)]
    layers = [(ch[0], in_channels, Geometry(size, size, 1, 1), 3)]
    h, c = size, ch[0]
    for stage, out in enumerate(ch):
        for block in range(2):
            stride = 2 if stage > 0 and block == 0 else 1
            layers.append((out, c, Geometry(h, h, stride, 1), 3))
            if stride == 2:
                layers.append((out, c, Geometry(h, h, 2, 0), 1))
                h = (h - 1) // 2 + 1
            layers.append((out, out, Geometry(h, h, 1, 1), 3))
            c = out
    return layers


_PRESET = re.compile(r"^(vgg16|resnet18)(?:@(\d+))?(?:/(\d+))?$")
_EXPLICIT = re.compile(r"^(\d+)x(\d+)x(\d+):([0-9M,]+)$")


def parse_shape(spec: str):
    """Layer list ``[(out_c, in_c, Geometry, kernel_size), ...]`` for a shape string."""
    spec = spec.strip()
    m = _PRESET.match(spec)
    if m:
        size = int(m.group(2) or 32)
        div = int(m.group(3) or 1)
        if size < 1 or div < 1:
            raise DomainError(f"bad shape {spec!r}")
        return (vgg16_layout if m.group(1) == "vgg16" else resnet18_layout)(size, div)
    m = _EXPLICIT.match(spec)
    if m:
        h, w, c = (int(m.group(i)) for i in (1, 2, 3))
        items = [t for t in m.group(4).split(",") if t]
        if not items:
            raise DomainError(f"empty layout in {spec!r}")
        return _layout(h, w, c, items)
    raise DomainError(f"unrecognised shape {spec!r}")


def generate(layout, seed: int = 0, std: float = 1.0) -> list[LayerWeights]:
    """Gaussian float32 weights for every layer of ``layout``."""
    rng = np.random.default_rng(seed)
    out = []
    for out_c, in_c, geometry, k in layout:
        w = rng.normal(0.0, std, size=(out_c, in_c, k * k)).astype(np.float32)
        out.append(LayerWeights(w, geometry, k))
    return out
