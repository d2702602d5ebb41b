"""Multi-scale dense-convolutional encoder.

Topology for an ``[N, 1, H, W]`` image::

    stem 7x7/2 (edge padded) -> maxpool 2 -> block1            -> reduce1 (1x1)  c1, H/4
                             -> 1x1 conv -> maxpool 2 -> block2 -> reduce2 (1x1)  c2, H/8
                             -> 1x1 conv -> avgpool 2 -> block3 -> reduce3 (1x1)  c3, H/16

Fusion is top-down: ``c3 = r3``, ``c2 = r2 + up(c3)``, ``c1 = r1 + up(c2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

DOWNSAMPLE_FACTOR = 16


@dataclass(frozen=True)
class EncoderConfig:
    stem_channels: int = 48
    growth_rate: int = 4
    layers_per_block: tuple[int, int, int] = (2, 2, 2)
    reduced_channels: int = 16

    def __post_init__(self):
        object.__setattr__(self, "layers_per_block", tuple(int(n) for n in self.layers_per_block))
        if len(self.layers_per_block) != 3:
            raise ValueError(f"need layer counts for exactly 3 blocks, got {self.layers_per_block}")
        if min(self.stem_channels, self.growth_rate, self.reduced_channels) < 1:
            raise ValueError(f"encoder widths must be >= 1: {self}")
        if min(self.layers_per_block) < 0:
            raise ValueError(f"layers per block must be >= 0: {self.layers_per_block}")

    def block_channels(self) -> list[tuple[int, int]]:
        """(input, output) channel counts of each dense block."""
        out = []
        c = self.stem_channels
        for n in self.layers_per_block:
            out.append((c, c + n * self.growth_rate))
            c = c + n * self.growth_rate
        return out


@dataclass
class EncodedFeatures:
    c1: Tensor
    c2: Tensor
    c3: Tensor

    def scales(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.c1, self.c2, self.c3)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    r = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-r, r, size=shape), requires_grad=True)


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {}

    def conv(name, cout, cin, k):
        p[f"{name}.w"] = uniform_init(rng, (cout, cin, k, k), cin * k * k)
        p[f"{name}.b"] = Tensor(np.zeros(cout), requires_grad=True)

    conv("enc.stem", cfg.stem_channels, 1, 7)
    for b, ((cin, cout), n) in enumerate(zip(cfg.block_channels(), cfg.layers_per_block), start=1):
        for k in range(n):
            conv(f"enc.block{b}.layer{k}", cfg.growth_rate, cin + k * cfg.growth_rate, 3)
        if b < 3:
            conv(f"enc.trans{b}", cout, cout, 1)
        conv(f"enc.reduce{b}", cfg.reduced_channels, cout, 1)
    return p


def dense_layer(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    return T.conv2d(T.tanh(x), w, b, stride=1, padding=w.shape[2] // 2)


def dense_block(x: Tensor, layer_kernels, layer_biases=None) -> Tensor:
    """Each layer sees the concatenation of the input and all earlier layer outputs."""
    layer_biases = layer_biases or [None] * len(layer_kernels)
    feats = [x]
    cur = x
    for k, (w, b) in enumerate(zip(layer_kernels, layer_biases)):
        if w.shape[1] != cur.shape[1]:
            raise ValueError(
                f"dense layer {k} kernel expects {w.shape[1]} input channels, block carries {cur.shape[1]}"
            )
        feats.append(dense_layer(cur, w, b))
        cur = T.concat(feats, axis=1)
    return cur


def _block(x, params, b, n):
    return dense_block(
        x,
        [params[f"enc.block{b}.layer{k}.w"] for k in range(n)],
        [params[f"enc.block{b}.layer{k}.b"] for k in range(n)],
    )


def _conv1x1(x, params, name):
    return T.conv2d(x, params[f"{name}.w"], params[f"{name}.b"])


def stem(image: Tensor, params) -> Tensor:
    return T.conv2d(T.pad_edge(image, 3), params["enc.stem.w"], params["enc.stem.b"], stride=2)


def check_image_size(shape) -> None:
    h, w = shape[-2], shape[-1]
    if h < DOWNSAMPLE_FACTOR or w < DOWNSAMPLE_FACTOR:
        raise ValueError(
            f"image {h}x{w} is too small: both sides must be >= {DOWNSAMPLE_FACTOR} after padding"
        )


def encode_raw(image: Tensor, params, cfg: EncoderConfig) -> tuple[Tensor, Tensor, Tensor]:
    """Unfused 1x1-reduced maps ``(r1, r2, r3)``, finest first."""
    check_image_size(image.shape)
    if image.ndim != 4 or image.shape[1] != 1:
        raise ValueError(f"expected a [N,1,H,W] image, got {image.shape}")
    n1, n2, n3 = cfg.layers_per_block
    x = T.max_pool2d(stem(image, params), 2, 2)
    b1 = _block(x, params, 1, n1)
    x = T.max_pool2d(_conv1x1(b1, params, "enc.trans1"), 2, 2)
    b2 = _block(x, params, 2, n2)
    x = T.avg_pool2d(_conv1x1(b2, params, "enc.trans2"), 2, 2)
    b3 = _block(x, params, 3, n3)
    return (
        _conv1x1(b1, params, "enc.reduce1"),
        _conv1x1(b2, params, "enc.reduce2"),
        _conv1x1(b3, params, "enc.reduce3"),
    )


def fuse(r1: Tensor, r2: Tensor, r3: Tensor) -> EncodedFeatures:
    c3 = r3
    c2 = T.add(r2, T.upsample2x_nearest(c3))
    c1 = T.add(r1, T.upsample2x_nearest(c2))
    return EncodedFeatures(c1, c2, c3)


def encode(image: Tensor, params, cfg: EncoderConfig) -> EncodedFeatures:
    return fuse(*encode_raw(image, params, cfg))


def dump_stem_features(image: Tensor, params) -> list[np.ndarray]:
    """Per-channel first-conv outputs of the first image, min-max scaled to [0, 1].

    Constant maps come back as all zeros.
    """
    with T.no_grad():
        out = stem(image, params).data[0]
    maps = []
    for m in out:
        lo, hi = m.min(), m.max()
        maps.append((m - lo) / (hi - lo) if hi > lo else np.zeros_like(m))
    return maps
