"""Parameter container tying encoder, decoder and vocabulary together."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import DecodeResult, DecoderConfig, greedy_decode, init_decoder_params
from .encoder import EncodedFeatures, EncoderConfig, encode, init_encoder_params
from .tensor import Tensor, no_grad
from .vocab import Vocabulary


@dataclass
class Model:
    vocab: Vocabulary
    enc_cfg: EncoderConfig
    dec_cfg: DecoderConfig
    params: dict[str, Tensor]

    def encode(self, image: Tensor) -> EncodedFeatures:
        return encode(image, self.params, self.enc_cfg)

    def decode(self, image: Tensor, max_len: int | None = None) -> DecodeResult:
        with no_grad():
            feats = self.encode(image)
        return greedy_decode(feats, self.params, self.vocab, self.dec_cfg, max_len)

    def predict(self, image: Tensor) -> list[int]:
        return self.decode(image).ids

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.params.items()}


def init_model(vocab: Vocabulary, enc_cfg: EncoderConfig | None = None,
               dec_cfg: DecoderConfig | None = None, seed: int = 0) -> Model:
    enc_cfg = enc_cfg or EncoderConfig()
    dec_cfg = dec_cfg or DecoderConfig()
    rng = np.random.default_rng(seed)
    params = init_encoder_params(enc_cfg, rng)
    params.update(init_decoder_params(dec_cfg, enc_cfg.reduced_channels, len(vocab), rng))
    return Model(vocab, enc_cfg, dec_cfg, params)
