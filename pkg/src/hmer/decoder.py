"""GRU decoder with per-scale coverage attention and greedy decoding."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .encoder import EncodedFeatures, uniform_init
from .tensor import Tensor
from .vocab import Vocabulary

SCALES = (1, 2, 3)


@dataclass(frozen=True)
class DecoderConfig:
    hidden_dim: int = 32
    embed_dim: int = 16
    attn_dim: int = 16
    coverage_kernel_size: int = 5
    coverage_channels: int = 16
    max_decode_len: int = 200
    coverage: bool = True
    share_attention: bool = False

    def __post_init__(self):
        dims = (self.hidden_dim, self.embed_dim, self.attn_dim, self.coverage_kernel_size,
                self.coverage_channels, self.max_decode_len)
        if min(dims) < 1:
            raise ValueError(f"decoder sizes must be >= 1: {self}")
        if self.coverage_kernel_size % 2 == 0:
            raise ValueError(f"coverage_kernel_size must be odd, got {self.coverage_kernel_size}")


def attention_prefix(cfg: DecoderConfig, scale: int) -> str:
    return "dec.att" if cfg.share_attention else f"dec.att{scale}"


def init_decoder_params(cfg: DecoderConfig, channels: int, vocab_size: int,
                        rng: np.random.Generator) -> dict[str, Tensor]:
    n, m, na = cfg.hidden_dim, cfg.embed_dim, cfg.attn_dim
    q, k, c = cfg.coverage_channels, cfg.coverage_kernel_size, channels
    u = m + 3 * c
    p: dict[str, Tensor] = {}
    p["dec.init.W"] = uniform_init(rng, (n, c), c)
    p["dec.embed"] = uniform_init(rng, (vocab_size, m), m)
    prefixes = ["dec.att"] if cfg.share_attention else [f"dec.att{s}" for s in SCALES]
    for pre in prefixes:
        p[f"{pre}.W_a"] = uniform_init(rng, (na, n), n)
        p[f"{pre}.U_a"] = uniform_init(rng, (na, c), c)
        p[f"{pre}.U_f"] = uniform_init(rng, (na, q), q)
        p[f"{pre}.v_a"] = uniform_init(rng, (na,), na)
        p[f"{pre}.Q"] = uniform_init(rng, (q, 1, k, k), k * k)
    for gate in ("z", "r", "h"):
        p[f"dec.gru.W_{gate}"] = uniform_init(rng, (n, u), u)
        p[f"dec.gru.U_{gate}"] = uniform_init(rng, (n, n), n)
    p["dec.out.W_h"] = uniform_init(rng, (m, n), n)
    p["dec.out.W_c"] = uniform_init(rng, (m, 3 * c), 3 * c)
    p["dec.out.W_0"] = uniform_init(rng, (vocab_size, m), m)
    return p


@dataclass
class Annotations:
    """One scale's annotation vectors ``a`` [L, C] and their attention projection."""

    a: Tensor
    proj: Tensor
    height: int
    width: int

    @property
    def length(self) -> int:
        return self.height * self.width


@dataclass
class ScaleAttention:
    beta: Tensor
    alpha_history: list[np.ndarray] = field(default_factory=list)


@dataclass
class DecoderState:
    h: Tensor
    scales: tuple[ScaleAttention, ScaleAttention, ScaleAttention]
    prev_token: int
    memory: tuple[Annotations, Annotations, Annotations] = field(repr=False)


def annotations(feature_map: Tensor) -> Tensor:
    """[1, C, H, W] -> [H*W, C], positions in row-major order."""
    n, c, h, w = feature_map.shape
    if n != 1:
        raise ValueError(f"decoder works on one image at a time, got batch {n}")
    return T.transpose(T.reshape(feature_map, (c, h * w)))


def init_state(feats: EncodedFeatures, params, cfg: DecoderConfig, sos_id: int) -> DecoderState:
    memory = []
    for s, fmap in zip(SCALES, feats.scales()):
        a = annotations(fmap)
        proj = T.matmul(a, T.transpose(params[f"{attention_prefix(cfg, s)}.U_a"]))
        memory.append(Annotations(a, proj, fmap.shape[2], fmap.shape[3]))
    a_bar = T.mean(memory[2].a, axis=0)
    h0 = T.tanh(T.matmul(params["dec.init.W"], a_bar))
    scales = tuple(ScaleAttention(Tensor(np.zeros(mem.length))) for mem in memory)
    return DecoderState(h0, scales, sos_id, tuple(memory))


def coverage_features(beta: Tensor, mem: Annotations, q_kernel: Tensor) -> Tensor:
    """Spatial convolution of the coverage map, returned as [L, q]."""
    k = q_kernel.shape[2]
    grid = T.reshape(beta, (1, 1, mem.height, mem.width))
    f = T.conv2d(grid, q_kernel, padding=k // 2)
    return T.transpose(T.reshape(f, (q_kernel.shape[0], mem.length)))


def attention_energies(scale: ScaleAttention, mem: Annotations, h_prev: Tensor, params,
                       prefix: str, coverage: bool = True) -> Tensor:
    pre = T.add(mem.proj, T.matmul(params[f"{prefix}.W_a"], h_prev))
    if coverage:
        f = coverage_features(scale.beta, mem, params[f"{prefix}.Q"])
        pre = T.add(pre, T.matmul(f, T.transpose(params[f"{prefix}.U_f"])))
    return T.matmul(T.tanh(pre), params[f"{prefix}.v_a"])


def attend(scale: ScaleAttention, mem: Annotations, h_prev: Tensor, params, prefix: str,
           coverage: bool = True) -> tuple[Tensor, Tensor, ScaleAttention]:
    """Coverage attention for one scale.

    Returns the weights over positions, the context vector, and the scale
    state with the weights folded into the coverage accumulator.
    """
    if scale.beta.shape != (mem.length,):
        raise ValueError(
            f"coverage has {scale.beta.shape[0]} positions but annotations have {mem.length}"
        )
    e = attention_energies(scale, mem, h_prev, params, prefix, coverage)
    alpha = T.softmax(e, axis=0)
    context = T.matmul(alpha, mem.a)
    updated = ScaleAttention(T.add(scale.beta, alpha), scale.alpha_history + [alpha.data])
    return alpha, context, updated


def gru_cell(u: Tensor, h: Tensor, params) -> Tensor:
    z = T.sigmoid(T.add(T.matmul(params["dec.gru.W_z"], u), T.matmul(params["dec.gru.U_z"], h)))
    r = T.sigmoid(T.add(T.matmul(params["dec.gru.W_r"], u), T.matmul(params["dec.gru.U_r"], h)))
    cand = T.tanh(T.add(T.matmul(params["dec.gru.W_h"], u),
                        T.matmul(params["dec.gru.U_h"], T.mul(r, h))))
    return T.add(T.mul(T.sub(1.0, z), h), T.mul(z, cand))


def step(state: DecoderState, input_token_id: int, params, cfg: DecoderConfig) -> tuple[Tensor, DecoderState]:
    vocab_size = params["dec.embed"].shape[0]
    if not 0 <= input_token_id < vocab_size:
        raise IndexError(f"token id {input_token_id} out of range [0, {vocab_size})")
    emb = T.embedding_lookup(params["dec.embed"], input_token_id)
    contexts, scales = [], []
    for s, sc, mem in zip(SCALES, state.scales, state.memory):
        _, ctx, sc = attend(sc, mem, state.h, params, attention_prefix(cfg, s), cfg.coverage)
        contexts.append(ctx)
        scales.append(sc)
    c = T.concat(contexts, axis=0)
    h = gru_cell(T.concat([emb, c], axis=0), state.h, params)
    mixed = T.add(T.add(emb, T.matmul(params["dec.out.W_h"], h)), T.matmul(params["dec.out.W_c"], c))
    logits = T.matmul(params["dec.out.W_0"], mixed)
    return logits, DecoderState(h, tuple(scales), input_token_id, state.memory)


@dataclass
class DecodeResult:
    ids: list[int]
    # per step, one [H, W] weight map per scale
    attention: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    hit_max_len: bool

    @property
    def steps(self) -> int:
        return len(self.attention)


def greedy_decode(feats: EncodedFeatures, params, vocab: Vocabulary, cfg: DecoderConfig,
                  max_len: int | None = None) -> DecodeResult:
    """Feed back the argmax token until ``<eol>`` or the length cap.

    ``np.argmax`` returns the lowest id on ties.
    """
    max_len = cfg.max_decode_len if max_len is None else max_len
    ids: list[int] = []
    maps = []
    with T.no_grad():
        state = init_state(feats, params, cfg, vocab.sos_id)
        token = vocab.sos_id
        for _ in range(max_len):
            logits, state = step(state, token, params, cfg)
            maps.append(tuple(
                sc.alpha_history[-1].reshape(mem.height, mem.width)
                for sc, mem in zip(state.scales, state.memory)
            ))
            token = int(np.argmax(logits.data))
            if token == vocab.eol_id:
                return DecodeResult(ids, maps, False)
            if token != vocab.sos_id:
                ids.append(token)
    return DecodeResult(ids, maps, True)


def without_coverage(cfg: DecoderConfig) -> DecoderConfig:
    return replace(cfg, coverage=False)
