import numpy as np
import pytest

from hmer import tensor as T
from hmer.decoder import (DecoderConfig, ScaleAttention, attend, attention_energies,
                          greedy_decode, init_decoder_params, init_state, step)
from hmer.encoder import EncodedFeatures
from hmer.tensor import Tensor
from hmer.vocab import parse_vocab

from helpers import annotations_for, check_grads, scalar_attention

VOCAB = parse_vocab(["<sos>", "<eol>", "a", "b", "+", "="])
TINY = DecoderConfig(hidden_dim=8, embed_dim=4, attn_dim=5, coverage_kernel_size=3, coverage_channels=3,
                     max_decode_len=12)
C = 4


def make_feats(rng, grid=(4, 6)):
    h, w = grid
    return EncodedFeatures(
        Tensor(rng.normal(size=(1, C, h, w))),
        Tensor(rng.normal(size=(1, C, h // 2, w // 2))),
        Tensor(rng.normal(size=(1, C, h // 4, w // 4))),
    )


def make_params(seed=0, cfg=TINY):
    return init_decoder_params(cfg, C, len(VOCAB), np.random.default_rng(seed))


class TestInitState:
    def test_zero_features_zero_hidden(self, rng):
        feats = EncodedFeatures(*(Tensor(np.zeros((1, C, s, s))) for s in (4, 2, 1)))
        st = init_state(feats, make_params(), TINY, VOCAB.sos_id)
        np.testing.assert_array_equal(st.h.data, 0.0)
        assert st.prev_token == VOCAB.sos_id
        for sc in st.scales:
            np.testing.assert_array_equal(sc.beta.data, 0.0)

    def test_hidden_in_open_interval(self, rng):
        feats = make_feats(rng)
        for k in (0.1, 10.0, 1000.0):
            big = EncodedFeatures(*(Tensor(c.data * k) for c in feats.scales()))
            st = init_state(big, make_params(), TINY, VOCAB.sos_id)
            assert np.all(np.abs(st.h.data) <= 1.0) and np.all(np.isfinite(st.h.data))
        st = init_state(feats, make_params(), TINY, VOCAB.sos_id)
        assert np.all(np.abs(st.h.data) < 1.0)

    def test_single_position_mean(self, rng):
        feats = make_feats(rng, (4, 4))  # coarsest map is 1x1
        p = make_params()
        st = init_state(feats, p, TINY, VOCAB.sos_id)
        np.testing.assert_allclose(st.h.data, np.tanh(p["dec.init.W"].data @ feats.c3.data[0, :, 0, 0]),
                                   atol=1e-15)


class TestAttend:
    def test_matches_scalar_oracle(self, rng):
        grid = (2, 3)
        p = make_params(1)
        for trial in range(5):
            a = rng.normal(size=(6, C))
            h_prev = rng.uniform(-1, 1, size=TINY.hidden_dim)
            beta = rng.uniform(0, 2, size=6)
            mem = annotations_for(a, grid, p)
            alpha, ctx, _ = attend(ScaleAttention(Tensor(beta)), mem, Tensor(h_prev), p, "dec.att1")
            _, ref = scalar_attention(a, grid, h_prev, *(p[f"dec.att1.{n}"].data for n in
                                                          ("W_a", "U_a", "U_f", "v_a", "Q")), beta)
            np.testing.assert_allclose(alpha.data, ref, atol=1e-10, rtol=0)
            np.testing.assert_allclose(ctx.data, [sum(ref[i] * a[i, c] for i in range(6)) for c in range(C)],
                                       atol=1e-10, rtol=0)

    def test_zero_coverage_reduces_to_plain_attention(self, rng):
        p = make_params(2)
        a = rng.normal(size=(6, C))
        mem = annotations_for(a, (2, 3), p)
        h = Tensor(rng.uniform(-1, 1, TINY.hidden_dim))
        sc = ScaleAttention(Tensor(np.zeros(6)))
        on = attention_energies(sc, mem, h, p, "dec.att1", coverage=True).data
        off = attention_energies(sc, mem, h, p, "dec.att1", coverage=False).data
        np.testing.assert_array_equal(on, off)

    def test_off_equals_on_with_zero_kernel(self, rng):
        p = make_params(3)
        a = rng.normal(size=(6, C))
        mem = annotations_for(a, (2, 3), p)
        h = Tensor(rng.uniform(-1, 1, TINY.hidden_dim))
        sc = ScaleAttention(Tensor(rng.uniform(0, 3, 6)))
        off = attention_energies(sc, mem, h, p, "dec.att1", coverage=False).data
        p["dec.att1.Q"].data[...] = 0.0
        on = attention_energies(sc, mem, h, p, "dec.att1", coverage=True).data
        np.testing.assert_array_equal(on, off)

    def test_identical_annotations_uniform(self, rng):
        p = make_params(4)
        a = np.tile(rng.normal(size=C), (6, 1))
        mem = annotations_for(a, (2, 3), p)
        alpha, _, _ = attend(ScaleAttention(Tensor(np.zeros(6))), mem,
                             Tensor(rng.uniform(-1, 1, TINY.hidden_dim)), p, "dec.att1")
        np.testing.assert_allclose(alpha.data, 1 / 6, atol=1e-15, rtol=0)

    def test_length_mismatch(self, rng):
        p = make_params()
        mem = annotations_for(rng.normal(size=(6, C)), (2, 3), p)
        with pytest.raises(ValueError, match="positions"):
            attend(ScaleAttention(Tensor(np.zeros(5))), mem, Tensor(np.zeros(TINY.hidden_dim)), p, "dec.att1")


def _run_steps(feats, p, cfg, tokens):
    st = init_state(feats, p, cfg, VOCAB.sos_id)
    out = []
    for tok in tokens:
        logits, st = step(st, tok, p, cfg)
        out.append(logits)
    return out, st


class TestStep:
    def test_logits_shape_and_softmax(self, rng):
        logits, _ = _run_steps(make_feats(rng), make_params(), TINY, [0, 2, 3])
        for lg in logits:
            assert lg.shape == (len(VOCAB),)
            assert abs(T.softmax(lg).data.sum() - 1.0) < 1e-9

    def test_zero_projection_uniform(self, rng):
        p = make_params()
        p["dec.out.W_0"].data[...] = 0.0
        (lg,), _ = _run_steps(make_feats(rng), p, TINY, [0])
        np.testing.assert_array_equal(lg.data, 0.0)
        np.testing.assert_allclose(T.softmax(lg).data, 1 / len(VOCAB), atol=1e-15)

    def test_invalid_token(self, rng):
        st = init_state(make_feats(rng), make_params(), TINY, VOCAB.sos_id)
        with pytest.raises(IndexError):
            step(st, len(VOCAB), make_params(), TINY)

    def test_context_is_convex_combination(self, rng):
        feats = make_feats(rng)
        p = make_params(5)
        st = init_state(feats, p, TINY, VOCAB.sos_id)
        for tok in [0, 2, 4, 3]:
            h_prev = st.h
            _, st = step(st, tok, p, TINY)
            for s, (sc, mem) in enumerate(zip(st.scales, st.memory), start=1):
                a = mem.a.data
                alpha = sc.alpha_history[-1]
                ctx = alpha @ a
                assert np.all(ctx >= a.min(axis=0) - 1e-12) and np.all(ctx <= a.max(axis=0) + 1e-12)
            assert h_prev is not st.h

    def test_attention_invariants_over_steps(self, rng):
        feats = make_feats(rng)
        p = make_params(6)
        _, st = _run_steps(feats, p, TINY, [0, 2, 4, 3, 5, 2])
        for sc in st.scales:
            running = np.zeros_like(sc.beta.data)
            for alpha in sc.alpha_history:
                assert np.all(alpha >= 0)
                assert abs(alpha.sum() - 1.0) < 1e-9
                running = running + alpha
            assert sc.beta.data.tobytes() == running.tobytes()

    def test_shared_attention_config(self, rng):
        cfg = DecoderConfig(hidden_dim=8, embed_dim=4, attn_dim=5, coverage_kernel_size=3,
                            coverage_channels=3, share_attention=True)
        p = init_decoder_params(cfg, C, len(VOCAB), np.random.default_rng(0))
        assert "dec.att.W_a" in p and "dec.att1.W_a" not in p
        logits, _ = _run_steps(make_feats(rng), p, cfg, [0, 2])
        assert logits[-1].shape == (len(VOCAB),)


def test_end_to_end_decoder_gradients(rng):
    feats = make_feats(rng, (4, 4))
    p = make_params(7)
    leaves = list(p.values())
    fmaps = [c.data for c in feats.scales()]

    def build():
        f = EncodedFeatures(*(Tensor(x) for x in fmaps))
        logits, _ = _run_steps(f, p, TINY, [0, 2, 4])
        return T.cross_entropy(logits[2], 3)

    assert check_grads(build, leaves) < 1e-4


class TestGreedy:
    def test_eol_first_gives_empty(self, rng):
        p = make_params()
        p["dec.out.W_h"].data[...] = 0.0
        p["dec.out.W_c"].data[...] = 0.0
        p["dec.out.W_0"].data[...] = 0.0
        p["dec.out.W_0"].data[VOCAB.eol_id] = p["dec.embed"].data[VOCAB.sos_id]
        res = greedy_decode(make_feats(rng), p, VOCAB, TINY)
        assert res.ids == [] and res.steps == 1 and not res.hit_max_len

    def test_length_capped(self, rng):
        p = make_params()
        p["dec.out.W_0"].data[VOCAB.eol_id] = -50.0 * np.sign(p["dec.out.W_0"].data[VOCAB.eol_id] + 1e-9)
        for seed in range(5):
            feats = make_feats(np.random.default_rng(seed))
            res = greedy_decode(feats, make_params(seed), VOCAB, TINY)
            assert len(res.ids) <= TINY.max_decode_len
            assert res.steps <= TINY.max_decode_len
            if res.hit_max_len:
                assert res.steps == TINY.max_decode_len
            assert VOCAB.eol_id not in res.ids and VOCAB.sos_id not in res.ids

    def test_attention_maps_per_step(self, rng):
        feats = make_feats(rng)
        res = greedy_decode(feats, make_params(1), VOCAB, TINY, max_len=5)
        for maps in res.attention:
            assert [m.shape for m in maps] == [c.shape[2:] for c in feats.scales()]

    def test_deterministic(self, rng):
        feats = make_feats(rng)
        a = greedy_decode(feats, make_params(9), VOCAB, TINY)
        b = greedy_decode(feats, make_params(9), VOCAB, TINY)
        assert a.ids == b.ids
        assert all(x.tobytes() == y.tobytes() for ma, mb in zip(a.attention, b.attention) for x, y in zip(ma, mb))


def test_config_validation():
    with pytest.raises(ValueError):
        DecoderConfig(coverage_kernel_size=4)
    with pytest.raises(ValueError):
        DecoderConfig(hidden_dim=0)
