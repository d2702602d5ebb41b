"""Train with and without the coverage term on repeated-symbol expressions.

Targets such as ``a + a + a + a`` are where a decoder without coverage tends
to lose its place: the same glyph appears several times, so content alone
does not say which copy comes next. Both arms share the seed, the data and
the step budget. Only the coverage flag differs.

    python3 demos/coverage_ablation.py [epochs]
"""

import sys

from hmer.data import SynthSpec, default_vocab, generate_synth, samples_from_synth
from hmer.decoder import DecoderConfig
from hmer.model import init_model
from hmer.trainer import TrainConfig, evaluate, fit

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
vocab = default_vocab()
samples = samples_from_synth(generate_synth(SynthSpec(count=250, seed=11, mode="repeat", depth=5), None, vocab),
                             vocab)
train, held = samples[:200], samples[200:]
cfg = TrainConfig(learning_rate=1.5e-3, teacher_forcing_rate=0.2, epochs=epochs, holdout_fraction=0.0, seed=0)

for coverage in (True, False):
    model = init_model(vocab, dec_cfg=DecoderConfig(coverage=coverage), seed=0)
    res = fit(model, train, cfg)
    rep = evaluate(res.model, held)
    label = "with coverage   " if coverage else "without coverage"
    print(f"{label} steps={len(res.losses)} held-out {rep.summary()}")
