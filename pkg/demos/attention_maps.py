"""Where does the decoder look? Dump attention maps for one expression.

A model is trained briefly on a small synthetic corpus. One image is then
decoded and every step's attention map at each of the three scales is
written as a graymap, together with the 48 first-layer feature maps. Dark
pixels mark high attention.

    python3 demos/attention_maps.py [out_dir]
"""

import sys
from pathlib import Path

from hmer.cli import dump_attention
from hmer.data import SynthSpec, default_vocab, generate_synth, samples_from_synth
from hmer.model import init_model
from hmer.trainer import TrainConfig, fit

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_runs/attention")
vocab = default_vocab()
corpus = samples_from_synth(generate_synth(SynthSpec(count=50, seed=7), None, vocab), vocab)
res = fit(init_model(vocab, seed=0), corpus,
          TrainConfig(learning_rate=3e-3, epochs=40, holdout_fraction=0.0, seed=0))

sample = corpus[0]
result = res.model.decode(sample.image)
print("truth:     ", " ".join(vocab.decode(sample.target)))
print("prediction:", " ".join(vocab.decode(result.ids)))
n = dump_attention(result, sample.image, res.model, out)
print(f"wrote {n} graymaps to {out} ({result.steps} steps x 3 scales + 48 stem maps)")
for t, maps in enumerate(result.attention):
    peaks = [tuple(int(i) for i in divmod(m.argmax(), m.shape[1])) for m in maps]
    token = vocab.tokens[result.ids[t]] if t < len(result.ids) else "<eol>"
    print(f"step {t:2d} {token:>6}  peak cell per scale (row, col): {peaks}")
