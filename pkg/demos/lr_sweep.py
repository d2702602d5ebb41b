"""Short training runs at the three learning rates compared for the loss curves.

Each rate starts from the same initialization and sees the same sample
order, so only the step size differs. One CSV per rate goes to the output
directory (columns ``step,loss``), ready for plotting loss against step.

    python3 demos/lr_sweep.py [out_dir] [steps]
"""

import sys
from pathlib import Path

import numpy as np

from hmer.data import SynthSpec, default_vocab, generate_synth, samples_from_synth
from hmer.model import init_model
from hmer.trainer import TrainConfig, lr_sweep

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_runs/lr_sweep")
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 500
out.mkdir(parents=True, exist_ok=True)

vocab = default_vocab()
corpus = samples_from_synth(generate_synth(SynthSpec(count=100, seed=7), None, vocab), vocab)
cfg = TrainConfig(teacher_forcing_rate=0.2, epochs=1000, max_steps=steps, holdout_fraction=0.1, seed=0)

runs = lr_sweep(lambda: init_model(vocab, seed=0), corpus, cfg, rates=(1e-4, 9e-5, 5e-5))
for lr, res in runs.items():
    path = out / f"loss_lr{lr:g}.csv"
    path.write_text("step,loss\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(res.losses)))
    tail = np.mean(res.losses[-50:])
    print(f"lr={lr:g} steps={len(res.losses)} mean_loss_last50={tail:.4f} log={path}")
