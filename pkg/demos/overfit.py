"""Memorize a 50-sample synthetic corpus, then score it with the command-line tools.

The run uses a learning rate well above 9e-5: at that rate a model this small
moves too little in 2000 Adam steps to memorize anything. Here we train until
every training expression decodes exactly, write the checkpoint, and show that
``hmer eval`` reports ``exprate=1.0 wer=0.0`` on the same corpus.

    python3 demos/overfit.py [out_dir]
"""

import sys
from pathlib import Path

from hmer.cli import main as cli
from hmer.config import RunConfig
from hmer.data import SynthSpec

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_runs/overfit")
out.mkdir(parents=True, exist_ok=True)

# 1. A corpus on disk, written by the same generator the CLI uses.
(out / "spec.txt").write_text(SynthSpec(count=50, seed=7).dumps())
cli(["synth", "--spec", str(out / "spec.txt"), "--out", str(out / "corpus"), "--force"])

# 2. Train with nothing held out so every sample is seen each epoch.
run = RunConfig(learning_rate=3e-3, teacher_forcing_rate=0.2, epochs=80, holdout_fraction=0.0, seed=0)
(out / "run.txt").write_text(run.dumps())
cli(["train", "--corpus", str(out / "corpus"), "--config", str(out / "run.txt"), "--out", str(out / "run")])

# 3. Score the training corpus with its own checkpoint.
cli(["eval", "--quiet", "--corpus", str(out / "corpus"), "--checkpoint", str(out / "run" / "final.ckpt")])
