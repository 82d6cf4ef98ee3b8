"""End-to-end walkthrough of the command-line pipeline.

Writes a dataset config and a training config into a work directory,
then runs gen-data -> train -> eval -> report through the same entry
point the ``joadaa`` console script uses. Finishes in about a minute.

Usage:
    python scripts/end_to_end_demo.py [workdir]
"""

import sys
from pathlib import Path

from joadaa.cli import main

DATA_CFG = """\
dataset.train_videos = 12
dataset.test_videos = 4
dataset.num_frames = 128
dataset.feature_dim = 8
dataset.noise_sigma = 0.4
dataset.seed = 7

grammar.actions = pour, stir, sip, wipe
grammar.density_mode = dense
grammar.base_rate.pour = 0.04
grammar.base_rate.stir = 0.02
grammar.base_rate.wipe = 0.015
grammar.duration.pour = 6..10
grammar.duration.stir = 6..12
grammar.duration.sip = 4..8
grammar.duration.wipe = 4..8
grammar.trigger = pour -> sip : delay 3..8 : p 0.9
grammar.cooccur = stir + wipe : p 0.3
"""

TRAIN_CFG = """\
model.feature_dim = 8
model.hidden_dim = 32
model.num_heads = 4
model.num_encoder_layers = 1
model.num_decoder_layers = 1
model.anticipation_frames = 6
model.num_classes = 4
model.head_mode = sigmoid
model.dropout_rate = 0.1
model.long_capacity = 48
model.short_capacity = 16

train.epochs = 10
train.batch_size = 4
train.peak_lr = 0.003
train.loss_weight_anticipation = 2.0
train.seed = 0
"""


def run(argv):
    print(f"$ joadaa {' '.join(argv)}", flush=True)
    rc = main(argv)
    if rc != 0:
        sys.exit(rc)


def demo(workdir: Path):
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / "data.cfg").write_text(DATA_CFG)
    (workdir / "train.cfg").write_text(TRAIN_CFG)

    dataset = workdir / "dataset"
    run(["gen-data", "--config", str(workdir / "data.cfg"),
         "--out", str(dataset)])
    run_dir = workdir / "run"
    run(["train", "--config", str(workdir / "train.cfg"),
         "--dataset", str(dataset), "--out", str(run_dir)])
    run(["eval", "--checkpoint", str(run_dir / "model.jdck"),
         "--dataset", str(dataset), "--out", str(workdir / "eval"),
         "--horizons", "1,2,4,6"])
    run(["report", "--checkpoint", str(run_dir / "model.jdck"),
         "--dataset", str(dataset), "--out", str(workdir / "report"),
         "--horizons", "2"])
    print(f"\nartifacts under {workdir}/: dataset/, run/, eval/, report/")


if __name__ == "__main__":
    demo(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_workdir"))
