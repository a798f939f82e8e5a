"""One-command reproduction: synthesize a corpus, train, evaluate, explain.

Drives the installed CLI end to end and leaves every artifact under --out:

    out/
      corpus/            data.csv, config.json, manifest.json
      checkpoints/       seed-*/ (weights + manifest + training log)
      report.json        per-seed metrics and their mean
      robustness.csv     masking experiment
      explanation.json   one patient's served payload

Defaults reproduce the shipped synthetic benchmark in roughly CPU-minutes;
pass --quick for a smoke-scale run.
"""

import argparse
import json
import sys
from pathlib import Path

from hyperphen.cli import main as cli
from hyperphen.common import canonical_json
from hyperphen.data import load_dataset
from hyperphen.model import ModelConfig
from hyperphen.training import TrainConfig

QUICK_TRAIN = TrainConfig(
    batch_size=32,
    epochs=3,
    patience=3,
    seeds=(0,),
    model=ModelConfig(d_c=4, unigin_dims=(16, 16), n_phenotypes=3, d_hid=16, n_attn_heads=2),
)


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=Path("pipeline_out"))
    parser.add_argument("--seed", type=int, default=3, help="corpus generation seed")
    parser.add_argument("--synth-config", type=Path, default=Path("configs/synthetic_default.json"))
    parser.add_argument("--train-config", type=Path, default=Path("configs/train_default.json"))
    parser.add_argument("--quick", action="store_true", help="tiny single-seed run for smoke testing")
    args = parser.parse_args(argv)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    corpus_dir = out / "corpus"
    ckpt_dir = out / "checkpoints"

    if cli(["synth", "--config", str(args.synth_config), "--out", str(corpus_dir), "--seed", str(args.seed)]):
        return 1
    data_csv = corpus_dir / "data.csv"

    if args.quick:
        train_config = out / "train_quick.json"
        train_config.write_text(canonical_json(QUICK_TRAIN.to_dict()) + "\n")
    else:
        train_config = args.train_config
    if cli(["train", "--data", str(data_csv), "--config", str(train_config), "--out", str(ckpt_dir)]):
        return 1

    if cli(
        [
            "evaluate",
            "--data", str(data_csv),
            "--checkpoint", str(ckpt_dir),
            "--out", str(out / "report.json"),
            "--robustness", str(out / "robustness.csv"),
        ]
    ):
        return 1

    patient = load_dataset(data_csv).records[0].patient_id
    if cli(
        [
            "explain",
            "--data", str(data_csv),
            "--checkpoint", str(ckpt_dir / "seed-0"),
            "--patient", patient,
            "--out", str(out / "explanation.json"),
        ]
    ):
        return 1

    report = json.loads((out / "report.json").read_text())
    print("\nmean over seeds:")
    for key, value in report["mean"].items():
        print(f"  {key:>14}: {value if value is None else f'{value:.4f}'}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
