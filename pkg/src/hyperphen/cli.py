"""Command-line pipeline: synth | train | evaluate | explain | serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .common import canonical_json
from .data import DataFormatError, dataset_manifest, load_dataset, split_dataset, write_dataset_csv
from .model import ModelConfig, PhenotypeModel, load_checkpoint
from .ontology import OntologyError
from .synthetic import ConfigError, SyntheticConfig, generate_synthetic
from .training import TrainConfig, aggregate_reports, evaluate, robustness_experiment, train, write_robustness_csv

DEFAULT_RATIOS = (0.8, 0.1, 0.1)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperphen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic diagnosis corpus")
    synth.add_argument("--config", type=Path, help="generator config JSON (defaults used if omitted)")
    synth.add_argument("--out", type=Path, required=True, help="output directory")
    synth.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train one model per seed")
    tr.add_argument("--data", type=Path, required=True, help="diagnosis CSV")
    tr.add_argument("--config", type=Path, help="training config JSON (defaults used if omitted)")
    tr.add_argument("--out", type=Path, required=True, help="checkpoint root directory")
    tr.add_argument("--split-seed", type=int, default=7)

    ev = sub.add_parser("evaluate", help="evaluate checkpoints on the test split")
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--checkpoint", type=Path, required=True, help="checkpoint dir or root of seed-* dirs")
    ev.add_argument("--out", type=Path, required=True, help="evaluation report JSON")
    ev.add_argument("--split-seed", type=int, default=7)
    ev.add_argument("--robustness", type=Path, help="also run the masking experiment, write CSV here")

    ex = sub.add_parser("explain", help="write one patient's explanation payload")
    ex.add_argument("--data", type=Path, required=True)
    ex.add_argument("--checkpoint", type=Path, help="omit to use freshly initialized weights")
    ex.add_argument("--patient", required=True)
    ex.add_argument("--out", type=Path, required=True)
    ex.add_argument("--top-k", type=int, default=10)
    ex.add_argument("--seed", type=int, default=0, help="init seed when no checkpoint is given")

    sv = sub.add_parser("serve", help="start the intervention HTTP service")
    sv.add_argument("--data", type=Path, required=True)
    sv.add_argument("--checkpoint", type=Path, required=True)
    sv.add_argument("--sessions", type=Path, default=Path("sessions"))
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)

    return parser


def _checkpoint_dirs(root: Path) -> list[Path]:
    if (root / "manifest.json").exists():
        return [root]
    found = sorted(p for p in root.glob("seed-*") if (p / "manifest.json").exists())
    if not found:
        raise FileNotFoundError(f"no checkpoint manifest under {root}")
    return found


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SyntheticConfig.load(args.config) if args.config else SyntheticConfig()
    ds = generate_synthetic(config, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(ds, args.out / "data.csv")
    config.save(args.out / "config.json")
    (args.out / "manifest.json").write_text(canonical_json(dataset_manifest(ds)) + "\n")
    print(f"wrote {len(ds.records)} patients, {ds.n_codes} codes to {args.out / 'data.csv'}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    ds = load_dataset(args.data)
    train_ds, val_ds, _ = split_dataset(ds, DEFAULT_RATIOS, args.split_seed)
    runs = train(train_ds, val_ds, config, out_dir=args.out)
    for seed, _, history in runs:
        final = [h for h in history if "val_recall@20" in h][-1]
        print(f"seed {seed}: best val recall@20 logged; final epoch entry {final}")
    (args.out / "train_config.json").write_text(canonical_json(config.to_dict()) + "\n")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    ds = load_dataset(args.data)
    _, _, test_ds = split_dataset(ds, DEFAULT_RATIOS, args.split_seed)
    reports = []
    models = []
    for ckpt_dir in _checkpoint_dirs(args.checkpoint):
        model, _ = load_checkpoint(ckpt_dir)
        models.append(model)
        reports.append(evaluate(model, test_ds))
    payload = aggregate_reports(reports)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(canonical_json(payload) + "\n")
    print(f"wrote evaluation report for {len(reports)} checkpoint(s) to {args.out}")
    if args.robustness:
        rows = robustness_experiment(models[0], test_ds)
        write_robustness_csv(rows, args.robustness)
        print(f"wrote robustness table to {args.robustness}")
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    from .explain import build_explanation

    ds = load_dataset(args.data)
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        model = PhenotypeModel(ModelConfig(), ds.ontology, seed=args.seed)
        model.eval()
    payload, _ = build_explanation(model, ds, args.patient, top_k=args.top_k)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(canonical_json(payload) + "\n")
    print(f"wrote explanation for patient {args.patient} to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app
    from .sessions import SessionStore

    ds = load_dataset(args.data)
    model, _ = load_checkpoint(args.checkpoint)
    app = create_app(model, ds, SessionStore(args.sessions))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    commands = {
        "synth": _cmd_synth,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "explain": _cmd_explain,
        "serve": _cmd_serve,
    }
    try:
        return commands[args.command](args)
    except (ConfigError, DataFormatError, OntologyError, FileNotFoundError, KeyError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"hyperphen {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
