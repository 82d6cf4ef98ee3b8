"""Multi-command entry point: gen-data, train, eval, ablate, report.

Exit codes are a stable contract: 0 success, 2 config error, 3 I/O error,
4 numeric failure during training, 5 checkpoint/config version mismatch.
CLI flags override config-file values, which override built-in defaults.
JOADAA_THREADS caps torch's worker threads.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import (
    DatasetConfig,
    ModelConfig,
    TrainConfig,
    format_kv,
    kv_from_section,
    load_kv_file,
    section_from_kv,
)
from .errors import ConfigError, TrainingDivergedError, VersionMismatchError
from . import evaluation, io as jio, report as report_mod, synth_data, training
from .model import Joadaa, load_model, save_model

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_VERSION = 5


def _apply_threads():
    value = os.environ.get("JOADAA_THREADS")
    if value:
        try:
            torch.set_num_threads(max(1, int(value)))
        except ValueError:
            raise ConfigError(f"JOADAA_THREADS must be an integer, got {value!r}")


def _write_manifest(out_dir: Path, command: str, config_kv: dict, seed,
                    artifacts: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": {k: str(v) for k, v in config_kv.items()},
        "artifacts": {k: str(v) for k, v in artifacts.items()},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _load_cfg_sections(config_path, args):
    kv = load_kv_file(config_path) if config_path else {}
    model_cfg = section_from_kv(kv, "model")
    train_cfg = section_from_kv(kv, "train")
    # flag overrides
    if getattr(args, "seed", None) is not None:
        train_cfg.seed = args.seed
    if getattr(args, "memory_mode", None):
        model_cfg.memory_mode = (
            "short_only" if args.memory_mode == "short" else args.memory_mode
        )
    if getattr(args, "no_anticipation", False):
        model_cfg.anticipation_frames = 0
        train_cfg.loss_weight_anticipation = 0.0
    if getattr(args, "head", None):
        model_cfg.head_kind = args.head
    model_cfg.validate()
    train_cfg.validate()
    return kv, model_cfg, train_cfg


def _parse_horizons(value: str) -> tuple[int, ...]:
    try:
        horizons = tuple(sorted({int(h) for h in value.split(",") if h.strip()}))
    except ValueError:
        raise ConfigError(f"--horizons must be a comma list of ints, got {value!r}")
    if not horizons or any(h < 1 for h in horizons):
        raise ConfigError("--horizons entries must be >= 1")
    return horizons


def cmd_gen_data(args) -> int:
    kv = load_kv_file(args.config)
    dataset_cfg = section_from_kv(kv, "dataset")
    if args.seed is not None:
        dataset_cfg.seed = args.seed
    grammar, vocab = synth_data.grammar_from_kv(kv)
    out = Path(args.out)
    _write_manifest(
        out, "gen-data", kv, dataset_cfg.seed,
        {"dataset_dir": out},
    )
    train, test = synth_data.make_dataset(dataset_cfg, grammar, vocab)
    jio.write_dataset(out, train, test)
    grammar_kv = synth_data.grammar_to_kv(grammar, vocab)
    grammar_kv.update(kv_from_section(dataset_cfg, "dataset"))
    (out / "dataset.cfg").write_text(format_kv(grammar_kv))
    print(f"wrote {len(train)} train / {len(test)} test videos to {out}")
    return 0


def cmd_train(args) -> int:
    kv, model_cfg, train_cfg = _load_cfg_sections(args.config, args)
    train_pairs, test_pairs = jio.read_dataset(args.dataset)
    out = Path(args.out)
    ckpt = out / "model.jdck"
    log_path = out / "metrics.log"
    state_path = out / "train_state.pt"
    _write_manifest(
        out, "train", kv, train_cfg.seed,
        {"dataset_dir": args.dataset, "checkpoint": ckpt, "metrics_log": log_path},
    )
    start_epoch, model, optimizer, metrics = 0, None, None, None
    if args.resume and state_path.exists():
        state = torch.load(state_path, weights_only=False)
        start_epoch = state["epoch"]
        model = Joadaa(model_cfg)
        model.load_state_dict(state["model"])
        optimizer = torch.optim.AdamW(
            model.parameters(), lr=train_cfg.peak_lr, betas=(0.9, 0.999),
            eps=1e-8, weight_decay=train_cfg.weight_decay,
        )
        optimizer.load_state_dict(state["optimizer"])
        metrics = state["metrics"]
        log_path.write_text(
            "".join(m.as_log_line() + "\n" for m in metrics)
        )
    elif log_path.exists():
        log_path.unlink()
    training.train(
        train_pairs, model_cfg, train_cfg, test_pairs=test_pairs,
        checkpoint_path=ckpt, log_path=log_path, start_epoch=start_epoch,
        model=model, optimizer=optimizer, metrics=metrics,
        state_path=state_path,
    )
    print(f"checkpoint written to {ckpt}")
    return 0


def cmd_eval(args) -> int:
    horizons = _parse_horizons(args.horizons) if args.horizons else (1, 2, 4, 6)
    out = Path(args.out)
    _, test_pairs = jio.read_dataset(args.dataset)
    if args.oracle:
        model = evaluation.OracleModel()
        model_cfg = None
        memory_mode = None
        config_kv = {"eval.oracle": True}
    else:
        model = load_model(args.checkpoint)
        model_cfg = model.cfg
        horizons = tuple(
            h for h in horizons if h <= model_cfg.anticipation_frames
        )
        memory_mode = None
        if args.memory_mode:
            memory_mode = (
                "short_only" if args.memory_mode == "short" else args.memory_mode
            )
        config_kv = kv_from_section(model_cfg, "model")
    _write_manifest(
        out, "eval", config_kv, args.seed,
        {"dataset_dir": args.dataset, "report": out / "eval_report.txt"},
    )
    reports = evaluation.streaming_eval(
        model, test_pairs, horizons=horizons, model_cfg=model_cfg,
        memory_mode=memory_mode,
    )
    report_mod.write_eval_report(out / "eval_report.txt", reports)
    print(f"OAD mAP {reports['oad'].mean_ap:.4f}")
    for k in sorted(reports["aa"]):
        print(f"AA mAP@{k} {reports['aa'][k].mean_ap:.4f}")
    return 0


def cmd_ablate(args) -> int:
    kv, model_cfg, train_cfg = _load_cfg_sections(args.config, args)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    train_pairs, test_pairs = jio.read_dataset(args.dataset)
    horizons = _parse_horizons(args.horizons) if args.horizons else (1, 2, 4, 6)
    horizons = tuple(h for h in horizons if h <= model_cfg.anticipation_frames)
    out = Path(args.out)
    table_path = out / "ablation.tsv"
    _write_manifest(
        out, "ablate", kv, args.seed,
        {"dataset_dir": args.dataset, "table": table_path},
    )
    rows = evaluation.ablation_suite(
        train_pairs, test_pairs, model_cfg, train_cfg, seeds,
        horizons=horizons,
    )
    lines = evaluation.ablation_table_lines(rows, horizons)
    table_path.write_text("\n".join(lines) + "\n")
    medians = evaluation.median_by_cell(rows)
    for cell, value in medians.items():
        print(f"{cell}: median OAD mAP {value:.4f}")
    return 0


def cmd_report(args) -> int:
    horizons = _parse_horizons(args.horizons) if args.horizons else (1, 2, 4, 6)
    out = Path(args.out)
    model = load_model(args.checkpoint)
    horizons = tuple(h for h in horizons if h <= model.cfg.anticipation_frames)
    _, test_pairs = jio.read_dataset(args.dataset)
    _write_manifest(
        out, "report", kv_from_section(model.cfg, "model"), args.seed,
        {"dataset_dir": args.dataset, "report_dir": out},
    )
    reports = evaluation.streaming_eval(model, test_pairs, horizons=horizons)
    report_mod.write_eval_report(out / "eval_report.txt", reports)
    strip_horizon = horizons[0] if horizons else 1
    for i, (seq, timeline) in enumerate(test_pairs):
        num_frames, num_classes = timeline.labels.shape
        oad = np.zeros((num_frames, num_classes))
        # streaming scores start at frame 1
        single = evaluation.streaming_scores_for_video(
            model, seq, timeline, strip_horizon
        )
        oad[1:] = single["oad"]
        aa = None
        if single["aa"] is not None:
            aa = np.zeros((num_frames, num_classes))
            aa[1 + strip_horizon :] = single["aa"]
        report_mod.render_video_strips(
            out / f"video_{i:04d}.svg", timeline.labels, oad, aa, strip_horizon
        )
    print(f"report written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="joadaa",
        description="Joint online action detection and anticipation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--seed", type=int, default=None)
        if needs_out:
            p.add_argument("--out", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--memory-mode", choices=("short", "short_only", "long_short"))
    p.add_argument("--no-anticipation", action="store_true")
    p.add_argument("--head", choices=("fused", "fc"))
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="causal streaming evaluation")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--horizons")
    p.add_argument("--memory-mode", choices=("short", "short_only", "long_short"))
    p.add_argument("--oracle", action="store_true",
                   help="score ground truth against itself (plumbing check)")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/eval the ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--horizons")
    p.add_argument("--memory-mode", choices=("short", "short_only", "long_short"))
    p.add_argument("--no-anticipation", action="store_true")
    p.add_argument("--head", choices=("fused", "fc"))
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render eval tables and timeline strips")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--horizons")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads()
        if args.command == "eval" and not args.oracle and not args.checkpoint:
            raise ConfigError("eval requires --checkpoint unless --oracle is set")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VersionMismatchError as exc:
        print(f"version mismatch: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except TrainingDivergedError as exc:
        print(
            f"numeric failure: {exc} (step={exc.step} head={exc.head} "
            f"batch_ids={exc.batch_ids})",
            file=sys.stderr,
        )
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
