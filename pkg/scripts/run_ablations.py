"""Run the frozen ablation benchmarks and print per-cell medians.

Dense benchmark: anticipation on/off and fused-vs-FC head comparisons
(multi-label, sigmoid head). Sparse benchmark: long_short vs short_only
memory comparison (single-label, softmax head). Results are
deterministic for a fixed platform.

Usage:
    python scripts/run_ablations.py --benchmark dense
    python scripts/run_ablations.py --benchmark sparse --seeds 0,1,2
"""

import argparse
import statistics
import sys
import time
from pathlib import Path

import torch

from joadaa.benchmarks import ABLATION_SEEDS, build_benchmark
from joadaa.evaluation import (
    ablation_table_lines,
    median_by_cell,
    run_ablation_cell,
)

DEFAULT_CELLS = {
    "dense": ("full_long_short", "no_anticipation", "fc_head", "short_only"),
    "sparse": ("full_long_short", "short_only"),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--benchmark", choices=("dense", "sparse"), default="dense")
    ap.add_argument("--cells", default=None,
                    help="comma-separated cell names (default: per benchmark)")
    ap.add_argument("--seeds", default=",".join(map(str, ABLATION_SEEDS)))
    ap.add_argument("--out", default=None, help="optional TSV output path")
    ap.add_argument("--threads", type=int, default=2)
    args = ap.parse_args(argv)
    torch.set_num_threads(args.threads)

    cells = tuple(args.cells.split(",")) if args.cells else \
        DEFAULT_CELLS[args.benchmark]
    seeds = [int(s) for s in args.seeds.split(",")]
    train_pairs, test_pairs, model_cfg, train_cfg = build_benchmark(
        args.benchmark
    )
    rows = []
    for cell in cells:
        for seed in seeds:
            t0 = time.time()
            row = run_ablation_cell(
                cell, seed, train_pairs, test_pairs, model_cfg, train_cfg
            )
            rows.append(row)
            aa = {k: round(v, 4) for k, v in row.aa_maps.items()}
            print(f"{cell} seed={seed} oad_map={row.oad_map:.4f} "
                  f"aa={aa} ({time.time() - t0:.1f}s)", flush=True)
    print()
    for cell, median in sorted(median_by_cell(rows).items()):
        aa_per_h = {}
        for row in rows:
            if row.cell == cell:
                for k, v in row.aa_maps.items():
                    aa_per_h.setdefault(k, []).append(v)
        aa_txt = " ".join(
            f"aa@{k}={statistics.median(v):.4f}"
            for k, v in sorted(aa_per_h.items())
        )
        print(f"median {cell}: oad_map={median:.4f} {aa_txt}")
    if args.out:
        horizons = (1, 2, 4, 6) if model_cfg.anticipation_frames >= 6 else ()
        Path(args.out).write_text(
            "\n".join(ablation_table_lines(rows, horizons)) + "\n"
        )
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
