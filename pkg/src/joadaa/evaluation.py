"""Causal streaming evaluation: per-frame AP/mAP and the ablation grid.

Frames are delivered strictly in order through a MemoryBank; the score for
frame t is produced before frame t+1 is seen. Anticipation scores for
frame t+k are recorded at time t (row k of the anticipation head) and
compared against ground truth at t+k; frames within k of the video end are
excluded from horizon k.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .errors import ConfigError
from .memory_bank import MemoryBank
from .model import classify


def average_precision(scores, targets) -> float:
    """AP with ranking by descending score, ties broken by original index."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape or scores.ndim != 1:
        raise ConfigError("scores/targets must be equal-length vectors")
    num_pos = int(targets.sum())
    if num_pos == 0:
        raise ConfigError("average_precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = targets[order]
    # sequential precision walk; summation order is part of the contract
    hits = 0
    total = 0.0
    for rank, hit in enumerate(ranked, start=1):
        if hit:
            hits += 1
            total += hits / rank
    return total / num_pos


@dataclass
class ScoreTable:
    scores: np.ndarray  # (num_frames, num_classes)
    targets: np.ndarray  # same shape, {0,1}

    def __post_init__(self):
        if self.scores.shape != self.targets.shape:
            raise ConfigError("scores/targets shape mismatch")
        if not np.isfinite(self.scores).all():
            raise ConfigError("non-finite scores")


@dataclass
class EvalReport:
    per_class_ap: dict[int, float]
    mean_ap: float
    horizon: int
    num_frames_evaluated: int
    skipped_classes: list[int] = field(default_factory=list)


def evaluate_table(table: ScoreTable, horizon: int = 0) -> EvalReport:
    """mAP over classes with at least one positive; others reported skipped."""
    per_class: dict[int, float] = {}
    skipped: list[int] = []
    for c in range(table.targets.shape[1]):
        if table.targets[:, c].sum() == 0:
            skipped.append(c)
            continue
        per_class[c] = average_precision(table.scores[:, c], table.targets[:, c])
    if not per_class:
        raise ConfigError("no class has positives; mAP undefined")
    return EvalReport(
        per_class_ap=per_class,
        mean_ap=float(np.mean(list(per_class.values()))),
        horizon=horizon,
        num_frames_evaluated=table.scores.shape[0],
        skipped_classes=skipped,
    )


class OracleModel:
    """Test instrumentation: emits ground-truth labels as scores."""

    def __init__(self, negate: bool = False):
        self.negate = negate


def _model_scores(model, model_cfg, window, padding, current, chunk):
    """Run the model on a stack of windows; returns (online, anticipation)
    probabilities for real classes only."""
    n_classes = model_cfg.num_classes
    online_all, ant_all = [], []
    with torch.no_grad():
        for i in range(0, window.shape[0], chunk):
            bundle = model(window[i : i + chunk], padding[i : i + chunk],
                           current[i : i + chunk])
            online = classify(bundle.online_logits, model_cfg.head_mode)
            ant = classify(bundle.anticipation_logits, model_cfg.head_mode)
            online_all.append(online[:, :n_classes].numpy())
            ant_all.append(ant[:, :, :n_classes].numpy())
    return np.concatenate(online_all), np.concatenate(ant_all)


def streaming_eval(model, pairs, horizons=(1, 2, 4, 6),
                   model_cfg: ModelConfig | None = None,
                   memory_mode: str | None = None,
                   forward_chunk: int = 32) -> dict:
    """Causal evaluation over a split.

    Returns {"oad": EvalReport, "aa": {k: EvalReport}}. OAD is scored at
    frames t >= 1 (frame 0 has no past); anticipation row k produced at t
    is scored against frame t+k when it exists.
    """
    oracle = isinstance(model, OracleModel)
    if not oracle:
        if model_cfg is None:
            model_cfg = model.cfg
        if memory_mode is None:
            memory_mode = model_cfg.memory_mode
        n_f = model_cfg.anticipation_frames
        if horizons and max(horizons) > n_f:
            raise ConfigError(
                f"requested horizon {max(horizons)} exceeds model horizon {n_f}"
            )
        model.eval()
    oad_scores, oad_targets = [], []
    aa_scores = {k: [] for k in horizons}
    aa_targets = {k: [] for k in horizons}
    for seq, timeline in pairs:
        feats, labels = seq.features, timeline.labels
        num_frames = feats.shape[0]
        if oracle:
            sign = -1.0 if model.negate else 1.0
            for t in range(1, num_frames):
                oad_scores.append(sign * labels[t].astype(np.float64))
                oad_targets.append(labels[t])
                for k in horizons:
                    if t + k < num_frames:
                        aa_scores[k].append(sign * labels[t + k].astype(np.float64))
                        aa_targets[k].append(labels[t + k])
            continue
        bank = MemoryBank(
            feature_dim=feats.shape[1],
            long_capacity=model_cfg.long_capacity,
            short_capacity=model_cfg.short_capacity,
        )
        bank.push(feats[0])
        windows, paddings, currents = [], [], []
        for t in range(1, num_frames):
            win = bank.window(memory_mode)
            windows.append(win.matrix)
            paddings.append(win.padding)
            currents.append(feats[t])
            bank.push(feats[t])
        online, ant = _model_scores(
            model, model_cfg,
            np.stack(windows), np.stack(paddings), np.stack(currents),
            forward_chunk,
        )
        for idx, t in enumerate(range(1, num_frames)):
            oad_scores.append(online[idx])
            oad_targets.append(labels[t])
            for k in horizons:
                if t + k < num_frames:
                    aa_scores[k].append(ant[idx, k])
                    aa_targets[k].append(labels[t + k])
    result = {
        "oad": evaluate_table(
            ScoreTable(np.array(oad_scores), np.array(oad_targets)), horizon=0
        ),
        "aa": {},
    }
    for k in horizons:
        result["aa"][k] = evaluate_table(
            ScoreTable(np.array(aa_scores[k]), np.array(aa_targets[k])), horizon=k
        )
    return result


def streaming_scores_for_video(model, seq, timeline, horizon: int,
                               forward_chunk: int = 32) -> dict:
    """Per-frame score matrices for one video (report rendering).

    Returns {"oad": (T-1, C) scores for frames 1..T-1, "aa": scores whose
    row i is the horizon-step-ahead prediction for frame 1+horizon+i, or
    None when the model cannot anticipate that far}.
    """
    model_cfg = model.cfg
    feats = seq.features
    num_frames = feats.shape[0]
    bank = MemoryBank(
        feature_dim=feats.shape[1],
        long_capacity=model_cfg.long_capacity,
        short_capacity=model_cfg.short_capacity,
    )
    bank.push(feats[0])
    windows, paddings, currents = [], [], []
    for t in range(1, num_frames):
        win = bank.window(model_cfg.memory_mode)
        windows.append(win.matrix)
        paddings.append(win.padding)
        currents.append(feats[t])
        bank.push(feats[t])
    online, ant = _model_scores(
        model, model_cfg, np.stack(windows), np.stack(paddings),
        np.stack(currents), forward_chunk,
    )
    aa = None
    if 0 < horizon <= model_cfg.anticipation_frames:
        rows = num_frames - 1 - horizon
        if rows > 0:
            aa = ant[:rows, horizon]
    return {"oad": online, "aa": aa}


# --- ablation grid ---------------------------------------------------------

ABLATION_CELLS = (
    "full_long_short",
    "short_only",
    "no_anticipation",
    "fc_head",
)


@dataclass
class AblationRow:
    cell: str
    seed: int
    oad_map: float
    aa_maps: dict[int, float]


def _cell_configs(cell: str, model_cfg: ModelConfig, train_cfg: TrainConfig):
    import dataclasses

    m = dataclasses.replace(model_cfg)
    t = dataclasses.replace(train_cfg)
    if cell == "short_only":
        m.memory_mode = "short_only"
    elif cell == "no_anticipation":
        m.anticipation_frames = 0
        t.loss_weight_anticipation = 0.0
    elif cell == "fc_head":
        m.head_kind = "fc"
    elif cell != "full_long_short":
        raise ConfigError(f"unknown ablation cell {cell!r}")
    return m, t


def run_ablation_cell(cell, seed, train_pairs, test_pairs, model_cfg,
                      train_cfg, horizons=(1, 2, 4, 6)) -> AblationRow:
    from .training import train as train_fn
    import dataclasses

    m_cfg, t_cfg = _cell_configs(cell, model_cfg, train_cfg)
    t_cfg = dataclasses.replace(t_cfg, seed=seed)
    try:
        model, _ = train_fn(train_pairs, m_cfg, t_cfg)
        usable = tuple(k for k in horizons if k <= m_cfg.anticipation_frames)
        reports = streaming_eval(model, test_pairs, horizons=usable)
    except Exception as exc:
        raise type(exc)(f"[cell={cell} seed={seed}] {exc}") from exc
    return AblationRow(
        cell=cell,
        seed=seed,
        oad_map=reports["oad"].mean_ap,
        aa_maps={k: reports["aa"][k].mean_ap for k in usable},
    )


def ablation_suite(train_pairs, test_pairs, model_cfg, train_cfg,
                   seeds, cells=ABLATION_CELLS,
                   horizons=(1, 2, 4, 6)) -> list[AblationRow]:
    rows = []
    for cell in cells:
        for seed in seeds:
            rows.append(run_ablation_cell(
                cell, seed, train_pairs, test_pairs, model_cfg, train_cfg,
                horizons,
            ))
    return rows


def median_by_cell(rows, metric="oad") -> dict[str, float]:
    values: dict[str, list[float]] = {}
    for row in rows:
        if metric == "oad":
            values.setdefault(row.cell, []).append(row.oad_map)
        else:
            values.setdefault(row.cell, []).append(row.aa_maps[int(metric)])
    return {cell: statistics.median(v) for cell, v in values.items()}


def ablation_table_lines(rows, horizons=(1, 2, 4, 6)) -> list[str]:
    """Delimiter-separated export: cell, seed, oad_map, aa_map@k columns."""
    header = ["cell", "seed", "oad_map"] + [f"aa_map@{k}" for k in horizons]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row.cell, str(row.seed), f"{row.oad_map:.6f}"]
        for k in horizons:
            cells.append(
                f"{row.aa_maps[k]:.6f}" if k in row.aa_maps else "NA"
            )
        lines.append("\t".join(cells))
    return lines
