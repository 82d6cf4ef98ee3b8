"""Deterministic SVG timeline strips and text tables for eval reports.

SVGs are assembled by hand (no plotting library) so regenerating a report
is byte-identical. One strip row per class: ground truth on top, OAD
scores in the middle, anticipation-at-horizon at the bottom.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CELL_W = 3
CELL_H = 10
ROW_GAP = 4
LABEL_W = 120


def _shade(value: float) -> str:
    v = max(0.0, min(1.0, float(value)))
    level = int(round(255 * (1.0 - v)))
    return f"#{level:02x}{level:02x}ff"


def _strip(parts, x0, y0, values, binary):
    for t, v in enumerate(values):
        if binary:
            if v <= 0:
                continue
            color = "#222222"
        else:
            color = _shade(v)
        parts.append(
            f'<rect x="{x0 + t * CELL_W}" y="{y0}" width="{CELL_W}" '
            f'height="{CELL_H}" fill="{color}"/>'
        )


def render_video_strips(path, labels: np.ndarray, oad_scores: np.ndarray,
                        aa_scores: np.ndarray | None, horizon: int,
                        class_names=None) -> None:
    """labels/oad_scores: (T, C); aa_scores row t = prediction for frame t."""
    num_frames, num_classes = labels.shape
    names = class_names or [f"class_{c}" for c in range(num_classes)]
    rows_per_class = 2 + (1 if aa_scores is not None else 0)
    row_h = rows_per_class * CELL_H + ROW_GAP
    width = LABEL_W + num_frames * CELL_W + 10
    height = num_classes * row_h + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="monospace" font-size="9">'
    ]
    parts.append(
        f'<text x="4" y="12">frames 0..{num_frames - 1}; rows per class: '
        f'ground truth, online scores'
        + (f", anticipation@{horizon}" if aa_scores is not None else "")
        + "</text>"
    )
    for c in range(num_classes):
        y = 20 + c * row_h
        parts.append(f'<text x="4" y="{y + CELL_H}">{names[c]}</text>')
        _strip(parts, LABEL_W, y, labels[:, c], binary=True)
        _strip(parts, LABEL_W, y + CELL_H, oad_scores[:, c], binary=False)
        if aa_scores is not None:
            _strip(parts, LABEL_W, y + 2 * CELL_H, aa_scores[:, c], binary=False)
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def eval_report_lines(report, label="oad") -> list[str]:
    lines = [
        f"metric\t{label}",
        f"horizon\t{report.horizon}",
        f"mAP\t{report.mean_ap:.6f}",
        f"num_frames_evaluated\t{report.num_frames_evaluated}",
        f"skipped_classes\t{','.join(map(str, report.skipped_classes)) or '-'}",
    ]
    for c in sorted(report.per_class_ap):
        lines.append(f"ap.class_{c}\t{report.per_class_ap[c]:.6f}")
    return lines


def write_eval_report(path, reports: dict) -> None:
    lines = eval_report_lines(reports["oad"], "oad")
    for k in sorted(reports.get("aa", {})):
        lines.append("")
        lines.extend(eval_report_lines(reports["aa"][k], f"aa@{k}"))
    Path(path).write_text("\n".join(lines) + "\n")
