"""Multi-head loss, warmup-cosine schedule, and the training loop.

Each training sample is a (video, t) pair with t >= 1 drawn uniformly per
epoch; the memory window is built from frames 0..t-1 and the current frame
is t. The three heads (past, anticipation, present) are supervised with
BCE (sigmoid mode) or categorical CE with an implicit background class
(softmax mode), combined with configurable weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import ModelConfig, TrainConfig
from .errors import ConfigError, TrainingDivergedError
from .memory_bank import MemoryBank
from .model import Joadaa, PredictionBundle, save_model


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to peak_lr over the first warmup_fraction of steps,
    then cosine decay to zero at total_steps."""
    if total_steps <= 0:
        raise ConfigError("total_steps must be > 0")
    if not (0 <= step <= total_steps):
        raise ConfigError("step out of [0, total_steps]")
    warmup = cfg.warmup_fraction * total_steps
    if step <= warmup:
        return cfg.peak_lr * step / warmup
    frac = (step - warmup) / (total_steps - warmup)
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


@dataclass
class LossReport:
    total: float
    past: float
    anticipation: float
    present: float
    step: int = 0

    @property
    def per_head(self) -> tuple[float, float, float]:
        return (self.past, self.anticipation, self.present)


def _head_loss(logits: torch.Tensor, targets: np.ndarray, head_mode: str):
    """logits (N, num_outputs); targets (N, num_classes) multi-hot."""
    if logits.shape[0] == 0:
        return logits.sum() * 0.0
    if head_mode == "sigmoid":
        tgt = torch.as_tensor(targets, dtype=logits.dtype, device=logits.device)
        if tgt.shape != logits.shape:
            raise ConfigError(
                f"target shape {tuple(tgt.shape)} vs logits {tuple(logits.shape)}"
            )
        return F.binary_cross_entropy_with_logits(logits, tgt)
    # softmax mode: single active class, or the implicit background class
    targets = np.asarray(targets)
    if targets.shape[1] != logits.shape[1] - 1:
        raise ConfigError("softmax logits must carry one background column")
    if (targets.sum(axis=1) > 1).any():
        raise ConfigError("softmax head requires at most one active label per frame")
    background = targets.shape[1]
    idx = np.where(targets.any(axis=1), targets.argmax(axis=1), background)
    tgt = torch.as_tensor(idx, dtype=torch.long, device=logits.device)
    return F.cross_entropy(logits, tgt)


def loss_targets(labels: np.ndarray, t: int, window_frames: int, n_f: int):
    """(past_targets, anticipation_targets, present_target) label slices.

    ``window_frames`` is the number of real (unpadded) rows in the memory
    window, i.e. min(t, window capacity). Anticipation targets cover frames
    t..t+n_f, truncated at the end of the timeline.
    """
    if t < 0 or t >= labels.shape[0]:
        raise ConfigError("current frame index out of range")
    past = labels[t - window_frames : t]
    ant = labels[t : min(t + n_f + 1, labels.shape[0])]
    present = labels[t : t + 1]
    return past, ant, present


def compute_loss(bundle: PredictionBundle, labels: np.ndarray, t: int,
                 model_cfg: ModelConfig, train_cfg: TrainConfig,
                 window_frames: int, step: int = 0) -> tuple[torch.Tensor, LossReport]:
    past_t, ant_t, present_t = loss_targets(
        labels, t, window_frames, model_cfg.anticipation_frames
    )
    mode = model_cfg.head_mode
    # past head supervised on unpadded window rows only
    past_logits = bundle.past_logits[-window_frames:] if window_frames else \
        bundle.past_logits[:0]
    loss_past = _head_loss(past_logits, past_t, mode)
    loss_ant = _head_loss(bundle.anticipation_logits[: ant_t.shape[0]], ant_t, mode)
    loss_present = _head_loss(bundle.online_logits.unsqueeze(0), present_t, mode)
    w_past, w_ant, w_present = train_cfg.loss_weights
    total = w_past * loss_past + w_ant * loss_ant + w_present * loss_present
    report = LossReport(
        total=float(total.detach()),
        past=float(loss_past.detach()),
        anticipation=float(loss_ant.detach()),
        present=float(loss_present.detach()),
        step=step,
    )
    return total, report


def build_window(features: np.ndarray, t: int, model_cfg: ModelConfig):
    """Memory window over frames 0..t-1, front-padded; returns (matrix,
    padding, real_row_count)."""
    bank = MemoryBank(
        feature_dim=features.shape[1],
        long_capacity=model_cfg.long_capacity,
        short_capacity=model_cfg.short_capacity,
    )
    for i in range(max(t, 0)):
        bank.push(features[i])
    win = bank.window(model_cfg.memory_mode)
    return win.matrix, win.padding, int((~win.padding).sum())


def _batched_windows(features_list, ts, model_cfg):
    mats, pads, reals = [], [], []
    for feats, t in zip(features_list, ts):
        m, p, r = build_window(feats, t, model_cfg)
        mats.append(m)
        pads.append(p)
        reals.append(r)
    return np.stack(mats), np.stack(pads), reals


@dataclass
class EpochMetrics:
    epoch: int
    step: int
    lr: float
    loss_total: float
    loss_past: float
    loss_ant: float
    loss_present: float
    eval_map: float | None = None

    def as_log_line(self) -> str:
        parts = [
            f"step={self.step}",
            f"epoch={self.epoch}",
            f"lr={self.lr:.10e}",
            f"loss_total={self.loss_total:.8f}",
            f"loss_past={self.loss_past:.8f}",
            f"loss_ant={self.loss_ant:.8f}",
            f"loss_present={self.loss_present:.8f}",
        ]
        if self.eval_map is not None:
            parts.append(f"eval_mAP={self.eval_map:.8f}")
        return " ".join(parts)


def _epoch_samples(num_videos, num_frames, epoch, seed):
    """Deterministic (video order, per-video t) for one epoch."""
    rng = np.random.Generator(np.random.PCG64([seed, 0xEC, epoch]))
    order = rng.permutation(num_videos)
    ts = rng.integers(1, num_frames, size=num_videos)
    return order, ts


def train(train_pairs, model_cfg: ModelConfig, train_cfg: TrainConfig,
          test_pairs=None, checkpoint_path=None, log_path=None,
          start_epoch: int = 0, model: Joadaa | None = None,
          optimizer=None, metrics: list | None = None, state_path=None,
          end_epoch: int | None = None):
    """Train a model; returns (model, list[EpochMetrics]).

    Passing ``start_epoch``/``model``/``optimizer``/``metrics`` resumes an
    interrupted run; per-epoch RNG is derived from (seed, epoch), so the
    trajectory is identical to an uninterrupted run. ``end_epoch`` stops
    early without shortening the schedule (simulated interruption).
    """
    if not train_pairs:
        raise ConfigError("empty training dataset")
    model_cfg.validate()
    train_cfg.validate()
    if model is None:
        torch.manual_seed(train_cfg.seed)
        model = Joadaa(model_cfg)
    if optimizer is None:
        optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=train_cfg.peak_lr,
            betas=(0.9, 0.999),
            eps=1e-8,
            weight_decay=train_cfg.weight_decay,
        )
    metrics = list(metrics or [])
    num_videos = len(train_pairs)
    steps_per_epoch = math.ceil(num_videos / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    global_step = start_epoch * steps_per_epoch
    features = [p[0].features for p in train_pairs]
    labels = [p[1].labels for p in train_pairs]
    num_frames = features[0].shape[0]

    last_epoch = train_cfg.epochs if end_epoch is None else min(
        end_epoch, train_cfg.epochs
    )
    for epoch in range(start_epoch, last_epoch):
        order, ts = _epoch_samples(num_videos, num_frames, epoch, train_cfg.seed)
        sums = np.zeros(4)
        last_lr = 0.0
        for b0 in range(0, num_videos, train_cfg.batch_size):
            batch = order[b0 : b0 + train_cfg.batch_size]
            global_step += 1
            last_lr = lr_at(global_step, total_steps, train_cfg)
            for group in optimizer.param_groups:
                group["lr"] = last_lr
            model.train()
            optimizer.zero_grad()
            mats, pads, reals = _batched_windows(
                [features[i] for i in batch], [ts[i] for i in batch], model_cfg
            )
            bundles = model(mats, pads, np.stack(
                [features[i][ts[i]] for i in batch]
            ))
            losses = []
            reports = []
            for j, i in enumerate(batch):
                sample = PredictionBundle(
                    past_logits=bundles.past_logits[j],
                    anticipation_logits=bundles.anticipation_logits[j],
                    online_logits=bundles.online_logits[j],
                    past_embeddings=bundles.past_embeddings[j],
                    anticipation_embeddings=bundles.anticipation_embeddings[j],
                    updated_current_embedding=bundles.updated_current_embedding[j],
                )
                loss, report = compute_loss(
                    sample, labels[i], int(ts[i]), model_cfg, train_cfg,
                    reals[j], step=global_step,
                )
                losses.append(loss)
                reports.append(report)
            batch_loss = torch.stack(losses).mean()
            if not torch.isfinite(batch_loss):
                bad = [r for r in reports if not math.isfinite(r.total)]
                head = "total"
                if bad:
                    per = bad[0].per_head
                    for name, value in zip(("past", "anticipation", "present"), per):
                        if not math.isfinite(value):
                            head = name
                            break
                raise TrainingDivergedError(
                    f"non-finite loss at step {global_step}",
                    step=global_step, head=head, batch_ids=[int(i) for i in batch],
                )
            batch_loss.backward()
            if train_cfg.grad_clip_norm > 0:
                torch.nn.utils.clip_grad_norm_(
                    model.parameters(), train_cfg.grad_clip_norm
                )
            optimizer.step()
            sums += len(batch) * np.array([
                np.mean([r.total for r in reports]),
                np.mean([r.past for r in reports]),
                np.mean([r.anticipation for r in reports]),
                np.mean([r.present for r in reports]),
            ])
        means = sums / num_videos
        eval_map = None
        if test_pairs and train_cfg.eval_every and \
                (epoch + 1) % train_cfg.eval_every == 0:
            from .evaluation import streaming_eval

            eval_map = streaming_eval(
                model, test_pairs, horizons=(), model_cfg=model_cfg
            )["oad"].mean_ap
        metrics.append(EpochMetrics(
            epoch=epoch, step=global_step, lr=last_lr,
            loss_total=float(means[0]), loss_past=float(means[1]),
            loss_ant=float(means[2]), loss_present=float(means[3]),
            eval_map=eval_map,
        ))
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(metrics[-1].as_log_line() + "\n")
        if state_path is not None:
            torch.save(
                {
                    "epoch": epoch + 1,
                    "model": model.state_dict(),
                    "optimizer": optimizer.state_dict(),
                    "metrics": metrics,
                },
                state_path,
            )
    if checkpoint_path is not None:
        save_model(checkpoint_path, model)
    return model, metrics
