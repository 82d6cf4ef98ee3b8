"""Joint online-detection / anticipation network.

Three stages: a past-processing encoder over the memory window, an
anticipation decoder driven by learnable queries (one per future frame
plus one for the not-yet-seen current frame), and an online prediction
stage that cross-attends the current frame to past + pseudo-future and
classifies through a local (causal TCN) + global (encoder) head.

The anticipation decoder and the online-prediction decoder are the same
module instance; sharing those weights is a structural contract, tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .errors import ConfigError
from . import io as jio


def sinusoidal_position_encoding(max_positions: int, dim: int,
                                 dtype=torch.float32) -> torch.Tensor:
    """table[pos, 2i] = sin(pos / 10000^(2i/dim)), table[pos, 2i+1] = cos(...)."""
    position = torch.arange(max_positions, dtype=torch.float64).unsqueeze(1)
    idx = torch.arange(0, dim, 2, dtype=torch.float64)
    freq = torch.pow(10000.0, -idx / dim)
    angles = position * freq
    table = torch.zeros(max_positions, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles[:, : table[:, 1::2].shape[1]])
    return table.to(dtype)


def scaled_dot_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                         mask: torch.Tensor | None = None,
                         return_weights: bool = False):
    """softmax(Q K^T / sqrt(d_k)) V with optional blocking mask.

    ``mask`` is boolean, broadcastable to (..., n_q, n_k); True blocks the
    key, giving it exactly zero weight. A query row with every key blocked
    is an error. Works on 2-D matrices or arbitrarily batched tensors.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ConfigError("query/key dimension mismatch")
    if k.shape[-2] != v.shape[-2]:
        raise ConfigError("key/value row count mismatch")
    d_k = q.shape[-1]
    logits = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(d_k)
    if mask is not None:
        mask = mask.to(torch.bool)
        if mask.shape[-1] != k.shape[-2]:
            raise ConfigError("mask key dimension mismatch")
        blocked = torch.broadcast_to(mask, logits.shape)
        if bool(blocked.all(dim=-1).any()):
            raise ConfigError("no attendable key: a query row is fully masked")
        logits = logits.masked_fill(blocked, float("-inf"))
    weights = torch.softmax(logits, dim=-1)
    out = torch.matmul(weights, v)
    if return_weights:
        return out, weights
    return out


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int, dropout: float = 0.0):
        super().__init__()
        if dim % num_heads != 0:
            raise ConfigError("dim must be divisible by num_heads")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.w_q = nn.Linear(dim, dim)
        self.w_k = nn.Linear(dim, dim)
        self.w_v = nn.Linear(dim, dim)
        self.w_o = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query, key, value, key_padding: torch.Tensor | None = None):
        # query: (B, n_q, dim); key_padding: (B, n_k) bool, True = ignore
        bsz, n_q, dim = query.shape
        def split(x, proj):
            return proj(x).view(bsz, -1, self.num_heads, self.head_dim).transpose(1, 2)
        q, k, v = split(query, self.w_q), split(key, self.w_k), split(value, self.w_v)
        mask = None
        if key_padding is not None:
            mask = key_padding[:, None, None, :]  # broadcast over heads, queries
        out = scaled_dot_attention(q, k, v, mask=mask)
        out = out.transpose(1, 2).contiguous().view(bsz, n_q, dim)
        return self.dropout(self.w_o(out))


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden, dim),
            nn.Dropout(dropout),
        )

    def forward(self, x):
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, num_heads: int, dropout: float):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, num_heads, dropout)
        self.ffn = FeedForward(dim, 2 * dim, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x, key_padding=None):
        x = self.norm1(x + self.self_attn(x, x, x, key_padding))
        x = self.norm2(x + self.ffn(x))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, dim: int, num_heads: int, dropout: float):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, num_heads, dropout)
        self.cross_attn = MultiHeadAttention(dim, num_heads, dropout)
        self.ffn = FeedForward(dim, 2 * dim, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, queries, memory, memory_padding=None):
        q = self.norm1(queries + self.self_attn(queries, queries, queries))
        q = self.norm2(q + self.cross_attn(q, memory, memory, memory_padding))
        q = self.norm3(q + self.ffn(q))
        return q


class CausalConv1d(nn.Module):
    """Left-padded 1-D convolution over time; output at t sees rows <= t."""

    def __init__(self, dim: int, kernel_size: int):
        super().__init__()
        self.kernel_size = kernel_size
        self.conv = nn.Conv1d(dim, dim, kernel_size)

    def forward(self, x):  # (B, T, dim)
        h = x.transpose(1, 2)
        h = F.pad(h, (self.kernel_size - 1, 0))
        return self.conv(h).transpose(1, 2)


class LocalGlobalHead(nn.Module):
    """Fuse a causal TCN branch with a one-layer encoder branch, then classify."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.tcn = CausalConv1d(cfg.hidden_dim, cfg.tcn_kernel_size)
        self.encoders = nn.ModuleList(
            EncoderLayer(cfg.hidden_dim, cfg.num_heads, cfg.dropout_rate)
            for _ in range(cfg.num_head_encoder_layers)
        )
        self.fc = nn.Linear(2 * cfg.hidden_dim, cfg.num_outputs)

    def local_branch(self, x):
        return self.tcn(x)

    def global_branch(self, x, key_padding=None):
        for layer in self.encoders:
            x = layer(x, key_padding)
        return x

    def forward(self, x, key_padding=None):
        fused = torch.cat(
            [self.local_branch(x), self.global_branch(x, key_padding)], dim=-1
        )
        return self.fc(fused)


class FcHead(nn.Module):
    """Ablation head: plain per-row linear classifier."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc = nn.Linear(cfg.hidden_dim, cfg.num_outputs)

    def forward(self, x, key_padding=None):
        return self.fc(x)


@dataclass
class PredictionBundle:
    past_logits: torch.Tensor  # (B, T, num_outputs)
    anticipation_logits: torch.Tensor  # (B, N_q, num_outputs)
    online_logits: torch.Tensor  # (B, num_outputs)
    past_embeddings: torch.Tensor  # (B, T, hidden)
    anticipation_embeddings: torch.Tensor  # (B, N_q, hidden)
    updated_current_embedding: torch.Tensor  # (B, hidden)


class Joadaa(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        h, heads, p = cfg.hidden_dim, cfg.num_heads, cfg.dropout_rate
        self.input_proj = nn.Linear(cfg.feature_dim, h)
        max_pos = cfg.long_capacity + cfg.short_capacity + cfg.num_queries + 2
        self.register_buffer(
            "pos_table", sinusoidal_position_encoding(max_pos, h), persistent=False
        )
        self.past_encoder = nn.ModuleList(
            EncoderLayer(h, heads, p) for _ in range(cfg.num_encoder_layers)
        )
        self.past_classifier = nn.Linear(h, cfg.num_outputs)
        self.anticipation_queries = nn.Parameter(
            torch.randn(cfg.num_queries, h) * 0.02
        )
        # one decoder stack, shared between anticipation and online prediction
        self.decoder = nn.ModuleList(
            DecoderLayer(h, heads, p) for _ in range(cfg.num_decoder_layers)
        )
        self.anticipation_classifier = nn.Linear(h, cfg.num_outputs)
        self.head = LocalGlobalHead(cfg) if cfg.head_kind == "fused" else FcHead(cfg)

    # --- stages ------------------------------------------------------------

    def _as_batched(self, x, rank):
        x = torch.as_tensor(x, dtype=self.pos_table.dtype)
        return (x.unsqueeze(0), True) if x.dim() == rank else (x, False)

    @staticmethod
    def _norm_padding(padding):
        if padding is None:
            return None
        padding = torch.as_tensor(padding, dtype=torch.bool)
        return padding.unsqueeze(0) if padding.dim() == 1 else padding

    def past_encode(self, window, padding=None):
        """window: (B, T, D) features; padding: (B, T) bool, True = padded."""
        window, squeezed = self._as_batched(window, 2)
        if padding is None:
            padding = torch.zeros(window.shape[:2], dtype=torch.bool,
                                  device=window.device)
        else:
            padding = torch.as_tensor(padding, dtype=torch.bool)
            if padding.dim() == 1:
                padding = padding.unsqueeze(0)
        # padded rows carry no stream content by construction
        window = window.masked_fill(padding.unsqueeze(-1), 0.0)
        x = self.input_proj(window) + self.pos_table[: window.shape[1]]
        for layer in self.past_encoder:
            x = layer(x, key_padding=padding)
        logits = self.past_classifier(x)
        if squeezed:
            return x.squeeze(0), logits.squeeze(0)
        return x, logits

    def anticipate(self, past_embeddings, memory_padding=None):
        past_embeddings, squeezed = self._as_batched(past_embeddings, 2)
        memory_padding = self._norm_padding(memory_padding)
        bsz = past_embeddings.shape[0]
        # query order signalled via positional encoding
        q = self.anticipation_queries + self.pos_table[: self.cfg.num_queries]
        q = q.unsqueeze(0).expand(bsz, -1, -1)
        for layer in self.decoder:
            q = layer(q, past_embeddings, memory_padding)
        logits = self.anticipation_classifier(q)
        if squeezed:
            return q.squeeze(0), logits.squeeze(0)
        return q, logits

    def online_predict(self, past_embeddings, anticipation_embeddings,
                       current_feature, memory_padding=None):
        past_embeddings, squeezed = self._as_batched(past_embeddings, 2)
        anticipation_embeddings, _ = self._as_batched(anticipation_embeddings, 2)
        memory_padding = self._norm_padding(memory_padding)
        current_feature = torch.as_tensor(
            current_feature, dtype=past_embeddings.dtype
        )
        if current_feature.dim() == 1:
            current_feature = current_feature.unsqueeze(0)
        bsz, t_past, _ = past_embeddings.shape
        if memory_padding is None:
            memory_padding = torch.zeros(
                (bsz, t_past), dtype=torch.bool, device=past_embeddings.device
            )
        # past + pseudo-future memory
        pseudo_full = torch.cat([past_embeddings, anticipation_embeddings], dim=1)
        pseudo_padding = torch.cat(
            [
                memory_padding,
                torch.zeros(
                    (bsz, anticipation_embeddings.shape[1]),
                    dtype=torch.bool,
                    device=memory_padding.device,
                ),
            ],
            dim=1,
        )
        cur = self.input_proj(current_feature) + self.pos_table[t_past]
        cur = cur.unsqueeze(1)  # (B, 1, hidden)
        for layer in self.decoder:  # same weights as anticipate()
            cur = layer(cur, pseudo_full, pseudo_padding)
        updated = cur
        # past + updated present feeds the classification head
        seq = torch.cat([past_embeddings, updated], dim=1)
        seq_padding = torch.cat(
            [
                memory_padding,
                torch.zeros((bsz, 1), dtype=torch.bool, device=memory_padding.device),
            ],
            dim=1,
        )
        head_logits = self.head(seq, key_padding=seq_padding)
        online_logits = head_logits[:, -1, :]
        updated = updated.squeeze(1)
        if squeezed:
            return online_logits.squeeze(0), updated.squeeze(0)
        return online_logits, updated

    def forward(self, window, padding, current_feature) -> PredictionBundle:
        window, squeezed = self._as_batched(window, 2)
        padding = torch.as_tensor(padding, dtype=torch.bool)
        if padding.dim() == 1:
            padding = padding.unsqueeze(0)
        current_feature = torch.as_tensor(current_feature, dtype=window.dtype)
        if current_feature.dim() == 1:
            current_feature = current_feature.unsqueeze(0)
        f_prime, past_logits = self.past_encode(window, padding)
        ant_emb, ant_logits = self.anticipate(f_prime, padding)
        online_logits, updated = self.online_predict(
            f_prime, ant_emb, current_feature, padding
        )
        bundle = PredictionBundle(
            past_logits=past_logits,
            anticipation_logits=ant_logits,
            online_logits=online_logits,
            past_embeddings=f_prime,
            anticipation_embeddings=ant_emb,
            updated_current_embedding=updated,
        )
        if squeezed:
            bundle = PredictionBundle(
                *(t.squeeze(0) for t in (
                    bundle.past_logits, bundle.anticipation_logits,
                    bundle.online_logits, bundle.past_embeddings,
                    bundle.anticipation_embeddings,
                    bundle.updated_current_embedding,
                ))
            )
        return bundle


def classify(logits: torch.Tensor, head_mode: str) -> torch.Tensor:
    """Logits to probabilities: softmax rows sum to 1; sigmoid is per-entry."""
    if head_mode == "softmax":
        return torch.softmax(logits, dim=-1)
    if head_mode == "sigmoid":
        return torch.sigmoid(logits)
    raise ConfigError(f"unknown head_mode {head_mode!r}")


# --- checkpointing ---------------------------------------------------------


def save_model(path, model: Joadaa) -> None:
    from .config import kv_from_section

    tensors = {
        name: param.detach().cpu().to(torch.float32).numpy()
        for name, param in model.state_dict().items()
    }
    jio.save_checkpoint(path, kv_from_section(model.cfg, "model"), tensors)


def load_model(path) -> Joadaa:
    from .config import section_from_kv

    config_kv, tensors = jio.load_checkpoint(path)
    cfg = section_from_kv(config_kv, "model")
    model = Joadaa(cfg)
    state = {name: torch.from_numpy(arr.copy()) for name, arr in tensors.items()}
    model.load_state_dict(state, strict=True)
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Analytic trainable-parameter count; must match count_parameters."""
    h, d, c = cfg.hidden_dim, cfg.feature_dim, cfg.num_outputs
    linear = lambda i, o: i * o + o
    mha = 4 * linear(h, h)
    ffn = linear(h, 2 * h) + linear(2 * h, h)
    ln = 2 * h
    enc_layer = mha + ffn + 2 * ln
    dec_layer = 2 * mha + ffn + 3 * ln
    total = linear(d, h)  # input projection
    total += cfg.num_encoder_layers * enc_layer
    total += linear(h, c)  # past classifier
    total += cfg.num_queries * h  # anticipation queries
    total += cfg.num_decoder_layers * dec_layer
    total += linear(h, c)  # anticipation classifier
    if cfg.head_kind == "fused":
        total += h * h * cfg.tcn_kernel_size + h  # causal conv
        total += cfg.num_head_encoder_layers * enc_layer
        total += linear(2 * h, c)
    else:
        total += linear(h, c)
    return total
