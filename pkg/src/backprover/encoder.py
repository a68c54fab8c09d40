"""Small trainable contextual encoder with per-sentence span pooling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.rnn import pack_padded_sequence

from .theory import PAD, UNK, InputLayout, token_vocabulary


class NumericError(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    vocab: list[str] = field(default_factory=token_vocabulary)
    d_model: int = 64
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 128
    dropout: float = 0.1
    max_len: int = 512
    pooling: str = "lstm"  # or "mean"
    d_focus: int = 16  # focus LSTM hidden size; a quarter of d, as in the full-size model
    focus_layers: int = 2
    focus_pos_emb: bool = True
    focus_lstm: bool = True
    max_path: int = 64
    mask_naf_in_fail: bool = True
    strip_function_words: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def init_lstm(lstm: nn.LSTM) -> None:
    for name, p in lstm.named_parameters():
        if name.startswith("weight_hh"):
            for block in p.data.chunk(4, 0):
                nn.init.orthogonal_(block)
        elif name.startswith("weight_ih"):
            nn.init.xavier_uniform_(p.data)
        else:
            nn.init.zeros_(p.data)
            h = p.shape[0] // 4
            p.data[h:2 * h] = 0.5  # forget gate


def run_lstm(lstm: nn.LSTM, seqs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Final hidden state of ``lstm`` over right-padded ``seqs`` [N, T, in]."""
    if seqs.shape[0] == 0:
        return seqs.new_zeros(0, lstm.hidden_size)
    packed = pack_padded_sequence(seqs, lengths.clamp(min=1).cpu(), batch_first=True, enforce_sorted=False)
    _, (h, _) = lstm(packed)
    return h[-1]


@dataclass
class EncodedBatch:
    tokens: torch.Tensor  # [B, L, d_model]
    h_cls: torch.Tensor  # [B, d]
    h_q: torch.Tensor  # [B, d]
    h_g: torch.Tensor  # [B, N, d] parent-side sentence reps, zero padded
    h_n: torch.Tensor  # [B, N, d] child-side sentence reps
    n_sentences: list[int]


class Encoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.stoi = {t: i for i, t in enumerate(config.vocab)}
        self.tok_emb = nn.Embedding(len(config.vocab), config.d_model, padding_idx=self.stoi[PAD])
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        layer = nn.TransformerEncoderLayer(config.d_model, config.n_heads, config.ff_dim, config.dropout,
                                           batch_first=True)
        self.mixer = nn.TransformerEncoder(layer, config.n_layers, enable_nested_tensor=False) if config.n_layers else None
        self.drop = nn.Dropout(config.dropout)
        self.cls_proj = nn.Linear(config.d_model, config.d)
        if config.pooling == "lstm":
            self.parent_span = nn.LSTM(config.d_model, config.d, batch_first=True)
            self.child_span = nn.LSTM(config.d_model, config.d, batch_first=True)
            init_lstm(self.parent_span)
            init_lstm(self.child_span)
        elif config.pooling == "mean":
            self.parent_span = nn.Linear(config.d_model, config.d)
            self.child_span = nn.Linear(config.d_model, config.d)
        else:
            raise ValueError(f"unknown pooling {config.pooling!r}")
        # unit-variance tokens keep the bilinear scores from starting flat; positions start
        # small so they do not drown token identity before the mixer learns to use them
        s = math.sqrt(3.0)
        nn.init.uniform_(self.tok_emb.weight, -s, s)
        nn.init.uniform_(self.pos_emb.weight, -0.1, 0.1)
        with torch.no_grad():
            self.tok_emb.weight[self.stoi[PAD]].zero_()

    def token_ids(self, layout: InputLayout) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in layout.tokens]

    def _pool(self, module: nn.Module, spans: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if self.config.pooling == "lstm":
            pooled = run_lstm(module, spans, lengths)
        else:
            mask = (torch.arange(spans.shape[1], device=spans.device)[None, :] < lengths[:, None]).to(spans.dtype)
            mean = (spans * mask[..., None]).sum(1) / lengths.clamp(min=1)[:, None].to(spans.dtype)
            pooled = module(mean)
        # parameter-free normalisation keeps node vectors on a common scale for the dot-product heads
        return F.layer_norm(pooled, pooled.shape[-1:])

    def forward(self, layouts: Sequence[InputLayout]) -> EncodedBatch:
        device = self.tok_emb.weight.device
        ids = [self.token_ids(l) for l in layouts]
        B, L = len(ids), max(len(x) for x in ids)
        tok = torch.full((B, L), self.stoi[PAD], dtype=torch.long, device=device)
        for b, row in enumerate(ids):
            tok[b, : len(row)] = torch.tensor(row, device=device)
        pad_mask = tok == self.stoi[PAD]
        x = self.tok_emb(tok) + self.pos_emb(torch.arange(L, device=device))[None]
        x = self.drop(x)
        if self.mixer is not None:
            x = self.mixer(x, src_key_padding_mask=pad_mask)
        h_cls = self.cls_proj(x[:, 0])

        # gather every span (question first, then sentences) into one padded batch
        owners, starts, lens = [], [], []
        for b, l in enumerate(layouts):
            for s, e in [l.question_span, *l.spans.values()]:
                owners.append(b)
                starts.append(s)
                lens.append(e - s)
        max_span = max(lens)
        flat = x.reshape(B * L, -1)
        zero_row = flat.new_zeros(1, flat.shape[1])
        flat = torch.cat([flat, zero_row], 0)
        offs = torch.arange(max_span, device=device)
        owner_t = torch.tensor(owners, device=device)
        start_t = torch.tensor(starts, device=device)
        len_t = torch.tensor(lens, device=device)
        index = owner_t[:, None] * L + start_t[:, None] + offs[None]
        index = torch.where(offs[None] < len_t[:, None], index, torch.full_like(index, B * L))
        span_x = flat[index]  # [S, max_span, d_model]

        parent = self._pool(self.parent_span, span_x, len_t)
        child = self._pool(self.child_span, span_x, len_t)
        counts = [len(l.spans) for l in layouts]
        N = max(counts)
        h_q = parent.new_zeros(B, parent.shape[1])
        h_g = parent.new_zeros(B, N, parent.shape[1])
        h_n = child.new_zeros(B, N, child.shape[1])
        pos = 0
        for b, n in enumerate(counts):
            h_q[b] = parent[pos]
            h_g[b, :n] = parent[pos + 1: pos + 1 + n]
            h_n[b, :n] = child[pos + 1: pos + 1 + n]
            pos += 1 + n
        for name, t in (("h_cls", h_cls), ("span pooling", parent), ("child span pooling", child)):
            if not torch.isfinite(t).all():
                raise NumericError(f"non-finite activation in {name}")
        return EncodedBatch(x, h_cls, h_q, h_g, h_n, counts)
