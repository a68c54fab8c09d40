"""Prediction heads: answer/strategy classifiers, parent attention, path focus, child attention."""

from __future__ import annotations

import math
from typing import Sequence

import torch
from torch import nn

from .encoder import ModelConfig, init_lstm, run_lstm
from .theory import Strategy

ANSWER_CLASSES = (True, False)
STRATEGY_CLASSES = (Strategy.PROOF, Strategy.FAIL_PROOF)


class DegenerateMaskError(ValueError):
    pass


def scaled_scores(query: torch.Tensor, keys: torch.Tensor, d: int) -> torch.Tensor:
    """``query`` [S, d] against ``keys`` [S, T, d] -> [S, T] dot scores over sqrt(d)."""
    return torch.einsum("sd,std->st", query, keys) / math.sqrt(d)


def masked_log_softmax(scores: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    if not valid.any(-1).all():
        raise DegenerateMaskError("every candidate position is masked")
    return torch.log_softmax(scores.masked_fill(~valid, float("-inf")), dim=-1)


class ReasonerHeads(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d
        self.config = config
        self.f_qa = nn.Linear(d, 2)
        self.f_strategy = nn.Linear(d, 2)
        # parent node prediction
        self.path_lstm = nn.LSTM(d, d, batch_first=True)
        self.f_q = nn.Linear(d, d)
        self.f_k = nn.Linear(d, d)
        # path focus selection
        self.focus_pos = nn.Embedding(config.max_path, d) if config.focus_pos_emb else None
        layer = nn.TransformerDecoderLayer(d, 1, config.ff_dim, config.dropout, batch_first=True)
        self.focus = nn.TransformerDecoder(layer, config.focus_layers)
        self.focus_lstm = nn.LSTM(d, config.d_focus, batch_first=True) if config.focus_lstm else None
        self.f_u = nn.Linear(d + (config.d_focus if config.focus_lstm else 0), d)
        # child node prediction
        self.f_naf = nn.Linear(d, d)
        self.h_end = nn.Parameter(torch.empty(d).uniform_(-1 / math.sqrt(d), 1 / math.sqrt(d)))
        self.child_q = nn.Linear(d, d)
        self.child_k = nn.Linear(d, d)
        # start the attention maps at plain dot-product similarity
        for proj in (self.f_q, self.f_k, self.child_q, self.child_k):
            nn.init.eye_(proj.weight)
            nn.init.zeros_(proj.bias)
        init_lstm(self.path_lstm)
        if self.focus_lstm is not None:
            init_lstm(self.focus_lstm)
        if self.focus_pos is not None:
            nn.init.uniform_(self.focus_pos.weight, -1 / math.sqrt(d), 1 / math.sqrt(d))

    def answer_logits(self, h_cls: torch.Tensor) -> torch.Tensor:
        return self.f_qa(h_cls)

    def strategy_logits(self, h_cls: torch.Tensor) -> torch.Tensor:
        return self.f_strategy(h_cls)

    def parent_log_weights(self, path: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Log attention weights over each path [S, T, d] (right padded to ``lengths``)."""
        h_g = run_lstm(self.path_lstm, path, lengths)
        scores = scaled_scores(self.f_q(h_g), self.f_k(path), self.config.d)
        valid = torch.arange(path.shape[1], device=path.device)[None] < lengths[:, None]
        return masked_log_softmax(scores, valid)

    def path_focus(self, h_gp: torch.Tensor, path: torch.Tensor, lengths: torch.Tensor,
                   fail: torch.Tensor) -> torch.Tensor:
        """Fuse a parent-queried attention read of the path with a recurrent summary.

        Fail-proof rows replace the attention read by the parent representation.
        """
        pad = torch.arange(path.shape[1], device=path.device)[None] >= lengths[:, None]
        memory = path
        if self.focus_pos is not None:
            memory = path + self.focus_pos(torch.arange(path.shape[1], device=path.device))[None]
        read = self.focus(h_gp[:, None], memory, memory_key_padding_mask=pad)[:, 0]
        first = torch.where(fail[:, None], h_gp, read)
        parts = [first]
        if self.focus_lstm is not None:
            parts.append(run_lstm(self.focus_lstm, path, lengths))
        return self.f_u(torch.cat(parts, -1))

    def naf_rep(self, h_cls: torch.Tensor) -> torch.Tensor:
        return self.f_naf(h_cls)

    def child_log_weights(self, h_f: torch.Tensor, candidates: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        scores = scaled_scores(self.child_q(h_f), self.child_k(candidates), self.config.d)
        return masked_log_softmax(scores, valid)


# -- decision rules ------------------------------------------------------------


def probability_pair(logits: torch.Tensor) -> torch.Tensor:
    return torch.softmax(logits, dim=-1)


def argmax_lowest(weights: Sequence[float], allowed: Sequence[bool] | None = None) -> int:
    """Index of the largest weight; ties go to the lowest index."""
    best, best_i = None, -1
    for i, w in enumerate(weights):
        if allowed is not None and not allowed[i]:
            continue
        if best is None or w > best:
            best, best_i = w, i
    if best_i < 0:
        raise DegenerateMaskError("no selectable position")
    return best_i


def select_parent(weights: Sequence[float], strategy: Strategy) -> int:
    if strategy is Strategy.FAIL_PROOF:
        return len(weights) - 1
    return argmax_lowest(weights)


def select_child(weights: Sequence[float], allowed: Sequence[bool] | None = None) -> int:
    return argmax_lowest(weights, allowed)


def child_candidate_mask(n_facts: int, n_rules: int, strategy: Strategy, mask_naf: bool = True) -> list[bool]:
    """Valid child positions over ``[facts..., rules..., NAF, END]``."""
    if strategy is Strategy.FAIL_PROOF:
        return [False] * n_facts + [True] * n_rules + [not mask_naf, True]
    return [True] * (n_facts + n_rules + 2)
