"""Encoder + heads, node bookkeeping and checkpoint I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .encoder import Encoder, ModelConfig
from .heads import ReasonerHeads, child_candidate_mask
from .theory import END, NAF, QUESTION, Sample, Strategy, build_input_layout

CHECKPOINT_FORMAT = "backprover-checkpoint"
CHECKPOINT_VERSION = 1


class NodeIndex:
    """Slot numbering of proof nodes for one sample.

    Parent-side slots: ``Q, s1..sn, NAF``; child-side slots: ``s1..sn, NAF, END``.
    """

    def __init__(self, sample: Sample):
        self.ids = sample.theory.node_ids
        self.n_facts = len(sample.theory.facts)
        self.n_rules = len(sample.theory.rules)
        self.pos = {nid: i for i, nid in enumerate(self.ids)}
        self.n = len(self.ids)

    def parent_slot(self, node: str) -> int:
        if node == QUESTION:
            return 0
        if node == NAF:
            return self.n + 1
        return 1 + self.pos[node]

    def child_slot(self, node: str) -> int:
        if node == NAF:
            return self.n
        if node == END:
            return self.n + 1
        return self.pos[node]

    def child_node(self, slot: int) -> str:
        if slot == self.n:
            return NAF
        if slot == self.n + 1:
            return END
        return self.ids[slot]


@dataclass
class NodeTables:
    h_cls: torch.Tensor  # [B, d]
    parent_flat: torch.Tensor  # all parent-side node reps, plus a trailing zero row for padding
    parent_offset: list[int]
    children: torch.Tensor  # [B, C, d] child candidates (padded)
    child_count: list[int]
    index: list[NodeIndex]


class ProofModel(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        self.encoder = Encoder(self.config)
        self.heads = ReasonerHeads(self.config)

    def layout(self, sample: Sample):
        return build_input_layout(sample.question, sample.theory,
                                  strip_function_words=self.config.strip_function_words,
                                  max_len=self.config.max_len)

    def encode(self, samples: Sequence[Sample]) -> NodeTables:
        enc = self.encoder([self.layout(s) for s in samples])
        h_naf = self.heads.naf_rep(enc.h_cls)
        d = enc.h_cls.shape[1]
        parent_rows, offsets, child_rows = [], [], []
        pos = 0
        for b, n in enumerate(enc.n_sentences):
            offsets.append(pos)
            parent_rows += [enc.h_q[b:b + 1], enc.h_g[b, :n], h_naf[b:b + 1]]
            child_rows.append(torch.cat([enc.h_n[b, :n], h_naf[b:b + 1], self.heads.h_end[None]], 0))
            pos += n + 2
        parent_rows.append(enc.h_cls.new_zeros(1, d))
        C = max(r.shape[0] for r in child_rows)
        children = torch.stack([torch.cat([r, r.new_zeros(C - r.shape[0], d)], 0) for r in child_rows])
        return NodeTables(enc.h_cls, torch.cat(parent_rows, 0), offsets, children,
                          [r.shape[0] for r in child_rows], [NodeIndex(s) for s in samples])

    def gather_paths(self, tables: NodeTables, rows: Sequence[int],
                     paths: Sequence[Sequence[str]]) -> tuple[torch.Tensor, torch.Tensor]:
        """Parent-side reps of each path (node ids in level order) -> [S, T, d], lengths."""
        pad = tables.parent_flat.shape[0] - 1
        T = max(len(p) for p in paths)
        idx = torch.full((len(paths), T), pad, dtype=torch.long)
        for s, (b, path) in enumerate(zip(rows, paths)):
            ni, off = tables.index[b], tables.parent_offset[b]
            idx[s, : len(path)] = torch.tensor([off + ni.parent_slot(n) for n in path])
        lengths = torch.tensor([len(p) for p in paths])
        return tables.parent_flat[idx.to(tables.parent_flat.device)], lengths

    def child_log_weights(self, tables: NodeTables, rows: Sequence[int], path: torch.Tensor,
                          lengths: torch.Tensor, parent_pos: Sequence[int], strategies: Sequence[Strategy],
                          extra_mask: torch.Tensor | None = None) -> torch.Tensor:
        """Child attention log-weights for each (path, chosen parent) row -> [S, C]."""
        S = len(rows)
        device = path.device
        h_gp = path[torch.arange(S), torch.tensor(list(parent_pos))]
        fail = torch.tensor([s is Strategy.FAIL_PROOF for s in strategies], device=device)
        h_f = self.heads.path_focus(h_gp, path, lengths, fail)
        rows_t = torch.tensor(list(rows), device=device)
        cands = tables.children[rows_t]
        C = cands.shape[1]
        valid = torch.zeros(S, C, dtype=torch.bool, device=device)
        for s, (b, strat) in enumerate(zip(rows, strategies)):
            ni = tables.index[b]
            m = child_candidate_mask(ni.n_facts, ni.n_rules, strat, self.config.mask_naf_in_fail)
            valid[s, : len(m)] = torch.tensor(m)
        if extra_mask is not None:
            valid &= extra_mask
        return self.heads.child_log_weights(h_f, cands, valid)

    # -- checkpoints --------------------------------------------------------------

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        torch.save({
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "state_dict": {k: v.detach().cpu() for k, v in self.state_dict().items()},
            "extra": extra or {},
        }, path)

    @classmethod
    def load(cls, path: str | Path) -> ProofModel:
        blob = torch.load(path, map_location="cpu", weights_only=True)
        if blob.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
        if blob.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
        model = cls(ModelConfig(**blob["config"]))
        model.load_state_dict(blob["state_dict"])
        model.eval()
        return model
