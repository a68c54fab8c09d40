"""Iterative backward proof decoding: greedy, beam search and gold-forcing hooks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .heads import argmax_lowest
from .model import NodeIndex, NodeTables, ProofModel
from .records import dumps, iter_jsonl
from .theory import (
    END,
    NAF,
    QUESTION,
    PartialProof,
    ProofGraph,
    Sample,
    Strategy,
    level_traversal_order,
    finalize_proof,
)
from .train import ordered_supporters


@dataclass
class InferConfig:
    beam_size: int = 8
    max_steps: int = 30
    force_gold_parent: bool = False
    force_gold_child: bool = False
    strategy_override: Strategy | None = None
    rule_answer_override: bool = False  # FAIL_PROOF answer from question polarity, not the QA head
    expansion: int = 4  # parents and children kept per hypothesis before pruning to beam_size

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.expansion < 1:
            raise ValueError("expansion must be >= 1")
        if self.strategy_override is not None:
            self.strategy_override = Strategy(self.strategy_override)

    @property
    def forcing(self) -> bool:
        return self.force_gold_parent or self.force_gold_child


@dataclass
class Prediction:
    id: str
    answer: bool
    strategy: Strategy
    proof: ProofGraph
    truncated: bool = False
    steps: list[dict] = field(default_factory=list)
    score: float = 0.0

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "answer": self.answer,
            "strategy": self.strategy.value,
            "proof": self.proof.to_record(),
            "truncated": self.truncated,
            "steps": self.steps,
            "score": self.score if math.isfinite(self.score) else None,
        }

    @classmethod
    def from_record(cls, rec: dict) -> Prediction:
        score = rec.get("score")
        return cls(str(rec["id"]), bool(rec["answer"]), Strategy(rec["strategy"]),
                   ProofGraph.from_record(rec["proof"]), bool(rec.get("truncated", False)),
                   list(rec.get("steps", [])), -math.inf if score is None else float(score))


class GoldOracle:
    """Dynamic gold choices for any partial proof, following the training trace order."""

    def __init__(self, proof: ProofGraph):
        self.children = {QUESTION: ordered_supporters(proof, QUESTION)}
        for n in proof.nodes:
            self.children[n] = ordered_supporters(proof, n)

    def remaining(self, partial: PartialProof, node: str) -> list[str]:
        have = set(partial.children.get(node, ()))
        return [c for c in self.children.get(node, ()) if c not in have]

    def parent(self, partial: PartialProof, path: Sequence[str]) -> str:
        for n in path:
            if self.remaining(partial, n):
                return n
        return path[-1]

    def child(self, partial: PartialProof, parent: str) -> str:
        rest = self.remaining(partial, parent)
        return rest[0] if rest else END


def allowed_children(partial: PartialProof, parent: str, index: NodeIndex) -> list[bool]:
    """Decoding constraints over child slots ``[sentences..., NAF, END]``.

    Blocks repeated edges and cycles; Q takes one child; NAF can only be closed off.
    """
    allowed = [True] * (index.n + 2)
    if parent == NAF or (parent == QUESTION and partial.children[QUESTION]):
        allowed[: index.n + 1] = [False] * (index.n + 1)
        return allowed
    blocked = partial.ancestors(parent) | {parent} | set(partial.children[parent])
    for node in blocked:
        if node != QUESTION:
            allowed[index.child_slot(node)] = False
    return allowed


def _heads_decision(model: ProofModel, tables: NodeTables, samples: Sequence[Sample],
                    config: InferConfig) -> list[tuple[bool, Strategy]]:
    heads = model.heads
    ans = heads.answer_logits(tables.h_cls)
    strat = heads.strategy_logits(tables.h_cls)
    out = []
    for b, sample in enumerate(samples):
        answer = argmax_lowest(ans[b].tolist()) == 0
        strategy = Strategy.PROOF if argmax_lowest(strat[b].tolist()) == 0 else Strategy.FAIL_PROOF
        if config.strategy_override is not None:
            strategy = config.strategy_override
        if strategy is Strategy.FAIL_PROOF and config.rule_answer_override:
            answer = not sample.question.atom.polarity
        out.append((answer, strategy))
    return out


def _log_to_prob(x: float) -> float:
    return math.exp(x) if math.isfinite(x) else 0.0


@torch.no_grad()
def generate_proofs(model: ProofModel, samples: Sequence[Sample], config: InferConfig | None = None) -> list[Prediction]:
    """Greedy decoding, batched across samples."""
    config = config or InferConfig()
    model.eval()
    tables = model.encode(samples)
    decisions = _heads_decision(model, tables, samples, config)
    oracles = [GoldOracle(s.canonical_proof) if config.forcing else None for s in samples]
    partials = [PartialProof() for _ in samples]
    preds = [Prediction(s.id, a, st, ProofGraph(frozenset(), frozenset()), True) for s, (a, st) in zip(samples, decisions)]
    live = list(range(len(samples)))
    for _ in range(config.max_steps):
        if not live:
            break
        paths = [level_traversal_order(partials[b]) for b in live]
        H, lengths = model.gather_paths(tables, live, paths)
        plog = model.heads.parent_log_weights(H, lengths)
        parent_pos, parent_lp = [], []
        for s, b in enumerate(live):
            path, row = paths[s], plog[s, : len(paths[s])].tolist()
            if config.force_gold_parent:
                pos = path.index(oracles[b].parent(partials[b], path))
            elif preds[b].strategy is Strategy.FAIL_PROOF:
                pos = len(path) - 1
            else:
                pos = argmax_lowest(row)
            parent_pos.append(pos)
            parent_lp.append(0.0 if preds[b].strategy is Strategy.FAIL_PROOF else row[pos])
        extra = torch.zeros(len(live), tables.children.shape[1], dtype=torch.bool)
        for s, b in enumerate(live):
            m = allowed_children(partials[b], paths[s][parent_pos[s]], tables.index[b])
            extra[s, : len(m)] = torch.tensor(m)
        clog = model.child_log_weights(tables, live, H, lengths, parent_pos,
                                       [preds[b].strategy for b in live], extra)
        still = []
        for s, b in enumerate(live):
            ni = tables.index[b]
            parent = paths[s][parent_pos[s]]
            row = clog[s, : ni.n + 2].tolist()
            if config.force_gold_child:
                slot = ni.child_slot(oracles[b].child(partials[b], parent))
            else:
                slot = argmax_lowest(row)
            child = ni.child_node(slot)
            pred = preds[b]
            pred.score += parent_lp[s] + row[slot]
            pred.steps.append({"parent": parent, "child": child,
                               "p_parent": _log_to_prob(parent_lp[s]), "p_child": _log_to_prob(row[slot])})
            if child == END:
                pred.truncated = False
            else:
                partials[b].add(parent, child)
                still.append(b)
        live = still
    for b, pred in enumerate(preds):
        pred.proof = finalize_proof(partials[b])
    return preds


def generate_proof(model: ProofModel, sample: Sample, config: InferConfig | None = None) -> Prediction:
    return generate_proofs(model, [sample], config)[0]


@dataclass
class BeamHypothesis:
    partial: PartialProof
    score: float = 0.0
    steps: list[dict] = field(default_factory=list)
    finished: bool = False

    def extend(self, parent: str, child: str, lp_parent: float, lp_child: float) -> BeamHypothesis:
        partial = self.partial
        if child != END:
            partial = partial.copy()
            partial.add(parent, child)
        step = {"parent": parent, "child": child, "p_parent": _log_to_prob(lp_parent), "p_child": _log_to_prob(lp_child)}
        return BeamHypothesis(partial, self.score + lp_parent + lp_child, self.steps + [step], child == END)


@torch.no_grad()
def beam_search(model: ProofModel, sample: Sample, config: InferConfig | None = None
                ) -> tuple[Prediction, list[BeamHypothesis]]:
    """Top-K search over (parent, child) continuations scored by summed log-weights.

    Returns the best prediction and the finished hypotheses, best first.
    """
    config = config or InferConfig()
    if config.forcing:
        return generate_proof(model, sample, config), []
    model.eval()
    K, E = config.beam_size, config.expansion
    greedy = generate_proof(model, sample, config)
    tables = model.encode([sample])
    answer, strategy = _heads_decision(model, tables, [sample], config)[0]
    fail = strategy is Strategy.FAIL_PROOF
    ni = tables.index[0]
    live = [BeamHypothesis(PartialProof())]
    finished: list[BeamHypothesis] = []
    for _ in range(config.max_steps):
        if not live:
            break
        if finished and max(h.score for h in live) < max(h.score for h in finished):
            break  # scores only decrease, nothing live can overtake
        paths = [level_traversal_order(h.partial) for h in live]
        H, lengths = model.gather_paths(tables, [0] * len(live), paths)
        plog = model.heads.parent_log_weights(H, lengths)
        pairs = []  # (score, hyp index, parent position, parent log-weight)
        for i, h in enumerate(live):
            if fail:
                pairs.append((h.score, i, len(paths[i]) - 1, 0.0))
                continue
            row = plog[i, : len(paths[i])].tolist()
            for pos in sorted(range(len(row)), key=lambda j: -row[j])[:E]:
                pairs.append((h.score + row[pos], i, pos, row[pos]))
        pairs = sorted(pairs, key=lambda p: -p[0])[:K]
        rows_h = [p[1] for p in pairs]
        extra = torch.zeros(len(pairs), tables.children.shape[1], dtype=torch.bool)
        for s, (_, i, pos, _) in enumerate(pairs):
            m = allowed_children(live[i].partial, paths[i][pos], ni)
            extra[s, : len(m)] = torch.tensor(m)
        sel = torch.tensor(rows_h)
        clog = model.child_log_weights(tables, [0] * len(pairs), H[sel], lengths[sel],
                                       [p[2] for p in pairs], [strategy] * len(pairs), extra)
        expansions = []
        for s, (score, i, pos, lp_parent) in enumerate(pairs):
            row = clog[s, : ni.n + 2].tolist()
            options = [j for j in sorted(range(len(row)), key=lambda j: -row[j]) if math.isfinite(row[j])][:E]
            for slot in options:
                expansions.append((score + row[slot], s, slot))
        expansions = sorted(expansions, key=lambda e: -e[0])[:K]
        previous, live = live, []
        for _, s, slot in expansions:
            _, i, pos, lp_parent = pairs[s]
            hyp = previous[i].extend(paths[i][pos], ni.child_node(slot), lp_parent, clog[s, slot].item())
            if not hyp.finished:
                live.append(hyp)
            elif all(not _same_proof(hyp, f) for f in finished):
                finished.append(hyp)
    return _choose(sample, answer, strategy, greedy, finished, live)


def _same_proof(a: BeamHypothesis, b: BeamHypothesis) -> bool:
    return finalize_proof(a.partial) == finalize_proof(b.partial)


def _choose(sample: Sample, answer: bool, strategy: Strategy, greedy: Prediction,
            finished: list[BeamHypothesis], live: list[BeamHypothesis]) -> tuple[Prediction, list[BeamHypothesis]]:
    ranked = sorted(finished, key=lambda h: -h.score)
    pool = [(h.score, h) for h in ranked]
    if not greedy.truncated:
        # the greedy path competes too, so the beam result can never score below it
        pool.append((greedy.score, greedy))
    if not pool:
        pool = [(h.score, h) for h in sorted(live, key=lambda h: -h.score)] + [(greedy.score, greedy)]
    best = max(pool, key=lambda p: p[0])[1]  # max keeps the first of equal scores
    if isinstance(best, Prediction):
        return best, ranked
    pred = Prediction(sample.id, answer, strategy, finalize_proof(best.partial), not best.finished,
                      best.steps, best.score)
    return pred, ranked


def predict(model: ProofModel, samples: Sequence[Sample], config: InferConfig | None = None,
            batch_size: int = 64) -> list[Prediction]:
    """Greedy (batched) when beam_size is 1 or forcing is on, beam search otherwise."""
    config = config or InferConfig()
    if config.beam_size == 1 or config.forcing:
        out = []
        for start in range(0, len(samples), batch_size):
            out += generate_proofs(model, samples[start: start + batch_size], config)
        return out
    return [beam_search(model, s, config)[0] for s in samples]


def write_predictions(path: str | Path, predictions: Iterable[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(dumps(p.to_record()) + "\n")


def read_predictions(path: str | Path) -> list[Prediction]:
    from .records import DatasetError

    out = []
    for lineno, rec in iter_jsonl(path):
        try:
            out.append(Prediction.from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed prediction ({exc!r})", lineno, str(path)) from None
    return out
