"""Teacher-forced gold traces, the joint loss and the optimisation loop."""

from __future__ import annotations

import json
import logging
import math
import random
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .encoder import ModelConfig
from .model import ProofModel
from .records import read_samples
from .theory import (
    END,
    QUESTION,
    NodeKind,
    PartialProof,
    ProofGraph,
    Sample,
    Strategy,
    StructureError,
    level_traversal_order,
    node_kind,
    node_sort_key,
)

log = logging.getLogger(__name__)

_KIND_PRIORITY = {NodeKind.NAF: 0, NodeKind.FACT: 1, NodeKind.RULE: 2}


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TraceStep:
    path: tuple[str, ...]  # level-traversal order before the step
    parent: str
    child: str
    include_parent_loss: bool

    @property
    def parent_index(self) -> int:
        return self.path.index(self.parent)


@dataclass(frozen=True)
class GoldTrace:
    steps: tuple[TraceStep, ...]

    def replay(self) -> PartialProof:
        partial = PartialProof()
        for step in self.steps:
            if step.child != END:
                partial.add(step.parent, step.child)
        return partial


def ordered_supporters(proof: ProofGraph, node: str, rng: random.Random | None = None) -> list[str]:
    """Children of ``node`` in the backward construction: NAF, then facts, then rules.

    Within a type the order is shuffled by ``rng`` (canonical id order without one).
    """
    if node == QUESTION:
        return proof.sinks()[:1]
    groups: dict[int, list[str]] = {0: [], 1: [], 2: []}
    for u in proof.predecessors(node):
        groups[_KIND_PRIORITY[node_kind(u)]].append(u)
    out = []
    for k in (0, 1, 2):
        g = sorted(groups[k], key=node_sort_key)
        if rng is not None:
            rng.shuffle(g)
        out += g
    return out


def build_gold_trace(sample: Sample, rng: random.Random | None = None,
                     proof: ProofGraph | None = None) -> GoldTrace:
    """Breadth-first teacher-forcing trace of the canonical gold proof, closed by END."""
    proof = sample.canonical_proof if proof is None else proof
    errors = proof.structural_errors()
    if errors:
        raise StructureError(f"sample {sample.id}: gold proof invalid: {errors}")
    include = sample.strategy is Strategy.PROOF
    partial = PartialProof()
    steps = []
    queue = deque([QUESTION])
    while queue:
        parent = queue.popleft()
        for child in ordered_supporters(proof, parent, rng):
            steps.append(TraceStep(tuple(level_traversal_order(partial)), parent, child, include))
            fresh = child not in partial
            partial.add(parent, child)
            if fresh:
                queue.append(child)
    path = tuple(level_traversal_order(partial))
    # END hangs off the most recently appended node, the last one in level order
    steps.append(TraceStep(path, path[-1], END, include))
    return GoldTrace(tuple(steps))


# -- loss ----------------------------------------------------------------------------


@dataclass
class LossTerms:
    total: torch.Tensor
    qa: torch.Tensor
    strategy: torch.Tensor
    parent: torch.Tensor
    child: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("total", "qa", "strategy", "parent", "child")}


def compute_loss(model: ProofModel, samples: Sequence[Sample], traces: Sequence[GoldTrace],
                 alpha: float = 1.0) -> LossTerms:
    """L = L_qa + L_parent + L_child + alpha * L_strategy, averaged over the batch."""
    tables = model.encode(samples)
    B = len(samples)
    device = tables.h_cls.device
    answer_t = torch.tensor([0 if s.answer else 1 for s in samples], device=device)
    strat_t = torch.tensor([0 if s.strategy is Strategy.PROOF else 1 for s in samples], device=device)
    l_qa = nn.functional.cross_entropy(model.heads.answer_logits(tables.h_cls), answer_t)
    l_strategy = nn.functional.cross_entropy(model.heads.strategy_logits(tables.h_cls), strat_t)

    rows, paths, parent_pos, include, child_slots, strategies = [], [], [], [], [], []
    for b, (sample, trace) in enumerate(zip(samples, traces)):
        ni = tables.index[b]
        for step in trace.steps:
            rows.append(b)
            paths.append(step.path)
            parent_pos.append(step.parent_index)
            include.append(step.include_parent_loss)
            child_slots.append(ni.child_slot(step.child))
            strategies.append(sample.strategy)
    S = len(rows)
    path, lengths = model.gather_paths(tables, rows, paths)
    plog = model.heads.parent_log_weights(path, lengths)
    ar = torch.arange(S, device=device)
    inc = torch.tensor(include, dtype=plog.dtype, device=device)
    picked = plog[ar, torch.tensor(parent_pos, device=device)]
    l_parent = -(torch.where(inc > 0, picked, torch.zeros_like(picked))).sum() / B
    clog = model.child_log_weights(tables, rows, path, lengths, parent_pos, strategies)
    l_child = -clog[ar, torch.tensor(child_slots, device=device)].sum() / B
    total = l_qa + l_parent + l_child + alpha * l_strategy
    if not torch.isfinite(total):
        raise TrainingDiverged(f"non-finite loss on batch starting at sample {samples[0].id}")
    return LossTerms(total, l_qa, l_strategy, l_parent, l_child)


# -- optimisation --------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 16
    alpha: float = 1.0
    lr: dict[str, float] = field(default_factory=lambda: dict(DESK_LR))
    weight_decay: float = 0.01
    seed: int = 42
    grad_clip: float = 1.0
    checkpoint_every: int = 1
    dev_beam: int = 1
    dev_limit: int | None = None
    threads: int | None = None

    def __post_init__(self):
        if any(v <= 0 for v in self.lr.values()):
            raise ValueError("learning rates must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        missing = set(PAPER_LR) - set(self.lr)
        if missing:
            raise ValueError(f"missing learning-rate groups: {sorted(missing)}")

    @classmethod
    def from_file(cls, path: str | Path) -> TrainConfig:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        if "lr" in data:
            data["lr"] = {**DESK_LR, **data["lr"]}
        return cls(**data)


# learning rates of the full-size model, whose encoder starts pretrained
PAPER_LR = {"encoder": 1e-5, "classifier": 1e-5, "parent": 2e-4, "child": 5e-4, "recurrent": 1e-3}
# desk-scale defaults for an encoder trained from scratch
DESK_LR = {"encoder": 1e-3, "classifier": 1e-3, "parent": 2e-4, "child": 5e-4, "recurrent": 1e-3}


def parameter_groups(model: ProofModel) -> dict[str, list[nn.Parameter]]:
    groups: dict[str, list[nn.Parameter]] = {k: [] for k in PAPER_LR}
    for name, p in model.named_parameters():
        if "span" in name and model.config.pooling == "lstm" or "lstm" in name:
            groups["recurrent"].append(p)
        elif name.startswith("encoder."):
            groups["encoder"].append(p)
        elif name.startswith(("heads.f_qa", "heads.f_strategy")):
            groups["classifier"].append(p)
        elif name.startswith(("heads.f_q.", "heads.f_k.")):
            groups["parent"].append(p)
        else:
            groups["child"].append(p)
    return groups


def make_optimizer(model: ProofModel, config: TrainConfig) -> torch.optim.Optimizer:
    groups = [
        {"params": params, "lr": config.lr[name], "name": name}
        for name, params in parameter_groups(model).items() if params
    ]
    return torch.optim.AdamW(groups, weight_decay=config.weight_decay)


def epoch_traces(samples: Sequence[Sample], seed: int, epoch: int) -> list[GoldTrace]:
    return [build_gold_trace(s, random.Random(f"{seed}:{epoch}:{s.id}")) for s in samples]


def train(train_data: str | Path | Sequence[Sample], dev_data: str | Path | Sequence[Sample] | None,
          config: TrainConfig | None = None, model_config: ModelConfig | None = None,
          out_dir: str | Path = "run", model: ProofModel | None = None) -> dict:
    """Train and keep the best-dev-FA checkpoint at ``out_dir/model.pt``.

    Metrics go to ``out_dir/metrics.jsonl`` (one JSON object per epoch and split).
    """
    from .evaluate import evaluate_predictions
    from .infer import InferConfig, predict

    config = config or TrainConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.threads:
        torch.set_num_threads(config.threads)
    train_samples = read_samples(train_data) if isinstance(train_data, (str, Path)) else list(train_data)
    dev_samples = None
    if dev_data is not None:
        dev_samples = read_samples(dev_data) if isinstance(dev_data, (str, Path)) else list(dev_data)
        if config.dev_limit:
            dev_samples = dev_samples[: config.dev_limit]
    torch.manual_seed(config.seed)
    if model is None:
        model = ProofModel(model_config or ModelConfig())
    opt = make_optimizer(model, config)
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("")
    best_path, last_path = out / "model.pt", out / "last.pt"
    model.save(best_path, {"epoch": 0})
    model.save(last_path, {"epoch": 0})
    best_fa = -1.0
    history = []

    def emit(record: dict) -> None:
        history.append(record)
        with open(metrics_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    for epoch in range(1, config.epochs + 1):
        model.train()
        t0 = time.perf_counter()
        order = list(range(len(train_samples)))
        random.Random(f"{config.seed}:order:{epoch}").shuffle(order)
        traces = epoch_traces(train_samples, config.seed, epoch)
        sums = {"total": 0.0, "qa": 0.0, "strategy": 0.0, "parent": 0.0, "child": 0.0}
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start: start + config.batch_size]
            try:
                terms = compute_loss(model, [train_samples[i] for i in idx], [traces[i] for i in idx], config.alpha)
            except TrainingDiverged:
                model.load_state_dict(ProofModel.load(last_path).state_dict())
                raise
            opt.zero_grad()
            terms.total.backward()
            if config.grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            for k, v in terms.as_floats().items():
                sums[k] += v
            n_batches += 1
        train_rec = {"epoch": epoch, "split": "train", "seconds": round(time.perf_counter() - t0, 2),
                     **{f"loss_{k}": v / max(n_batches, 1) for k, v in sums.items()}}
        emit(train_rec)
        log.info("epoch %d train loss %.4f (%.1fs)", epoch, train_rec["loss_total"], train_rec["seconds"])
        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            model.save(last_path, {"epoch": epoch})
        if dev_samples:
            model.eval()
            preds = predict(model, dev_samples, InferConfig(beam_size=config.dev_beam))
            report = evaluate_predictions(preds, dev_samples)
            overall = report.overall
            emit({"epoch": epoch, "split": "dev", "qa": overall.qa, "pa": overall.pa, "fa": overall.fa})
            log.info("epoch %d dev QA %.3f PA %.3f FA %.3f", epoch, overall.qa, overall.pa, overall.fa)
            if overall.fa > best_fa:
                best_fa = overall.fa
                model.save(best_path, {"epoch": epoch, "dev_fa": overall.fa})
        else:
            model.save(best_path, {"epoch": epoch})
    model.eval()
    return {"checkpoint": str(best_path), "last": str(last_path), "metrics": history,
            "config": asdict(config), "model_config": model.config.to_dict()}
