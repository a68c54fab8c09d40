"""Finite-difference check of the joint loss gradients on a tiny float64 model."""

from __future__ import annotations

import random
from dataclasses import replace
from typing import Sequence

import torch

from .encoder import ModelConfig
from .model import ProofModel
from .theory import Sample
from .train import build_gold_trace, compute_loss

TINY = ModelConfig(d_model=8, d=8, n_layers=1, n_heads=2, ff_dim=8, dropout=0.0, d_focus=4,
                   focus_layers=2, max_len=128, max_path=16)


def parameter_group(name: str) -> str:
    """Coarse group of a parameter name, as reported by :func:`grad_check`."""
    if "lstm" in name or "_span." in name:
        return "recurrent"
    if name.startswith("encoder."):
        return "encoder"
    for head in ("f_qa", "f_strategy", "f_q", "f_k", "f_u", "f_naf", "h_end", "child_q", "child_k",
                 "focus_pos", "focus"):
        if name.startswith(f"heads.{head}.") or name == f"heads.{head}":
            return head
    return name


def grad_check(samples: Sequence[Sample], config: ModelConfig | None = None, step: float = 1e-4,
               coords_per_tensor: int = 6, seed: int = 0, alpha: float = 1.0) -> dict[str, float]:
    """Max norm-relative error between analytic and central-difference gradients per group.

    Dropout is forced off so the loss is a deterministic function of the parameters.
    """
    config = replace(config or TINY, dropout=0.0)
    if max(config.d, config.d_model) > 8:
        raise ValueError("grad_check expects a tiny configuration (dim <= 8)")
    torch.manual_seed(seed)
    model = ProofModel(config).double()
    model.eval()
    traces = [build_gold_trace(s) for s in samples]

    def loss() -> torch.Tensor:
        return compute_loss(model, samples, traces, alpha).total

    model.zero_grad()
    loss().backward()
    rng = random.Random(seed)
    num: dict[str, list[float]] = {}
    ana: dict[str, list[float]] = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            group = parameter_group(name)
            flat, grad = p.view(-1), p.grad.view(-1) if p.grad is not None else torch.zeros(p.numel(), dtype=p.dtype)
            picks = rng.sample(range(p.numel()), min(coords_per_tensor, p.numel()))
            for i in picks:
                old = flat[i].item()
                flat[i] = old + step
                up = loss().item()
                flat[i] = old - step
                down = loss().item()
                flat[i] = old
                num.setdefault(group, []).append((up - down) / (2 * step))
                ana.setdefault(group, []).append(grad[i].item())
    out = {}
    for group in num:
        a = torch.tensor(ana[group], dtype=torch.float64)
        n = torch.tensor(num[group], dtype=torch.float64)
        scale = max(a.norm().item(), n.norm().item())
        out[group] = (a - n).norm().item() / scale if scale > 1e-12 else 0.0
    return out
