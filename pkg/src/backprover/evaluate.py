"""QA / PA / FA metrics by proof depth, any-gold proof matching and latency benchmarking."""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .infer import InferConfig, Prediction, generate_proof, read_predictions
from .model import ProofModel
from .records import read_samples
from .theory import ProofGraph, Sample

# full-size reference point (large pretrained encoder, 70k training samples); not reachable at desk scale
REFERENCE_ALL_DEPTHS = {"qa": 0.994, "pa": 0.935, "fa": 0.935}


class AlignmentError(ValueError):
    def __init__(self, missing: Sequence[str], extra: Sequence[str], duplicated: Sequence[str] = ()):
        parts = []
        if missing:
            parts.append(f"no prediction for {_preview(missing)}")
        if extra:
            parts.append(f"unknown prediction ids {_preview(extra)}")
        if duplicated:
            parts.append(f"duplicate ids {_preview(duplicated)}")
        super().__init__("; ".join(parts))
        self.missing, self.extra, self.duplicated = list(missing), list(extra), list(duplicated)


def _preview(ids: Sequence[str], n: int = 5) -> str:
    head = ", ".join(ids[:n])
    return head + (f" (+{len(ids) - n} more)" if len(ids) > n else "")


def proof_match(predicted: ProofGraph, golds: Sequence[ProofGraph]) -> bool:
    return any(predicted.nodes == g.nodes and predicted.edges == g.edges for g in golds)


@dataclass
class MetricRow:
    depth: int | str
    count: int = 0
    qa_hits: int = 0
    pa_hits: int = 0
    fa_hits: int = 0

    @property
    def qa(self) -> float:
        return self.qa_hits / self.count if self.count else 0.0

    @property
    def pa(self) -> float:
        return self.pa_hits / self.count if self.count else 0.0

    @property
    def fa(self) -> float:
        return self.fa_hits / self.count if self.count else 0.0

    def to_dict(self) -> dict:
        return {"depth": self.depth, "count": self.count, "qa": self.qa, "pa": self.pa, "fa": self.fa}


@dataclass
class EvalReport:
    rows: list[MetricRow]
    overall: MetricRow
    latency: LatencyReport | None = None

    def to_dict(self) -> dict:
        out = {"rows": [r.to_dict() for r in self.rows], "all": self.overall.to_dict()}
        if self.latency is not None:
            out["latency"] = self.latency.to_dict()
        return out

    def format(self) -> str:
        lines = [f"{'depth':>5} {'count':>6} {'QA':>6} {'PA':>6} {'FA':>6}"]
        for r in [*self.rows, self.overall]:
            lines.append(f"{r.depth!s:>5} {r.count:>6} {100 * r.qa:6.1f} {100 * r.pa:6.1f} {100 * r.fa:6.1f}")
        if self.latency is not None:
            lines += ["", self.latency.format()]
        return "\n".join(lines)


def evaluate_predictions(predictions: Sequence[Prediction], samples: Sequence[Sample]) -> EvalReport:
    by_id = {p.id: p for p in predictions}
    sample_ids = [s.id for s in samples]
    pred_ids = [p.id for p in predictions]
    dup = sorted({i for i in pred_ids if pred_ids.count(i) > 1}) if len(by_id) != len(pred_ids) else []
    missing = [i for i in sample_ids if i not in by_id]
    known = set(sample_ids)
    extra = [i for i in pred_ids if i not in known]
    if missing or extra or dup:
        raise AlignmentError(missing, extra, dup)
    rows: dict[int, MetricRow] = {}
    overall = MetricRow("all")
    for s in samples:
        p = by_id[s.id]
        qa = p.answer == s.answer
        pa = not p.truncated and proof_match(p.proof, s.gold_proofs)
        for row in (rows.setdefault(s.depth, MetricRow(s.depth)), overall):
            row.count += 1
            row.qa_hits += qa
            row.pa_hits += pa
            row.fa_hits += qa and pa
    return EvalReport([rows[d] for d in sorted(rows)], overall)


def evaluate(predictions_path: str | Path, dataset_path: str | Path) -> EvalReport:
    return evaluate_predictions(read_predictions(predictions_path), read_samples(dataset_path))


# -- latency -------------------------------------------------------------------------


@dataclass
class LatencyRow:
    depth: int
    count: int
    mean: float  # seconds per sample, averaged over repetitions
    std: float  # spread of the per-repetition means


@dataclass
class LatencyReport:
    rows: list[LatencyRow]
    slope: float  # seconds per unit of depth, least-squares over per-depth means
    intercept: float
    repetitions: int
    per_rep: list[dict[int, float]] = field(default_factory=list)

    @property
    def depth0_mean(self) -> float | None:
        return next((r.mean for r in self.rows if r.depth == 0), None)

    @property
    def relative_slope(self) -> float | None:
        base = self.depth0_mean
        return self.slope / base if base else None

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "slope": self.slope, "intercept": self.intercept,
                "depth0_mean": self.depth0_mean, "relative_slope": self.relative_slope,
                "repetitions": self.repetitions}

    def format(self) -> str:
        lines = [f"{'depth':>5} {'count':>6} {'mean ms':>9} {'std ms':>8}"]
        for r in self.rows:
            lines.append(f"{r.depth:>5} {r.count:>6} {1e3 * r.mean:9.2f} {1e3 * r.std:8.2f}")
        rel = self.relative_slope
        lines.append(f"slope {1e3 * self.slope:.3f} ms/depth"
                     + (f" ({100 * rel:.1f}% of the depth-0 mean)" if rel is not None else ""))
        return "\n".join(lines)


def latency_bench(model: ProofModel, samples: Sequence[Sample], config: InferConfig | None = None,
                  repetitions: int = 3, warmup: int = 10) -> LatencyReport:
    """Per-sample wall time (encode + decode, beam 1) grouped by gold depth."""
    config = config or InferConfig(beam_size=1)
    if config.beam_size != 1:
        raise ValueError("latency is measured with beam_size 1")
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for s in samples[:warmup]:
            generate_proof(model, s, config)
        per_rep: list[dict[int, float]] = []
        for _ in range(repetitions):
            times: dict[int, list[float]] = {}
            for s in samples:
                t0 = time.perf_counter()
                generate_proof(model, s, config)
                times.setdefault(s.depth, []).append(time.perf_counter() - t0)
            per_rep.append({d: statistics.fmean(v) for d, v in times.items()})
    finally:
        torch.set_num_threads(threads)
    depths = sorted(per_rep[0])
    counts = {d: sum(1 for s in samples if s.depth == d) for d in depths}
    rows = [LatencyRow(d, counts[d], statistics.fmean(r[d] for r in per_rep),
                       statistics.pstdev([r[d] for r in per_rep])) for d in depths]
    if len(rows) >= 2:
        fit = statistics.linear_regression([float(r.depth) for r in rows], [r.mean for r in rows])
        slope, intercept = fit.slope, fit.intercept
    else:
        slope, intercept = 0.0, rows[0].mean if rows else 0.0
    return LatencyReport(rows, slope, intercept, repetitions, per_rep)


def write_report(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def plot_report(report: EvalReport, path: str | Path) -> None:
    """Per-depth QA/PA/FA bar chart (requires matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [str(r.depth) for r in report.rows] + ["all"]
    rows = [*report.rows, report.overall]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.27
    for k, metric in enumerate(("qa", "pa", "fa")):
        ax.bar([i + (k - 1) * width for i in range(len(rows))], [getattr(r, metric) for r in rows], width,
               label=metric.upper())
    ax.set_xticks(range(len(rows)), labels)
    ax.set_xlabel("proof depth")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
