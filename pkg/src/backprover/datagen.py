"""Synthetic depth-stratified rule-reasoning datasets with oracle labels."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import oracle
from .records import DatasetError, iter_jsonl, sample_to_record, write_jsonl
from .theory import (
    DEFAULT_MAX_LEN,
    DEFAULT_VOCAB,
    VAR,
    Atom,
    Fact,
    InputTooLongError,
    Question,
    Rule,
    Sample,
    Strategy,
    Theory,
    Vocabulary,
    build_input_layout,
)

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")


class GenerationError(RuntimeError):
    pass


@dataclass
class GenConfig:
    entity_count: int = 3
    attribute_count: int = 7
    fact_count: tuple[int, int] = (2, 5)
    rule_count: tuple[int, int] = (3, 6)
    max_antecedents: int = 2
    negation_enabled: bool = True
    negation_prob: float = 0.25
    grounded_rule_prob: float = 0.2
    max_sentences: int = 12
    target_depth_distribution: dict[int, float] = field(default_factory=lambda: {0: 0.3, 1: 0.4, 2: 0.3})
    fail_share: float = 0.5  # fraction of fail-proof samples at depth 0
    fail_decay: float = 0.6  # multiplied in per depth level
    samples_per_split: dict[str, int] = field(default_factory=lambda: {"train": 8000, "dev": 1000, "test": 2000})
    seed: int = 42
    node_bound: int = 12
    retry_budget: int = 10_000
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self):
        self.target_depth_distribution = {int(k): float(v) for k, v in self.target_depth_distribution.items()}
        self.fact_count = tuple(self.fact_count)
        self.rule_count = tuple(self.rule_count)
        total = sum(self.target_depth_distribution.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"depth fractions sum to {total}, expected 1")
        if any(d < 0 for d in self.target_depth_distribution):
            raise ValueError("depths must be non-negative")
        if not 1 <= self.max_antecedents:
            raise ValueError("max_antecedents must be >= 1")
        if self.fact_count[0] + self.rule_count[0] > self.max_sentences:
            raise ValueError("minimum theory size exceeds max_sentences")

    def fail_fraction(self, depth: int) -> float:
        return self.fail_share * self.fail_decay ** depth

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fact_count"], d["rule_count"] = list(self.fact_count), list(self.rule_count)
        d["target_depth_distribution"] = {str(k): v for k, v in self.target_depth_distribution.items()}
        return d


@dataclass(frozen=True)
class Bucket:
    depth: int
    strategy: Strategy
    answer: bool

    def __str__(self) -> str:
        return f"(depth={self.depth}, {self.strategy.value}, {self.answer})"


def _largest_remainder(total: int, weights: dict) -> dict:
    raw = {k: total * w for k, w in weights.items()}
    counts = {k: int(v) for k, v in raw.items()}
    leftover = total - sum(counts.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - counts[k]), k))[:leftover]:
        counts[k] += 1
    return counts


def bucket_schedule(config: GenConfig, split: str, n: int) -> list[Bucket]:
    """Exact per-depth counts, then fail/proof split, then alternating answers; shuffled."""
    buckets: list[Bucket] = []
    for depth, n_d in sorted(_largest_remainder(n, config.target_depth_distribution).items()):
        n_fail = round(n_d * config.fail_fraction(depth))
        for strategy, m in ((Strategy.FAIL_PROOF, n_fail), (Strategy.PROOF, n_d - n_fail)):
            buckets += [Bucket(depth, strategy, i % 2 == 0) for i in range(m)]
    random.Random(f"{config.seed}:{split}:schedule").shuffle(buckets)
    return buckets


def random_theory(config: GenConfig, rng: random.Random, vocab: Vocabulary = DEFAULT_VOCAB) -> Theory:
    entities = rng.sample(vocab.entities, config.entity_count)
    attrs = rng.sample(vocab.attributes, config.attribute_count)  # order doubles as a layering
    n_facts = rng.randint(*config.fact_count)
    n_rules = min(rng.randint(*config.rule_count), config.max_sentences - n_facts)

    fact_atoms: list[Atom] = []
    base = attrs[: max(2, len(attrs) // 2)]
    while len(fact_atoms) < n_facts:
        atom = Atom(rng.choice(entities), rng.choice(base), True)
        if atom not in fact_atoms:
            fact_atoms.append(atom)

    rules: list[Rule] = []
    texts = set()
    attempts = 0
    while len(rules) < n_rules and attempts < 100:
        attempts += 1
        k = rng.randrange(1, len(attrs))
        n_ants = rng.randint(1, min(config.max_antecedents, k))
        ant_attrs = rng.sample(attrs[:k], n_ants)
        subject = VAR if rng.random() >= config.grounded_rule_prob else rng.choice(entities)
        ants = tuple(
            Atom(subject, a, not (config.negation_enabled and rng.random() < config.negation_prob))
            for a in ant_attrs
        )
        rule = Rule(f"R{len(rules) + 1}", ants, Atom(subject, attrs[k], True))
        if rule.text not in texts:
            texts.add(rule.text)
            rules.append(rule)
    facts = tuple(Fact(f"F{i + 1}", a) for i, a in enumerate(fact_atoms))
    return Theory(facts, tuple(rules))


def label_question(theory: Theory, question: Question, table: oracle.DerivationTable) -> tuple[bool, Strategy, int]:
    answer, strategy = oracle.answer_and_strategy(theory, question, table)
    if strategy is Strategy.PROOF:
        target = question.atom if question.atom in table.model else question.atom.negated()
        return answer, strategy, table.depth[target]
    return answer, strategy, len(oracle.fail_chain(theory, question, table))


def gold_proofs(theory: Theory, question: Question, strategy: Strategy, table: oracle.DerivationTable,
                node_bound: int) -> tuple[tuple, int]:
    if strategy is Strategy.FAIL_PROOF:
        chain = oracle.fail_chain(theory, question, table)
        return (chain,), len(chain)
    canonical, depth = oracle.extract_gold_proof(theory, question, table)
    minimal = oracle.minimal_proofs(oracle.enumerate_proofs(theory, question, node_bound, table))
    if not minimal:
        return (canonical,), depth
    if canonical not in minimal:
        raise GenerationError(f"canonical proof {canonical.to_record()} not among enumerated minimal proofs")
    return (canonical, *(p for p in minimal if p != canonical)), depth


def generate_sample(config: GenConfig, rng: random.Random, bucket: Bucket, sample_id: str = "",
                    vocab: Vocabulary = DEFAULT_VOCAB) -> Sample:
    """Rejection-sample theories until one offers a question in ``bucket``."""
    for _ in range(config.retry_budget):
        theory = random_theory(config, rng, vocab)
        try:
            table = oracle.forward_chain(theory)
        except (oracle.StratificationError, oracle.ConsistencyError):
            continue
        candidates = []
        for entity in theory.entities():
            for attr in theory.attributes():
                for polarity in (True, False):
                    q = Question(Atom(entity, attr, polarity))
                    if label_question(theory, q, table) == (bucket.answer, bucket.strategy, bucket.depth):
                        candidates.append(q)
        if not candidates:
            continue
        question = rng.choice(candidates)
        try:
            build_input_layout(question, theory, max_len=config.max_len)
        except InputTooLongError:
            continue
        proofs, depth = gold_proofs(theory, question, bucket.strategy, table, config.node_bound)
        return Sample(sample_id, theory, question, bucket.answer, bucket.strategy, depth, proofs)
    raise GenerationError(f"retry budget exhausted for bucket {bucket}")


def _generate_one(args) -> dict:
    config, split, index, bucket = args
    rng = random.Random(f"{config.seed}:{split}:{index}")
    return sample_to_record(generate_sample(config, rng, bucket, f"{split}-{index:06d}"))


def generate_split(config: GenConfig, split: str, workers: int = 1) -> list[dict]:
    n = config.samples_per_split.get(split, 0)
    jobs = [(config, split, i, b) for i, b in enumerate(bucket_schedule(config, split, n))]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_generate_one, jobs, chunksize=64))
    return [_generate_one(j) for j in jobs]


def generate_dataset(config: GenConfig, out_dir: str | Path, workers: int = 1) -> dict:
    """Write ``<split>.jsonl`` per split plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for split in SPLITS:
        if split not in config.samples_per_split:
            continue
        records = generate_split(config, split, workers)
        write_jsonl(out / f"{split}.jsonl", records)
        counts[split] = {
            "samples": len(records),
            "by_depth": {str(k): v for k, v in sorted(Counter(r["depth"] for r in records).items())},
            "by_strategy": dict(sorted(Counter(r["strategy"] for r in records).items())),
        }
        log.info("wrote %d %s samples", len(records), split)
    manifest = {"format_version": 1, "config": config.to_dict(), "counts": counts}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def dataset_stats(path: str | Path) -> list[dict]:
    """Per-depth sample/proof/fail counts and average node count of the first gold proof."""
    rows: dict[int, dict] = {}
    for lineno, rec in iter_jsonl(path):
        try:
            depth = int(rec["depth"])
            strategy = Strategy(rec["strategy"])
            nodes = len(rec["proofs"][0]["nodes"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed sample ({exc!r})", lineno, str(path)) from None
        row = rows.setdefault(depth, {"depth": depth, "count": 0, "proof": 0, "fail": 0, "nodes": 0})
        row["count"] += 1
        row["proof" if strategy is Strategy.PROOF else "fail"] += 1
        row["nodes"] += nodes
    table = [rows[d] for d in sorted(rows)]
    total = {"depth": "all", "count": 0, "proof": 0, "fail": 0, "nodes": 0}
    for row in table:
        for k in ("count", "proof", "fail", "nodes"):
            total[k] += row[k]
    out = []
    for row in table + [total]:
        out.append({
            "depth": row["depth"], "count": row["count"], "proof": row["proof"], "fail": row["fail"],
            "avg_nodes": row["nodes"] / row["count"] if row["count"] else 0.0,
        })
    return out


def format_stats(rows: list[dict]) -> str:
    lines = [f"{'D':>4} {'Num':>7} {'Proof':>7} {'Fail':>7} {'AvgNode':>8}"]
    for r in rows:
        lines.append(f"{r['depth']!s:>4} {r['count']:>7} {r['proof']:>7} {r['fail']:>7} {r['avg_nodes']:>8.2f}")
    return "\n".join(lines)
