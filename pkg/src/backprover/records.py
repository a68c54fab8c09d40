"""JSONL (de)serialization of samples and predictions."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .theory import (
    Atom,
    Fact,
    ProofGraph,
    Question,
    Rule,
    Sample,
    Strategy,
    Theory,
)


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<input>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _atom_record(atom: Atom) -> dict:
    return {"entity": atom.entity, "attribute": atom.attribute, "polarity": atom.polarity}


def _atom(record: dict) -> Atom:
    return Atom(record["entity"], record["attribute"], bool(record["polarity"]))


def sample_to_record(sample: Sample) -> dict:
    context = []
    for f in sample.theory.facts:
        context.append({"id": f.id, "type": "fact", "text": f.text, "logic": _atom_record(f.atom)})
    for r in sample.theory.rules:
        context.append({
            "id": r.id,
            "type": "rule",
            "text": r.text,
            "logic": {
                "antecedents": [_atom_record(a) for a in r.antecedents],
                "consequent": _atom_record(r.consequent),
            },
        })
    q = sample.question
    return {
        "id": sample.id,
        "context": context,
        "question": {"text": q.text, **_atom_record(q.atom)},
        "answer": sample.answer,
        "strategy": sample.strategy.value,
        "depth": sample.depth,
        "proofs": [p.to_record() for p in sample.gold_proofs],
    }


def sample_from_record(record: dict) -> Sample:
    facts, rules = [], []
    for item in record["context"]:
        logic = item["logic"]
        if item["type"] == "fact":
            facts.append(Fact(item["id"], _atom(logic), item["text"]))
        elif item["type"] == "rule":
            rules.append(Rule(item["id"], tuple(_atom(a) for a in logic["antecedents"]),
                              _atom(logic["consequent"]), item["text"]))
        else:
            raise DatasetError(f"unknown context item type {item['type']!r}")
    q = record["question"]
    return Sample(
        id=record["id"],
        theory=Theory(tuple(facts), tuple(rules)),
        question=Question(_atom(q), q["text"]),
        answer=bool(record["answer"]),
        strategy=Strategy(record["strategy"]),
        depth=int(record["depth"]),
        gold_proofs=tuple(ProofGraph.from_record(p) for p in record["proofs"]),
    )


def dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", lineno, str(path)) from None


def read_samples(path: str | Path) -> list[Sample]:
    samples = []
    for lineno, rec in iter_jsonl(path):
        try:
            samples.append(sample_from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed sample ({exc})", lineno, str(path)) from None
    return samples


def write_samples(path: str | Path, samples: Iterable[Sample]) -> int:
    return write_jsonl(path, (sample_to_record(s) for s in samples))
