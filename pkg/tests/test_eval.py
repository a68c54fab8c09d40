import json

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from backprover.encoder import ModelConfig
from backprover.evaluate import (
    REFERENCE_ALL_DEPTHS,
    AlignmentError,
    evaluate,
    evaluate_predictions,
    latency_bench,
    plot_report,
    proof_match,
    write_report,
)
from backprover.infer import InferConfig, Prediction, write_predictions
from backprover.model import ProofModel
from backprover.records import sample_to_record, write_jsonl
from backprover.theory import ProofGraph, Sample, Strategy, Theory

from conftest import T1_TEXTS, q

G1 = ProofGraph(frozenset({"F1", "R1"}), frozenset({("F1", "R1")}))
G2 = ProofGraph(frozenset({"F2", "R1"}), frozenset({("F2", "R1")}))


class TestProofMatch:
    def test_equal(self):
        assert proof_match(G1, [G1])

    def test_missing_edge(self):
        assert not proof_match(ProofGraph(G1.nodes), [G1])

    def test_any_gold(self):
        assert proof_match(G2, [G1, G2])

    def test_listing_order_irrelevant(self):
        a = ProofGraph.from_record({"nodes": ["R1", "F1", "F2"], "edges": [["F1", "R1"], ["F2", "R1"]]})
        b = ProofGraph.from_record({"nodes": ["F2", "F1", "R1"], "edges": [["F2", "R1"], ["F1", "R1"]]})
        assert proof_match(a, [b]) and proof_match(b, [a])


def make_samples(t1, n=3):
    return [Sample(f"s{i}", t1, q("Anne is strong?"), True, Strategy.PROOF, 1, (G1,)) for i in range(n)]


def pred(sid, answer, proof, truncated=False):
    return Prediction(sid, answer, Strategy.PROOF, proof, truncated)


class TestEvaluate:
    def test_three_sample_arithmetic(self, t1):
        samples = make_samples(t1)
        preds = [pred("s0", True, G2), pred("s1", True, G1), pred("s2", False, G1)]
        row = evaluate_predictions(preds, samples).overall
        assert (row.qa, row.pa, row.fa) == (2 / 3, 2 / 3, 1 / 3)

    def test_all_correct(self, t1):
        samples = make_samples(t1)
        row = evaluate_predictions([pred(s.id, True, G1) for s in samples], samples).overall
        assert (row.qa, row.pa, row.fa) == (1.0, 1.0, 1.0)

    def test_truncated_counts_as_wrong_proof(self, t1):
        samples = make_samples(t1, 1)
        row = evaluate_predictions([pred("s0", True, G1, truncated=True)], samples).overall
        assert (row.qa, row.pa) == (1.0, 0.0)

    def test_alignment_error_lists_offenders(self, t1):
        samples = make_samples(t1)
        with pytest.raises(AlignmentError) as exc:
            evaluate_predictions([pred("s0", True, G1), pred("zz", True, G1), pred("zz", True, G1)], samples)
        assert exc.value.missing == ["s1", "s2"] and "zz" in exc.value.extra and exc.value.duplicated == ["zz"]

    def test_per_depth_rows(self, small_corpus):
        preds = [Prediction(s.id, s.answer, s.strategy, s.canonical_proof) for s in small_corpus]
        report = evaluate_predictions(preds, small_corpus)
        assert sum(r.count for r in report.rows) == report.overall.count == len(small_corpus)
        assert [r.depth for r in report.rows] == sorted({s.depth for s in small_corpus})
        assert "all" in report.format()

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30), st.randoms())
    def test_fa_bounded_and_order_free(self, outcomes, rnd):
        samples = make_samples(Theory.from_texts(T1_TEXTS), len(outcomes))
        preds = [pred(s.id, a, G1 if p else G2) for s, (a, p) in zip(samples, outcomes)]
        report = evaluate_predictions(preds, samples)
        for row in [*report.rows, report.overall]:
            assert row.fa <= min(row.qa, row.pa)
        shuffled = list(preds)
        rnd.shuffle(shuffled)
        assert evaluate_predictions(shuffled, samples).to_dict() == report.to_dict()

    def test_files(self, t1, tmp_path):
        samples = make_samples(t1)
        write_jsonl(tmp_path / "d.jsonl", [sample_to_record(s) for s in samples])
        write_predictions(tmp_path / "p.jsonl", [pred(s.id, True, G1) for s in samples])
        report = evaluate(tmp_path / "p.jsonl", tmp_path / "d.jsonl")
        write_report(report, tmp_path / "r.json")
        assert json.loads((tmp_path / "r.json").read_text())["all"]["fa"] == 1.0

    def test_chart(self, t1, tmp_path):
        pytest.importorskip("matplotlib")
        samples = make_samples(t1)
        plot_report(evaluate_predictions([pred(s.id, True, G1) for s in samples], samples), tmp_path / "c.png")
        assert (tmp_path / "c.png").read_bytes()[:4] == b"\x89PNG"

    def test_reference_point(self):
        assert REFERENCE_ALL_DEPTHS == {"qa": 0.994, "pa": 0.935, "fa": 0.935}


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return ProofModel(ModelConfig(d_model=16, d=16, n_layers=1, n_heads=2, ff_dim=16, d_focus=4)).eval()


class TestLatency:
    def test_depth_zero_subset_gives_one_row(self, model, small_corpus):
        report = latency_bench(model, [s for s in small_corpus if s.depth == 0][:6], repetitions=3, warmup=2)
        assert [r.depth for r in report.rows] == [0] and report.slope == 0.0
        assert len(report.per_rep) == 3 and report.rows[0].std >= 0

    def test_fit_over_depths(self, model, small_corpus):
        subset = [s for d in (0, 1, 2) for s in [x for x in small_corpus if x.depth == d][:3]]
        report = latency_bench(model, subset, repetitions=2, warmup=1)
        assert [r.depth for r in report.rows] == [0, 1, 2]
        assert report.depth0_mean > 0 and report.relative_slope is not None
        assert "slope" in report.format()
        assert set(report.to_dict()) >= {"rows", "slope", "depth0_mean", "repetitions"}

    def test_requires_width_one(self, model, small_corpus):
        with pytest.raises(ValueError):
            latency_bench(model, small_corpus[:2], InferConfig(beam_size=8))
