import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bruteforce
from backprover import kernels, oracle
from backprover.datagen import GenConfig, random_theory
from backprover.theory import NAF, Atom, Fact, ProofGraph, Rule, Strategy, Theory, VAR

from conftest import T1_TEXTS, q


def G(nodes, edges=()):
    return ProofGraph(frozenset(nodes), frozenset(edges))


def stratified_theories():
    """Random generator theories that pass the oracle's preconditions."""
    def build(seed):
        rng = random.Random(seed)
        while True:
            t = random_theory(GenConfig(), rng)
            try:
                oracle.forward_chain(t)
                return t
            except (oracle.StratificationError, oracle.ConsistencyError):
                continue
    return st.integers(0, 10**9).map(build)


class TestForwardChain:
    def test_t1_depths(self, t1):
        table = oracle.forward_chain(t1)
        assert table.depth[Atom("Anne", "strong")] == 1
        assert table.depth[Atom("Anne", "happy")] == 2
        assert table.depth[Atom("Bob", "small")] == 1
        assert table.depth[Atom("Anne", "big")] == 0
        assert Atom("Bob", "strong") not in table.model

    def test_t1_small_uses_naf(self, t1):
        table = oracle.forward_chain(t1)
        (support,) = table.supports[Atom("Bob", "small")]
        assert support.rule_id == "R3" and support.naf == (True,)

    def test_empty(self):
        assert len(oracle.forward_chain(Theory())) == 0

    def test_unstratified(self):
        t = Theory.from_texts(["Anne is big.", "If someone is not big then they are small.",
                               "If someone is not small then they are big."])
        with pytest.raises(oracle.StratificationError):
            oracle.forward_chain(t)

    def test_inconsistent(self):
        t = Theory.from_texts(["Anne is big.", "Anne is happy.", "If someone is big then they are not happy."])
        with pytest.raises(oracle.ConsistencyError):
            oracle.forward_chain(t)

    def test_explicit_negative_satisfies_negated_antecedent(self):
        t = Theory.from_texts(["Anne is not big.", "Anne is round.", "If Anne is round then Anne is big.",
                               "If someone is not big then they are small."])
        with pytest.raises(oracle.ConsistencyError):
            oracle.forward_chain(t)
        t = Theory.from_texts(["Anne is not big.", "If someone is not big then they are small."])
        table = oracle.forward_chain(t)
        assert table.depth[Atom("Anne", "small")] == 1

    def test_max_depth_truncates(self, t1):
        assert Atom("Anne", "happy") not in oracle.forward_chain(t1, max_depth=1).depth

    @settings(max_examples=40, deadline=None)
    @given(stratified_theories(), st.integers(0, 4))
    def test_monotone_in_max_depth(self, theory, d):
        low = oracle.forward_chain(theory, max_depth=d).depth
        high = oracle.forward_chain(theory, max_depth=d + 1).depth
        assert low.items() <= high.items()

    @settings(max_examples=60, deadline=None)
    @given(stratified_theories())
    def test_matches_bruteforce(self, theory):
        assert oracle.forward_chain(theory).depth == bruteforce.model_with_depths(theory)

    @pytest.mark.skipif("compiled" not in kernels.AVAILABLE, reason="extension not built")
    @settings(max_examples=60, deadline=None)
    @given(stratified_theories())
    def test_backends_agree(self, theory):
        a = oracle.forward_chain(theory, backend="compiled")
        b = oracle.forward_chain(theory, backend="python")
        assert a.depth == b.depth and a.supports == b.supports

    def test_backend_switch(self):
        before = kernels.backend()
        try:
            kernels.set_backend("python")
            assert kernels.backend() == "python"
            with pytest.raises(ValueError):
                kernels.set_backend("fortran")
        finally:
            kernels.set_backend(before)


class TestAnswers:
    @pytest.mark.parametrize("text,expected", [
        ("Anne is happy?", (True, Strategy.PROOF)),
        ("Bob is strong?", (False, Strategy.FAIL_PROOF)),
        ("Bob is not strong?", (True, Strategy.FAIL_PROOF)),
        ("Anne is not small?", (True, Strategy.FAIL_PROOF)),
        ("Bob is small?", (True, Strategy.PROOF)),
    ])
    def test_t1(self, t1, text, expected):
        assert oracle.answer_and_strategy(t1, q(text)) == expected

    def test_contradiction_is_proof_false(self):
        t = Theory.from_texts(["Anne is big.", "If someone is big then they are not happy."])
        assert oracle.answer_and_strategy(t, q("Anne is happy?")) == (False, Strategy.PROOF)

    @settings(max_examples=40, deadline=None)
    @given(stratified_theories(), st.data())
    def test_matches_bruteforce(self, theory, data):
        e = data.draw(st.sampled_from(theory.entities()))
        a = data.draw(st.sampled_from(theory.attributes()))
        atom = Atom(e, a, data.draw(st.booleans()))
        ans, strat = oracle.answer_and_strategy(theory, q(f"{e} is {'' if atom.polarity else 'not '}{a}?"))
        assert (ans, strat.value) == bruteforce.answer_and_strategy(theory, atom)


class TestGoldProof:
    def test_chain(self, t1):
        assert oracle.extract_gold_proof(t1, q("Anne is happy?")) == (
            G({"F1", "R1", "R2"}, {("F1", "R1"), ("R1", "R2")}), 2)

    def test_naf(self, t1):
        assert oracle.extract_gold_proof(t1, q("Bob is small?")) == (G({NAF, "R3"}, {(NAF, "R3")}), 1)

    def test_fact(self, t1):
        assert oracle.extract_gold_proof(t1, q("Anne is big?")) == (G({"F1"}), 0)

    def test_fail_question_rejected(self, t1):
        with pytest.raises(oracle.StrategyError):
            oracle.extract_gold_proof(t1, q("Bob is strong?"))

    def test_prefers_shallow_then_small(self):
        t = Theory.from_texts(["Anne is big.", "Anne is round.", "If someone is big then they are strong.",
                               "If someone is strong then they are happy.", "If someone is round then they are happy."])
        assert oracle.extract_gold_proof(t, q("Anne is happy?")) == (G({"F2", "R3"}, {("F2", "R3")}), 1)

    def test_two_antecedents(self):
        t = Theory.from_texts(["Anne is big.", "Anne is round.",
                               "If someone is big and they are round then they are strong."])
        g, d = oracle.extract_gold_proof(t, q("Anne is strong?"))
        assert d == 1 and g == G({"F1", "F2", "R1"}, {("F1", "R1"), ("F2", "R1")})


class TestFailChain:
    def test_single_rule(self, t1):
        assert oracle.fail_chain(t1, q("Bob is strong?")) == G({"R1"})

    def test_empty(self):
        t = Theory.from_texts([s for s in T1_TEXTS if s != "Bob is kind."])
        assert oracle.fail_chain(t, q("Bob is kind?")) == G(())

    def test_long_chain(self):
        t = Theory.from_texts(T1_TEXTS + ["If someone is happy then they are rich."])
        assert oracle.fail_chain(t, q("Bob is rich?")) == G({"R4", "R2", "R1"}, {("R1", "R2"), ("R2", "R4")})

    def test_negative_question_uses_positive_goal(self, t1):
        assert oracle.fail_chain(t1, q("Bob is not happy?")) == G({"R2", "R1"}, {("R1", "R2")})

    def test_proof_question_rejected(self, t1):
        with pytest.raises(oracle.StrategyError):
            oracle.fail_chain(t1, q("Anne is happy?"))


class TestVerify:
    def test_valid(self, t1):
        assert oracle.verify_proof(t1, q("Anne is happy?"), G({"F1", "R1", "R2"}, {("F1", "R1"), ("R1", "R2")}),
                                   Strategy.PROOF)

    def test_skipped_step(self, t1):
        assert not oracle.verify_proof(t1, q("Anne is happy?"), G({"F1", "R2"}, {("F1", "R2")}), Strategy.PROOF)

    def test_wrong_fact(self, t1):
        assert not oracle.verify_proof(t1, q("Anne is big?"), G({"F2"}), Strategy.PROOF)

    def test_naf_only_where_eligible(self, t1):
        assert oracle.verify_proof(t1, q("Bob is small?"), G({NAF, "R3"}, {(NAF, "R3")}), Strategy.PROOF)
        assert not oracle.verify_proof(t1, q("Anne is small?"), G({NAF, "R3"}, {(NAF, "R3")}), Strategy.PROOF)

    def test_extra_edge(self, t1):
        g = G({"F1", "F2", "R1"}, {("F1", "R1"), ("F2", "R1")})
        assert not oracle.verify_proof(t1, q("Anne is strong?"), g, Strategy.PROOF)

    def test_malformed_input(self, t1):
        assert not oracle.verify_proof(t1, q("Anne is big?"), G({"F9"}), Strategy.PROOF)
        assert not oracle.verify_proof(t1, q("Anne is big?"), G({"X1"}), Strategy.PROOF)

    def test_fail(self, t1):
        assert oracle.verify_proof(t1, q("Bob is strong?"), G({"R1"}), Strategy.FAIL_PROOF)
        assert oracle.verify_proof(t1, q("Bob is strong?"), G(()), Strategy.FAIL_PROOF)
        assert not oracle.verify_proof(t1, q("Bob is strong?"), G({"R2"}), Strategy.FAIL_PROOF)
        assert not oracle.verify_proof(t1, q("Anne is happy?"), G({"R2"}), Strategy.FAIL_PROOF)

    def test_contradicting_proof(self):
        t = Theory.from_texts(["Anne is big.", "If someone is big then they are not happy."])
        assert oracle.verify_proof(t, q("Anne is happy?"), G({"F1", "R1"}, {("F1", "R1")}), Strategy.PROOF)


class TestEnumerate:
    def test_single(self, t1):
        assert oracle.enumerate_proofs(t1, q("Anne is happy?"), 6) == [
            G({"F1", "R1", "R2"}, {("F1", "R1"), ("R1", "R2")})]

    def test_duplicate_fact(self):
        t = Theory.from_texts(T1_TEXTS + ["Anne is big."])
        got = oracle.enumerate_proofs(t, q("Anne is strong?"), 6)
        assert set(got) == {G({"F1", "R1"}, {("F1", "R1")}), G({"F3", "R1"}, {("F3", "R1")})}

    def test_depth_zero(self, t1):
        assert oracle.enumerate_proofs(t1, q("Anne is big?"), 1) == [G({"F1"})]

    def test_bound(self, t1):
        assert oracle.enumerate_proofs(t1, q("Anne is happy?"), 2) == []

    def test_minimal(self):
        t = Theory.from_texts(["Anne is big.", "Anne is round.", "If someone is big then they are strong.",
                               "If someone is strong then they are happy.", "If someone is round then they are happy."])
        proofs = oracle.enumerate_proofs(t, q("Anne is happy?"))
        assert len(proofs) == 2
        assert oracle.minimal_proofs(proofs) == [G({"F2", "R3"}, {("F2", "R3")})]

    @settings(max_examples=40, deadline=None)
    @given(stratified_theories(), st.data())
    def test_consistent_with_answers(self, theory, data):
        e = data.draw(st.sampled_from(theory.entities()))
        a = data.draw(st.sampled_from(theory.attributes()))
        question = q(f"{e} is {a}?")
        _, strategy = oracle.answer_and_strategy(theory, question)
        proofs = oracle.enumerate_proofs(theory, question, node_bound=len(theory.sentences) + 1)
        assert (strategy is Strategy.PROOF) == bool(proofs)
        if proofs:
            gold, depth = oracle.extract_gold_proof(theory, question)
            assert gold in oracle.minimal_proofs(proofs)
            assert oracle.verify_proof(theory, question, gold, Strategy.PROOF)
        else:
            assert oracle.verify_proof(theory, question, oracle.fail_chain(theory, question), Strategy.FAIL_PROOF)

    @settings(max_examples=30, deadline=None)
    @given(stratified_theories(), st.data())
    def test_irrelevant_fact(self, theory, data):
        used = set(theory.attributes())
        spare = next(a for a in ("white", "rich", "young", "quiet", "cold") if a not in used)
        e = data.draw(st.sampled_from(theory.entities()))
        a = data.draw(st.sampled_from(sorted(used)))
        question = q(f"{e} is {a}?")
        bigger = Theory(theory.facts + (Fact(f"F{len(theory.facts) + 1}", Atom(e, spare)),), theory.rules)
        label = oracle.answer_and_strategy(theory, question)
        assert oracle.answer_and_strategy(bigger, question) == label
        if label[1] is Strategy.PROOF:
            # fact ids shift rule ids only by position; both theories share rule ids
            assert oracle.extract_gold_proof(bigger, question) == oracle.extract_gold_proof(theory, question)
            assert oracle.minimal_proofs(oracle.enumerate_proofs(bigger, question)) == \
                oracle.minimal_proofs(oracle.enumerate_proofs(theory, question))
