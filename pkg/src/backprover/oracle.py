"""Exact closed-world reasoner with negation as failure.

Forward chaining computes the stratified least model together with the
minimal derivation depth of each atom.  On top of it sit answer/strategy
labelling, minimal gold-proof extraction, the deterministic fail-proof chain,
a proof verifier and an exhaustive backward proof enumerator.  The enumerator
searches the theory directly and only shares the least model with the rest,
so it serves as the independent check on :func:`extract_gold_proof`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from . import kernels
from .theory import (
    NAF,
    Atom,
    NodeKind,
    ProofGraph,
    Question,
    Rule,
    Strategy,
    StructureError,
    Theory,
    is_rule_chain,
    node_kind,
    node_sort_key,
)


class StratificationError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class StrategyError(ValueError):
    pass


class Support(NamedTuple):
    rule_id: str
    antecedents: tuple[Atom, ...]  # ground
    naf: tuple[bool, ...]  # antecedent satisfiable by NAF


@dataclass
class DerivationTable:
    depth: dict[Atom, int] = field(default_factory=dict)
    facts: dict[Atom, list[str]] = field(default_factory=dict)
    supports: dict[Atom, list[Support]] = field(default_factory=dict)
    model: frozenset[Atom] = frozenset()  # untruncated least model, used for NAF

    def __contains__(self, atom: Atom) -> bool:
        return atom in self.depth

    def __len__(self) -> int:
        return len(self.depth)

    def naf_eligible(self, atom: Atom) -> bool:
        return not atom.polarity and atom.positive() not in self.model

    def satisfied(self, atom: Atom) -> bool:
        return atom in self.model or self.naf_eligible(atom)


def attribute_strata(theory: Theory) -> dict[str, int]:
    """Stratum per attribute; a negated antecedent forces a strictly higher stratum."""
    attrs = theory.attributes()
    stratum = {a: 0 for a in attrs}
    edges = [
        (a.attribute, r.consequent.attribute, 0 if a.polarity else 1)
        for r in theory.rules
        for a in r.antecedents
    ]
    for _ in range(len(attrs) + 1):
        changed = False
        for src, dst, w in edges:
            if stratum[src] + w > stratum[dst]:
                stratum[dst] = stratum[src] + w
                changed = True
        if not changed:
            return stratum
    raise StratificationError("negation occurs on a dependency cycle")


def ground_rules(theory: Theory, entities: list[str] | None = None) -> Iterator[tuple[Rule, tuple[Atom, ...], Atom]]:
    domain = theory.entities() if entities is None else entities
    for r in theory.rules:
        if r.is_universal:
            for e in domain:
                yield r, tuple(a.ground(e) for a in r.antecedents), r.consequent.ground(e)
        else:
            yield r, r.antecedents, r.consequent


def forward_chain(theory: Theory, max_depth: int | None = None, backend: str | None = None) -> DerivationTable:
    """Least model under stratified NAF, with minimal depths and all supports.

    ``max_depth`` truncates the reported table to atoms of depth <= max_depth;
    NAF is always judged against the untruncated model, which keeps the table
    monotone in ``max_depth``.
    """
    strata = attribute_strata(theory)
    grounded = list(ground_rules(theory))
    index: dict[Atom, int] = {}

    def idx(atom: Atom) -> int:
        if atom not in index:
            index[atom] = len(index)
        return index[atom]

    fact_ids: dict[Atom, list[str]] = {}
    for f in theory.facts:
        fact_ids.setdefault(f.atom, []).append(f.id)
        idx(f.atom)
    order = sorted(range(len(grounded)), key=lambda k: strata[grounded[k][2].attribute])
    head, rule_start, body_atom, body_naf, strata_start = [], [0], [], [], [0]
    current = None
    for pos, k in enumerate(order):
        _, ants, cons = grounded[k]
        s = strata[cons.attribute]
        if current is not None and s != current:
            strata_start.append(pos)
        current = s
        head.append(idx(cons))
        for a in ants:
            body_atom.append(idx(a))
            body_naf.append(-1 if a.polarity else idx(a.positive()))
        rule_start.append(len(body_atom))
    strata_start.append(len(order))
    init = [kernels.INF] * len(index)
    for atom in fact_ids:
        init[index[atom]] = 0
    depths = kernels.stratified_depths(len(index), init, head, rule_start, body_atom, body_naf,
                                       strata_start, backend)

    full = {atom: depths[i] for atom, i in index.items() if depths[i] < kernels.INF}
    for atom in full:
        if atom.negated() in full:
            raise ConsistencyError(f"both {atom} and {atom.negated()} are derivable")
    model = frozenset(full)
    table = DerivationTable(model=model)
    table.depth = {a: d for a, d in full.items() if max_depth is None or d <= max_depth}
    table.facts = {a: ids for a, ids in fact_ids.items() if a in table.depth}
    for rule, ants, cons in grounded:
        if cons not in table.depth:
            continue
        naf = tuple(not a.polarity and a.positive() not in model for a in ants)
        if all(a in model or n for a, n in zip(ants, naf)):
            table.supports.setdefault(cons, []).append(Support(rule.id, ants, naf))
    return table


def answer_and_strategy(theory: Theory, question: Question,
                        table: DerivationTable | None = None) -> tuple[bool, Strategy]:
    table = forward_chain(theory) if table is None else table
    q = question.atom
    if q in table.model:
        return True, Strategy.PROOF
    if q.negated() in table.model:
        return False, Strategy.PROOF
    return (not q.polarity), Strategy.FAIL_PROOF


# -- gold proof extraction -----------------------------------------------------


class _Partial(NamedTuple):
    root: str
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    assign: tuple[tuple[str, Atom], ...]  # node -> atom it proves (facts/rules)


def _merge(parts: list[_Partial], root: str, target: Atom, node_bound: int | None) -> _Partial | None:
    assign: dict[str, Atom] = {root: target}
    nodes = {root}
    edges = set()
    for p in parts:
        for n, a in p.assign:
            if assign.setdefault(n, a) != a:
                return None
        nodes |= p.nodes
        edges |= p.edges
        edges.add((p.root, root))
    if node_bound is not None and len(nodes) > node_bound:
        return None
    return _Partial(root, frozenset(nodes), frozenset(edges), tuple(sorted(assign.items())))


def _partial_key(p: _Partial) -> tuple:
    return (len(p.nodes), ProofGraph(p.nodes, p.edges).sort_key())


_CAP = 256


def extract_gold_proof(theory: Theory, question: Question,
                       table: DerivationTable | None = None) -> tuple[ProofGraph, int]:
    """Minimal proof: least depth, then fewest nodes, then lowest node ids."""
    table = forward_chain(theory) if table is None else table
    q = question.atom
    target = q if q in table.model else q.negated() if q.negated() in table.model else None
    if target is None:
        raise StrategyError("question has a fail-proof strategy; use fail_chain")
    memo: dict[tuple[Atom, int], list[_Partial]] = {}

    def derive(atom: Atom, budget: int, allow_naf: bool) -> list[_Partial]:
        out: list[_Partial] = []
        if allow_naf and table.naf_eligible(atom):
            out.append(_Partial(NAF, frozenset({NAF}), frozenset(), ()))
        key = (atom, budget)
        if key not in memo:
            found: list[_Partial] = []
            for fid in table.facts.get(atom, ()):
                found.append(_Partial(fid, frozenset({fid}), frozenset(), ((fid, atom),)))
            if budget >= 1:
                for sup in table.supports.get(atom, ()):
                    options = [derive(a, budget - 1, True) for a in sup.antecedents]
                    if any(not o for o in options):
                        continue
                    for combo in itertools.product(*options):
                        merged = _merge(list(combo), sup.rule_id, atom, None)
                        if merged is not None:
                            found.append(merged)
            found.sort(key=_partial_key)
            memo[key] = found[:_CAP]
        return out + memo[key]

    depth = table.depth[target]
    candidates = [p for p in derive(target, depth, False)]
    graphs = [ProofGraph(p.nodes, p.edges) for p in candidates]
    graphs = [g for g in graphs if g.depth() == depth and not g.structural_errors()]
    if not graphs:
        raise StructureError(f"no well-formed proof of {target} found")
    best = min(graphs, key=lambda g: (len(g.nodes), g.sort_key()))
    return best, depth


# -- fail-proof chains -----------------------------------------------------------


def fail_chain(theory: Theory, question: Question, table: DerivationTable | None = None) -> ProofGraph:
    """Backward chain of rules explaining why the question cannot be decided.

    Start from the positive question atom; repeatedly take the lowest-index
    rule whose consequent matches the goal and descend into its first
    unsatisfied antecedent.  Stops when no rule matches (or a rule would repeat).
    """
    table = forward_chain(theory) if table is None else table
    _, strategy = answer_and_strategy(theory, question, table)
    if strategy is not Strategy.FAIL_PROOF:
        raise StrategyError("question is provable; use extract_gold_proof")
    goal = question.atom.positive()
    chain: list[str] = []
    while True:
        step = None
        for rule in theory.rules:
            ants = rule.bind(goal)
            if ants is None or rule.id in chain:
                continue
            missing = [a for a in ants if not table.satisfied(a)]
            if missing:
                step = (rule.id, missing[0])
                break
        if step is None:
            break
        chain.append(step[0])
        goal = step[1]
    edges = frozenset((chain[i + 1], chain[i]) for i in range(len(chain) - 1))
    return ProofGraph(frozenset(chain), edges)


# -- verification ------------------------------------------------------------------


def _reverse_topological(proof: ProofGraph) -> list[str]:
    succ_count = {n: 0 for n in proof.nodes}
    for u, _ in proof.edges:
        succ_count[u] += 1
    order, ready = [], sorted((n for n, c in succ_count.items() if c == 0), key=node_sort_key)
    while ready:
        n = ready.pop(0)
        order.append(n)
        for u in proof.predecessors(n):
            succ_count[u] -= 1
            if succ_count[u] == 0:
                ready.append(u)
    return order


def _proves(theory: Theory, table: DerivationTable, node: str, atom: Atom) -> bool:
    kind = node_kind(node)
    if kind is NodeKind.NAF:
        return table.naf_eligible(atom)
    if kind is NodeKind.FACT:
        return theory.get(node).atom == atom
    return theory.get(node).bind(atom) is not None


def _verify_derivation(theory: Theory, table: DerivationTable, question: Question, proof: ProofGraph) -> bool:
    if not proof.nodes or proof.structural_errors():
        return False
    ids = set(theory.node_ids)
    if any(n != NAF and n not in ids for n in proof.nodes):
        return False
    for u, v in proof.edges:
        if node_kind(v) is not NodeKind.RULE:
            return False  # only rules are supported by other nodes
    order = _reverse_topological(proof)
    sink = order[0]
    if node_kind(sink) is NodeKind.NAF:
        return False

    def search(pos: int, assign: dict[str, Atom]) -> bool:
        if pos == len(order):
            return True
        node = order[pos]
        kind = node_kind(node)
        if kind is not NodeKind.RULE:
            return search(pos + 1, assign)
        target = assign.get(node)
        if target is None:
            return False
        ants = theory.get(node).bind(target)
        if ants is None:
            return False
        preds = proof.predecessors(node)
        choices = [[u for u in preds if _proves(theory, table, u, a)] for a in ants]
        for combo in itertools.product(*choices):
            if set(combo) != set(preds):
                continue  # every incoming edge must cover some antecedent
            trial = dict(assign)
            ok = True
            for u, a in zip(combo, ants):
                if node_kind(u) is NodeKind.RULE and trial.setdefault(u, a) != a:
                    ok = False
                    break
            if ok and search(pos + 1, trial):
                return True
        return False

    q = question.atom
    for target in (q, q.negated()):
        if _proves(theory, table, sink, target) and search(0, {sink: target}):
            return True
    return False


def _verify_fail_chain(theory: Theory, table: DerivationTable, question: Question, proof: ProofGraph) -> bool:
    if not proof.nodes:
        return True
    if not is_rule_chain(proof):
        return False
    ids = {r.id for r in theory.rules}
    if not proof.nodes <= ids:
        return False
    nxt = {v: u for u, v in proof.edges}  # supported -> deeper rule
    sink = proof.sinks()[0]

    def walk(node: str, goal: Atom) -> bool:
        ants = theory.get(node).bind(goal)
        if ants is None:
            return False
        missing = [a for a in ants if not table.satisfied(a)]
        if not missing:
            return False
        if node not in nxt:
            return True
        return any(walk(nxt[node], a) for a in missing)

    return walk(sink, question.atom.positive())


def verify_proof(theory: Theory, question: Question, proof: ProofGraph, strategy: Strategy) -> bool:
    """Independent re-derivation check of a proof under the given strategy."""
    try:
        table = forward_chain(theory)
        q = question.atom
        decided = q in table.model or q.negated() in table.model
        if strategy is Strategy.PROOF:
            return decided and _verify_derivation(theory, table, question, proof)
        return not decided and _verify_fail_chain(theory, table, question, proof)
    except (StructureError, StratificationError, ConsistencyError, KeyError):
        return False


# -- exhaustive enumeration --------------------------------------------------------


def enumerate_proofs(theory: Theory, question: Question, node_bound: int = 12,
                     table: DerivationTable | None = None) -> list[ProofGraph]:
    """Every verified proof with at most ``node_bound`` nodes, found by backward search.

    The search works on the rule texts (not on the derivation table), so it
    is an independent route to the proofs extract_gold_proof picks from.
    """
    table = forward_chain(theory) if table is None else table

    def prove(goal: Atom, stack: frozenset[Atom], allow_naf: bool) -> list[_Partial]:
        out: list[_Partial] = []
        if allow_naf and not goal.polarity and goal.positive() not in table.model:
            out.append(_Partial(NAF, frozenset({NAF}), frozenset(), ()))
        for f in theory.facts:
            if f.atom == goal:
                out.append(_Partial(f.id, frozenset({f.id}), frozenset(), ((f.id, goal),)))
        if goal in stack:
            return out
        inner = stack | {goal}
        for rule in theory.rules:
            ants = rule.bind(goal)
            if ants is None:
                continue
            options = [prove(a, inner, True) for a in ants]
            for combo in itertools.product(*options):
                merged = _merge(list(combo), rule.id, goal, node_bound)
                if merged is not None:
                    out.append(merged)
        return out

    q = question.atom
    seen: set[tuple] = set()
    proofs = []
    for target in (q, q.negated()):
        for p in prove(target, frozenset(), False):
            g = ProofGraph(p.nodes, p.edges)
            key = (g.nodes, g.edges)
            if key in seen or len(g.nodes) > node_bound:
                continue
            seen.add(key)
            if _verify_derivation(theory, table, question, g):
                proofs.append(g)
    proofs.sort(key=lambda g: (g.depth(), len(g.nodes), g.sort_key()))
    return proofs


def minimal_proofs(proofs: list[ProofGraph]) -> list[ProofGraph]:
    if not proofs:
        return []
    best = min(p.depth() for p in proofs)
    return [p for p in proofs if p.depth() == best]
