"""Reference reasoner sharing no code with backprover.oracle.

The model is the well-founded model computed by the alternating fixpoint over
the fully grounded program (no strata, no depth bookkeeping).  For stratified
programs it is total and coincides with the perfect model.  A negated
antecedent becomes two alternatives: the explicit negative atom, or negation
as failure on the positive atom.  Depths come from naive layer-by-layer
application against the final model.
"""

from __future__ import annotations

from itertools import product

from backprover.theory import VAR, Atom, Theory

# a ground clause: (head, positive body atoms, atoms required absent)
Clause = tuple[Atom, tuple[Atom, ...], tuple[Atom, ...]]


def _entities(theory: Theory) -> list[str]:
    names = {f.atom.entity for f in theory.facts}
    for r in theory.rules:
        names |= {a.entity for a in (*r.antecedents, r.consequent) if a.entity != VAR}
    return sorted(names)


def ground_program(theory: Theory) -> list[Clause]:
    clauses = []
    entities = _entities(theory)
    for rule in theory.rules:
        subjects = entities if any(a.entity == VAR for a in (*rule.antecedents, rule.consequent)) else [None]
        for e in subjects:
            sub = (lambda a: Atom(e, a.attribute, a.polarity)) if e is not None else (lambda a: a)
            head = sub(rule.consequent)
            options = []
            for ant in map(sub, rule.antecedents):
                if ant.polarity:
                    options.append([(ant, None)])
                else:
                    options.append([(ant, None), (None, Atom(ant.entity, ant.attribute, True))])
            for combo in product(*options):
                pos = tuple(p for p, _ in combo if p is not None)
                neg = tuple(n for _, n in combo if n is not None)
                clauses.append((head, pos, neg))
    return clauses


def _least(facts: set[Atom], clauses: list[Clause], context: set[Atom]) -> set[Atom]:
    """Least model of the reduct: a NAF literal holds iff its atom is outside ``context``."""
    model = set(facts)
    changed = True
    while changed:
        changed = False
        for head, pos, neg in clauses:
            if head in model:
                continue
            if all(p in model for p in pos) and all(n not in context for n in neg):
                model.add(head)
                changed = True
    return model


def well_founded_model(theory: Theory) -> tuple[set[Atom], set[Atom]]:
    """(true atoms, possibly-true atoms); equal sets mean the model is total."""
    facts = {f.atom for f in theory.facts}
    clauses = ground_program(theory)
    under: set[Atom] = set()
    while True:
        over = _least(facts, clauses, under)
        nxt = _least(facts, clauses, over)
        if nxt == under:
            return under, over
        under = nxt


def model_with_depths(theory: Theory) -> dict[Atom, int]:
    true, possible = well_founded_model(theory)
    if true != possible:
        raise ValueError("program has no total well-founded model")
    clauses = ground_program(theory)
    depth = {f.atom: 0 for f in theory.facts}
    level = 0
    while True:
        level += 1
        new = {}
        for head, pos, neg in clauses:
            if head in depth or head in new:
                continue
            if all(p in depth for p in pos) and all(n not in true for n in neg):
                new[head] = level
        if not new:
            return depth
        depth.update(new)


def answer_and_strategy(theory: Theory, atom: Atom) -> tuple[bool, str]:
    model = model_with_depths(theory)
    if atom in model:
        return True, "proof"
    if Atom(atom.entity, atom.attribute, not atom.polarity) in model:
        return False, "proof"
    return not atom.polarity, "fail"
