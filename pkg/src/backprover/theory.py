"""Data model for theories, questions and proof graphs, plus the controlled grammar.

Facts read ``"Anne is big."`` / ``"Bob is not big."``.  Rules read
``"If someone is big and they are not kind then they are strong."`` when they
quantify over a single universal variable, or ``"If Anne is big then Anne is
strong."`` when grounded.  Questions share the fact syntax.

Proof-node identifiers are plain strings: ``F<k>`` and ``R<k>`` for context
sentences in theory order, and the reserved ``NAF``, ``Q`` and ``END``.
"""

from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

VAR = "?x"
NAF = "NAF"
QUESTION = "Q"
END = "END"


class VocabularyError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at position {position}" + (f": {text!r}" if text else ""))
        self.position = position
        self.text = text


class InputTooLongError(ValueError):
    pass


class StructureError(ValueError):
    pass


ENTITIES = (
    "Anne", "Bob", "Charlie", "Dave", "Erin", "Fiona", "Gary", "Harry",
)
ATTRIBUTES = (
    "big", "blue", "cold", "furry", "green", "happy", "kind", "nice",
    "red", "rough", "round", "smart", "strong", "small", "quiet", "young",
    "white", "rich",
)


@dataclass(frozen=True)
class Vocabulary:
    entities: tuple[str, ...] = ENTITIES
    attributes: tuple[str, ...] = ATTRIBUTES

    def check_entity(self, name: str) -> None:
        if name != VAR and name not in self.entities:
            raise VocabularyError(f"unknown entity {name!r}")

    def check_attribute(self, name: str) -> None:
        if name not in self.attributes:
            raise VocabularyError(f"unknown attribute {name!r}")


DEFAULT_VOCAB = Vocabulary()


class Strategy(str, enum.Enum):
    PROOF = "proof"
    FAIL_PROOF = "fail"


class NodeKind(enum.Enum):
    FACT = "fact"
    RULE = "rule"
    NAF = "naf"
    QUESTION = "question"
    END = "end"


_NODE_RE = re.compile(r"^([FR])([1-9][0-9]*)$")


def node_kind(ref: str) -> NodeKind:
    if ref == NAF:
        return NodeKind.NAF
    if ref == QUESTION:
        return NodeKind.QUESTION
    if ref == END:
        return NodeKind.END
    m = _NODE_RE.match(ref)
    if m is None:
        raise StructureError(f"malformed node reference {ref!r}")
    return NodeKind.FACT if m.group(1) == "F" else NodeKind.RULE


def node_sort_key(ref: str) -> tuple[int, int]:
    """Facts by index, then rules by index, then NAF (natural order, so F2 < F10)."""
    kind = node_kind(ref)
    if kind is NodeKind.FACT:
        return (0, int(ref[1:]))
    if kind is NodeKind.RULE:
        return (1, int(ref[1:]))
    return ({NodeKind.NAF: 2, NodeKind.QUESTION: 3, NodeKind.END: 4}[kind], 0)


@dataclass(frozen=True, order=True)
class Atom:
    entity: str
    attribute: str
    polarity: bool = True

    def __post_init__(self):
        if not self.entity or not self.attribute:
            raise VocabularyError("atom symbols must be non-empty")

    def negated(self) -> Atom:
        return Atom(self.entity, self.attribute, not self.polarity)

    def positive(self) -> Atom:
        return Atom(self.entity, self.attribute, True)

    @property
    def is_ground(self) -> bool:
        return self.entity != VAR

    def ground(self, entity: str) -> Atom:
        return Atom(entity, self.attribute, self.polarity) if self.entity == VAR else self

    def __str__(self) -> str:
        return f"{'' if self.polarity else '~'}{self.attribute}({self.entity})"


@dataclass(frozen=True)
class Fact:
    id: str
    atom: Atom
    text: str = ""

    def __post_init__(self):
        if not self.text:
            object.__setattr__(self, "text", render(self.atom))


@dataclass(frozen=True)
class Rule:
    id: str
    antecedents: tuple[Atom, ...]
    consequent: Atom
    text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(self.antecedents))
        if not self.antecedents:
            raise StructureError(f"rule {self.id} has no antecedents")
        uses_var = any(not a.is_ground for a in self.antecedents)
        if uses_var != (not self.consequent.is_ground):
            raise StructureError(
                f"rule {self.id}: the universal variable must appear in the consequent "
                "and in at least one antecedent"
            )
        if not self.text:
            object.__setattr__(self, "text", render(self))

    @property
    def is_universal(self) -> bool:
        return not self.consequent.is_ground

    def bind(self, goal: Atom) -> tuple[Atom, ...] | None:
        """Instantiated antecedents if the consequent unifies with ``goal``."""
        c = self.consequent
        if c.attribute != goal.attribute or c.polarity != goal.polarity:
            return None
        if c.is_ground:
            if c.entity != goal.entity:
                return None
            return self.antecedents
        return tuple(a.ground(goal.entity) for a in self.antecedents)


@dataclass(frozen=True)
class Theory:
    facts: tuple[Fact, ...] = ()
    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "facts", tuple(self.facts))
        object.__setattr__(self, "rules", tuple(self.rules))
        ids = [s.id for s in self.sentences]
        if len(set(ids)) != len(ids):
            raise StructureError(f"duplicate node identifiers in theory: {ids}")

    @property
    def sentences(self) -> tuple[Fact | Rule, ...]:
        return self.facts + self.rules

    @property
    def node_ids(self) -> list[str]:
        return [s.id for s in self.sentences]

    def get(self, node_id: str) -> Fact | Rule:
        for s in self.sentences:
            if s.id == node_id:
                return s
        raise KeyError(node_id)

    def entities(self) -> list[str]:
        seen: dict[str, None] = {}
        for f in self.facts:
            seen.setdefault(f.atom.entity)
        for r in self.rules:
            for a in (*r.antecedents, r.consequent):
                if a.is_ground:
                    seen.setdefault(a.entity)
        return list(seen)

    def attributes(self) -> list[str]:
        seen: dict[str, None] = {}
        for f in self.facts:
            seen.setdefault(f.atom.attribute)
        for r in self.rules:
            for a in (*r.antecedents, r.consequent):
                seen.setdefault(a.attribute)
        return list(seen)

    @classmethod
    def from_texts(cls, texts: Sequence[str], vocab: Vocabulary = DEFAULT_VOCAB) -> Theory:
        """Build a theory from surface sentences, numbering facts and rules separately."""
        facts, rules = [], []
        for t in texts:
            parsed = parse_statement(t, vocab)
            if isinstance(parsed, Atom):
                facts.append(Fact(f"F{len(facts) + 1}", parsed))
            else:
                rules.append(Rule(f"R{len(rules) + 1}", parsed.antecedents, parsed.consequent))
        return cls(tuple(facts), tuple(rules))


@dataclass(frozen=True)
class Question:
    atom: Atom
    text: str = ""

    def __post_init__(self):
        if not self.text:
            object.__setattr__(self, "text", render(self))

    @classmethod
    def from_text(cls, text: str, vocab: Vocabulary = DEFAULT_VOCAB) -> Question:
        """Accepts the statement form, with ``?`` allowed in place of the final period."""
        t = text.strip()
        if t.endswith("?"):
            t = t[:-1].rstrip() + "."
        parsed = parse_statement(t, vocab)
        if not isinstance(parsed, Atom):
            raise ParseError("a question must be a single statement", 0, text)
        return cls(parsed)


@dataclass(frozen=True)
class ProofGraph:
    nodes: frozenset[str] = frozenset()
    edges: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))

    def __len__(self) -> int:
        return len(self.nodes)

    def sinks(self) -> list[str]:
        has_out = {u for u, _ in self.edges}
        return sorted((n for n in self.nodes if n not in has_out), key=node_sort_key)

    def predecessors(self, node: str) -> list[str]:
        return sorted((u for u, v in self.edges if v == node), key=node_sort_key)

    def is_acyclic(self) -> bool:
        indeg = {n: 0 for n in self.nodes}
        for _, v in self.edges:
            if v in indeg:
                indeg[v] += 1
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for u, v in self.edges:
                if u == n and v in indeg:
                    indeg[v] -= 1
                    if indeg[v] == 0:
                        queue.append(v)
        return seen == len(self.nodes)

    def structural_errors(self) -> list[str]:
        """Violations of the final-form graph invariants (empty list when well formed)."""
        errors = []
        for u, v in self.edges:
            if u not in self.nodes or v not in self.nodes:
                errors.append(f"edge {u}->{v} has an endpoint outside the node set")
        for n in self.nodes:
            try:
                kind = node_kind(n)
            except StructureError as exc:
                errors.append(str(exc))
                continue
            if kind in (NodeKind.QUESTION, NodeKind.END):
                errors.append(f"reserved node {n} in final proof")
        if any(v == NAF for _, v in self.edges):
            errors.append("NAF node has an incoming edge")
        if not self.is_acyclic():
            errors.append("graph has a cycle")
        if self.nodes and len(self.sinks()) != 1:
            errors.append(f"expected exactly one sink, found {self.sinks()}")
        return errors

    def depth(self) -> int:
        """Rule-node count on the longest path."""
        if not self.is_acyclic():
            raise StructureError("depth of a cyclic graph")
        memo: dict[str, int] = {}

        def longest(n: str) -> int:
            if n not in memo:
                here = 1 if node_kind(n) is NodeKind.RULE else 0
                memo[n] = here + max((longest(u) for u in self.predecessors(n)), default=0)
            return memo[n]

        return max((longest(n) for n in self.nodes), default=0)

    def sort_key(self) -> tuple:
        return (
            tuple(sorted((node_sort_key(n) for n in self.nodes))),
            tuple(sorted((node_sort_key(u), node_sort_key(v)) for u, v in self.edges)),
        )

    def to_record(self) -> dict:
        return {
            "nodes": sorted(self.nodes, key=node_sort_key),
            "edges": [
                [u, v]
                for u, v in sorted(self.edges, key=lambda e: (node_sort_key(e[0]), node_sort_key(e[1])))
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> ProofGraph:
        return cls(frozenset(record["nodes"]), frozenset((u, v) for u, v in record["edges"]))


@dataclass(frozen=True)
class Sample:
    id: str
    theory: Theory
    question: Question
    answer: bool
    strategy: Strategy
    depth: int
    gold_proofs: tuple[ProofGraph, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gold_proofs", tuple(self.gold_proofs))
        if not self.gold_proofs:
            raise StructureError(f"sample {self.id} has no gold proof")
        if self.strategy is Strategy.FAIL_PROOF:
            for p in self.gold_proofs:
                if not _is_rule_chain(p):
                    raise StructureError(f"sample {self.id}: fail proofs must be rule chains")

    @property
    def canonical_proof(self) -> ProofGraph:
        return self.gold_proofs[0]


def _is_rule_chain(proof: ProofGraph) -> bool:
    if any(node_kind(n) is not NodeKind.RULE for n in proof.nodes):
        return False
    if len(proof.edges) != max(len(proof.nodes) - 1, 0):
        return False
    outs = [u for u, _ in proof.edges]
    ins = [v for _, v in proof.edges]
    return len(set(outs)) == len(outs) and len(set(ins)) == len(ins) and proof.is_acyclic()


is_rule_chain = _is_rule_chain


# -- grammar -----------------------------------------------------------------


def _clause(atom: Atom, subject: str) -> str:
    copula = "are" if subject == "they" else "is"
    neg = "" if atom.polarity else "not "
    return f"{subject} {copula} {neg}{atom.attribute}"


def render(item: Atom | Fact | Rule | Question, vocab: Vocabulary = DEFAULT_VOCAB) -> str:
    if isinstance(item, Fact):
        return render(item.atom, vocab)
    if isinstance(item, Question):
        return render(item.atom, vocab)
    if isinstance(item, Atom):
        if not item.is_ground:
            raise VocabularyError("a standalone statement cannot use the universal variable")
        vocab.check_entity(item.entity)
        vocab.check_attribute(item.attribute)
        return _clause(item, item.entity) + "."
    if isinstance(item, Rule):
        parts = []
        seen_var = False
        for a in item.antecedents:
            vocab.check_entity(a.entity)
            vocab.check_attribute(a.attribute)
            if a.is_ground:
                subject = a.entity
            else:
                subject = "they" if seen_var else "someone"
                seen_var = True
            parts.append(_clause(a, subject))
        c = item.consequent
        vocab.check_entity(c.entity)
        vocab.check_attribute(c.attribute)
        head = _clause(c, c.entity if c.is_ground else "they")
        return f"If {' and '.join(parts)} then {head}."
    raise TypeError(f"cannot render {type(item).__name__}")


_TOKEN_RE = re.compile(r"[A-Za-z]+|\.|\S")


def _tokens_with_pos(text: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start()) for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class ParsedRule:
    antecedents: tuple[Atom, ...]
    consequent: Atom


class _Parser:
    def __init__(self, text: str, vocab: Vocabulary):
        self.text = text
        self.vocab = vocab
        self.toks = _tokens_with_pos(text)
        self.i = 0

    def _peek(self) -> str | None:
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def _pos(self) -> int:
        return self.toks[self.i][1] if self.i < len(self.toks) else len(self.text)

    def _fail(self, expected: str):
        found = self._peek()
        raise ParseError(f"expected {expected}, found {found!r}" if found else f"expected {expected}, found end of input",
                         self._pos(), self.text)

    def _take(self, word: str) -> None:
        if self._peek() != word:
            self._fail(repr(word))
        self.i += 1

    def clause(self, in_rule: bool, seen_var: bool) -> tuple[Atom, bool]:
        subj = self._peek()
        if subj is None:
            self._fail("a subject")
        if subj == "someone" and in_rule and not seen_var:
            entity, copula = VAR, "is"
        elif subj == "they" and in_rule and seen_var:
            entity, copula = VAR, "are"
        elif subj in self.vocab.entities:
            entity, copula = subj, "is"
        else:
            self._fail("a known entity" + (" or 'someone'/'they'" if in_rule else ""))
        self.i += 1
        self._take(copula)
        polarity = True
        if self._peek() == "not":
            polarity = False
            self.i += 1
        attr = self._peek()
        if attr is None or attr not in self.vocab.attributes:
            self._fail("a known attribute")
        self.i += 1
        return Atom(entity, attr, polarity), seen_var or entity == VAR

    def statement(self) -> Atom | ParsedRule:
        if self._peek() == "If":
            self.i += 1
            ants = []
            atom, seen_var = self.clause(True, False)
            ants.append(atom)
            while self._peek() == "and":
                self.i += 1
                atom, seen_var = self.clause(True, seen_var)
                ants.append(atom)
            self._take("then")
            head, _ = self.clause(True, seen_var)
            result: Atom | ParsedRule = ParsedRule(tuple(ants), head)
            if seen_var and head.is_ground:
                raise ParseError("consequent must refer to the universal variable", self._pos(), self.text)
        else:
            result, _ = self.clause(False, False)
        self._take(".")
        if self._peek() is not None:
            self._fail("end of input")
        return result


def parse_statement(text: str, vocab: Vocabulary = DEFAULT_VOCAB) -> Atom | ParsedRule:
    """Parse a fact/question or a rule; the inverse of :func:`render`."""
    return _Parser(text, vocab).statement()


# -- input layout ------------------------------------------------------------

CLS, SEP, SENT, PAD, UNK = "[CLS]", "[SEP]", "[SENT]", "[PAD]", "[UNK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, SENT)
GRAMMAR_WORDS = ("if", "then", "and", "not", "is", "are", "someone", "they", ".")
DEFAULT_STOP_WORDS = frozenset({"a", "an", "the", "is", "are"})
DEFAULT_MAX_LEN = 512


def token_vocabulary(vocab: Vocabulary = DEFAULT_VOCAB) -> list[str]:
    words = list(SPECIAL_TOKENS) + list(GRAMMAR_WORDS)
    words += [e.lower() for e in vocab.entities] + list(vocab.attributes)
    return list(dict.fromkeys(words))


def tokenize(text: str, strip_function_words: bool = False,
             stop_words: Iterable[str] = DEFAULT_STOP_WORDS) -> list[str]:
    toks = [t.lower() for t, _ in _tokens_with_pos(text)]
    if strip_function_words:
        stop = set(stop_words)
        toks = [t for t in toks if t not in stop]
    return toks


@dataclass(frozen=True)
class InputLayout:
    tokens: tuple[str, ...]
    spans: dict[str, tuple[int, int]]  # node id -> [start, end) in tokens, theory order
    question_span: tuple[int, int]
    summary_index: int = 0


def build_input_layout(question: Question, theory: Theory, strip_function_words: bool = False,
                       stop_words: Iterable[str] = DEFAULT_STOP_WORDS,
                       max_len: int = DEFAULT_MAX_LEN) -> InputLayout:
    """Lay out ``[CLS] Q [SEP] [SEP] s1 [SENT] s2 ... sn [SEP]``."""
    if not theory.sentences:
        raise StructureError("cannot lay out an empty theory")
    stop = frozenset(stop_words)
    tokens = [CLS]
    q = tokenize(question.text, strip_function_words, stop)
    q_span = (1, 1 + len(q))
    tokens += q + [SEP, SEP]
    spans = {}
    for k, sent in enumerate(theory.sentences):
        if k:
            tokens.append(SENT)
        toks = tokenize(sent.text, strip_function_words, stop)
        spans[sent.id] = (len(tokens), len(tokens) + len(toks))
        tokens += toks
    tokens.append(SEP)
    if len(tokens) > max_len:
        raise InputTooLongError(f"input has {len(tokens)} tokens, maximum is {max_len}")
    return InputLayout(tuple(tokens), spans, q_span, 0)


# -- backward construction graph ---------------------------------------------


class PartialProof:
    """Proof under backward construction, rooted at the question.

    Edges point parent -> child (supported -> supporting); children keep their
    insertion order, which level traversal depends on.
    """

    __slots__ = ("nodes", "children", "edges")

    def __init__(self):
        self.nodes: list[str] = [QUESTION]
        self.children: dict[str, list[str]] = {QUESTION: []}
        self.edges: list[tuple[str, str]] = []

    def copy(self) -> PartialProof:
        other = PartialProof.__new__(PartialProof)
        other.nodes = list(self.nodes)
        other.children = {k: list(v) for k, v in self.children.items()}
        other.edges = list(self.edges)
        return other

    def __contains__(self, node: str) -> bool:
        return node in self.children

    def add(self, parent: str, child: str) -> None:
        if parent not in self.children:
            raise StructureError(f"parent {parent} is not in the partial proof")
        if child in (QUESTION, END):
            raise StructureError(f"{child} cannot be added as a child")
        if (parent, child) in self.edges:
            raise StructureError(f"edge {parent}->{child} already present")
        if child not in self.children:
            self.nodes.append(child)
            self.children[child] = []
        self.children[parent].append(child)
        self.edges.append((parent, child))

    def ancestors(self, node: str) -> set[str]:
        """Nodes from which ``node`` is reachable (excluding itself)."""
        parents: dict[str, list[str]] = {}
        for u, v in self.edges:
            parents.setdefault(v, []).append(u)
        out: set[str] = set()
        stack = list(parents.get(node, ()))
        while stack:
            n = stack.pop()
            if n not in out:
                out.add(n)
                stack.extend(parents.get(n, ()))
        return out


def level_traversal_order(partial: PartialProof) -> list[str]:
    """Breadth-first order from Q, children in insertion order, each node once."""
    if QUESTION not in partial.children:
        raise StructureError("partial proof has no question root")
    order = [QUESTION]
    seen = {QUESTION}
    queue = deque([QUESTION])
    while queue:
        n = queue.popleft()
        for c in partial.children[n]:
            if c not in seen:
                seen.add(c)
                order.append(c)
                queue.append(c)
    return order


def finalize_proof(partial: PartialProof) -> ProofGraph:
    """Drop Q with its edges and reverse the rest into support -> supported form."""
    nodes = frozenset(n for n in partial.nodes if n != QUESTION)
    edges = frozenset((c, p) for p, c in partial.edges if p != QUESTION)
    return ProofGraph(nodes, edges)
