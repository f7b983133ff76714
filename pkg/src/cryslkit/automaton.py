"""Compilation of ORDER expressions into finite automata.

Aggregates are inlined as alternations, the expression is compiled into an
epsilon-NFA (Thompson construction) and then determinized by the subset
construction. The resulting DFA keeps an implicit error sink: a missing
transition means the protocol is broken at that event. No minimization is
performed; state numbering is breadth-first from the initial state, which
keeps DOT output stable and explainable.

Every Thompson NFA state can reach the final state, so every subset state of
the DFA can still reach acceptance. ``accepts`` relies on this: the first
missing transition is exactly the first point at which no accepted word is
reachable anymore.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .model import AggregateDecl, Alt, Atom, Opt, OrderExpr, Plus, Seq, Star


def inline_aggregates(expr: OrderExpr, aggregates: Iterable[AggregateDecl]) -> OrderExpr:
    """Replace every aggregate atom with the alternation of its events."""
    table = {agg.name: agg.alternatives for agg in aggregates}

    def walk(node: OrderExpr) -> OrderExpr:
        if isinstance(node, Atom):
            alternatives = table.get(node.label)
            if alternatives is None:
                return node
            if len(alternatives) == 1:
                return Atom(alternatives[0])
            return Alt(tuple(Atom(label) for label in alternatives))
        if isinstance(node, Seq):
            return Seq(tuple(walk(p) for p in node.parts))
        if isinstance(node, Alt):
            return Alt(tuple(walk(p) for p in node.parts))
        if isinstance(node, Opt):
            return Opt(walk(node.child))
        if isinstance(node, Star):
            return Star(walk(node.child))
        return Plus(walk(node.child))

    return walk(expr)


@dataclass
class Nfa:
    """Epsilon-NFA with a single start and a single accepting state."""

    start: int
    accept: int
    eps: list[list[int]]
    moves: list[dict[str, list[int]]]

    def closure(self, states: Iterable[int]) -> frozenset[int]:
        seen = set(states)
        stack = list(seen)
        while stack:
            for nxt in self.eps[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)

    def step(self, states: frozenset[int], label: str) -> frozenset[int]:
        reached = [t for s in states for t in self.moves[s].get(label, ())]
        return self.closure(reached) if reached else frozenset()

    def accepts(self, word: Sequence[str]) -> bool:
        current = self.closure({self.start})
        for label in word:
            current = self.step(current, label)
            if not current:
                return False
        return self.accept in current


def build_nfa(expr: OrderExpr) -> Nfa:
    eps: list[list[int]] = []
    moves: list[dict[str, list[int]]] = []

    def new_state() -> int:
        eps.append([])
        moves.append({})
        return len(eps) - 1

    def fragment(node: OrderExpr) -> tuple[int, int]:
        if isinstance(node, Atom):
            s, e = new_state(), new_state()
            moves[s].setdefault(node.label, []).append(e)
            return s, e
        if isinstance(node, Seq):
            first_s, prev_e = fragment(node.parts[0])
            for part in node.parts[1:]:
                s, e = fragment(part)
                eps[prev_e].append(s)
                prev_e = e
            return first_s, prev_e
        if isinstance(node, Alt):
            s, e = new_state(), new_state()
            for part in node.parts:
                ps, pe = fragment(part)
                eps[s].append(ps)
                eps[pe].append(e)
            return s, e
        if isinstance(node, Opt):
            s, e = new_state(), new_state()
            cs, ce = fragment(node.child)
            eps[s] += [cs, e]
            eps[ce].append(e)
            return s, e
        if isinstance(node, Star):
            s, e = new_state(), new_state()
            cs, ce = fragment(node.child)
            eps[s] += [cs, e]
            eps[ce] += [cs, e]
            return s, e
        # Plus: one pass through the child, then loop back.
        s, e = new_state(), new_state()
        cs, ce = fragment(node.child)
        eps[s].append(cs)
        eps[ce] += [cs, e]
        return s, e

    start, accept = fragment(expr)
    return Nfa(start, accept, eps, moves)


@dataclass
class TypestateAutomaton:
    """Deterministic typestate automaton over event labels.

    ``transitions`` is total through an implicit sink: a missing key is the
    error state. Treat instances as immutable after compilation.
    """

    alphabet: frozenset[str]
    state_count: int
    initial: int
    accepting: frozenset[int]
    transitions: dict[tuple[int, str], int] = field(repr=False)

    def step(self, state: int, label: str) -> int | None:
        return self.transitions.get((state, label))


def order_alphabet(expr: OrderExpr) -> frozenset[str]:
    if isinstance(expr, Atom):
        return frozenset({expr.label})
    if isinstance(expr, (Seq, Alt)):
        out: set[str] = set()
        for part in expr.parts:
            out |= order_alphabet(part)
        return frozenset(out)
    return order_alphabet(expr.child)


def compile_order(
    order: OrderExpr, aggregates: Iterable[AggregateDecl] = ()
) -> TypestateAutomaton:
    """Compile an ORDER expression (aggregates expanded away) into a DFA."""
    expr = inline_aggregates(order, aggregates)
    nfa = build_nfa(expr)
    alphabet = sorted(order_alphabet(expr))

    initial = nfa.closure({nfa.start})
    ids: dict[frozenset[int], int] = {initial: 0}
    queue = [initial]
    transitions: dict[tuple[int, str], int] = {}
    accepting: set[int] = set()
    while queue:
        subset = queue.pop(0)
        state_id = ids[subset]
        if nfa.accept in subset:
            accepting.add(state_id)
        for label in alphabet:
            target = nfa.step(subset, label)
            if not target:
                continue
            if target not in ids:
                ids[target] = len(ids)
                queue.append(target)
            transitions[(state_id, label)] = ids[target]

    return TypestateAutomaton(
        alphabet=frozenset(alphabet),
        state_count=len(ids),
        initial=0,
        accepting=frozenset(accepting),
        transitions=transitions,
    )


class VerdictKind(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    reject_index: int | None = None

    @staticmethod
    def accepted() -> "Verdict":
        return Verdict(VerdictKind.ACCEPTED)

    @staticmethod
    def rejected_at(index: int) -> "Verdict":
        return Verdict(VerdictKind.REJECTED, index)

    @staticmethod
    def incomplete() -> "Verdict":
        return Verdict(VerdictKind.INCOMPLETE)


def accepts(automaton: TypestateAutomaton, word: Sequence[str]) -> Verdict:
    """Run a word through the automaton.

    ``rejected_at(i)`` means the i-th label has no transition (including
    labels outside the alphabet); ``incomplete`` means every label was
    consumed but the protocol did not reach an accepting state.
    """
    state = automaton.initial
    for index, label in enumerate(word):
        next_state = automaton.step(state, label)
        if next_state is None:
            return Verdict.rejected_at(index)
        state = next_state
    if state in automaton.accepting:
        return Verdict.accepted()
    return Verdict.incomplete()


def to_dot(automaton: TypestateAutomaton) -> str:
    """Render the automaton as a DOT digraph (error sink omitted)."""
    lines = [
        "digraph typestate {",
        "    rankdir=LR;",
        '    __start [shape=point, label=""];',
    ]
    for state in range(automaton.state_count):
        shape = "doublecircle" if state in automaton.accepting else "circle"
        lines.append(f'    s{state} [shape={shape}, label="{state}"];')
    lines.append(f"    __start -> s{automaton.initial};")
    for (src, label), dst in sorted(automaton.transitions.items()):
        lines.append(f'    s{src} -> s{dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
