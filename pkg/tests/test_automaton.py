from __future__ import annotations

import random
import re

import pytest

from cryslkit import SourceFile, accepts, build_nfa, compile_order, parse_crysl, to_dot
from cryslkit.automaton import VerdictKind, inline_aggregates
from cryslkit.model import Alt, Atom, Opt, Plus, Seq, Star

from conftest import MESSAGEDIGEST_RULE
from oracles import (
    all_words,
    derivative_verdict,
    enumerate_language,
    random_label_alphabet,
    random_order_expr,
)


@pytest.fixture(scope="module")
def digest_rule():
    return parse_crysl(SourceFile.for_text(MESSAGEDIGEST_RULE, "crysl"))


@pytest.fixture(scope="module")
def digest_automaton(digest_rule):
    return compile_order(digest_rule.order, digest_rule.aggregates)


def test_aggregates_expand_to_alternations(digest_rule):
    expr = inline_aggregates(digest_rule.order, digest_rule.aggregates)
    assert expr == Seq((Alt((Atom("g1"), Atom("g2"))), Plus(Atom("u1")), Atom("d1")))


def test_digest_protocol_words(digest_automaton):
    assert accepts(digest_automaton, ["g1", "u1", "d1"]).kind is VerdictKind.ACCEPTED
    assert accepts(digest_automaton, ["g2", "u1", "u1", "d1"]).kind is VerdictKind.ACCEPTED
    verdict = accepts(digest_automaton, ["g1", "d1"])
    assert verdict.kind is VerdictKind.REJECTED
    assert verdict.reject_index == 1
    assert accepts(digest_automaton, ["g1", "u1"]).kind is VerdictKind.INCOMPLETE


def test_label_outside_alphabet_is_rejected_at_index(digest_automaton):
    verdict = accepts(digest_automaton, ["g1", "reset", "d1"])
    assert verdict.kind is VerdictKind.REJECTED
    assert verdict.reject_index == 1


def test_single_atom_automaton():
    automaton = compile_order(Atom("c"))
    assert automaton.state_count == 2
    assert accepts(automaton, ["c"]).kind is VerdictKind.ACCEPTED
    assert accepts(automaton, []).kind is VerdictKind.INCOMPLETE
    assert accepts(automaton, ["c", "c"]).kind is VerdictKind.REJECTED


def test_optional_operator_semantics():
    automaton = compile_order(Opt(Atom("e")))
    assert accepts(automaton, []).kind is VerdictKind.ACCEPTED
    assert accepts(automaton, ["e"]).kind is VerdictKind.ACCEPTED
    assert accepts(automaton, ["e", "e"]).kind is VerdictKind.REJECTED


def test_automaton_is_deterministic_and_reachable(digest_automaton):
    seen_pairs = set()
    reachable = {digest_automaton.initial}
    for (src, label), dst in digest_automaton.transitions.items():
        assert (src, label) not in seen_pairs
        seen_pairs.add((src, label))
    # breadth-first closure over the transition table
    changed = True
    while changed:
        changed = False
        for (src, _), dst in digest_automaton.transitions.items():
            if src in reachable and dst not in reachable:
                reachable.add(dst)
                changed = True
    assert reachable == set(range(digest_automaton.state_count))


def test_dfa_matches_enumeration_oracle_on_random_expressions():
    rng = random.Random(1)
    for _ in range(60):
        alphabet = random_label_alphabet(rng)
        expr = random_order_expr(rng, alphabet, rng.randint(0, 4))
        automaton = compile_order(expr)
        language = enumerate_language(expr, 5)
        for word in all_words(alphabet, 5):
            expected = word in language
            got = accepts(automaton, list(word)).kind is VerdictKind.ACCEPTED
            assert got == expected, (expr, word)


def test_nfa_and_dfa_agree_on_exhaustive_word_sets():
    rng = random.Random(2)
    for _ in range(40):
        alphabet = random_label_alphabet(rng)
        expr = random_order_expr(rng, alphabet, rng.randint(0, 4))
        nfa = build_nfa(expr)
        dfa = compile_order(expr)
        for word in all_words(alphabet, 5):
            assert nfa.accepts(word) == (accepts(dfa, list(word)).kind is VerdictKind.ACCEPTED)


def test_three_way_verdict_matches_derivative_oracle():
    rng = random.Random(3)
    for _ in range(60):
        alphabet = random_label_alphabet(rng)
        expr = random_order_expr(rng, alphabet, rng.randint(0, 4))
        automaton = compile_order(expr)
        for word in all_words(alphabet, 5):
            kind, index = derivative_verdict(expr, word)
            verdict = accepts(automaton, list(word))
            assert verdict.kind.value == kind, (expr, word)
            if kind == "rejected":
                assert verdict.reject_index == index, (expr, word)


# ---------------------------------------------------------------------------
# DOT output
# ---------------------------------------------------------------------------

_DOT_NODE = re.compile(r'^\s{4}(\w+) \[shape=(point|circle|doublecircle)(, label="[^"]*")?\];$')
_DOT_EDGE = re.compile(r'^\s{4}(\w+) -> (\w+)( \[label="[^"]+"\])?;$')


def _check_dot_grammar(text: str) -> None:
    lines = text.splitlines()
    assert lines[0] == "digraph typestate {"
    assert lines[-1] == "}"
    declared = set()
    for line in lines[1:-1]:
        if line.strip() == "rankdir=LR;":
            continue
        node = _DOT_NODE.match(line)
        if node:
            declared.add(node.group(1))
            continue
        edge = _DOT_EDGE.match(line)
        assert edge, f"line does not parse as DOT: {line!r}"
        assert edge.group(1) in declared and edge.group(2) in declared


def test_single_atom_dot_output():
    dot = to_dot(compile_order(Atom("c")))
    _check_dot_grammar(dot)
    assert dot.count("doublecircle") == 1
    assert 's0 -> s1 [label="c"];' in dot


def test_digest_dot_is_valid_and_deterministic(digest_automaton):
    first = to_dot(digest_automaton)
    second = to_dot(digest_automaton)
    _check_dot_grammar(first)
    assert first == second


def test_star_of_sequence_round_trip_semantics():
    expr = Star(Seq((Atom("a"), Atom("b"))))
    automaton = compile_order(expr)
    assert accepts(automaton, []).kind is VerdictKind.ACCEPTED
    assert accepts(automaton, ["a", "b", "a", "b"]).kind is VerdictKind.ACCEPTED
    assert accepts(automaton, ["a"]).kind is VerdictKind.INCOMPLETE
    assert accepts(automaton, ["b"]).kind is VerdictKind.REJECTED
