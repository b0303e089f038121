import math

import pytest

from gramlm.errors import GrammarFormatError, NoParseError
from gramlm.grammar import Pcfg, SymbolTable
from gramlm.parser import (
    inside_logprob,
    tree_logprob,
    tree_rule_counts,
    tree_to_bracketed,
    tree_yield,
    viterbi_parse,
)
from gramlm.rng import SplitMix64
from gramlm.sampler import sample_sentence

from oracles import all_sentences, oracle_inside, oracle_viterbi, random_grammar


def test_viterbi_on_toy_grammar(toy_grammar):
    g = toy_grammar
    sent = g.encode(["a", "a", "b"])
    tree, lp = viterbi_parse(g, sent)
    # only one derivation exists: S(A(a) B(A(a) B(b)))
    assert lp == pytest.approx(math.log(0.4) + math.log(0.6), abs=1e-12)
    assert tree_yield(g, tree) == sent
    assert tree_logprob(g, tree) == pytest.approx(lp, abs=1e-12)
    assert inside_logprob(g, sent) == pytest.approx(lp, abs=1e-12)


def test_no_parse_raises(toy_grammar):
    g = toy_grammar
    with pytest.raises(NoParseError):
        viterbi_parse(g, g.encode(["b", "a"]))
    with pytest.raises(NoParseError):
        inside_logprob(g, g.encode(["b", "a"]))


def test_self_embedding_counts_both_bracketings():
    syms = SymbolTable()
    s = syms.nonterminal("S")
    ta = syms.terminal("a")
    g = Pcfg(syms, s)
    g.add_rule(s, (s, s), prob=0.4)
    g.add_rule(s, (ta,), prob=0.6)
    two = [ta, ta]
    tree, lp = viterbi_parse(g, two)
    assert lp == pytest.approx(math.log(0.144), abs=1e-12)
    assert inside_logprob(g, two) == pytest.approx(math.log(0.144), abs=1e-12)
    # three tokens: two bracketings of 0.4^2 * 0.6^3 each
    three = [ta, ta, ta]
    assert inside_logprob(g, three) == pytest.approx(math.log(0.06912), abs=1e-12)
    _, lp3 = viterbi_parse(g, three)
    assert lp3 == pytest.approx(math.log(0.03456), abs=1e-12)


def test_unary_chain_parse():
    syms = SymbolTable()
    s = syms.nonterminal("S")
    a = syms.nonterminal("A")
    b = syms.nonterminal("B")
    t = syms.terminal("x")
    g = Pcfg(syms, s)
    g.add_rule(s, (a,), prob=1.0)
    g.add_rule(a, (b,), prob=0.5)
    g.add_rule(a, (t,), prob=0.5)
    g.add_rule(b, (t,), prob=1.0)
    sent = [t]
    tree, lp = viterbi_parse(g, sent)
    # two derivations at 0.5 each; viterbi picks one, inside sums both
    assert lp == pytest.approx(math.log(0.5), abs=1e-12)
    assert inside_logprob(g, sent) == pytest.approx(0.0, abs=1e-12)
    counts = tree_rule_counts(tree)
    assert sum(counts.values()) in (2, 3)


def test_unary_cycle_with_mass_below_one_converges():
    syms = SymbolTable()
    s = syms.nonterminal("S")
    a = syms.nonterminal("A")
    t = syms.terminal("x")
    g = Pcfg(syms, s)
    g.add_rule(s, (a,), prob=0.9)
    g.add_rule(a, (s,), prob=0.9)
    g.add_rule(s, (t,), prob=0.1)
    g.add_rule(a, (t,), prob=0.1)
    tree, lp = viterbi_parse(g, [t])
    # best single derivation is the direct S -> 'x'
    assert lp == pytest.approx(math.log(0.1), abs=1e-12)
    # inside sums the geometric chain; D_S = 0.1 + 0.9 * (0.1 + 0.9 * D_S) = 1
    # closure is truncated, so allow a small under-approximation
    got = inside_logprob(g, [t])
    assert math.log(0.8) < got <= 1e-9


def test_improper_unary_cycle_detected():
    syms = SymbolTable()
    s = syms.nonterminal("S")
    a = syms.nonterminal("A")
    t = syms.terminal("x")
    g = Pcfg(syms, s)
    g.add_rule(s, (a,), log_prob=0.1)  # weight above 1: mass grows every pass
    g.add_rule(a, (s,), log_prob=0.1)
    g.add_rule(s, (t,), prob=0.1)
    with pytest.raises(GrammarFormatError):
        viterbi_parse(g, [t])


def test_matches_enumeration_on_random_grammars():
    checked = 0
    for seed in range(40):
        g = random_grammar(seed)
        if g is None:
            continue
        terms = list(g.symbols.terminal_ids())
        for sent in all_sentences(terms, 4):
            ref_v = oracle_viterbi(g, sent)
            ref_i = oracle_inside(g, sent)
            if ref_v == -math.inf:
                with pytest.raises(NoParseError):
                    viterbi_parse(g, sent)
                with pytest.raises(NoParseError):
                    inside_logprob(g, sent)
            else:
                tree, got_v = viterbi_parse(g, sent)
                got_i = inside_logprob(g, sent)
                assert got_v == pytest.approx(ref_v, rel=1e-12, abs=1e-12)
                assert got_i == pytest.approx(ref_i, rel=1e-12, abs=1e-12)
                assert tree_logprob(g, tree) == pytest.approx(got_v, abs=1e-9)
                assert tree_yield(g, tree) == sent
                checked += 1
    assert checked > 80


def test_inside_at_least_viterbi(english_like):
    rng = SplitMix64(3)
    for _ in range(25):
        sent = sample_sentence(english_like, rng)
        tree, v = viterbi_parse(english_like, sent)
        i = inside_logprob(english_like, sent)
        assert i >= v - 1e-9
        assert tree_logprob(english_like, tree) == pytest.approx(v, abs=1e-9)


def test_bracketed_output(english_like):
    g = english_like
    sent = g.encode(["the", "dog", "walks"])
    tree, _ = viterbi_parse(g, sent)
    text = tree_to_bracketed(g, tree)
    assert text.startswith("(S")
    assert "the" in text and "walks" in text
    assert text.count("(") == text.count(")")


def test_empty_sentence_rejected(english_like):
    with pytest.raises((NoParseError, ValueError)):
        viterbi_parse(english_like, [])


def test_cache_tracks_grammar_version(toy_grammar):
    g = toy_grammar
    sent = g.encode(["a", "b"])
    _, lp0 = viterbi_parse(g, sent)
    b = g.symbols.lookup("B", terminal=False)
    tb = g.symbols.lookup("b", terminal=True)
    # retune B's split towards recursion, then reparse: tables must rebuild
    ridx = g.find_rule(b, (tb,))
    g.rules[ridx] = type(g.rules[ridx])(b, (tb,), math.log(0.3))
    g.touch()
    _, lp1 = viterbi_parse(g, sent)
    assert lp1 == pytest.approx(math.log(0.3), abs=1e-12)
    assert lp1 != lp0
