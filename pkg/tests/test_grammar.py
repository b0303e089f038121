import logging
import math

import pytest

from gramlm.errors import GrammarFormatError, NormalizationError, UnknownTokenError
from gramlm.grammar import (
    Pcfg,
    SymbolTable,
    description_length,
    load_grammar,
    log_prior,
    normalize,
    normalize_all,
    save_grammar,
)
from gramlm.induction import initial_grammar


def test_symbol_table_interning():
    syms = SymbolTable()
    a = syms.nonterminal("S")
    assert syms.nonterminal("S") == a
    t = syms.terminal("S")
    assert t != a  # terminals and nonterminals live in separate namespaces
    assert syms.name(a) == syms.name(t) == "S"
    assert syms.is_terminal(t) and not syms.is_terminal(a)
    assert syms.lookup("S", terminal=True) == t
    assert syms.lookup("missing", terminal=True) is None
    assert set(syms.terminal_ids()) | set(syms.nonterminal_ids()) == {a, t}


def test_fresh_nonterminal_skips_taken_names():
    syms = SymbolTable()
    syms.nonterminal("C1")
    syms.nonterminal("C2")
    sid = syms.fresh_nonterminal("C")
    assert syms.name(sid) == "C3"
    assert syms.name(syms.fresh_nonterminal("C")) == "C4"


def test_add_rule_validation(toy_grammar):
    g = toy_grammar
    syms = g.symbols
    s = syms.lookup("S", terminal=False)
    a = syms.lookup("A", terminal=False)
    ta = syms.lookup("a", terminal=True)
    with pytest.raises(GrammarFormatError):
        g.add_rule(ta, (a,), prob=1.0)  # terminal lhs
    with pytest.raises(GrammarFormatError):
        g.add_rule(s, (a, a, a), prob=1.0)  # rhs too long
    with pytest.raises(GrammarFormatError):
        g.add_rule(s, (), prob=1.0)  # empty rhs
    with pytest.raises(GrammarFormatError):
        g.add_rule(s, (a, ta), prob=1.0)  # terminal in binary rhs
    with pytest.raises(GrammarFormatError):
        g.add_rule(s, (a, g.symbols.lookup("B", terminal=False)), prob=1.0)  # dup
    with pytest.raises(ValueError):
        g.add_rule(a, (a, a))  # no weight given
    with pytest.raises(GrammarFormatError):
        g.add_rule(a, (a, a), prob=-0.5)


def test_rule_indexes_and_find(toy_grammar):
    g = toy_grammar
    s = g.symbols.lookup("S", terminal=False)
    a = g.symbols.lookup("A", terminal=False)
    b = g.symbols.lookup("B", terminal=False)
    ridx = g.find_rule(s, (a, b))
    assert ridx is not None and g.rules[ridx].lhs == s
    assert g.find_rule(b, (b, b)) is None
    assert ridx in g.by_rhs[(a, b)]
    assert ridx in g.by_lhs[s]


def test_version_bumps_on_mutation(toy_grammar):
    g = toy_grammar
    v0 = g.version
    a = g.symbols.lookup("A", terminal=False)
    g.add_rule(a, (a, a), prob=0.0)
    assert g.version > v0


def test_encode_decode_round_trip(toy_grammar):
    g = toy_grammar
    sids = g.encode(["a", "b", "a"])
    assert g.decode(sids) == ["a", "b", "a"]
    with pytest.raises(UnknownTokenError):
        g.encode(["a", "zz"])


def test_free_params(toy_grammar):
    # 4 rules over 3 lhs symbols -> 1 free probability (the B split)
    assert toy_grammar.free_params() == 1


def test_normalize_and_validate():
    syms = SymbolTable()
    s = syms.nonterminal("S")
    ta = syms.terminal("a")
    tb = syms.terminal("b")
    g = Pcfg(syms, s)
    g.add_rule(s, (ta,), prob=3.0)
    g.add_rule(s, (tb,), prob=1.0)
    with pytest.raises(NormalizationError):
        g.validate()
    normalize(g, s)
    g.validate()
    probs = sorted(math.exp(g.rules[r].log_prob) for r in g.by_lhs[s])
    assert probs == pytest.approx([0.25, 0.75], abs=1e-12)


def test_normalize_rejects_zero_mass():
    syms = SymbolTable()
    s = syms.nonterminal("S")
    g = Pcfg(syms, s)
    g.add_rule(s, (syms.terminal("a"),), prob=0.0)
    with pytest.raises(NormalizationError):
        normalize(g, s)


def test_description_length_empty_grammar():
    syms = SymbolTable()
    g = Pcfg(syms, syms.nonterminal("S"))
    assert description_length(g) == 0.0
    assert log_prior(g) == 0.0


def test_description_length_single_binary_rule():
    # one size-3 rule over 3 symbols: 3 * log2(3 + 1) = 6 bits
    syms = SymbolTable()
    s = syms.nonterminal("S")
    a = syms.nonterminal("A")
    syms.terminal("x")
    g = Pcfg(syms, s)
    g.add_rule(s, (a, a), prob=1.0)
    assert description_length(g) == pytest.approx(6.0, abs=1e-12)
    assert log_prior(g) == pytest.approx(-6.0 * math.log(2), abs=1e-12)


def test_description_length_seed_grammar_two_terminals():
    # Seed grammar over {a, b}: six symbols (S, X, A_a, A_b, a, b) and six
    # rules of encoded sizes 3,2,2,2,2,2, so 13 * log2(7) bits in total.
    g = initial_grammar(["a", "b"])
    assert len(g.symbols) == 6
    assert len(g.rules) == 6
    assert description_length(g) == pytest.approx(13 * math.log2(7), abs=1e-9)


def test_adding_a_rule_decreases_prior(toy_grammar):
    g = toy_grammar
    before = log_prior(g)
    a = g.symbols.lookup("A", terminal=False)
    g.add_rule(a, (a, a), prob=0.1)
    assert log_prior(g) < before


def test_save_load_round_trip(tmp_path, english_like):
    path = tmp_path / "g.pcfg"
    save_grammar(english_like, str(path))
    g2 = load_grammar(str(path))
    assert g2.symbols.name(g2.start) == english_like.symbols.name(english_like.start)
    assert len(g2.rules) == len(english_like.rules)
    old = {english_like.rule_str(i): r.log_prob
           for i, r in enumerate(english_like.rules)}
    new = {g2.rule_str(i): r.log_prob for i, r in enumerate(g2.rules)}
    assert new == old  # repr round-trip keeps log probs bit-exact


def test_save_load_escaped_terminals(tmp_path):
    syms = SymbolTable()
    s = syms.nonterminal("S")
    weird = syms.terminal("a'b\\c d")
    g = Pcfg(syms, s)
    g.add_rule(s, (weird,), prob=1.0)
    path = tmp_path / "weird.pcfg"
    save_grammar(g, str(path))
    g2 = load_grammar(str(path))
    assert [g2.symbols.name(t) for t in g2.symbols.terminal_ids()] == ["a'b\\c d"]


def test_load_merges_duplicate_rules(tmp_path, caplog):
    path = tmp_path / "dup.pcfg"
    path.write_text(
        "start: S\n"
        "# a comment line\n"
        "S -> 'a' 0.25\n"
        "S -> 'a' 0.25\n"
        "S -> 'b' 0.5\n"
    )
    with caplog.at_level(logging.WARNING):
        g = load_grammar(str(path))
    assert "duplicate" in caplog.text
    assert len(g.rules) == 2
    ridx = g.find_rule(g.start, (g.symbols.lookup("a", True),))
    assert math.exp(g.rules[ridx].log_prob) == pytest.approx(0.5, abs=1e-12)


def test_load_renormalizes_with_warning(tmp_path, caplog):
    path = tmp_path / "off.pcfg"
    path.write_text("start: S\nS -> 'a' 0.4\nS -> 'b' 0.4\n")
    with caplog.at_level(logging.WARNING):
        g = load_grammar(str(path))
    assert "renormaliz" in caplog.text
    g.validate()


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.pcfg"
    path.write_text("start: S\nS -> 'a' not_a_number\n")
    with pytest.raises(GrammarFormatError, match="line 2"):
        load_grammar(str(path))
    path.write_text("S -> 'a' 1.0\n")
    with pytest.raises(GrammarFormatError, match="start"):
        load_grammar(str(path))


def test_copy_is_independent(toy_grammar):
    g = toy_grammar
    g2 = g.copy()
    assert g2.symbols is g.symbols  # symbol table is shared by design
    a = g.symbols.lookup("A", terminal=False)
    g2.add_rule(a, (a, a), prob=0.5)
    assert len(g2.rules) == len(g.rules) + 1
    assert description_length(g2) > description_length(g)


def test_normalize_all(english_like):
    g = english_like.copy()
    for i, r in enumerate(list(g.rules)):
        g.rules[i] = type(r)(r.lhs, r.rhs, r.log_prob + 0.3)
    normalize_all(g)
    g.validate()
