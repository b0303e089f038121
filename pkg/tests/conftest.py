import pytest

from gramlm.grammar import Pcfg, SymbolTable, load_grammar
from gramlm.rng import SplitMix64
from gramlm.sampler import sample_corpus

from importlib import resources


@pytest.fixture(scope="session")
def english_like():
    path = resources.files("gramlm").joinpath("data/english_like.pcfg")
    return load_grammar(str(path))


@pytest.fixture(scope="session")
def english_corpus(english_like):
    """1200 sampled sentences as token-string lists, split 1000/100/100."""
    rng = SplitMix64(7)
    sids = sample_corpus(english_like, rng, 1200)
    sents = [english_like.decode(s) for s in sids]
    return sents[:1000], sents[1000:1100], sents[1100:]


@pytest.fixture
def toy_grammar():
    """S -> A B; A -> 'a'; B -> 'b' | B 'b' is not allowed, so B -> A B | 'b'."""
    syms = SymbolTable()
    s = syms.nonterminal("S")
    a = syms.nonterminal("A")
    b = syms.nonterminal("B")
    ta = syms.terminal("a")
    tb = syms.terminal("b")
    g = Pcfg(syms, s)
    g.add_rule(s, (a, b), prob=1.0)
    g.add_rule(a, (ta,), prob=1.0)
    g.add_rule(b, (a, b), prob=0.4)
    g.add_rule(b, (tb,), prob=0.6)
    return g
