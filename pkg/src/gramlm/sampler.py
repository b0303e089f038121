"""Top-down sentence sampling from a PCFG.

Expansion is leftmost: a work stack is seeded with the start symbol and
each popped nonterminal is rewritten by a rule drawn from its distribution.
Attempts whose yield exceeds max_len are rejected and retried; after
MAX_REJECTIONS consecutive rejections SamplingError is raised.  All
randomness comes from the caller's SplitMix64 stream, so a seed fixes the
corpus exactly.
"""

import bisect
import math
import weakref

from .errors import SamplingError

MAX_REJECTIONS = 1000

# Expansion budget per attempt; exceeding it counts as a rejection.  This
# bounds unary loops that never emit a token.
_BUDGET_BASE = 200
_BUDGET_PER_TOKEN = 40

_cache = weakref.WeakKeyDictionary()


def _cumulative(g):
    hit = _cache.get(g)
    if hit is not None and hit[0] == g.version:
        return hit[1]
    table = {}
    for a in g.lhs_with_rules():
        idxs = g.by_lhs[a]
        cum = []
        total = 0.0
        for ridx in idxs:
            total += math.exp(g.rules[ridx].log_prob)
            cum.append(total)
        table[a] = (idxs, cum, total)
    _cache[g] = (g.version, table)
    return table


def sample_sentence(g, rng, max_len=30):
    """One sentence (list of terminal ids) of length 1..max_len."""
    table = _cumulative(g)
    budget = _BUDGET_BASE + _BUDGET_PER_TOKEN * max_len
    for _ in range(MAX_REJECTIONS):
        toks = _attempt(g, rng, table, max_len, budget)
        if toks is not None:
            return toks
    raise SamplingError(
        f"{MAX_REJECTIONS} consecutive samples exceeded max_len={max_len}")


def _attempt(g, rng, table, max_len, budget):
    stack = [g.start]
    out = []
    steps = 0
    while stack:
        steps += 1
        if steps > budget:
            return None
        sym = stack.pop()
        if g.symbols.is_terminal(sym):
            out.append(sym)
            if len(out) > max_len:
                return None
            continue
        idxs, cum, total = table[sym]
        x = rng.random() * total
        choice = min(bisect.bisect_right(cum, x), len(idxs) - 1)
        rhs = g.rules[idxs[choice]].rhs
        for s in reversed(rhs):
            stack.append(s)
    return out


def sample_corpus(g, rng, n_sentences, max_len=30):
    """n_sentences independent draws, in stream order."""
    return [sample_sentence(g, rng, max_len) for _ in range(n_sentences)]


def write_corpus(g, corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for sids in corpus:
            fh.write(" ".join(g.decode(sids)) + "\n")


def read_corpus(path):
    """Token-string sentences, one per line; blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if toks:
                out.append(toks)
    return out
