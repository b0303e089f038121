"""Bottom-up chart parsing: Viterbi trees and inside probabilities.

Charts are per-span score vectors over all symbols, filled in log space.
Unary rules are handled by a per-grammar closure: for Viterbi a best-chain
matrix built by relaxation (at most one pass per symbol, then a fixpoint
check), for inside a summed closure matrix truncated once a pass adds less
than CLOSURE_EPS of mass.  The truncation is exact whenever the unary rule
graph is acyclic, which holds for every grammar this package constructs.

Tie-breaking is deterministic: among equal-probability expansions of a
cell symbol the lowest rule index wins, then the smaller left-child span.
Ties inside a unary chain resolve by relaxation order, which is fixed by
rule index as well.
"""

import math
import weakref
from collections import Counter
from typing import NamedTuple

import numpy as np

from .errors import GrammarFormatError, NoParseError, UnknownTokenError

CLOSURE_EPS = 1e-15

_NEG_INF = float("-inf")


class ParseTree(NamedTuple):
    sym: int
    rule: int
    children: tuple
    span: tuple


class _Tables:
    """Arrays compiled from one grammar version."""

    def __init__(self, g):
        n = len(g.symbols)
        self.n = n
        self.lex = {}           # terminal sid -> [(ridx, lhs, logp)], ridx ascending
        unary = []              # (ridx, lhs, rhs0, logp)
        binary = []             # (lhs, ridx, rhs0, rhs1, logp)
        for ridx, r in enumerate(g.rules):
            if len(r.rhs) == 1:
                child = r.rhs[0]
                if g.symbols.is_terminal(child):
                    self.lex.setdefault(child, []).append((ridx, r.lhs, r.log_prob))
                else:
                    unary.append((ridx, r.lhs, child, r.log_prob))
            else:
                binary.append((r.lhs, ridx, r.rhs[0], r.rhs[1], r.log_prob))
        binary.sort(key=lambda t: (t[0], t[1]))
        self.bl = np.array([t[0] for t in binary], dtype=np.intp)
        self.bridx = np.array([t[1] for t in binary], dtype=np.intp)
        self.bb = np.array([t[2] for t in binary], dtype=np.intp)
        self.bc = np.array([t[3] for t in binary], dtype=np.intp)
        self.blp = np.array([t[4] for t in binary], dtype=np.float64)
        self.bplin = np.exp(self.blp)
        self.unary = unary
        self._build_viterbi_closure(g, unary)
        self._build_inside_closure(g, unary)

    def _build_viterbi_closure(self, g, unary):
        n = self.n
        W = np.full((n, n), _NEG_INF)
        np.fill_diagonal(W, 0.0)
        WR = np.full((n, n), -1, dtype=np.intp)   # first rule on the best chain
        WM = np.full((n, n), -1, dtype=np.intp)   # symbol that rule rewrites to
        for _ in range(n + 1):
            changed = False
            for ridx, a, b, lp in unary:
                cand = lp + W[b]
                better = cand > W[a]
                if better.any():
                    W[a][better] = cand[better]
                    WR[a][better] = ridx
                    WM[a][better] = b
                    changed = True
            if not changed:
                break
        else:
            raise GrammarFormatError(
                "unary closure did not reach a fixpoint; "
                "a probability-one unary cycle is present")
        self.W = W
        self.WR = WR
        self.WM = WM

    def _build_inside_closure(self, g, unary):
        n = self.n
        U = np.zeros((n, n))
        for _, a, b, lp in unary:
            U[a, b] += math.exp(lp)
        C = np.eye(n)
        eye = np.eye(n)
        for _ in range(4 * n + 16):
            nxt = eye + U @ C
            gain = np.abs(nxt - C).max()
            C = nxt
            if gain < CLOSURE_EPS:
                break
        self.C = C


_cache = weakref.WeakKeyDictionary()


def _tables(g):
    hit = _cache.get(g)
    if hit is not None and hit[0] == g.version:
        return hit[1]
    t = _Tables(g)
    _cache[g] = (g.version, t)
    return t


def _check_sentence(g, sentence):
    if len(sentence) == 0:
        raise ValueError("cannot parse an empty sentence")
    for tok in sentence:
        if not (0 <= tok < len(g.symbols)) or not g.symbols.is_terminal(tok):
            raise UnknownTokenError(f"symbol id {tok} is not a terminal")


def _viterbi_chart(g, sentence, t):
    """Fill all cells; each holds (values, chain_target, base_backpointer)."""
    n = t.n
    L = len(sentence)
    cells = {}

    def close(base, basebp):
        scored = t.W + base[None, :]
        vals = scored.max(axis=1)
        arg = scored.argmax(axis=1)
        return vals, arg, basebp

    for i, tok in enumerate(sentence):
        base = np.full(n, _NEG_INF)
        basebp = [None] * n
        for ridx, lhs, lp in t.lex.get(tok, ()):
            if lp > base[lhs]:
                base[lhs] = lp
                basebp[lhs] = (ridx, -1)
        cells[i, i + 1] = close(base, basebp)

    R = len(t.bl)
    for width in range(2, L + 1):
        for i in range(L - width + 1):
            j = i + width
            base = np.full(n, _NEG_INF)
            basebp = [None] * n
            if R:
                lm = np.stack([cells[i, k][0] for k in range(i + 1, j)])
                rm = np.stack([cells[k, j][0] for k in range(i + 1, j)])
                scores = t.blp[:, None] + lm[:, t.bb].T + rm[:, t.bc].T
                rowbest = scores.max(axis=1)
                rowarg = scores.argmax(axis=1)
                np.maximum.at(base, t.bl, rowbest)
                cand = np.flatnonzero((rowbest > _NEG_INF) & (rowbest == base[t.bl]))
                if cand.size:
                    uniq, first = np.unique(t.bl[cand], return_index=True)
                    for a, fi in zip(uniq, first):
                        row = cand[fi]
                        basebp[a] = (int(t.bridx[row]), i + 1 + int(rowarg[row]))
            cells[i, j] = close(base, basebp)
    return cells


def _build_tree(g, t, cells, sym, i, j):
    vals, arg, basebp = cells[i, j]
    target = int(arg[sym])
    chain = []
    a = sym
    for _ in range(t.n + 1):
        if a == target:
            break
        ridx = int(t.WR[a, target])
        chain.append((a, ridx))
        a = int(t.WM[a, target])
    else:
        raise AssertionError("unary chain reconstruction looped")
    bp = basebp[target]
    ridx, split = bp
    if split < 0:
        node = ParseTree(target, ridx, (), (i, j))
    else:
        rule = g.rules[ridx]
        left = _build_tree(g, t, cells, rule.rhs[0], i, split)
        right = _build_tree(g, t, cells, rule.rhs[1], split, j)
        node = ParseTree(target, ridx, (left, right), (i, j))
    for a, ridx in reversed(chain):
        node = ParseTree(a, ridx, (node,), (i, j))
    return node


def viterbi_parse(g, sentence):
    """Best derivation of the sentence: returns (tree, log probability)."""
    _check_sentence(g, sentence)
    t = _tables(g)
    cells = _viterbi_chart(g, sentence, t)
    L = len(sentence)
    vals = cells[0, L][0]
    best = vals[g.start]
    if best == _NEG_INF:
        raise NoParseError(f"no parse for {' '.join(g.decode(sentence))!r}")
    tree = _build_tree(g, t, cells, g.start, 0, L)
    return tree, float(best)


def inside_logprob(g, sentence):
    """Log of the summed probability of every derivation of the sentence."""
    _check_sentence(g, sentence)
    t = _tables(g)
    n = t.n
    L = len(sentence)
    lin = {}
    off = {}
    for i, tok in enumerate(sentence):
        base = np.zeros(n)
        for ridx, lhs, lp in t.lex.get(tok, ()):
            base[lhs] += math.exp(lp)
        lin[i, i + 1], off[i, i + 1] = _close_inside(t, base, 0.0)
    for width in range(2, L + 1):
        for i in range(L - width + 1):
            j = i + width
            parts = []
            for k in range(i + 1, j):
                o = off[i, k] + off[k, j]
                if o == _NEG_INF:
                    continue
                contrib = t.bplin * lin[i, k][t.bb] * lin[k, j][t.bc]
                vec = np.bincount(t.bl, weights=contrib, minlength=n) if len(t.bl) else np.zeros(n)
                parts.append((o, vec))
            if not parts:
                lin[i, j] = np.zeros(n)
                off[i, j] = _NEG_INF
                continue
            top = max(o for o, _ in parts)
            base = np.zeros(n)
            for o, vec in parts:
                base += math.exp(o - top) * vec
            lin[i, j], off[i, j] = _close_inside(t, base, top)
    value = lin[0, L][g.start]
    if value <= 0.0 or off[0, L] == _NEG_INF:
        raise NoParseError(f"no parse for {' '.join(g.decode(sentence))!r}")
    return float(math.log(value) + off[0, L])


def _close_inside(t, base, offset):
    closed = t.C @ base
    m = closed.max()
    if m <= 0.0:
        return closed, _NEG_INF
    return closed / m, offset + math.log(m)


def tree_rule_counts(tree):
    """Counter of rule index -> number of applications in the tree."""
    counts = Counter()
    stack = [tree]
    while stack:
        node = stack.pop()
        counts[node.rule] += 1
        stack.extend(node.children)
    return counts


def tree_logprob(g, tree):
    total = 0.0
    stack = [tree]
    while stack:
        node = stack.pop()
        total += g.rules[node.rule].log_prob
        stack.extend(node.children)
    return total


def tree_yield(g, tree):
    """Terminal ids at the leaves, left to right."""
    out = []

    def walk(node):
        if not node.children:
            out.append(g.rules[node.rule].rhs[0])
        else:
            for c in node.children:
                walk(c)

    walk(tree)
    return out


def tree_to_bracketed(g, tree):
    sym = g.symbols
    if not tree.children:
        term = g.rules[tree.rule].rhs[0]
        return f"({sym.name(tree.sym)} {sym.name(term)})"
    inner = " ".join(tree_to_bracketed(g, c) for c in tree.children)
    return f"({sym.name(tree.sym)} {inner})"
