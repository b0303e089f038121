"""Greedy grammar induction over an incrementally processed corpus.

The hypothesis space starts from a seed grammar that generates any
nonempty token string: S -> S X | X builds a left-branching spine, X
expands to one preterminal per vocabulary item, and each preterminal
rewrites to its token.  Candidate refinements are triggered by the newest
sentence's best parse and come in three kinds, each introducing one fresh
nonterminal A together with an X -> A rule:

  concat(B, C)   adds A -> B C
  disjoin(B, C)  adds A -> B | C
  iterate(B)     adds A -> A B | B

A move is scored without reparsing: its predicted effect on every stored
parse is a local rewrite of the spine (adjacent B C pairs merge, B and C
roots reroute through A, runs of B collapse to a left chain), so the
corpus log-likelihood under the deterministic parameter rule is a closed
form of the edited rule counts.  The search accepts the best move while
the combined likelihood-plus-prior delta stays positive, then moves on to
the next sentence.  Stored parses are only re-derived from scratch at
optional checkpoints; between checkpoints they may drift from the true
Viterbi parses, which mirrors how the scores were estimated.
"""

import itertools
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass

from .errors import ConfigError, StateError
from .grammar import Pcfg, SymbolTable, log_prior
from .parser import ParseTree, tree_rule_counts, tree_yield, viterbi_parse

log = logging.getLogger(__name__)

_LN2 = math.log(2.0)
_LOG_HALF = math.log(0.5)

# Description-length units (rhs length + 1 per rule) added by each move,
# counting the concomitant X -> A rule.
_UNITS_ADDED = {"concat": 5, "disjoin": 6, "iterate": 7}

_NEW = None  # stands for the not-yet-created symbol in count deltas


@dataclass(frozen=True)
class Move:
    kind: str            # "concat" | "disjoin" | "iterate"
    b: int
    c: int = -1          # unused for iterate


@dataclass
class InduceConfig:
    epsilon: float = 0.01
    smoothing_add: float = 1.0
    max_sentence_len: int = 40
    checkpoint_every: int | None = None
    vocab: tuple | None = None   # explicit token list; default = corpus types
    progress: object = None      # file-like sink for per-sentence records


@dataclass
class EditPlan:
    """Predicted spine rewrites for one move over the whole parse store."""
    move: Move
    positions: dict              # sentence index -> hit list
    dx: dict                     # symbol (or _NEW) -> X-expansion count delta
    d_tot: int
    d_nsx: int
    new_rule_ll: float           # count-weighted log prob of the A rules


def initial_grammar(vocab, epsilon=0.01):
    """Seed grammar over the given tokens; generates every nonempty string."""
    vocab = sorted(set(vocab))
    if not vocab:
        raise ConfigError("vocabulary is empty")
    if not (0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
    sym = SymbolTable()
    s = sym.nonterminal("S")
    x = sym.nonterminal("X")
    g = Pcfg(sym, s)
    g.add_rule(s, (s, x), prob=1.0 - epsilon)
    g.add_rule(s, (x,), prob=epsilon)
    share = 1.0 / len(vocab)
    for tok in vocab:
        term = sym.terminal(tok)
        pre = sym.nonterminal(f"A_{tok}")
        g.add_rule(x, (pre,), prob=share)
        g.add_rule(pre, (term,), prob=1.0)
    return g


def set_parameters(counts, g, epsilon, add=1.0):
    """Deterministic parameters from Viterbi rule counts, in place.

    S keeps the fixed split 1-epsilon / epsilon, X gets add-one smoothed
    relative frequencies over its expansions, and every other nonterminal
    expands uniformly over its rules.
    """
    if not (0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
    sid_x = g.symbols.lookup("X", False)
    if sid_x is None:
        raise StateError("grammar has no X symbol; not an induction grammar")
    for a in g.lhs_with_rules():
        idxs = g.by_lhs[a]
        if a == g.start:
            for ridx in idxs:
                two = len(g.rules[ridx].rhs) == 2
                g.rules[ridx].log_prob = math.log1p(-epsilon) if two else math.log(epsilon)
        elif a == sid_x:
            tot = sum(counts.get(ridx, 0) for ridx in idxs)
            denom = tot + add * len(idxs)
            for ridx in idxs:
                g.rules[ridx].log_prob = math.log(
                    (counts.get(ridx, 0) + add) / denom)
        else:
            lp = -math.log(len(idxs))
            for ridx in idxs:
                g.rules[ridx].log_prob = lp
    g.touch()
    return g


class HypothesisState:
    """Grammar plus stored parses, their rule counts, and spine aggregates.

    The aggregates (per-symbol root counts, adjacent-pair counts, run
    statistics) let a candidate move be scored in O(symbols) without
    scanning the parse store; `predict_viterbi_delta` is the scanning
    reference and must agree exactly.
    """

    def __init__(self, grammar, epsilon=0.01, add=1.0):
        self.grammar = grammar
        self.epsilon = epsilon
        self.add = add
        self.sid_s = grammar.start
        self.sid_x = grammar.symbols.lookup("X", False)
        if self.sid_x is None:
            raise StateError("grammar has no X symbol")
        self.ridx_ssx = grammar.find_rule(self.sid_s, (self.sid_s, self.sid_x))
        self.ridx_sx = grammar.find_rule(self.sid_s, (self.sid_x,))
        self.x_rule_of = {grammar.rules[r].rhs[0]: r
                          for r in grammar.by_lhs[self.sid_x]}
        self.root_nodes = []       # per sentence: list of root subtrees
        self.roots = []            # per sentence: list of root symbols
        self.viterbi_counts = Counter()
        self.n_processed = 0
        self.accepted_moves = 0
        # spine aggregates
        self.counts_x = Counter()
        self.tot_x = 0
        self.n_sx = 0
        self.adj = Counter()       # ordered (b, c) adjacency counts, b != c
        self.pairs_same = Counter()    # b -> sum over runs of floor(len/2)
        self.runs2_cnt = Counter()     # b -> number of runs with len >= 2
        self.runs2_len = Counter()     # b -> total length of those runs

    # -- spine bookkeeping ------------------------------------------------

    def _agg_update(self, roots, sign):
        self.n_sx += sign * (len(roots) - 1)
        self.tot_x += sign * len(roots)
        for s in roots:
            self.counts_x[s] += sign
        for a, b in zip(roots, roots[1:]):
            if a != b:
                self.adj[a, b] += sign
        for sym, _, length in _runs(roots):
            self.pairs_same[sym] += sign * (length // 2)
            if length >= 2:
                self.runs2_cnt[sym] += sign
                self.runs2_len[sym] += sign * length

    def append_parse(self, tree):
        nodes = self._spine_roots(tree)
        self.root_nodes.append(nodes)
        self.roots.append([n.sym for n in nodes])
        self.viterbi_counts.update(tree_rule_counts(tree))
        self._agg_update(self.roots[-1], +1)
        self.n_processed += 1
        set_parameters(self.viterbi_counts, self.grammar, self.epsilon, self.add)

    def _spine_roots(self, tree):
        g = self.grammar
        nodes = []
        node = tree
        while True:
            rule = g.rules[node.rule]
            if rule.rhs == (self.sid_s, self.sid_x):
                nodes.append(node.children[1].children[0])
                node = node.children[0]
            elif rule.rhs == (self.sid_x,):
                nodes.append(node.children[0].children[0])
                break
            else:
                raise StateError("stored parse is not spine-shaped")
        nodes.reverse()
        return nodes

    def assembled_tree(self, idx):
        """Full stored parse for one sentence, spine included."""
        nodes = self.root_nodes[idx]

        def wrap(sub):
            return ParseTree(self.sid_x, self.x_rule_of[sub.sym], (sub,), sub.span)

        first = wrap(nodes[0])
        tree = ParseTree(self.sid_s, self.ridx_sx, (first,), first.span)
        for sub in nodes[1:]:
            xn = wrap(sub)
            tree = ParseTree(self.sid_s, self.ridx_ssx, (tree, xn),
                             (tree.span[0], xn.span[1]))
        return tree

    def recounted(self):
        """Rule counts recomputed from the stored trees (consistency check)."""
        total = Counter()
        for idx in range(len(self.root_nodes)):
            total.update(tree_rule_counts(self.assembled_tree(idx)))
        return total

    def estimated_objective(self):
        """Count-weighted log-likelihood of the store plus the log prior."""
        ll = sum(cnt * self.grammar.rules[ridx].log_prob
                 for ridx, cnt in self.viterbi_counts.items())
        return ll + log_prior(self.grammar)


def _runs(roots):
    """Maximal runs of equal symbols: (symbol, start, length)."""
    out = []
    i = 0
    while i < len(roots):
        j = i
        while j + 1 < len(roots) and roots[j + 1] == roots[i]:
            j += 1
        out.append((roots[i], i, j - i + 1))
        i = j + 1
    return out


def _scan_concat(roots, b, c):
    hits = []
    i = 0
    while i + 1 < len(roots):
        if roots[i] == b and roots[i + 1] == c:
            hits.append(i)
            i += 2
        else:
            i += 1
    return hits


# -- triggers -------------------------------------------------------------

def enumerate_triggers(state, tree):
    """Moves suggested by one parse tree, duplicates filtered."""
    return triggers_from_roots(state, [n.sym for n in state._spine_roots(tree)])


def triggers_from_roots(state, roots):
    g = state.grammar
    out = []
    seen = set()

    def push(mv):
        if mv not in seen:
            seen.add(mv)
            out.append(mv)

    for a, b in zip(roots, roots[1:]):
        if not g.by_rhs.get((a, b)):
            push(Move("concat", a, b))
    for sym, _, length in _runs(roots):
        if length >= 2 and not _iterate_exists(g, sym):
            push(Move("iterate", sym))
    neighbors = defaultdict(set)
    for a, b in zip(roots, roots[1:]):
        neighbors[a].add(b)
        neighbors[b].add(a)
    present = sorted(set(roots))
    for b, c in itertools.combinations(present, 2):
        if neighbors[b] & neighbors[c] and not _disjoin_exists(state, b, c):
            push(Move("disjoin", b, c))
    return out


def _iterate_exists(g, b):
    for ridx in g.by_rhs.get((b,), ()):
        lhs = g.rules[ridx].lhs
        if g.find_rule(lhs, (lhs, b)) is not None:
            return True
    return False


def _disjoin_exists(state, b, c):
    g = state.grammar
    for ridx in g.by_rhs.get((b,), ()):
        lhs = g.rules[ridx].lhs
        if lhs in (state.sid_s, state.sid_x):
            continue
        if len(g.by_lhs[lhs]) == 2 and g.find_rule(lhs, (c,)) is not None:
            return True
    return False


# -- scoring --------------------------------------------------------------

def _loglik_delta(state, dx, d_tot, d_nsx, new_rule_ll):
    """Closed-form corpus log-likelihood change for edited counts.

    Only the spine terms move: S -> S X applications shift by d_nsx, and
    the X expansion distribution is re-derived from the edited counts with
    one extra expansion (the X -> A rule) in its smoothing denominator.
    Rule counts inside root subtrees are untouched by every move kind.
    """
    add = state.add
    k_old = len(state.grammar.by_lhs[state.sid_x])
    k_new = k_old + 1
    tot_old = state.tot_x
    tot_new = tot_old + d_tot
    delta = d_nsx * math.log1p(-state.epsilon) + new_rule_ll
    for sym, d in dx.items():
        if d == 0:
            continue
        c_old = state.counts_x.get(sym, 0) if sym is not _NEW else 0
        c_new = c_old + d
        if c_new < 0:
            raise StateError("edit produced a negative count")
        delta += c_new * math.log(c_new + add) - c_old * math.log(c_old + add)
    delta -= tot_new * math.log(tot_new + add * k_new)
    delta += tot_old * math.log(tot_old + add * k_old)
    return delta


def _move_stats(state, move):
    """Aggregate-based count deltas; must match the scanning reference."""
    dx = Counter()
    if move.kind == "concat":
        m = state.adj.get((move.b, move.c), 0) if move.b != move.c \
            else state.pairs_same.get(move.b, 0)
        dx[move.b] -= m
        dx[move.c] -= m
        dx[_NEW] += m
        return dx, -m, -m, 0.0
    if move.kind == "disjoin":
        nb = state.counts_x.get(move.b, 0)
        nc = state.counts_x.get(move.c, 0)
        dx[move.b] -= nb
        dx[move.c] -= nc
        dx[_NEW] += nb + nc
        return dx, 0, 0, (nb + nc) * _LOG_HALF
    if move.kind == "iterate":
        r = state.runs2_cnt.get(move.b, 0)
        length = state.runs2_len.get(move.b, 0)
        dx[move.b] -= length
        dx[_NEW] += r
        return dx, -(length - r), -(length - r), length * _LOG_HALF
    raise ConfigError(f"unknown move kind {move.kind!r}")


def predict_viterbi_delta(state, move):
    """Scanning reference: per-sentence edit positions plus the LL delta."""
    positions = {}
    dx = Counter()
    d_tot = 0
    d_nsx = 0
    apps = 0
    for idx, roots in enumerate(state.roots):
        if move.kind == "concat":
            hits = _scan_concat(roots, move.b, move.c)
            if not hits:
                continue
            m = len(hits)
            positions[idx] = hits
            dx[move.b] -= m
            dx[move.c] -= m
            dx[_NEW] += m
            d_tot -= m
            d_nsx -= m
        elif move.kind == "disjoin":
            hits = [i for i, s in enumerate(roots) if s in (move.b, move.c)]
            if not hits:
                continue
            positions[idx] = hits
            for i in hits:
                dx[roots[i]] -= 1
            dx[_NEW] += len(hits)
            apps += len(hits)
        elif move.kind == "iterate":
            hits = [(start, length) for sym, start, length in _runs(roots)
                    if sym == move.b and length >= 2]
            if not hits:
                continue
            positions[idx] = hits
            for _, length in hits:
                dx[move.b] -= length
                dx[_NEW] += 1
                d_tot -= length - 1
                d_nsx -= length - 1
                apps += length
        else:
            raise ConfigError(f"unknown move kind {move.kind!r}")
    new_rule_ll = apps * _LOG_HALF if move.kind in ("disjoin", "iterate") else 0.0
    delta = _loglik_delta(state, dx, d_tot, d_nsx, new_rule_ll)
    plan = EditPlan(move, positions, dict(dx), d_tot, d_nsx, new_rule_ll)
    return plan, delta


def _prior_delta(state, move):
    g = state.grammar
    v = len(g.symbols)
    dl_old = g._units * math.log2(v + 1)
    dl_new = (g._units + _UNITS_ADDED[move.kind]) * math.log2(v + 2)
    return -(dl_new - dl_old) * _LN2


def objective_delta(state, move):
    """Change in log p(corpus|G) + log p(G) if the move were applied."""
    dx, d_tot, d_nsx, new_rule_ll = _move_stats(state, move)
    return _loglik_delta(state, dx, d_tot, d_nsx, new_rule_ll) \
        + _prior_delta(state, move)


# -- application ----------------------------------------------------------

def apply_move(state, move, plan=None):
    """Create the move's symbol and rules and rewrite the stored parses."""
    if plan is None:
        plan, _ = predict_viterbi_delta(state, move)
    g = state.grammar
    prefix = {"concat": "C", "disjoin": "D", "iterate": "I"}[move.kind]
    a = g.symbols.fresh_nonterminal(prefix)
    if move.kind == "concat":
        r_main = g.add_rule(a, (move.b, move.c), prob=1.0)
        r_alt = None
    elif move.kind == "disjoin":
        r_main = g.add_rule(a, (move.b,), prob=0.5)
        r_alt = g.add_rule(a, (move.c,), prob=0.5)
    else:
        r_main = g.add_rule(a, (a, move.b), prob=0.5)
        r_alt = g.add_rule(a, (move.b,), prob=0.5)
    r_x = g.add_rule(state.sid_x, (a,), prob=1.0)  # reset by set_parameters
    state.x_rule_of[a] = r_x

    counts = state.viterbi_counts
    for idx, hits in plan.positions.items():
        nodes = state.root_nodes[idx]
        if move.kind == "concat":
            new_nodes = []
            hit_set = set(hits)
            i = 0
            while i < len(nodes):
                if i in hit_set:
                    left, right = nodes[i], nodes[i + 1]
                    new_nodes.append(ParseTree(
                        a, r_main, (left, right), (left.span[0], right.span[1])))
                    counts[state.ridx_ssx] -= 1
                    counts[state.x_rule_of[move.b]] -= 1
                    counts[state.x_rule_of[move.c]] -= 1
                    counts[r_x] += 1
                    counts[r_main] += 1
                    i += 2
                else:
                    new_nodes.append(nodes[i])
                    i += 1
        elif move.kind == "disjoin":
            new_nodes = list(nodes)
            for i in hits:
                sub = nodes[i]
                ridx = r_main if sub.sym == move.b else r_alt
                new_nodes[i] = ParseTree(a, ridx, (sub,), sub.span)
                counts[state.x_rule_of[sub.sym]] -= 1
                counts[r_x] += 1
                counts[ridx] += 1
        else:
            new_nodes = []
            runs = {start: length for start, length in hits}
            i = 0
            while i < len(nodes):
                length = runs.get(i)
                if length is None:
                    new_nodes.append(nodes[i])
                    i += 1
                    continue
                chain = ParseTree(a, r_alt, (nodes[i],), nodes[i].span)
                for t in range(1, length):
                    nxt = nodes[i + t]
                    chain = ParseTree(a, r_main, (chain, nxt),
                                      (chain.span[0], nxt.span[1]))
                new_nodes.append(chain)
                counts[state.ridx_ssx] -= length - 1
                counts[state.x_rule_of[move.b]] -= length
                counts[r_x] += 1
                counts[r_main] += length - 1
                counts[r_alt] += 1
                i += length
        state._agg_update(state.roots[idx], -1)
        state.root_nodes[idx] = new_nodes
        state.roots[idx] = [n.sym for n in new_nodes]
        state._agg_update(state.roots[idx], +1)
    for ridx in list(counts):
        if counts[ridx] == 0:
            del counts[ridx]
    state.accepted_moves += 1
    set_parameters(counts, g, state.epsilon, state.add)
    return a


# -- the outer loop -------------------------------------------------------

def run_induction(corpus, config=None):
    """Process the corpus sentence by sentence; returns the final state."""
    cfg = config or InduceConfig()
    vocab = cfg.vocab if cfg.vocab is not None else \
        sorted({tok for sent in corpus for tok in sent})
    g = initial_grammar(vocab, cfg.epsilon)
    state = HypothesisState(g, cfg.epsilon, cfg.smoothing_add)
    for idx, toks in enumerate(corpus):
        if len(toks) > cfg.max_sentence_len:
            log.warning("sentence %d skipped: length %d > %d",
                        idx, len(toks), cfg.max_sentence_len)
            _emit(cfg, state, idx, skipped=True)
            continue
        sids = g.encode(toks)
        tree, _ = viterbi_parse(g, sids)
        state.append_parse(tree)
        guard = 0
        while True:
            best = None
            best_delta = 0.0
            for mv in triggers_from_roots(state, state.roots[-1]):
                d = objective_delta(state, mv)
                if d > best_delta:
                    best = mv
                    best_delta = d
            if best is None:
                break
            apply_move(state, best)
            guard += 1
            if guard > 10000:
                raise StateError("move acceptance failed to terminate")
        _emit(cfg, state, idx, skipped=False)
        if cfg.checkpoint_every and (idx + 1) % cfg.checkpoint_every == 0:
            _checkpoint(state)
    return state


def induce(corpus, config=None):
    """Grammar induced from token-string sentences."""
    return run_induction(corpus, config).grammar


def _checkpoint(state):
    """Re-derive every stored parse under the current grammar.

    Reports the gap between the estimated store likelihood and the exact
    reparsed one, then replaces the store so later scoring starts clean.
    """
    g = state.grammar
    est = sum(cnt * g.rules[ridx].log_prob
              for ridx, cnt in state.viterbi_counts.items())
    sentences = [tree_yield(g, state.assembled_tree(i))
                 for i in range(len(state.root_nodes))]
    exact = 0.0
    trees = []
    for sids in sentences:
        tree, lp = viterbi_parse(g, sids)
        trees.append(tree)
        exact += lp
    log.info("checkpoint: estimated store LL %.4f, reparsed LL %.4f, drift %.4g",
             est, exact, exact - est)
    state.root_nodes = []
    state.roots = []
    state.viterbi_counts = Counter()
    state.counts_x = Counter()
    state.tot_x = 0
    state.n_sx = 0
    state.adj = Counter()
    state.pairs_same = Counter()
    state.runs2_cnt = Counter()
    state.runs2_len = Counter()
    for tree in trees:
        nodes = state._spine_roots(tree)
        state.root_nodes.append(nodes)
        state.roots.append([n.sym for n in nodes])
        state.viterbi_counts.update(tree_rule_counts(tree))
        state._agg_update(state.roots[-1], +1)
    set_parameters(state.viterbi_counts, g, state.epsilon, state.add)


def _emit(cfg, state, idx, skipped):
    if cfg.progress is None:
        return
    rec = {
        "sentence": idx,
        "skipped": skipped,
        "rules": len(state.grammar.rules),
        "symbols": len(state.grammar.symbols),
        "accepted_moves": state.accepted_moves,
        "objective": state.estimated_objective(),
    }
    cfg.progress.write(json.dumps(rec) + "\n")


def corpus_viterbi_loglik(g, corpus):
    """Sum of best-parse log probabilities over token-string sentences."""
    return sum(viterbi_parse(g, g.encode(toks))[1] for toks in corpus)
