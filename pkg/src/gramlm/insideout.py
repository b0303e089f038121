"""Inside-outside training, baseline grammar shapes, and held-out smoothing.

Two trainable shapes are built here.  The classic baseline allocates n
symbols X_1..X_n with every binary rule X_i -> X_j X_k and every lexical
rule X_i -> t, randomly initialized.  The hybrid shape keeps the rules of
an induced grammar below its spine (everything except the S/X scaffolding)
and puts the same all-pairs layer on top, with unary links X_i -> A into
each retained symbol instead of direct lexical rules.  Both mark the X
bank as the grammar's dense block and as its smoothing layer.

Training is plain expectation-maximization over all parameters; rules of
a symbol with zero expected mass keep their current distribution.  After
training, `smooth` mixes each layer symbol's distribution with a uniform
one over its own rules, so unit mass per symbol is preserved for any
mixing weight, and `tune_lambda` picks the weight by golden-section
search on held-out likelihood.
"""

import logging
import math
from dataclasses import dataclass

from .charts import EmEngine
from .errors import ConfigError
from .grammar import Pcfg, SymbolTable, normalize
from .rng import SplitMix64

log = logging.getLogger(__name__)

_NEG_INF = float("-inf")
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class EmConfig:
    max_iterations: int = 100
    rel_tol: float = 1e-4    # 0 disables early stopping


def _fresh_layer_names(n, taken):
    """Names X_1..X_n, suffixed with underscores on (unlikely) collision."""
    names = []
    for i in range(1, n + 1):
        name = f"X_{i}"
        while name in taken:
            name += "_"
        names.append(name)
    return names


def lari_young_grammar(n, terminals, seed=0):
    """All-pairs grammar over n symbols: n**3 binary plus n*|T| lexical rules."""
    if n < 1:
        raise ConfigError(f"need at least one symbol, got n={n}")
    terminals = sorted(set(terminals))
    if not terminals:
        raise ConfigError("terminal vocabulary is empty")
    sym = SymbolTable()
    xs = [sym.nonterminal(name) for name in _fresh_layer_names(n, set())]
    tids = [sym.terminal(t) for t in terminals]
    g = Pcfg(sym, xs[0])
    rng = SplitMix64(seed)
    for x in xs:
        for b in xs:
            for c in xs:
                g.add_rule(x, (b, c), prob=rng.uniform_open())
        for t in tids:
            g.add_rule(x, (t,), prob=rng.uniform_open())
        normalize(g, x)
    g.dense_block = list(xs)
    g.smooth_symbols = list(xs)
    return g


def postpass_grammar(n, g_old, seed=0):
    """All-pairs layer on top of an induced grammar's retained rules.

    The spine symbols S and X are dropped; every other nonterminal comes
    over with its rules and probabilities intact.  The new layer has
    n**3 binary rules plus one unary link per (layer symbol, retained
    symbol) pair, randomly initialized; retraining then touches every
    parameter.
    """
    if n < 1:
        raise ConfigError(f"need at least one symbol, got n={n}")
    old_sym = g_old.symbols
    sid_x = old_sym.lookup("X", False)
    drop = {g_old.start, sid_x}
    retained = [a for a in old_sym.nonterminal_ids()
                if a not in drop and g_old.by_lhs.get(a)]
    if not retained:
        raise ConfigError("grammar has no symbols below the spine to retain")
    taken = {old_sym.name(a) for a in retained}
    sym = SymbolTable()
    xs = [sym.nonterminal(name) for name in _fresh_layer_names(n, taken)]
    remap = {}
    for a in retained:
        remap[a] = sym.nonterminal(old_sym.name(a))
    for t in old_sym.terminal_ids():
        remap[t] = sym.terminal(old_sym.name(t))
    g = Pcfg(sym, xs[0])
    rng = SplitMix64(seed)
    for x in xs:
        for b in xs:
            for c in xs:
                g.add_rule(x, (b, c), prob=rng.uniform_open())
        for a in retained:
            g.add_rule(x, (remap[a],), prob=rng.uniform_open())
        normalize(g, x)
    for a in retained:
        for ridx in g_old.by_lhs[a]:
            r = g_old.rules[ridx]
            if any(s in drop for s in r.rhs):
                raise ConfigError(
                    f"retained rule {g_old.rule_str(ridx)} references the spine")
            g.add_rule(remap[a], tuple(remap[s] for s in r.rhs),
                       log_prob=r.log_prob)
    g.dense_block = list(xs)
    g.smooth_symbols = list(xs)
    return g


def em_train(g, corpus, config=None):
    """Train a copy of g on token-string sentences; returns (grammar, trace).

    The trace holds the corpus log likelihood under the parameters before
    each update, so it is nondecreasing up to floating-point noise.  The
    returned grammar is the one that produced the last trace entry.
    """
    cfg = config or EmConfig()
    if cfg.max_iterations < 0:
        raise ConfigError("max_iterations must be nonnegative")
    g2 = g.copy()
    engine = EmEngine(g2, corpus)
    trace = []
    prev = None
    for it in range(cfg.max_iterations + 1):
        counts, ll = engine.expected_counts()
        trace.append(ll)
        if prev is not None and cfg.rel_tol > 0.0 \
                and ll - prev < cfg.rel_tol * abs(prev):
            break
        if it == cfg.max_iterations:
            break
        _maximize(g2, counts)
        engine.refresh(g2)
        prev = ll
    log.info("EM stopped after %d updates, LL %.4f -> %.4f",
             len(trace) - 1, trace[0], trace[-1])
    return g2, trace


def _maximize(g, counts):
    """Relative-frequency update per lhs; zero-mass symbols are untouched."""
    for a in g.lhs_with_rules():
        idxs = g.by_lhs[a]
        total = sum(counts[i] for i in idxs)
        if total <= 0.0:
            continue
        log_total = math.log(total)
        for ridx in idxs:
            c = counts[ridx]
            # log difference instead of log(c / total): the quotient can
            # underflow to zero for denormal counts even though c > 0
            g.rules[ridx].log_prob = (
                math.log(c) - log_total if c > 0.0 else _NEG_INF)
    g.touch()


def expected_counts(g, corpus):
    """One E step: per-rule expected counts plus the corpus log likelihood."""
    return EmEngine(g, corpus).expected_counts()


def corpus_logprobs(g, corpus, strict=True):
    """Sentence log probabilities under g, as a list in corpus order."""
    return [float(v) for v in EmEngine(g, corpus).loglikelihoods(strict=strict)]


def smooth(g, lam):
    """Mix each smoothing-layer symbol's rules with uniform weight lam.

    The uniform component runs over the symbol's own rules, so each
    distribution still sums to one.  Returns an adjusted copy.
    """
    if not (0.0 <= lam <= 1.0):
        raise ConfigError(f"mixing weight must be in [0, 1], got {lam}")
    if not g.smooth_symbols:
        raise ConfigError("grammar has no smoothing layer")
    s = g.copy()
    for a in s.smooth_symbols:
        idxs = s.by_lhs[a]
        if not idxs:
            raise ConfigError("smoothing layer symbol has no rules")
        d = len(idxs)
        for ridx in idxs:
            p = (1.0 - lam) * math.exp(s.rules[ridx].log_prob) + lam / d
            s.rules[ridx].log_prob = math.log(p) if p > 0.0 else _NEG_INF
    s.touch()
    return s


def tune_lambda(g, heldout, tol=1e-4):
    """Golden-section search for the best smoothing weight on held-out data.

    Interior search assumes a unimodal likelihood; the endpoints 0 and 1
    are checked explicitly and win ties, so the result never loses to the
    unsmoothed or fully uniform model.  Returns (weight, log likelihood).
    """
    def score(lam):
        lls = EmEngine(smooth(g, lam), heldout).loglikelihoods(strict=False)
        return float(lls.sum())

    a, b = 0.0, 1.0
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = score(c), score(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = score(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = score(d)
    mid = 0.5 * (a + b)
    best_lam, best = mid, score(mid)
    for lam in (0.0, 1.0):
        s = score(lam)
        if s >= best:
            best_lam, best = lam, s
    return best_lam, best
