"""Symbols, weighted rewrite rules, and PCFG containers with an MDL prior.

Rule right-hand sides have length one or two.  Binary rules expand to two
nonterminals; terminals appear only in unary rules.  Probabilities are held
in log space.  A grammar also carries a cheap description length: every
rule costs (len(rhs) + 1) symbol codes of log2(|symbols| + 1) bits each,
the +1 reserving a code for a rule separator.  Rule probabilities are not
charged.
"""

import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass

from .errors import GrammarFormatError, NormalizationError

log = logging.getLogger(__name__)

_LN2 = math.log(2.0)
_NEG_INF = float("-inf")


def logsumexp(values):
    m = max(values, default=_NEG_INF)
    if m == _NEG_INF:
        return _NEG_INF
    return m + math.log(sum(math.exp(v - m) for v in values))


class SymbolTable:
    """Interned (name, kind) pairs with dense integer ids starting at 0."""

    def __init__(self):
        self._names = []
        self._is_term = []
        self._ids = {}
        self._fresh = {}

    def __len__(self):
        return len(self._names)

    def intern(self, name, terminal):
        key = (name, bool(terminal))
        sid = self._ids.get(key)
        if sid is None:
            sid = len(self._names)
            self._names.append(name)
            self._is_term.append(bool(terminal))
            self._ids[key] = sid
        return sid

    def nonterminal(self, name):
        return self.intern(name, False)

    def terminal(self, name):
        return self.intern(name, True)

    def lookup(self, name, terminal):
        return self._ids.get((name, bool(terminal)))

    def name(self, sid):
        return self._names[sid]

    def is_terminal(self, sid):
        return self._is_term[sid]

    def terminal_ids(self):
        return [i for i, t in enumerate(self._is_term) if t]

    def nonterminal_ids(self):
        return [i for i, t in enumerate(self._is_term) if not t]

    def fresh_nonterminal(self, prefix):
        """Create a nonterminal named prefix<k> for the smallest unused k."""
        k = self._fresh.get(prefix, 1)
        while (f"{prefix}{k}", False) in self._ids:
            k += 1
        self._fresh[prefix] = k + 1
        return self.nonterminal(f"{prefix}{k}")


@dataclass(slots=True)
class Rule:
    lhs: int
    rhs: tuple
    log_prob: float


class Pcfg:
    """Rule list plus by-lhs and by-rhs indexes, kept consistent on insert.

    Instances are mutated only while being built or during induction; after
    that they are treated as immutable and can be shared freely.  `version`
    increments on every mutation so downstream compiled caches can detect
    staleness; code that writes `log_prob` fields directly must call
    `touch()` afterwards.
    """

    def __init__(self, symbols=None, start=None):
        self.symbols = symbols if symbols is not None else SymbolTable()
        self.start = start
        self.rules = []
        self.by_lhs = defaultdict(list)
        self.by_rhs = defaultdict(list)
        self.version = 0
        self._units = 0
        # Optional structure hints set by specific constructors: the block of
        # symbols forming a dense all-pairs binary layer, and the symbols
        # whose distributions participate in held-out smoothing.
        self.dense_block = None
        self.smooth_symbols = None

    def touch(self):
        self.version += 1

    def add_rule(self, lhs, rhs, prob=None, log_prob=None):
        rhs = tuple(rhs)
        if self.symbols.is_terminal(lhs):
            raise GrammarFormatError("rule lhs must be a nonterminal")
        if len(rhs) not in (1, 2):
            raise GrammarFormatError("rule rhs must have one or two symbols")
        if len(rhs) == 2 and any(self.symbols.is_terminal(s) for s in rhs):
            raise GrammarFormatError("binary rules must expand to nonterminals")
        if self.find_rule(lhs, rhs) is not None:
            raise GrammarFormatError(
                f"duplicate rule {self._fmt(lhs, rhs)}")
        if log_prob is None:
            if prob is None:
                raise ValueError("add_rule needs prob or log_prob")
            if prob < 0:
                raise GrammarFormatError("rule weight must be nonnegative")
            log_prob = math.log(prob) if prob > 0 else _NEG_INF
        ridx = len(self.rules)
        self.rules.append(Rule(lhs, rhs, float(log_prob)))
        self.by_lhs[lhs].append(ridx)
        self.by_rhs[rhs].append(ridx)
        self._units += len(rhs) + 1
        self.touch()
        return ridx

    def find_rule(self, lhs, rhs):
        for ridx in self.by_rhs.get(tuple(rhs), ()):
            if self.rules[ridx].lhs == lhs:
                return ridx
        return None

    def lhs_with_rules(self):
        return [a for a in self.symbols.nonterminal_ids() if self.by_lhs.get(a)]

    def free_params(self):
        """Free probabilities: one fewer than the rule count of each lhs."""
        return len(self.rules) - len(self.lhs_with_rules())

    def encode(self, tokens):
        """Map token strings to terminal ids, raising on unknown tokens."""
        from .errors import UnknownTokenError
        out = []
        for tok in tokens:
            sid = self.symbols.lookup(tok, True)
            if sid is None:
                raise UnknownTokenError(f"unknown token {tok!r}")
            out.append(sid)
        return out

    def decode(self, sids):
        return [self.symbols.name(s) for s in sids]

    def validate(self, tol=1e-9):
        """Check structural and normalization invariants; raise on failure."""
        for ridx, r in enumerate(self.rules):
            if r.log_prob > 1e-12:
                raise NormalizationError(
                    f"rule {ridx} has log probability {r.log_prob} > 0")
        for a in self.lhs_with_rules():
            total = sum(math.exp(self.rules[i].log_prob) for i in self.by_lhs[a])
            if abs(total - 1.0) > tol:
                raise NormalizationError(
                    f"{self.symbols.name(a)} rules sum to {total}")
        if self.start is None or self.symbols.is_terminal(self.start):
            raise GrammarFormatError("start symbol missing or terminal")

    def copy(self):
        """Shallow-structural copy: fresh rules, shared symbol table."""
        g = Pcfg(self.symbols, self.start)
        for r in self.rules:
            g.rules.append(Rule(r.lhs, r.rhs, r.log_prob))
        for a, idxs in self.by_lhs.items():
            g.by_lhs[a] = list(idxs)
        for rhs, idxs in self.by_rhs.items():
            g.by_rhs[rhs] = list(idxs)
        g._units = self._units
        g.dense_block = self.dense_block
        g.smooth_symbols = self.smooth_symbols
        return g

    def _fmt(self, lhs, rhs):
        sym = self.symbols
        parts = []
        for s in rhs:
            n = sym.name(s)
            parts.append(f"'{n}'" if sym.is_terminal(s) else n)
        return f"{sym.name(lhs)} -> {' '.join(parts)}"

    def rule_str(self, ridx):
        return self._fmt(self.rules[ridx].lhs, self.rules[ridx].rhs)


def normalize(g, lhs):
    """Rescale one lhs's rule weights to probabilities, in place.

    Weights are whatever is currently stored in log space; a second call is
    a no-op.  All-zero weight raises NormalizationError.
    """
    idxs = g.by_lhs.get(lhs)
    if not idxs:
        return g
    total = logsumexp([g.rules[i].log_prob for i in idxs])
    if total == _NEG_INF:
        raise NormalizationError(
            f"{g.symbols.name(lhs)} has no probability mass")
    for i in idxs:
        g.rules[i].log_prob -= total
    g.touch()
    return g


def normalize_all(g):
    for a in g.lhs_with_rules():
        normalize(g, a)
    return g


def description_length(g):
    """Grammar description length in bits under the fixed-width symbol code."""
    return g._units * math.log2(len(g.symbols) + 1)


def log_prior(g):
    """Natural-log prior 2**(-description_length); an unnormalized score."""
    return -description_length(g) * _LN2


_TOKEN_RE = re.compile(r"'(?:\\.|[^'\\])*'|\S+")


def _escape(name):
    return name.replace("\\", "\\\\").replace("'", "\\'")


def _unescape(body):
    return body.replace("\\'", "'").replace("\\\\", "\\")


def save_grammar(g, path):
    """Write the one-rule-per-line text form.

    Terminals are single-quoted (with backslash escapes for quotes), and the
    probability column uses repr so a reload reproduces each value exactly.
    """
    sym = g.symbols
    lines = [f"start: {sym.name(g.start)}"]
    for r in g.rules:
        parts = []
        for s in r.rhs:
            n = sym.name(s)
            if sym.is_terminal(s):
                parts.append(f"'{_escape(n)}'")
            else:
                _check_name(n)
                parts.append(n)
        lhs_name = sym.name(r.lhs)
        _check_name(lhs_name)
        prob = math.exp(r.log_prob)
        lines.append(f"{lhs_name} -> {' '.join(parts)} {prob!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _check_name(name):
    if not name or any(c.isspace() for c in name) or "'" in name:
        raise GrammarFormatError(f"symbol name {name!r} not serializable")


def load_grammar(path):
    """Read the text form back; see save_grammar for the line syntax.

    Every lhs is renormalized after reading.  A deviation above 1e-6 from
    unit mass, or a duplicated rule (whose weights are merged), only logs a
    warning; structural problems raise GrammarFormatError with the line
    number.
    """
    g = Pcfg()
    sym = g.symbols
    start_name = None
    pending = {}  # (lhs, rhs) -> prob, insertion order preserved
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("start:"):
                if start_name is not None:
                    raise GrammarFormatError(f"line {lineno}: repeated start header")
                start_name = line[len("start:"):].strip()
                if not start_name:
                    raise GrammarFormatError(f"line {lineno}: empty start header")
                continue
            toks = _TOKEN_RE.findall(line)
            if len(toks) < 4 or toks[1] != "->":
                raise GrammarFormatError(f"line {lineno}: expected 'LHS -> RHS... prob'")
            lhs_name, rhs_toks, prob_tok = toks[0], toks[2:-1], toks[-1]
            if lhs_name.startswith("'"):
                raise GrammarFormatError(f"line {lineno}: lhs cannot be a terminal")
            if len(rhs_toks) not in (1, 2):
                raise GrammarFormatError(f"line {lineno}: rhs must have 1 or 2 symbols")
            try:
                prob = float(prob_tok)
            except ValueError:
                raise GrammarFormatError(f"line {lineno}: bad probability {prob_tok!r}")
            if prob < 0 or math.isnan(prob) or math.isinf(prob):
                raise GrammarFormatError(f"line {lineno}: bad probability {prob!r}")
            lhs = sym.nonterminal(lhs_name)
            rhs = []
            for t in rhs_toks:
                if t.startswith("'"):
                    if len(t) < 2 or not t.endswith("'"):
                        raise GrammarFormatError(f"line {lineno}: unterminated terminal {t!r}")
                    rhs.append(sym.terminal(_unescape(t[1:-1])))
                else:
                    rhs.append(sym.nonterminal(t))
            rhs = tuple(rhs)
            if len(rhs) == 2 and any(sym.is_terminal(s) for s in rhs):
                raise GrammarFormatError(
                    f"line {lineno}: binary rules must expand to nonterminals")
            key = (lhs, rhs)
            if key in pending:
                log.warning("line %d: duplicate rule %s, merging weights",
                            lineno, line)
                pending[key] += prob
            else:
                pending[key] = prob
    if start_name is None:
        raise GrammarFormatError("missing 'start:' header")
    for (lhs, rhs), prob in pending.items():
        g.add_rule(lhs, rhs, prob=prob)
    start = sym.lookup(start_name, False)
    if start is None:
        raise GrammarFormatError(f"start symbol {start_name!r} has no rules")
    g.start = start
    for a in g.lhs_with_rules():
        total = sum(math.exp(g.rules[i].log_prob) for i in g.by_lhs[a])
        if abs(total - 1.0) > 1e-6:
            log.warning("renormalizing %s: probabilities sum to %.9f",
                        sym.name(a), total)
        normalize(g, a)
    return g
