"""Batched inside-outside charts for expectation-maximization training.

Sentences of equal length are processed together: each chart cell holds a
(sentences x symbols) matrix of linear inside scores plus one log offset
per sentence, which keeps values in floating range for long inputs
without per-entry log arithmetic.  Grammars built by this package put
most of their probability mass in an all-pairs binary layer over a small
bank of symbols (`Pcfg.dense_block`); that layer is contracted with dense
matrix products, while the remaining rules (retained subgrammar rules,
unary links, lexical rules) go through gather/scatter index arrays.

Unary rules are summed in closed form.  Inside vectors are multiplied by
the reflexive-transitive chain matrix C = I + U + U**2 + ..., computed by
fixpoint iteration; the iteration is truncated after a fixed number of
passes, which is exact for the chain-acyclic grammars constructed here
and raises if substantial mass is still moving (a near-certain unary
cycle).  The outside pass propagates "reach" mass with the transpose of
C: reach[A] at a cell is the score of all tree contexts in which A is
about to apply a lexical or binary rule there, or to start a chain.

Expected rule counts use the standard decomposition: reach of the parent
times rule probability times the children's inside scores, divided by
the sentence probability.  With outside offsets stored relative to the
sentence log probability, the per-cell scale factors reduce to small
bounded exponents, and the count of a unary rule at a cell needs no
rescaling at all.
"""

import logging
import math
from collections import defaultdict

import numpy as np

from .errors import GrammarFormatError, NoParseError

log = logging.getLogger(__name__)

_NEG_INF = float("-inf")

# Default ceiling on the resident chart memory for one batch, in bytes.
_MEM_BUDGET = 100e6


class EmEngine:
    """Compiled charts for one grammar structure over one fixed corpus.

    The rule set and symbol inventory must not change between calls;
    probability updates are installed with `refresh`.  Sentences are
    grouped by length and long groups are split so the chart stays inside
    the memory budget.
    """

    def __init__(self, g, corpus, mem_budget=_MEM_BUDGET):
        self.g = g
        self.corpus = corpus
        self._compile(g)
        self.refresh(g)
        self._bucket(corpus, mem_budget)

    # -- static structure --------------------------------------------------

    def _compile(self, g):
        sym = g.symbols
        dense = list(g.dense_block or ())
        dense_set = set(dense)
        others = [s for s in sym.nonterminal_ids() if s not in dense_set]
        self.nts = dense + others
        self.loc = {s: i for i, s in enumerate(self.nts)}
        self.nx = len(dense)
        self.n_all = len(self.nts)
        self.terms = list(sym.terminal_ids())
        self.tcol = {t: i for i, t in enumerate(self.terms)}
        self.n_t = len(self.terms)
        self.start_loc = self.loc[g.start]
        nx = self.nx
        self.dridx = np.full((nx, nx, nx), -1, dtype=np.intp)
        sparse = []   # (ridx, lhs, b, c) in local indices
        self.unary = []    # (ridx, a, b)
        self.lexical = []  # (ridx, a, tcol)
        for ridx, r in enumerate(g.rules):
            if len(r.rhs) == 2:
                b, c = r.rhs
                if r.lhs in dense_set and b in dense_set and c in dense_set:
                    self.dridx[self.loc[r.lhs], self.loc[b], self.loc[c]] = ridx
                else:
                    sparse.append((ridx, self.loc[r.lhs], self.loc[b], self.loc[c]))
            elif sym.is_terminal(r.rhs[0]):
                self.lexical.append((ridx, self.loc[r.lhs], self.tcol[r.rhs[0]]))
            else:
                self.unary.append((ridx, self.loc[r.lhs], self.loc[r.rhs[0]]))
        if nx and self.dridx.min() < 0:
            raise GrammarFormatError(
                "dense_block is set but the all-pairs binary layer is incomplete")
        self.n_sp = len(sparse)
        self.srgid = np.array([t[0] for t in sparse], dtype=np.intp)
        self.srl = np.array([t[1] for t in sparse], dtype=np.intp)
        self.srb = np.array([t[2] for t in sparse], dtype=np.intp)
        self.src = np.array([t[3] for t in sparse], dtype=np.intp)
        # one-hot scatter matrices: row r -> that rule's lhs/child column
        self.SCL = np.zeros((self.n_sp, self.n_all))
        self.SCB = np.zeros((self.n_sp, self.n_all))
        self.SCC = np.zeros((self.n_sp, self.n_all))
        for row in range(self.n_sp):
            self.SCL[row, self.srl[row]] = 1.0
            self.SCB[row, self.srb[row]] = 1.0
            self.SCC[row, self.src[row]] = 1.0

    def refresh(self, g):
        """Reload rule probabilities (the rule set itself must be unchanged)."""
        probs = np.array([math.exp(r.log_prob) for r in g.rules])
        nx = self.nx
        if nx:
            self.P3 = probs[self.dridx]
            self.P3m = self.P3.reshape(nx, nx * nx)
        else:
            self.P3 = np.zeros((0, 0, 0))
            self.P3m = np.zeros((0, 0))
        self.U = np.zeros((self.n_all, self.n_all))
        for ridx, a, b in self.unary:
            self.U[a, b] = probs[ridx]
        self.P_lex = np.zeros((self.n_all, self.n_t))
        for ridx, a, t in self.lexical:
            self.P_lex[a, t] = probs[ridx]
        self.srp = probs[self.srgid] if self.n_sp else np.zeros(0)
        eye = np.eye(self.n_all)
        C = eye.copy()
        gain = 0.0
        for _ in range(4 * self.n_all + 16):
            nxt = eye + self.U @ C
            gain = np.abs(nxt - C).max()
            C = nxt
            if gain < 1e-15:
                break
        if gain > 1e-6:
            raise GrammarFormatError(
                "unary chain mass did not settle; near-certain unary cycle")
        self.C = C
        self.CT = C.T.copy()

    def _bucket(self, corpus, mem_budget):
        self.n_sentences = len(corpus)
        cols = []
        for toks in corpus:
            if len(toks) == 0:
                raise ValueError("cannot score an empty sentence")
            cols.append([self.tcol[s] for s in self.g.encode(toks)])
        by_len = defaultdict(list)
        for i, c in enumerate(cols):
            by_len[len(c)].append(i)
        self.chunks = []
        for length in sorted(by_len):
            idxs = by_len[length]
            smax = max(1, int(mem_budget / (8 * (length + 1) ** 2 * self.n_all)))
            for lo in range(0, len(idxs), smax):
                part = idxs[lo:lo + smax]
                T = np.array([cols[i] for i in part], dtype=np.intp)
                self.chunks.append((np.array(part, dtype=np.intp), T))

    # -- passes -------------------------------------------------------------

    def _close(self, base, top):
        """Apply the unary chain matrix, then renormalize each sentence row."""
        closed = base @ self.CT
        m = closed.max(axis=1)
        pos = m > 0.0
        lin = np.zeros_like(closed)
        np.divide(closed, m[:, None], where=pos[:, None], out=lin)
        off = np.full(m.shape, _NEG_INF)
        np.log(m, where=pos, out=off)
        if top is not None:
            off = np.where(pos, off + top, _NEG_INF)
        return lin, off

    def _inside(self, T):
        S, L = T.shape
        lin = {}
        off = {}
        for i in range(L):
            base = self.P_lex[:, T[:, i]].T.copy()
            lin[i, i + 1], off[i, i + 1] = self._close(base, None)
        for width in range(2, L + 1):
            for i in range(L - width + 1):
                j = i + width
                offs = np.stack([off[i, k] + off[k, j] for k in range(i + 1, j)])
                top = offs.max(axis=0)
                live = top > _NEG_INF
                base = np.zeros((S, self.n_all))
                for ki, k in enumerate(range(i + 1, j)):
                    w = np.zeros(S)
                    np.exp(offs[ki] - np.where(live, top, 0.0),
                           where=live & (offs[ki] > _NEG_INF), out=w)
                    if not w.any():
                        continue
                    lm, rm = lin[i, k], lin[k, j]
                    if self.nx:
                        m2 = np.einsum("sj,sk->sjk", lm[:, :self.nx],
                                       rm[:, :self.nx]).reshape(S, -1)
                        base[:, :self.nx] += w[:, None] * (m2 @ self.P3m.T)
                    if self.n_sp:
                        tmp = self.srp[None, :] * lm[:, self.srb] * rm[:, self.src]
                        base += w[:, None] * (tmp @ self.SCL)
                lin[i, j], off[i, j] = self._close(base, top)
        return lin, off

    def _chunk_logz(self, lin, off, L):
        lin_s = lin[0, L][:, self.start_loc]
        out = np.full(lin_s.shape, _NEG_INF)
        pos = lin_s > 0.0
        np.log(lin_s, where=pos, out=out)
        return np.where(pos, out + off[0, L], _NEG_INF)

    def _accumulate(self, T, lin, off, acc):
        """Outside pass plus expected-count accumulation for one chunk."""
        S, L = T.shape
        r3m, ru, lexT, ecsp = acc
        olin = {}
        for width in range(1, L + 1):
            for i in range(L - width + 1):
                olin[i, i + width] = np.zeros((S, self.n_all))
        root = lin[0, L][:, self.start_loc]
        olin[0, L][:, self.start_loc] = np.divide(
            1.0, root, where=root > 0.0, out=np.zeros(S))
        for width in range(L, 0, -1):
            for i in range(L - width + 1):
                j = i + width
                ob = olin[i, j] @ self.C
                if self.unary:
                    ru += ob.T @ lin[i, j]
                if width == 1:
                    o = off[i, j]
                    scl = np.where(o > _NEG_INF,
                                   np.exp(-np.where(o > _NEG_INF, o, 0.0)), 0.0)
                    np.add.at(lexT, T[:, i], ob * scl[:, None])
                    continue
                oij = off[i, j]
                for k in range(i + 1, j):
                    expo = off[i, k] + off[k, j] - np.where(
                        oij > _NEG_INF, oij, 0.0)
                    ok = (oij > _NEG_INF) & (expo > _NEG_INF)
                    sc = np.zeros(S)
                    np.exp(expo, where=ok, out=sc)
                    if not sc.any():
                        continue
                    wob = ob * sc[:, None]
                    lm, rm = lin[i, k], lin[k, j]
                    if self.nx:
                        wx = wob[:, :self.nx]
                        lx = lm[:, :self.nx]
                        rx = rm[:, :self.nx]
                        m2 = np.einsum("sj,sk->sjk", lx, rx).reshape(S, -1)
                        r3m += wx.T @ m2
                        g3 = (wx @ self.P3m).reshape(S, self.nx, self.nx)
                        olin[i, k][:, :self.nx] += (g3 * rx[:, None, :]).sum(axis=2)
                        olin[k, j][:, :self.nx] += (g3 * lx[:, :, None]).sum(axis=1)
                    if self.n_sp:
                        tmp = self.srp[None, :] * wob[:, self.srl]
                        lb = lm[:, self.srb]
                        rc = rm[:, self.src]
                        ecsp += (tmp * lb * rc).sum(axis=0)
                        olin[i, k] += (tmp * rc) @ self.SCB
                        olin[k, j] += (tmp * lb) @ self.SCC

    # -- public entry points ------------------------------------------------

    def loglikelihoods(self, strict=True):
        """Log probability of each sentence, in corpus order.

        With strict=True a zero-probability sentence raises NoParseError;
        otherwise its entry is -inf.
        """
        lls = np.zeros(self.n_sentences)
        for part, T in self.chunks:
            lin, off = self._inside(T)
            ll = self._chunk_logz(lin, off, T.shape[1])
            if strict and not np.isfinite(ll).all():
                bad = int(part[int(np.argmin(np.isfinite(ll)))])
                raise NoParseError(
                    f"sentence {bad} has zero probability: "
                    f"{' '.join(self.corpus[bad])!r}")
            lls[part] = ll
        return lls

    def expected_counts(self):
        """Per-rule expected counts over the corpus plus its log likelihood."""
        r3m = np.zeros((self.nx, self.nx * self.nx))
        ru = np.zeros((self.n_all, self.n_all))
        lexT = np.zeros((self.n_t, self.n_all))
        ecsp = np.zeros(self.n_sp)
        lls = np.zeros(self.n_sentences)
        for part, T in self.chunks:
            lin, off = self._inside(T)
            ll = self._chunk_logz(lin, off, T.shape[1])
            if not np.isfinite(ll).all():
                bad = int(part[int(np.argmin(np.isfinite(ll)))])
                raise NoParseError(
                    f"sentence {bad} has zero probability: "
                    f"{' '.join(self.corpus[bad])!r}")
            lls[part] = ll
            self._accumulate(T, lin, off, (r3m, ru, lexT, ecsp))
        counts = np.zeros(len(self.g.rules))
        if self.nx:
            ec3 = self.P3m * r3m
            counts[self.dridx.reshape(-1)] += ec3.reshape(-1)
        if self.unary:
            ecu = self.U * ru
            for ridx, a, b in self.unary:
                counts[ridx] += ecu[a, b]
        if self.lexical:
            eclex = lexT.T * self.P_lex
            for ridx, a, t in self.lexical:
                counts[ridx] += eclex[a, t]
        if self.n_sp:
            counts[self.srgid] += ecsp
        return counts, float(lls.sum())
