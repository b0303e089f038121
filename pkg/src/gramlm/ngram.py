"""Interpolated n-gram language model with count-bucketed mixing weights.

The conditional probability of a word is built bottom-up from a uniform
distribution over the vocabulary: each order i in 1..n mixes its maximum
likelihood estimate against the accumulated lower-order value,

    p_i = lam(i, b) * ml_i(w | ctx) + (1 - lam(i, b)) * p_{i-1},

where b buckets the training count of the order-i context by binary
magnitude (0, 1, 2-3, 4-7, ...), so rare and common histories get
separate weights.  Weights are fit on held-out data with EM over the
latent "which order produced the word" variable.  Contexts never seen in
training keep weight 0.5 at their bucket unless the held-out pass
touched it.

Sentences are padded with n-1 begin markers and one end marker; the end
marker is predicted (so per-word entropies count len+1 events per
sentence) but begin markers never are.  Unknown test words fall back to
a reserved unknown type that shares the uniform base mass.
"""

import json
import logging
import math
from collections import Counter, defaultdict

from .errors import ConfigError

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
_RESERVED = (BOS, EOS, UNK)

_LOG2 = math.log(2.0)


def bucket(count):
    """Magnitude bucket of a context count: 0, then one per binary order."""
    return 0 if count == 0 else count.bit_length()


class NgramModel:
    def __init__(self, n):
        if n < 1:
            raise ConfigError(f"model order must be at least 1, got {n}")
        self.n = n
        self.counts = {i: Counter() for i in range(1, n + 1)}
        self.contexts = {i: Counter() for i in range(1, n + 1)}
        self.vocab = set()
        self.v_size = 0
        self.lambdas = {i: {} for i in range(1, n + 1)}
        self.untrained_buckets = []

    # -- counting -----------------------------------------------------------

    def count(self, corpus):
        """Accumulate n-gram counts from token-string sentences."""
        for toks in corpus:
            for tok in toks:
                if tok in _RESERVED:
                    raise ConfigError(
                        f"training corpus contains reserved token {tok!r}")
            self.vocab.update(toks)
            padded = [BOS] * (self.n - 1) + list(toks) + [EOS]
            for t in range(self.n - 1, len(padded)):
                for i in range(1, self.n + 1):
                    gram = tuple(padded[t - i + 1:t + 1])
                    self.counts[i][gram] += 1
                    self.contexts[i][gram[:-1]] += 1
        # predicted types: training words plus the end and unknown markers
        self.v_size = len(self.vocab) + 2
        return self

    def _encode(self, toks):
        return [tok if tok in self.vocab else UNK for tok in toks]

    def _lam(self, i, b):
        # the zero-count bucket has no ML term to weight; its lambda is
        # pinned to 0 so unseen contexts pass all mass to the backoff,
        # keeping every conditional distribution normalized
        if b == 0:
            return 0.0
        return self.lambdas[i].get(b, 0.5)

    # -- probabilities ------------------------------------------------------

    def _levels(self, context, w):
        """Per-order (bucket, ml) pairs for one prediction event."""
        out = []
        for i in range(1, self.n + 1):
            ctx = tuple(context[len(context) - i + 1:]) if i > 1 else ()
            cnt = self.contexts[i].get(ctx, 0)
            ml = self.counts[i].get(ctx + (w,), 0) / cnt if cnt else 0.0
            out.append((bucket(cnt), ml))
        return out

    def prob(self, context, w):
        """p(w | context); context is the preceding-token sequence, unpadded.

        Both the context and the target are mapped into the training
        vocabulary first, so unknown strings are legal input.
        """
        context = self._encode([t for t in context if t != BOS])
        context = [BOS] * (self.n - 1) + context
        w = w if w in self.vocab or w in (EOS, UNK) else UNK
        p = 1.0 / self.v_size
        for i, (b, ml) in enumerate(self._levels(context, w), start=1):
            lam = self._lam(i, b)
            p = lam * ml + (1.0 - lam) * p
        return p

    def _events(self, toks):
        """(context, word) prediction events for one sentence."""
        padded = [BOS] * (self.n - 1) + self._encode(toks) + [EOS]
        return [(padded[:t], padded[t]) for t in range(self.n - 1, len(padded))]

    def sentence_logprob(self, toks):
        """Natural-log probability of the sentence including its end marker.

        Returns -inf when some event has probability zero, which can only
        happen if a mixing weight reached exactly 1 and the ML term is 0.
        """
        total = 0.0
        for context, w in self._events(toks):
            p = 1.0 / self.v_size
            for i, (b, ml) in enumerate(self._levels(context, w), start=1):
                lam = self._lam(i, b)
                p = lam * ml + (1.0 - lam) * p
            if p <= 0.0:
                return float("-inf")
            total += math.log(p)
        return total

    def entropy(self, corpus):
        """Bits per predicted event (words plus one end marker per sentence).

        A zero-probability event yields +inf; that needs a mixing weight
        trained to exactly 1, so it cannot happen while any unigram-level
        weight stays below 1.
        """
        total = 0.0
        events = 0
        dead = 0
        for toks in corpus:
            lp = self.sentence_logprob(toks)
            if lp == float("-inf"):
                dead += 1
            total += lp
            events += len(toks) + 1
        if events == 0:
            raise ConfigError("cannot take entropy of an empty corpus")
        if dead:
            log.warning("%d of %d sentences have probability zero "
                        "(a mixing weight reached 1); entropy is infinite",
                        dead, len(corpus))
            return float("inf")
        return -total / events / _LOG2

    # -- mixing-weight estimation --------------------------------------------

    def train_lambdas(self, heldout, max_iterations=100, tol=1e-6):
        """Fit bucketed mixing weights on held-out text by EM.

        Returns a diagnostics dict with the iteration count, the final
        held-out log likelihood, and any buckets that training counts
        make reachable but the held-out data never exercised (those stay
        at weight 0.5).
        """
        events = []
        for toks in heldout:
            for context, w in self._events(toks):
                events.append(self._levels(context, w))
        if not events:
            raise ConfigError("held-out corpus has no prediction events")
        base = 1.0 / self.v_size
        seen = {i: set() for i in range(1, self.n + 1)}
        for levels in events:
            for i, (b, _) in enumerate(levels, start=1):
                seen[i].add(b)
        for i in range(1, self.n + 1):
            for b in seen[i]:
                if b != 0:
                    self.lambdas[i].setdefault(b, 0.5)
        iterations = 0
        ll = float("-inf")
        for iterations in range(1, max_iterations + 1):
            numer = defaultdict(float)
            denom = defaultdict(float)
            ll = 0.0
            for levels in events:
                below = [base]
                for i, (b, ml) in enumerate(levels, start=1):
                    lam = self._lam(i, b)
                    below.append(lam * ml + (1.0 - lam) * below[i - 1])
                p = below[self.n]
                ll += math.log(p)
                reach = 1.0
                for i in range(self.n, 0, -1):
                    b, ml = levels[i - 1]
                    lam = self._lam(i, b)
                    numer[i, b] += reach * lam * ml / p
                    denom[i, b] += reach * below[i] / p
                    reach *= 1.0 - lam
            delta = 0.0
            for (i, b), d in denom.items():
                if b == 0:
                    continue  # pinned, see _lam
                if d > 0.0:
                    new = numer[i, b] / d
                    delta = max(delta, abs(new - self.lambdas[i][b]))
                    self.lambdas[i][b] = new
            if delta < tol:
                break
        untrained = []
        for i in range(1, self.n + 1):
            reachable = {bucket(c) for c in self.contexts[i].values()}
            for b in sorted(reachable - seen[i]):
                untrained.append((i, b))
        self.untrained_buckets = untrained
        if untrained:
            log.info("%d context buckets kept the default weight 0.5: %s",
                     len(untrained), untrained)
        return {"iterations": iterations, "loglik": ll,
                "untrained_buckets": untrained}

    # -- bookkeeping ----------------------------------------------------------

    def stored_params(self):
        """Stored numbers: one per kept count plus one per mixing weight."""
        return sum(len(c) for c in self.counts.values()) \
            + sum(len(l) for l in self.lambdas.values())

    def dump(self, path):
        doc = {
            "order": self.n,
            "vocab": sorted(self.vocab),
            "counts": {str(i): {" ".join(g): c for g, c in sorted(cnt.items())}
                       for i, cnt in self.counts.items()},
            "lambdas": {str(i): {str(b): v for b, v in sorted(l.items())}
                        for i, l in self.lambdas.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        model = cls(int(doc["order"]))
        model.vocab = set(doc["vocab"])
        model.v_size = len(model.vocab) + 2
        for i_str, cnt in doc["counts"].items():
            i = int(i_str)
            for gram_str, c in cnt.items():
                gram = tuple(gram_str.split(" "))
                model.counts[i][gram] = c
                model.contexts[i][gram[:-1]] += c
        for i_str, lams in doc["lambdas"].items():
            model.lambdas[int(i_str)] = {int(b): float(v)
                                         for b, v in lams.items()}
        return model


def train_ngram(corpus, heldout, n, max_iterations=100, tol=1e-6):
    """Count on the training corpus, then fit mixing weights on held-out."""
    model = NgramModel(n).count(corpus)
    model.train_lambdas(heldout, max_iterations=max_iterations, tol=tol)
    return model
