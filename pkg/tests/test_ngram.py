import math

import pytest

from gramlm.errors import ConfigError
from gramlm.ngram import EOS, UNK, NgramModel, bucket, train_ngram
from gramlm.rng import SplitMix64


def model_from(corpus, n):
    return NgramModel(n).count(corpus)


def set_all_lambdas(m, per_order):
    """Pin every reachable bucket's weight for each order."""
    for i in range(1, m.n + 1):
        buckets = {bucket(c) for c in m.contexts[i].values()} | {0}
        for b in buckets:
            m.lambdas[i][b] = per_order[i - 1]


EXAMPLE = [["a", "b"], ["a", "b"], ["a", "c"]]


def test_bucket_boundaries():
    # {0}, {1}, {2,3}, {4..7}, {8..15}, ...
    assert [bucket(c) for c in (0, 1, 2, 3, 4, 7, 8, 16)] \
        == [0, 1, 2, 2, 3, 3, 4, 5]


def test_counting_with_padding():
    m = model_from([["a", "b"]], 2)
    assert m.counts[1][("a",)] == 1
    assert m.counts[1][("b",)] == 1
    assert m.counts[1][(EOS,)] == 1
    assert m.counts[2][("<s>", "a")] == 1
    assert m.counts[2][("a", "b")] == 1
    assert m.counts[2][("b", EOS)] == 1
    # unigram total = tokens plus end marker; begin padding is not scored
    assert m.contexts[1][()] == 3


def test_reserved_tokens_rejected():
    with pytest.raises(ConfigError):
        model_from([["a", "<unk>"]], 1)
    with pytest.raises(ConfigError):
        model_from([["</s>"]], 2)


def test_interpolated_bigram_value():
    # counts: c(a b)=2, c(a .)=3 as context, unigram total 9, |V|=3+2
    # p(b|a) = 0.75 * 2/3 + 0.25 * (0.9 * 2/9 + 0.1 * 1/5) = 0.555
    m = model_from(EXAMPLE, 2)
    assert m.v_size == 5
    set_all_lambdas(m, [0.9, 0.75])
    assert m.prob(["a"], "b") == pytest.approx(0.555, abs=1e-12)


def test_all_lambda_zero_is_uniform():
    m = model_from(EXAMPLE, 3)
    set_all_lambdas(m, [0.0, 0.0, 0.0])
    for w in ("a", "b", "c", EOS, UNK, "zzz"):
        assert m.prob(["a", "b"], w) == pytest.approx(1 / 5, abs=1e-15)


def test_all_lambda_one_is_pure_ml():
    corpus = [["x", "y"]] * 4
    m = model_from(corpus, 2)
    set_all_lambdas(m, [1.0, 1.0])
    assert m.prob(["x"], "y") == pytest.approx(1.0, abs=1e-12)
    assert m.sentence_logprob(["x", "y"]) == pytest.approx(0.0, abs=1e-12)
    assert m.entropy(corpus) == pytest.approx(0.0, abs=1e-12)


def test_higher_orders_disabled_match_unigram():
    tri = model_from(EXAMPLE, 3)
    uni = model_from(EXAMPLE, 1)
    for i in (2, 3):
        buckets = {bucket(c) for c in tri.contexts[i].values()} | {0}
        for b in buckets:
            tri.lambdas[i][b] = 0.0
    for w in ("a", "b", "c", EOS):
        assert tri.prob(["b", "a"], w) == pytest.approx(
            uni.prob([], w), rel=1e-12)


def test_distributions_sum_to_one():
    rng = SplitMix64(17)
    corpus = []
    words = ["w%d" % i for i in range(12)]
    for _ in range(60):
        ln = 1 + rng.u64() % 7
        corpus.append([words[rng.u64() % len(words)] for _ in range(ln)])
    m = model_from(corpus, 3)
    m.train_lambdas(corpus[:20])
    support = words + ["new1", "new2"]
    for _ in range(100):
        ln = rng.u64() % 3
        ctx = [support[rng.u64() % len(support)] for _ in range(ln)]
        total = sum(m.prob(ctx, w) for w in words + [EOS, UNK])
        assert total == pytest.approx(1.0, abs=1e-9)


def test_unknown_words_get_unk_share():
    m = model_from(EXAMPLE, 2)
    assert m.prob(["a"], "never_seen") == m.prob(["a"], UNK)
    assert m.prob(["a"], "never_seen") > 0.0
    assert m.sentence_logprob(["never_seen"]) > -math.inf


def test_train_lambdas_monotone_heldout_likelihood():
    rng = SplitMix64(23)
    words = ["u", "v", "w", "x"]
    corpus = [[words[rng.u64() % 4] for _ in range(1 + rng.u64() % 6)]
              for _ in range(300)]
    train, heldout = corpus[:240], corpus[240:]
    m = model_from(train, 3)
    lls = []
    for _ in range(12):
        diag = m.train_lambdas(heldout, max_iterations=1, tol=0.0)
        lls.append(diag["loglik"])
    for a, b in zip(lls, lls[1:]):
        assert b >= a - 1e-9 * abs(a)


def test_train_lambdas_converges_and_reports():
    rng = SplitMix64(29)
    words = ["p", "q"]
    corpus = [[words[rng.u64() % 2] for _ in range(1 + rng.u64() % 4)]
              for _ in range(200)]
    m = model_from(corpus[:150], 2)
    diag = m.train_lambdas(corpus[150:])
    assert diag["iterations"] <= 100
    assert isinstance(diag["untrained_buckets"], list)
    for i in range(1, 3):
        for lam in m.lambdas[i].values():
            assert 0.0 <= lam <= 1.0


def test_abundant_counts_drive_lambda_up():
    # held-out drawn from the training distribution with plentiful counts:
    # the top-order ML term explains the data better than backoff
    rng = SplitMix64(31)
    corpus = [["left", "right"] if rng.u64() % 2 else ["right", "left"]
              for _ in range(500)]
    m = model_from(corpus[:400], 2)
    m.train_lambdas(corpus[400:])
    big = max(m.contexts[2].values())
    assert m.lambdas[2][bucket(big)] > 0.9


def test_untrained_bucket_keeps_default():
    # 'a a a' gives the a-context count 3 (bucket 2); held-out never
    # predicts from an 'a' context, so that bucket keeps its default
    m = model_from([["a", "a", "a", "b"]], 2)
    diag = m.train_lambdas([["b"]])
    assert (2, 2) in diag["untrained_buckets"]
    for i, b in diag["untrained_buckets"]:
        assert m._lam(i, b) == 0.5


def test_empty_heldout_rejected():
    m = model_from(EXAMPLE, 2)
    with pytest.raises(ConfigError):
        m.train_lambdas([])
    with pytest.raises(ConfigError):
        m.entropy([])


def test_entropy_uniform_model():
    # two training types + end marker + unk = |V| of 4; all-zero lambdas
    # make every event uniform, so entropy is exactly 2 bits
    m = model_from([["a", "b"]], 1)
    set_all_lambdas(m, [0.0])
    assert m.v_size == 4
    assert m.entropy([["a", "b", "a"]]) == pytest.approx(2.0, abs=1e-12)


def test_entropy_matches_sentence_logprob():
    m = model_from(EXAMPLE, 2)
    m.train_lambdas(EXAMPLE)
    want = -sum(m.sentence_logprob(s) for s in EXAMPLE) \
        / sum(len(s) + 1 for s in EXAMPLE) / math.log(2)
    assert m.entropy(EXAMPLE) == pytest.approx(want, rel=1e-12)


def test_order_one_has_no_context_sensitivity():
    m = model_from(EXAMPLE, 1)
    assert m.prob(["a"], "b") == m.prob(["c"], "b") == m.prob([], "b")


def test_stored_params_accounting():
    m = model_from(EXAMPLE, 2)
    m.train_lambdas(EXAMPLE)
    grams = sum(len(t) for t in m.counts.values())
    lams = sum(len(l) for l in m.lambdas.values())
    assert m.stored_params() == grams + lams


def test_dump_load_round_trip(tmp_path):
    rng = SplitMix64(41)
    words = ["a", "b", "c"]
    corpus = [[words[rng.u64() % 3] for _ in range(1 + rng.u64() % 5)]
              for _ in range(80)]
    m = model_from(corpus[:60], 3)
    m.train_lambdas(corpus[60:])
    path = tmp_path / "m.json"
    m.dump(str(path))
    m2 = NgramModel.load(str(path))
    assert m2.n == m.n and m2.v_size == m.v_size
    assert m2.counts == m.counts
    assert m2.contexts == m.contexts
    assert m2.lambdas == m.lambdas
    for s in corpus:
        assert m2.sentence_logprob(s) == pytest.approx(
            m.sentence_logprob(s), rel=1e-12)


def test_train_ngram_convenience():
    model = train_ngram(EXAMPLE, [["a", "b"]], 2)
    assert model.n == 2
    assert isinstance(model.untrained_buckets, list)
    assert model.entropy([["a", "c"]]) > 0.0


def test_order_validation():
    with pytest.raises(ConfigError):
        NgramModel(0)
