"""Command-line entry points.

Subcommands cover the full pipeline: generate corpora from a reference
grammar, induce a grammar from raw text, train the inside-outside and
n-gram baselines, evaluate any dumped model on a test file, and run the
whole experiment roster with a report.  `eval` accepts a manifest JSON,
a bare .pcfg grammar, or a dumped n-gram model, and prints bits per
event (words plus one end marker per sentence).
"""

import argparse
import json
import logging
import os
import sys

from .errors import GramlmError
from .grammar import load_grammar, save_grammar
from .harness import (ExperimentConfig, eval_manifest, find_reference,
                      generate_corpora, grammar_entropy, parse_config,
                      run_experiment, _sym_names, _write_manifest)
from .induction import InduceConfig, induce
from .insideout import (EmConfig, em_train, lari_young_grammar,
                        postpass_grammar, tune_lambda)
from .ngram import NgramModel
from .sampler import read_corpus

log = logging.getLogger(__name__)


def cmd_generate(args):
    cfg = ExperimentConfig(grammar=args.grammar, seed=args.seed,
                           n_train=args.n_train, n_heldout=args.n_heldout,
                           n_test=args.n_test, sample_max_len=args.max_len)
    find_reference(cfg.grammar)
    train, heldout, test = generate_corpora(cfg, args.out)
    log.info("wrote %d/%d/%d sentences under %s",
             len(train), len(heldout), len(test), args.out)
    return 0


def cmd_induce(args):
    train = read_corpus(args.train)
    vocab = None
    if args.vocab:
        vocab = tuple(sorted({tok for toks in read_corpus(args.vocab)
                              for tok in toks}))
    sink = open(args.progress, "w", encoding="utf-8") if args.progress else None
    try:
        cfg = InduceConfig(epsilon=args.epsilon,
                           max_sentence_len=args.max_sentence_len,
                           checkpoint_every=args.checkpoint_every,
                           vocab=vocab, progress=sink)
        g = induce(train, cfg)
    finally:
        if sink is not None:
            sink.close()
    save_grammar(g, args.out)
    log.info("induced grammar: %d symbols, %d rules -> %s",
             len(g.symbols), len(g.rules), args.out)
    return 0


def cmd_train_io(args):
    train = read_corpus(args.train)
    heldout = read_corpus(args.heldout)
    if args.base_grammar:
        base = load_grammar(args.base_grammar)
        g0 = postpass_grammar(args.n, base, seed=args.seed)
    else:
        vocab = sorted({tok for toks in train + heldout for tok in toks})
        g0 = lari_young_grammar(args.n, vocab, seed=args.seed)
    log.info("training %d rules on %d sentences", len(g0.rules), len(train))
    g, trace = em_train(g0, train, EmConfig(max_iterations=args.max_iterations,
                                            rel_tol=args.rel_tol))
    lam, hll = tune_lambda(g, heldout)
    save_grammar(g, args.out + ".pcfg")
    _write_manifest(os.path.dirname(os.path.abspath(args.out)) or ".",
                    os.path.basename(args.out), {
                        "type": "pcfg",
                        "grammar": os.path.basename(args.out) + ".pcfg",
                        "lambda": lam,
                        "dense_block": _sym_names(g, g.dense_block),
                        "smooth_symbols": _sym_names(g, g.smooth_symbols)})
    log.info("EM updates: %d, final LL %.4f, smoothing weight %.4f "
             "(held-out LL %.4f)", len(trace) - 1, trace[-1], lam, hll)
    return 0


def cmd_train_ngram(args):
    train = read_corpus(args.train)
    heldout = read_corpus(args.heldout)
    model = NgramModel(args.n).count(train)
    diag = model.train_lambdas(heldout)
    model.dump(args.out + ".json")
    _write_manifest(os.path.dirname(os.path.abspath(args.out)) or ".",
                    os.path.basename(args.out), {
                        "type": "ngram",
                        "model": os.path.basename(args.out) + ".json"})
    log.info("order-%d model: %d stored parameters, held-out LL %.4f",
             args.n, model.stored_params(), diag["loglik"])
    return 0


def cmd_eval(args):
    corpus = read_corpus(args.corpus)
    if args.model.endswith(".pcfg"):
        bits = grammar_entropy(load_grammar(args.model), corpus)
    else:
        with open(args.model, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "type" in doc:
            bits = eval_manifest(args.model, corpus)
        else:
            bits = NgramModel.load(args.model).entropy(corpus)
    print(f"{bits:.4f}")
    return 0


def cmd_experiment(args):
    cfg = parse_config(args.config, overrides=args.set or ())
    if args.jobs is not None:
        cfg.jobs = args.jobs
    sink = open(args.progress, "w", encoding="utf-8") if args.progress else None
    try:
        result = run_experiment(cfg, args.out, progress=sink)
    finally:
        if sink is not None:
            sink.close()
    with open(os.path.join(args.out, "report.txt"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 1 if result.failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gramlm",
        description="grammar induction and language-model baselines")
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="only warnings and errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample corpora from a grammar")
    p.add_argument("--grammar", default="english_like",
                   help="bundled grammar name or .pcfg path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=4000)
    p.add_argument("--n-heldout", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--max-len", type=int, default=30,
                   help="resample sentences longer than this")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("induce", help="induce a grammar from raw text")
    p.add_argument("--train", required=True, help="training corpus file")
    p.add_argument("--out", required=True, help="output .pcfg path")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="stop probability of the sentence spine")
    p.add_argument("--max-sentence-len", type=int, default=40,
                   help="skip longer sentences")
    p.add_argument("--checkpoint-every", type=int, default=None,
                   help="reparse the store every k sentences")
    p.add_argument("--vocab", default=None,
                   help="token file fixing the vocabulary up front")
    p.add_argument("--progress", default=None,
                   help="write per-sentence JSON records here")
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("train-io", help="train an inside-outside model")
    p.add_argument("--train", required=True)
    p.add_argument("--heldout", required=True,
                   help="held-out corpus for the smoothing weight")
    p.add_argument("--n", type=int, required=True,
                   help="number of symbols in the trainable layer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-grammar", default=None,
                   help="induced .pcfg to keep below the layer")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--out", required=True,
                   help="output stem (writes .pcfg and .manifest.json)")
    p.set_defaults(func=cmd_train_io)

    p = sub.add_parser("train-ngram", help="train an interpolated n-gram")
    p.add_argument("--train", required=True)
    p.add_argument("--heldout", required=True)
    p.add_argument("--n", type=int, required=True, help="model order")
    p.add_argument("--out", required=True,
                   help="output stem (writes .json and .manifest.json)")
    p.set_defaults(func=cmd_train_ngram)

    p = sub.add_parser("eval", help="entropy of a dumped model on a corpus")
    p.add_argument("--model", required=True,
                   help="manifest .json, grammar .pcfg, or n-gram .json")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="train the full roster and report")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel training jobs")
    p.add_argument("--progress", default=None,
                   help="write per-job JSON records here")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GramlmError as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
