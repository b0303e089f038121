"""Grammar induction toolkit with language-model baselines.

The package induces a probabilistic context-free grammar from raw text
by greedy search over merge/alternation/repetition refinements scored
with a description-length prior, retrains it with inside-outside, and
compares the result against interpolated n-gram and randomly initialized
inside-outside baselines by test-set entropy.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, GramlmError, GrammarFormatError,
                     NoParseError, NormalizationError, SamplingError,
                     StateError, UnknownTokenError)
from .grammar import (Pcfg, Rule, SymbolTable, description_length,
                      load_grammar, log_prior, normalize, normalize_all,
                      save_grammar)
from .induction import (HypothesisState, InduceConfig, Move, induce,
                        initial_grammar, run_induction, set_parameters)
from .insideout import (EmConfig, em_train, expected_counts,
                        lari_young_grammar, postpass_grammar, smooth,
                        tune_lambda)
from .ngram import NgramModel, train_ngram
from .parser import inside_logprob, viterbi_parse
from .rng import SplitMix64
from .sampler import read_corpus, sample_corpus, sample_sentence, write_corpus

__all__ = [
    "__version__",
    "ConfigError", "GramlmError", "GrammarFormatError", "NoParseError",
    "NormalizationError", "SamplingError", "StateError", "UnknownTokenError",
    "Pcfg", "Rule", "SymbolTable", "description_length", "load_grammar",
    "log_prior", "normalize", "normalize_all", "save_grammar",
    "HypothesisState", "InduceConfig", "Move", "induce", "initial_grammar",
    "run_induction", "set_parameters",
    "EmConfig", "em_train", "expected_counts", "lari_young_grammar",
    "postpass_grammar", "smooth", "tune_lambda",
    "NgramModel", "train_ngram",
    "inside_logprob", "viterbi_parse",
    "SplitMix64",
    "read_corpus", "sample_corpus", "sample_sentence", "write_corpus",
]
