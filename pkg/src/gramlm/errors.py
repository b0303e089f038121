"""Exception types shared across the toolkit."""


class GramlmError(Exception):
    """Base class for all toolkit errors."""


class GrammarFormatError(GramlmError):
    """Malformed grammar file or rule structure."""


class NormalizationError(GramlmError):
    """A left-hand side has no probability mass to normalize."""


class UnknownTokenError(GramlmError):
    """A token is not a terminal of the grammar (or model vocabulary)."""


class NoParseError(GramlmError):
    """The grammar assigns no derivation to a sentence."""


class SamplingError(GramlmError):
    """Sentence sampling failed repeatedly (length cap too tight)."""


class ConfigError(GramlmError):
    """Invalid configuration value or combination."""


class StateError(GramlmError):
    """Operation applied to a state that does not support it."""
