"""Exception hierarchy shared across the package."""


class FlatlinkError(Exception):
    """Base class for all errors raised by this package."""


class NTriplesParseError(FlatlinkError):
    """A single N-Triples line could not be parsed."""


class FlatRecordError(FlatlinkError):
    """A flat entity record line or token is malformed."""


class EngineError(FlatlinkError):
    """The map-shuffle-reduce engine failed (I/O, bad reduce, bad config)."""


class LinkJoinError(FlatlinkError):
    """A linkage input is invalid or a join precondition fails."""


class ConfigError(FlatlinkError):
    """Bad CLI flags or pipeline configuration."""
