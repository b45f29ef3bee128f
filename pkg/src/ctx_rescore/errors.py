"""Exception hierarchy shared across the engine.

Validation errors are caller mistakes (bad files, bad values, bad flags)
and map to CLI exit code 1.  Scorer errors cover LM backend failures and
map to exit code 2; transport errors are the retriable subset.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(EngineError):
    """Invalid input data, configuration, or usage."""


class ScorerError(EngineError):
    """A language-model scorer failed or returned an invalid result."""


class TransportError(ScorerError):
    """A remote scorer could not be reached; retrying may succeed."""
