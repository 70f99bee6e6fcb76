"""Exception types shared across the package.

All of these derive from ValueError so library callers can catch broadly;
the CLI maps them onto exit codes (bad input files -> 1, bad configuration
or validation -> 2).
"""


class AudioFormatError(ValueError):
    """WAV file is malformed or uses an unsupported sample format."""


class SampleRateError(ValueError):
    """Sample rate does not match what the caller or pipeline expects."""


class LabelParseError(ValueError):
    """A label file line could not be parsed."""


class LabelValidationError(ValueError):
    """Parsed labels violate an invariant (inverted or overlapping intervals)."""


class ManifestError(ValueError):
    """A corpus manifest row is malformed."""


class ScenarioError(ValueError):
    """A synthesis scenario is infeasible or inconsistent."""
