"""Exception types raised across the attribution engine."""


class EntroshapError(Exception):
    """Base class for all engine errors."""


class CompositionError(EntroshapError):
    """Instances of mismatched length (or invalid coalitions) were combined."""


class EntropyDomainError(EntroshapError):
    """Normalized entropy is undefined, e.g. for single-label spaces."""


class ConditioningError(EntroshapError):
    """A conditional was requested on a zero-probability observation."""


class ZeroLabelProbabilityError(EntroshapError):
    """A log-ratio hit p(y|.) = 0; the value would be -inf and is never clamped."""


class CapacityError(EntroshapError):
    """Exhaustive enumeration was requested beyond the supported size."""


class ConfigError(EntroshapError):
    """Invalid run configuration (bad field values, missing inputs)."""


class SamplingError(EntroshapError):
    """Donor sampling failed (e.g. empty dataset)."""


class EvaluationError(EntroshapError):
    """A model failed to produce predictions."""


class MetricError(EntroshapError):
    """A faithfulness metric is undefined for the given inputs."""


class BridgeError(EntroshapError):
    """Transport-level failure talking to a remote endpoint (after retries)."""


class ProtocolError(EntroshapError):
    """A remote endpoint sent a malformed or contract-violating response."""
