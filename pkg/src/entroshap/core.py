"""Core domain types: instances, coalitions, label distributions, and the
black-box model contract shared by every other module.

Feature values are opaque tokens (strings or integer ids); the engine never
interprets them. Model outputs are dense per-label score vectors -- for
classifiers these are probabilities, but raw-score models (e.g. additive
regression toys) plug into the same contract. Operations that genuinely need
probability semantics (entropy, label mixtures, the wire bridge) validate
through :class:`LabelDistribution`.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

from .errors import CompositionError, EntropyDomainError

Token = Union[str, int]

CONCURRENT_SAFE = "concurrent-safe"
SERIALIZED = "serialized"


@dataclass(frozen=True)
class Instance:
    """A fixed-length sequence of discrete feature values plus a pad value.

    The length is fixed at construction; every composition preserves it.
    """

    values: Tuple[Token, ...]
    pad: Token

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 1:
            raise CompositionError("an instance needs at least one feature")

    @property
    def n(self) -> int:
        return len(self.values)

    def replaced(self, i: int, value: Token) -> "Instance":
        """Copy with position ``i`` overwritten."""
        if not 0 <= i < self.n:
            raise CompositionError(f"index {i} out of range for length {self.n}")
        vals = list(self.values)
        vals[i] = value
        return Instance(tuple(vals), self.pad)

    def singleton(self, i: int, value: Token) -> "Instance":
        """Instance holding ``value`` at ``i`` and the pad everywhere else."""
        vals = [self.pad] * self.n
        vals[i] = value
        return Instance(tuple(vals), self.pad)


@dataclass(frozen=True)
class PartialInstance:
    """A partially observed instance: missing positions are simply absent."""

    observed: Mapping[int, Token]
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "observed", dict(self.observed))
        for i in self.observed:
            if not 0 <= i < self.n:
                raise CompositionError(f"observed index {i} out of range for length {self.n}")

    @property
    def missing(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.observed)

    def agrees_with(self, inst: Instance) -> bool:
        if inst.n != self.n:
            return False
        return all(inst.values[i] == v for i, v in self.observed.items())

    @staticmethod
    def from_instance(inst: Instance, indices: Iterable[int]) -> "PartialInstance":
        return PartialInstance({i: inst.values[i] for i in indices}, inst.n)


@dataclass(frozen=True)
class Coalition:
    """A duplicate-free subset of feature indices out of ``n`` positions."""

    indices: Tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        idx = tuple(sorted(self.indices))
        if len(set(idx)) != len(idx):
            raise CompositionError("coalition indices must be unique")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise CompositionError(f"coalition indices out of range for length {self.n}")
        object.__setattr__(self, "indices", idx)

    def __contains__(self, i: int) -> bool:
        return i in set(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def complement(self) -> "Coalition":
        present = set(self.indices)
        return Coalition(tuple(i for i in range(self.n) if i not in present), self.n)

    def union(self, other: "Coalition") -> "Coalition":
        if self.n != other.n:
            raise CompositionError("coalitions over different lengths")
        return Coalition(tuple(set(self.indices) | set(other.indices)), self.n)

    @staticmethod
    def empty(n: int) -> "Coalition":
        return Coalition((), n)

    @staticmethod
    def full(n: int) -> "Coalition":
        return Coalition(tuple(range(n)), n)


@dataclass(frozen=True)
class LabelDistribution:
    """A validated probability vector over the label space."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", arr)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("label distribution must be a non-empty vector")
        if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
            raise ValueError(f"probabilities outside [0, 1]: {arr}")
        if abs(float(arr.sum()) - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {arr.sum()}, not 1")

    @property
    def label_count(self) -> int:
        return int(self.probs.size)

    def __getitem__(self, y: int) -> float:
        return float(self.probs[y])


class Model(ABC):
    """Contract for black-box prediction models.

    Implementations must be deterministic: identical batches yield identical
    outputs (stochastic models seed themselves externally). ``batch_predict``
    over a batch must equal element-wise single predictions.
    """

    label_count: int
    concurrency_class: str = CONCURRENT_SAFE

    @abstractmethod
    def batch_predict(self, instances: Sequence[Instance]) -> np.ndarray:
        """Per-label score rows, shape ``(len(instances), label_count)``."""

    def predict(self, x: Instance) -> np.ndarray:
        return self.batch_predict([x])[0]

    def predict_dist(self, x: Instance) -> LabelDistribution:
        return LabelDistribution(self.predict(x))


@dataclass(frozen=True)
class AttributionVector:
    """Per-feature attribution scores with sampling metadata."""

    phi: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        arr = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "phi", arr)
        if arr.ndim != 1:
            raise ValueError("attribution vector must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("attribution entries must be finite")

    @property
    def n(self) -> int:
        return int(self.phi.size)


@dataclass(frozen=True)
class SamplingConfig:
    """Knobs for the permutation-sampling estimator.

    ``entropy_context`` selects what the uncertainty weight conditions on:
    ``"singleton"`` evaluates the model on the replacement value alone
    (pads elsewhere); ``"composed"`` evaluates it on the full perturbed
    sequence.
    """

    m: int = 1000
    seed: int = 0
    reweighted: bool = False
    include_baseline_expectation: bool = False
    entropy_context: str = "singleton"

    def __post_init__(self) -> None:
        if self.m < 1:
            from .errors import ConfigError

            raise ConfigError(f"sample count must be >= 1, got {self.m}")
        if self.entropy_context not in ("singleton", "composed"):
            from .errors import ConfigError

            raise ConfigError(f"unknown entropy context {self.entropy_context!r}")


def compose(x: Instance, coalition: Coalition, donor: Instance) -> Instance:
    """Merge: keep ``x`` at coalition positions, take ``donor`` elsewhere."""
    if x.n != donor.n:
        raise CompositionError(f"length mismatch: {x.n} vs {donor.n}")
    if coalition.n != x.n:
        raise CompositionError(f"coalition over length {coalition.n}, instance has {x.n}")
    keep = set(coalition.indices)
    vals = tuple(x.values[i] if i in keep else donor.values[i] for i in range(x.n))
    return Instance(vals, x.pad)


def normalized_entropy(dist: Union[LabelDistribution, Sequence[float], np.ndarray]) -> float:
    """Shannon entropy in bits divided by log2(L), so the result is in [0, 1].

    0 * log(0) is taken as 0 by continuity. Raises for fewer than two labels,
    where the normalization is undefined.
    """
    if isinstance(dist, LabelDistribution):
        probs = dist.probs
    else:
        probs = LabelDistribution(np.asarray(dist, dtype=float)).probs
    L = probs.size
    if L < 2:
        raise EntropyDomainError("normalized entropy needs at least two labels")
    h = 0.0
    for p in probs:
        if p > 0.0:
            h -= float(p) * math.log2(float(p))
    return h / math.log2(L)


def predict_singleton(model: Model, x: Instance, i: int, value: Token) -> np.ndarray:
    """Model output on the instance holding ``value`` at ``i``, pads elsewhere."""
    if not 0 <= i < x.n:
        raise CompositionError(f"index {i} out of range for length {x.n}")
    return model.predict(x.singleton(i, value))
