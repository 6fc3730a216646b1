"""Baseline donor sources: empirical datasets for random draws, exact tabular
joint models with conditional sampling, and the provider abstraction that
in-distribution conditional samplers (local or remote) implement.
"""

from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .core import Instance, LabelDistribution, Model, PartialInstance, Token
from .errors import CompositionError, ConditioningError, SamplingError


@dataclass(frozen=True)
class Dataset:
    """A non-empty pool of instances used as random-baseline donors.

    Instances may have different lengths; donor draws are right-padded or
    truncated to the requested length.
    """

    instances: Tuple[Instance, ...]
    labels: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        if not self.instances:
            raise SamplingError("dataset is empty")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != len(self.instances):
                raise SamplingError("label count does not match instance count")

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def pad(self) -> Token:
        return self.instances[0].pad


def load_dataset_jsonl(path: Union[str, Path], pad: Token) -> Dataset:
    """Read ``{"tokens": [...], "label": int}`` rows; ``label`` is optional."""
    instances: List[Instance] = []
    labels: List[int] = []
    have_labels = True
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            instances.append(Instance(tuple(row["tokens"]), pad))
            if "label" in row and row["label"] is not None:
                labels.append(int(row["label"]))
            else:
                have_labels = False
    if not instances:
        raise SamplingError(f"no instances in {path}")
    return Dataset(tuple(instances), tuple(labels) if have_labels and labels else None)


def load_dataset_csv(path: Union[str, Path], pad: Token) -> Dataset:
    """Read one feature per column with the final column as the label."""
    instances: List[Instance] = []
    labels: List[int] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            instances.append(Instance(tuple(row[:-1]), pad))
            labels.append(int(row[-1]))
    if not instances:
        raise SamplingError(f"no instances in {path}")
    return Dataset(tuple(instances), tuple(labels))


def draw_random_donor(data: Dataset, n: int, rng: np.random.Generator) -> Instance:
    """Uniformly pick an instance and fit it to length ``n``.

    Shorter donors are right-padded with the pad value; longer ones are
    truncated.
    """
    idx = int(rng.integers(len(data.instances)))
    donor = data.instances[idx]
    if donor.n == n:
        return donor
    if donor.n > n:
        return Instance(donor.values[:n], donor.pad)
    vals = donor.values + (donor.pad,) * (n - donor.n)
    return Instance(vals, donor.pad)


class ConditionalProvider(ABC):
    """Source of completions drawn conditionally on observed positions."""

    supports_exact_conditionals: bool = False

    @abstractmethod
    def sample_completion(self, observed: PartialInstance, rng: np.random.Generator) -> Instance:
        """A full instance agreeing with every observed position."""


@dataclass(frozen=True)
class TabularJointModel(ConditionalProvider):
    """Exact finite-support joint distribution over equal-length instances."""

    support: Tuple[Tuple[Instance, float], ...]
    supports_exact_conditionals: bool = field(default=True, init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "support", tuple(self.support))
        if not self.support:
            raise SamplingError("joint model has empty support")
        n = self.support[0][0].n
        total = 0.0
        for inst, p in self.support:
            if inst.n != n:
                raise CompositionError("joint support instances must share one length")
            if p < 0:
                raise SamplingError(f"negative probability {p}")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise SamplingError(f"support probabilities sum to {total}, not 1")

    @property
    def n(self) -> int:
        return self.support[0][0].n

    @property
    def pad(self) -> Token:
        return self.support[0][0].pad

    def consistent_mass(self, observed: PartialInstance) -> float:
        return sum(p for inst, p in self.support if observed.agrees_with(inst))

    def sample_completion(self, observed: PartialInstance, rng: np.random.Generator) -> Instance:
        return sample_conditional(self, observed, rng)

    @staticmethod
    def fit_empirical(data: Dataset) -> "TabularJointModel":
        """Joint from empirical counts; requires equal-length instances."""
        counts = Counter(inst.values for inst in data.instances)
        n = data.instances[0].n
        for inst in data.instances:
            if inst.n != n:
                raise CompositionError("empirical joint needs equal-length instances")
        total = sum(counts.values())
        support = tuple(
            (Instance(values, data.pad), count / total) for values, count in sorted(counts.items(), key=lambda kv: str(kv[0]))
        )
        return TabularJointModel(support)

    @staticmethod
    def load_csv(path: Union[str, Path], pad: Token) -> "TabularJointModel":
        """Rows of (feature..., probability)."""
        support: List[Tuple[Instance, float]] = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                support.append((Instance(tuple(row[:-1]), pad), float(row[-1])))
        return TabularJointModel(tuple(support))


def sample_conditional(
    joint: TabularJointModel, observed: PartialInstance, rng: np.random.Generator
) -> Instance:
    """Draw the unobserved positions from the exact conditional induced by the joint.

    Zero-probability observations raise; they are never silently renormalized
    to anything else.
    """
    if observed.n != joint.n:
        raise CompositionError(f"observed length {observed.n} vs joint length {joint.n}")
    if not observed.missing:
        return Instance(tuple(observed.observed[i] for i in range(observed.n)), joint.pad)
    candidates = [(inst, p) for inst, p in joint.support if observed.agrees_with(inst) and p > 0]
    total = sum(p for _, p in candidates)
    if total <= 0:
        raise ConditioningError(f"observation {dict(observed.observed)} has zero probability")
    weights = np.array([p / total for _, p in candidates])
    idx = int(rng.choice(len(candidates), p=weights))
    return candidates[idx][0]


def conditional_probability(
    joint: TabularJointModel, target: PartialInstance, given: PartialInstance
) -> float:
    """p(target | given) = p(target and given) / p(given), by support enumeration."""
    if target.n != joint.n or given.n != joint.n:
        raise CompositionError("partial instances must match the joint's length")
    overlap = set(target.observed) & set(given.observed)
    for i in overlap:
        if target.observed[i] != given.observed[i]:
            raise ConditioningError(f"target and given conflict at position {i}")
    p_given = joint.consistent_mass(given)
    if p_given <= 0:
        raise ConditioningError(f"conditioning event {dict(given.observed)} has zero probability")
    merged = dict(given.observed)
    merged.update(target.observed)
    p_both = joint.consistent_mass(PartialInstance(merged, joint.n))
    return p_both / p_given


def marginal_label(
    joint: TabularJointModel, model: Model, observed: PartialInstance
) -> LabelDistribution:
    """Exact mixture of model outputs over all completions of ``observed``.

    Weights are the exact conditionals under the joint; the result is a valid
    label distribution whenever the model emits distributions.
    """
    if observed.n != joint.n:
        raise CompositionError("observed length does not match the joint")
    candidates = [(inst, p) for inst, p in joint.support if p > 0 and observed.agrees_with(inst)]
    total = sum(p for _, p in candidates)
    if total <= 0:
        raise ConditioningError(f"observation {dict(observed.observed)} has zero probability")
    rows = model.batch_predict([inst for inst, _ in candidates])
    weights = np.array([p / total for _, p in candidates])
    return LabelDistribution(weights @ rows)
