"""Directed feature-interaction analysis over exact tabular worlds: pointwise
mutual information, the symmetric Shapley interaction index, an asymmetric
(directed) interaction index, influence graphs with head-degree feature
influence, and replacement-bias scoring for candidate donor values.

All quantities here are exact: probabilities come from a finite-support joint
and label posteriors from enumerating its completions. A Monte Carlo posterior
estimator is available for black-box settings where enumeration is impossible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import Coalition, Instance, Model, PartialInstance
from .distributions import ConditionalProvider, TabularJointModel, marginal_label
from .engine import exact_coalition_values
from .errors import CapacityError, CompositionError, ConfigError, ZeroLabelProbabilityError

ASYMMETRIC_MAX_FEATURES = 12
SYMMETRIC_MAX_FEATURES = 15


@dataclass(frozen=True)
class WorldModel:
    """A fully specified discrete world: joint over instances, classifier, and
    the label under analysis."""

    joint: TabularJointModel
    model: Model
    target_label: int

    def __post_init__(self) -> None:
        if not 0 <= self.target_label < self.model.label_count:
            raise ConfigError(
                f"target label {self.target_label} outside [0, {self.model.label_count})"
            )

    @property
    def n(self) -> int:
        return self.joint.n


@dataclass(frozen=True)
class InteractionEdge:
    """Directed interaction edge: how the tail subset shifts the head subset's
    information contribution toward the label."""

    tail: Coalition
    head: Coalition
    weight: float

    def __post_init__(self) -> None:
        if set(self.tail.indices) & set(self.head.indices):
            raise CompositionError("edge tail and head must be disjoint")
        if not math.isfinite(self.weight):
            raise ValueError("edge weight must be finite")


@dataclass(frozen=True)
class InfluenceGraph:
    """All directed interaction edges up to a subset-size cap."""

    nodes: Tuple[int, ...]
    edges: Tuple[InteractionEdge, ...]
    order_cap: int


_PosteriorCache = Dict[Tuple[int, ...], np.ndarray]


def _posterior(
    world: WorldModel, x: Instance, indices: Tuple[int, ...], cache: _PosteriorCache
) -> np.ndarray:
    if indices not in cache:
        observed = PartialInstance.from_instance(x, indices)
        cache[indices] = marginal_label(world.joint, world.model, observed).probs
    return cache[indices]


def _pmi(
    world: WorldModel,
    x: Instance,
    target: Tuple[int, ...],
    given: Tuple[int, ...],
    cache: _PosteriorCache,
) -> float:
    if not target:
        return 0.0
    joined = tuple(sorted(set(target) | set(given)))
    p_with = float(_posterior(world, x, joined, cache)[world.target_label])
    p_without = float(_posterior(world, x, tuple(sorted(given)), cache)[world.target_label])
    if p_with <= 0.0 or p_without <= 0.0:
        raise ZeroLabelProbabilityError(
            f"label posterior is 0 for target={target} given={given}; log-ratio would be -inf"
        )
    return math.log(p_with) - math.log(p_without)


def pmi(world: WorldModel, x: Instance, target: Coalition, given: Coalition) -> float:
    """Information the target positions add about the label once the given
    positions are known: log p(y | target, given) - log p(y | given).

    Uses the natural logarithm. Zero-probability conditioning raises; a zero
    label posterior raises rather than returning -inf.
    """
    if set(target.indices) & set(given.indices):
        raise CompositionError("target and given coalitions overlap")
    return _pmi(world, x, target.indices, given.indices, {})


def pmi_estimate(
    world_model: Model,
    target_label: int,
    x: Instance,
    target: Coalition,
    given: Coalition,
    provider: ConditionalProvider,
    m: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Monte Carlo PMI for black-box worlds: posteriors are estimated by
    averaging model outputs over sampled completions. Returns the estimate and
    a delta-method standard error."""
    if m < 2:
        raise ConfigError("Monte Carlo PMI needs m >= 2")

    def estimate(indices: Tuple[int, ...]) -> Tuple[float, float]:
        observed = PartialInstance.from_instance(x, indices)
        completions = [provider.sample_completion(observed, rng) for _ in range(m)]
        fills = [
            Instance(
                tuple(x.values[i] if i in set(indices) else c.values[i] for i in range(x.n)),
                x.pad,
            )
            for c in completions
        ]
        scores = np.asarray(world_model.batch_predict(fills))[:, target_label]
        mean = float(scores.mean())
        se = float(scores.std(ddof=1) / math.sqrt(m))
        return mean, se

    joined = tuple(sorted(set(target.indices) | set(given.indices)))
    p1, se1 = estimate(joined)
    p0, se0 = estimate(tuple(sorted(given.indices)))
    if p1 <= 0.0 or p0 <= 0.0:
        raise ZeroLabelProbabilityError("estimated posterior hit 0; log-ratio undefined")
    value = math.log(p1) - math.log(p0)
    stderr = math.sqrt((se1 / p1) ** 2 + (se0 / p0) ** 2)
    return value, stderr


def symmetric_interaction(world: WorldModel, x: Instance, T: Coalition) -> float:
    """Shapley interaction index of the subset ``T``: the usual alternating
    sum of coalition values, weighted over contexts drawn from outside ``T``.
    Coalition values use exact random-donor expectations over the world."""
    n = x.n
    if len(T) < 2:
        raise ConfigError("symmetric interaction needs |T| >= 2")
    if n > SYMMETRIC_MAX_FEATURES:
        raise CapacityError(f"symmetric interaction capped at {SYMMETRIC_MAX_FEATURES} features")
    values, _ = exact_coalition_values(world.model, world.target_label, x, world.joint, "random")
    t_bits = [1 << i for i in T.indices]
    outside = [i for i in range(n) if i not in set(T.indices)]
    size_t = len(T)
    total = 0.0
    for r in range(len(outside) + 1):
        weight = (
            math.factorial(r)
            * math.factorial(n - size_t - r)
            / math.factorial(n - size_t + 1)
        )
        for ctx in combinations(outside, r):
            s_mask = sum(1 << i for i in ctx)
            inner = 0.0
            for k in range(size_t + 1):
                sign = (-1) ** (size_t - k)
                for sub in combinations(t_bits, k):
                    inner += sign * values[s_mask | sum(sub)]
            total += weight * inner
    return total


def presence_contexts(n: int, t1: Coalition, t2: Coalition) -> List[Tuple[int, ...]]:
    """All context sets for the first interaction sum: supersets of the tail
    that avoid the head. Their count is the reciprocal of the first
    normalization constant."""
    rest = [i for i in range(n) if i not in set(t1.indices) | set(t2.indices)]
    contexts = []
    for r in range(len(rest) + 1):
        for extra in combinations(rest, r):
            contexts.append(tuple(sorted(set(t2.indices) | set(extra))))
    return contexts


def ordered_context_pairs(n: int, t2: Coalition) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """All ordered pairs of disjoint non-empty subsets avoiding the tail.
    Their count is the denominator of the second normalization constant."""
    rest = [i for i in range(n) if i not in set(t2.indices)]
    subsets: List[Tuple[int, ...]] = []
    for r in range(1, len(rest) + 1):
        subsets.extend(combinations(rest, r))
    pairs = []
    for s1 in subsets:
        for s2 in subsets:
            if not set(s1) & set(s2):
                pairs.append((s1, s2))
    return pairs


def asymmetric_interaction(
    world: WorldModel,
    x: Instance,
    head: Coalition,
    tail: Coalition,
    _cache: Optional[_PosteriorCache] = None,
) -> float:
    """Directed interaction of ``tail`` onto ``head``: how the tail's presence
    shifts the head's information contribution toward the label, minus the
    tail's own average interaction contribution across contexts.

    When the tail's context set has fewer than two positions, the second
    (average) term has no valid pairs and is defined as 0.
    """
    n = x.n
    if set(head.indices) & set(tail.indices):
        raise CompositionError("head and tail subsets overlap")
    if n > ASYMMETRIC_MAX_FEATURES:
        raise CapacityError(f"asymmetric interaction capped at {ASYMMETRIC_MAX_FEATURES} features")
    cache: _PosteriorCache = {} if _cache is None else _cache

    first = 0.0
    contexts = presence_contexts(n, head, tail)
    for ctx in contexts:
        without_tail = tuple(sorted(set(ctx) - set(tail.indices)))
        first += _pmi(world, x, head.indices, ctx, cache) - _pmi(
            world, x, head.indices, without_tail, cache
        )
    first /= len(contexts)

    m2 = n - len(tail)
    pair_count = 3**m2 - 2 ** (m2 + 1) + 1
    if pair_count <= 0:
        return first
    second = 0.0
    for s1, s2 in ordered_context_pairs(n, tail):
        both = tuple(sorted(set(s1) | set(s2)))
        second += _pmi(world, x, tail.indices, both, cache) - _pmi(
            world, x, tail.indices, s1, cache
        )
    second /= pair_count
    return first - second


def build_influence_graph(world: WorldModel, x: Instance, order_cap: int = 1) -> InfluenceGraph:
    """All directed edges between disjoint subsets of size up to ``order_cap``,
    weighted by the asymmetric interaction index."""
    if order_cap < 1:
        raise ConfigError("order cap must be >= 1")
    n = x.n
    if n > ASYMMETRIC_MAX_FEATURES:
        raise CapacityError(f"influence graph capped at {ASYMMETRIC_MAX_FEATURES} features")
    subsets: List[Tuple[int, ...]] = []
    for r in range(1, order_cap + 1):
        subsets.extend(combinations(range(n), r))
    cache: _PosteriorCache = {}
    edges: List[InteractionEdge] = []
    for tail_idx in subsets:
        for head_idx in subsets:
            if set(tail_idx) & set(head_idx):
                continue
            tail = Coalition(tail_idx, n)
            head = Coalition(head_idx, n)
            weight = asymmetric_interaction(world, x, head, tail, _cache=cache)
            edges.append(InteractionEdge(tail, head, weight))
    return InfluenceGraph(tuple(range(n)), tuple(edges), order_cap)


def feature_influence(graph: InfluenceGraph, i: int) -> float:
    """Head-degree influence: the sum of weights of edges whose head contains
    the feature."""
    return sum(e.weight for e in graph.edges if i in set(e.head.indices))


def influence_vector(graph: InfluenceGraph) -> np.ndarray:
    return np.array([feature_influence(graph, i) for i in graph.nodes])


def replacement_bias(
    world: WorldModel, x: Instance, i: int, candidate, order_cap: int = 1
) -> float:
    """Magnitude of the directional pull a candidate replacement at position
    ``i`` would exert: its own information about the label plus all incoming
    directed interactions into subsets containing it, truncated at
    ``order_cap``. Lower scores mean less biased replacements."""
    replaced = x.replaced(i, candidate)
    cache: _PosteriorCache = {}
    total = _pmi(world, replaced, (i,), (), cache)
    n = x.n
    heads: List[Tuple[int, ...]] = []
    for r in range(1, order_cap + 1):
        for sub in combinations(range(n), r):
            if i in sub:
                heads.append(sub)
    tails: List[Tuple[int, ...]] = []
    for r in range(1, order_cap + 1):
        tails.extend(combinations(range(n), r))
    for head_idx in heads:
        for tail_idx in tails:
            if set(head_idx) & set(tail_idx):
                continue
            total += asymmetric_interaction(
                world, replaced, Coalition(head_idx, n), Coalition(tail_idx, n), _cache=cache
            )
    return abs(total)


def graph_to_json(graph: InfluenceGraph) -> dict:
    return {
        "nodes": list(graph.nodes),
        "order_cap": graph.order_cap,
        "edges": [
            {"tail": list(e.tail.indices), "head": list(e.head.indices), "weight": e.weight}
            for e in graph.edges
        ],
        "influence": [feature_influence(graph, i) for i in graph.nodes],
    }


def graph_to_dot(graph: InfluenceGraph, x: Optional[Instance] = None) -> str:
    """Graphviz export; edge labels carry weights at six significant digits."""

    def node_id(indices: Tuple[int, ...]) -> str:
        return "f" + "_".join(str(i) for i in indices)

    def node_label(indices: Tuple[int, ...]) -> str:
        if x is not None:
            return "{" + ",".join(f"{i}:{x.values[i]}" for i in indices) + "}"
        return "{" + ",".join(str(i) for i in indices) + "}"

    seen: Dict[str, str] = {}
    for e in graph.edges:
        for side in (e.tail.indices, e.head.indices):
            seen.setdefault(node_id(side), node_label(side))
    lines = ["digraph influence {"]
    for nid in sorted(seen):
        lines.append(f'  {nid} [label="{seen[nid]}"];')
    for e in graph.edges:
        lines.append(
            f'  {node_id(e.tail.indices)} -> {node_id(e.head.indices)} [label="{e.weight:.6g}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
