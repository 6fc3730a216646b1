"""Attribution engine: the coalition value function, exact Shapley values over
exhaustive tabular joints, permutation-sampling estimation with random or
conditional donors, uncertainty-based reweighting of the replacement term, and
entropy-maximizing replacement selection.

Sampling is deterministic: each iteration owns an independent seed stream
spawned from the configured seed, so results are bit-identical across runs and
independent of how iterations are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    AttributionVector,
    Coalition,
    Instance,
    Model,
    PartialInstance,
    SamplingConfig,
    Token,
    compose,
    normalized_entropy,
)
from .distributions import ConditionalProvider, Dataset, TabularJointModel, draw_random_donor
from .errors import CapacityError, ConfigError

EXACT_MAX_FEATURES = 20
_BLOCK = 256


@dataclass(frozen=True)
class RandomBaseline:
    """Donor source that fills missing positions from dataset draws."""

    dataset: Optional[Dataset] = None
    kind: str = field(default="random", init=False)


@dataclass(frozen=True)
class ConditionalBaseline:
    """Donor source that fills missing positions by conditional sampling."""

    provider: Optional[ConditionalProvider] = None
    kind: str = field(default="conditional", init=False)


DonorSource = Union[RandomBaseline, ConditionalBaseline]


@dataclass(frozen=True)
class ValueFunctionSpec:
    """Everything the coalition value function needs: model, target label,
    donor source, and whether to subtract the donor-average reference term."""

    model: Model
    target_label: int
    donor_source: DonorSource
    include_baseline_expectation: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.target_label < self.model.label_count:
            raise ConfigError(
                f"target label {self.target_label} outside [0, {self.model.label_count})"
            )


@dataclass(frozen=True)
class ShapleyEstimate:
    """Sampled attribution plus per-feature standard errors (absent for m=1)."""

    attribution: AttributionVector
    stderr: Optional[np.ndarray]


def value_function(
    spec: ValueFunctionSpec,
    x: Instance,
    coalition: Coalition,
    m: int,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo coalition value: mean model output over ``m`` donor
    completions of the coalition's complement, minus the mean output over
    ``m`` full donors when the reference term is enabled."""
    if m < 1:
        raise ConfigError("value function needs m >= 1")
    model, y = spec.model, spec.target_label
    completions: List[Instance] = []
    for _ in range(m):
        completions.append(_complete(spec.donor_source, x, coalition, rng))
    total = float(np.mean(model.batch_predict(completions)[:, y]))
    if spec.include_baseline_expectation:
        full_donors = [
            _complete(spec.donor_source, x, Coalition.empty(x.n), rng) for _ in range(m)
        ]
        total -= float(np.mean(model.batch_predict(full_donors)[:, y]))
    return total


def _complete(
    source: DonorSource, x: Instance, coalition: Coalition, rng: np.random.Generator
) -> Instance:
    if len(coalition) == x.n:
        return x
    if isinstance(source, RandomBaseline):
        if source.dataset is None:
            raise ConfigError("random baseline needs a donor dataset")
        donor = draw_random_donor(source.dataset, x.n, rng)
        return compose(x, coalition, donor)
    if source.provider is None:
        raise ConfigError("conditional baseline needs a provider")
    observed = PartialInstance.from_instance(x, coalition.indices)
    completion = source.provider.sample_completion(observed, rng)
    return compose(x, coalition, completion)


def exact_coalition_values(
    model: Model,
    target_label: int,
    x: Instance,
    joint: TabularJointModel,
    kind: str = "random",
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact donor expectation for every coalition bitmask.

    Returns ``(values, defined)`` indexed by mask. Random kind: missing
    positions are filled from the joint's marginal over full donors, so every
    mask is defined. Conditional kind: completions follow the exact
    conditional given the observed positions; masks whose observation has zero
    probability are undefined (except the full mask, which needs no sampling).
    """
    n = x.n
    if n > EXACT_MAX_FEATURES:
        raise CapacityError(f"exact enumeration capped at {EXACT_MAX_FEATURES} features, got {n}")
    donors = [inst for inst, _ in joint.support]
    probs = np.array([p for _, p in joint.support], dtype=float)
    full = (1 << n) - 1
    values = np.zeros(1 << n)
    defined = np.ones(1 << n, dtype=bool)
    f_x = float(model.predict(x)[target_label])

    if kind == "random":
        # chunk the (mask, donor) grid so memory stays bounded for larger n
        masks = [m for m in range(1 << n) if m != full]
        values[full] = f_x
        chunk = max(1, 8192 // len(donors))
        for start in range(0, len(masks), chunk):
            part = masks[start : start + chunk]
            merged: List[Instance] = []
            for mask in part:
                keep = Coalition(_mask_indices(mask, n), n)
                for donor in donors:
                    merged.append(compose(x, keep, donor))
            rows = _batched_predict(model, merged)[:, target_label].reshape(-1, len(donors))
            for offset, mask in enumerate(part):
                values[mask] = float(rows[offset] @ probs)
        return values, defined

    if kind != "conditional":
        raise ConfigError(f"unknown baseline kind {kind!r}")

    # Donor k agrees with x exactly on the bits of agree[k]; an observation
    # mask is consistent with donor k iff it is a subset of agree[k]. Merged
    # completions then equal the donor itself, so one prediction per support
    # row suffices.
    agree = np.zeros(len(donors), dtype=np.int64)
    for k, donor in enumerate(donors):
        bits = 0
        for i in range(n):
            if donor.values[i] == x.values[i]:
                bits |= 1 << i
        agree[k] = bits
    donor_scores = _batched_predict(model, donors)[:, target_label]
    for mask in range(1 << n):
        if mask == full:
            values[mask] = f_x
            continue
        consistent = (agree & mask) == mask
        q = float(probs[consistent].sum())
        if q <= 0.0:
            defined[mask] = False
            continue
        values[mask] = float(probs[consistent] @ donor_scores[consistent]) / q
    return values, defined


def exact_shapley(
    spec: ValueFunctionSpec, x: Instance, exhaustive_donors: TabularJointModel
) -> AttributionVector:
    """Exact Shapley attribution by full coalition enumeration over a tabular
    joint. Conditional-baseline pairs touching an undefined (zero-probability)
    coalition are skipped and counted in the metadata."""
    n = x.n
    values, defined = exact_coalition_values(
        spec.model, spec.target_label, x, exhaustive_donors, kind=spec.donor_source.kind
    )
    if spec.include_baseline_expectation and defined[0]:
        values = values - values[0]
    weights = [
        math.factorial(s) * math.factorial(n - 1 - s) / math.factorial(n) for s in range(n)
    ]
    phi = np.zeros(n)
    skipped = 0
    for i in range(n):
        bit = 1 << i
        for mask in range(1 << n):
            if mask & bit:
                continue
            if not (defined[mask] and defined[mask | bit]):
                skipped += 1
                continue
            s = bin(mask).count("1")
            phi[i] += weights[s] * (values[mask | bit] - values[mask])
    meta = {
        "baseline": spec.donor_source.kind,
        "estimator": "exact",
        "target_label": spec.target_label,
        "include_baseline_expectation": spec.include_baseline_expectation,
        "skipped_pairs": skipped,
    }
    return AttributionVector(phi, meta)


def shapley_sampling(
    spec: ValueFunctionSpec, x: Instance, cfg: SamplingConfig
) -> ShapleyEstimate:
    """Permutation-sampling Shapley estimate.

    Each iteration draws a uniform permutation and donor values, builds the
    pair of instances that differ only in whether position ``i`` keeps its
    true value or takes the replacement, and accumulates the output
    difference. With reweighting on, the replacement term is scaled by the
    normalized entropy of the model's prediction for the replacement value.
    """
    if isinstance(spec.donor_source, RandomBaseline):
        contributions = _sample_random(spec, x, cfg)
    else:
        contributions = _sample_conditional(spec, x, cfg)
    phi = contributions.mean(axis=0)
    stderr = None
    if cfg.m > 1:
        stderr = contributions.std(axis=0, ddof=1) / math.sqrt(cfg.m)
    meta = {
        "baseline": spec.donor_source.kind,
        "estimator": "sampling",
        "target_label": spec.target_label,
        "m": cfg.m,
        "seed": cfg.seed,
        "reweighted": cfg.reweighted,
        "entropy_context": cfg.entropy_context,
    }
    return ShapleyEstimate(AttributionVector(phi, meta), stderr)


def _iteration_rngs(cfg: SamplingConfig) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.m)]


def _sample_random(spec: ValueFunctionSpec, x: Instance, cfg: SamplingConfig) -> np.ndarray:
    source = spec.donor_source
    if source.dataset is None:
        raise ConfigError("random baseline needs a donor dataset")
    model, y, n = spec.model, spec.target_label, x.n
    rngs = _iteration_rngs(cfg)
    contributions = np.empty((cfg.m, n))
    entropy_cache: Dict[Tuple[int, Token], float] = {}

    for start in range(0, cfg.m, _BLOCK):
        block = range(start, min(start + _BLOCK, cfg.m))
        pairs: List[Instance] = []
        donor_values: List[Tuple[Token, ...]] = []
        for t in block:
            rng = rngs[t]
            perm = rng.permutation(n)
            donor = draw_random_donor(source.dataset, n, rng)
            donor_values.append(donor.values)
            rank = np.empty(n, dtype=int)
            rank[perm] = np.arange(n)
            for i in range(n):
                keep = tuple(j for j in range(n) if rank[j] <= rank[i])
                x1 = compose(x, Coalition(keep, n), donor)
                pairs.append(x1)
                pairs.append(x1.replaced(i, donor.values[i]))
        rows = _batched_predict(model, pairs)
        scores = rows[:, y]
        if cfg.reweighted and cfg.entropy_context == "singleton":
            _fill_entropy_cache(
                model,
                x,
                [(i, vals[i]) for vals in donor_values for i in range(n)],
                entropy_cache,
            )
        pos = 0
        for bi, t in enumerate(block):
            for i in range(n):
                f1 = scores[pos]
                f2 = scores[pos + 1]
                if cfg.reweighted:
                    if cfg.entropy_context == "singleton":
                        w = entropy_cache[(i, donor_values[bi][i])]
                    else:
                        w = normalized_entropy(rows[pos + 1])
                    contributions[t, i] = f1 - w * f2
                else:
                    contributions[t, i] = f1 - f2
                pos += 2
    return contributions


def _sample_conditional(spec: ValueFunctionSpec, x: Instance, cfg: SamplingConfig) -> np.ndarray:
    source = spec.donor_source
    if source.provider is None:
        raise ConfigError("conditional baseline needs a provider")
    model, y, n = spec.model, spec.target_label, x.n
    rngs = _iteration_rngs(cfg)
    contributions = np.empty((cfg.m, n))
    entropy_cache: Dict[Tuple[int, Token], float] = {}

    for t in range(cfg.m):
        rng = rngs[t]
        perm = rng.permutation(n)
        rank = np.empty(n, dtype=int)
        rank[perm] = np.arange(n)
        pairs: List[Instance] = []
        replacements: List[Token] = []
        for i in range(n):
            prec = tuple(j for j in range(n) if rank[j] < rank[i])
            observed_with_i = PartialInstance.from_instance(x, prec + (i,))
            comp1 = source.provider.sample_completion(observed_with_i, rng)
            x1 = compose(x, Coalition(prec + (i,), n), comp1)
            observed = PartialInstance.from_instance(x, prec)
            comp2 = source.provider.sample_completion(observed, rng)
            x2 = compose(x, Coalition(prec, n), comp2)
            pairs.append(x1)
            pairs.append(x2)
            replacements.append(comp2.values[i])
        rows = _batched_predict(model, pairs)
        scores = rows[:, y]
        if cfg.reweighted and cfg.entropy_context == "singleton":
            _fill_entropy_cache(model, x, list(enumerate(replacements)), entropy_cache)
        for i in range(n):
            f1 = scores[2 * i]
            f2 = scores[2 * i + 1]
            if cfg.reweighted:
                if cfg.entropy_context == "singleton":
                    w = entropy_cache[(i, replacements[i])]
                else:
                    w = normalized_entropy(rows[2 * i + 1])
                contributions[t, i] = f1 - w * f2
            else:
                contributions[t, i] = f1 - f2
    return contributions


def _fill_entropy_cache(
    model: Model,
    x: Instance,
    needed: Sequence[Tuple[int, Token]],
    cache: Dict[Tuple[int, Token], float],
) -> None:
    missing = [key for key in dict.fromkeys(needed) if key not in cache]
    if not missing:
        return
    singles = [x.singleton(i, v) for i, v in missing]
    rows = _batched_predict(model, singles)
    for key, row in zip(missing, rows):
        cache[key] = normalized_entropy(row)


def select_uninformative_replacement(
    model: Model, x: Instance, i: int, candidates: Sequence[Token]
) -> Token:
    """The candidate whose lone presence leaves the model least certain.

    Maximizes the normalized entropy of the prediction on the candidate's
    singleton instance; ties go to the earliest candidate.
    """
    if not candidates:
        raise ConfigError("candidate set is empty")
    best_value: Optional[Token] = None
    best_entropy = -1.0
    rows = _batched_predict(model, [x.singleton(i, v) for v in candidates])
    for value, row in zip(candidates, rows):
        h = normalized_entropy(row)
        if h > best_entropy:
            best_entropy = h
            best_value = value
    return best_value


def _batched_predict(model: Model, instances: Sequence[Instance]) -> np.ndarray:
    if not instances:
        return np.zeros((0, model.label_count))
    return np.asarray(model.batch_predict(list(instances)), dtype=float)


def _mask_indices(mask: int, n: int) -> Tuple[int, ...]:
    return tuple(i for i in range(n) if mask & (1 << i))
