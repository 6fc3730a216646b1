"""Faithfulness evaluation: rankings from attributions, top-k perturbation by
padding or deletion, the log-odds / sufficiency / comprehensiveness metrics,
and ranking-agreement utilities (Spearman correlation, top-k overlap).

All metrics are means of per-instance terms computed on the probability of
each instance's originally predicted class.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import AttributionVector, Instance, Model
from .errors import ConfigError, MetricError

METRICS = ("lor", "sf", "cm")


@dataclass(frozen=True)
class Ranking:
    """A strict importance ordering (most influential first) plus the scores
    that induced it, index-aligned to the features."""

    order: Tuple[int, ...]
    scores: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError("order must be a permutation of the feature indices")
        if self.scores.size != len(self.order):
            raise ValueError("scores must align with the permutation length")

    @property
    def n(self) -> int:
        return len(self.order)

    def top(self, k: float) -> Tuple[int, ...]:
        return self.order[: top_count(self.n, k)]


@dataclass(frozen=True)
class EvalConfig:
    k_grid: Tuple[float, ...] = (10, 20, 30, 40, 50)
    perturb_mode: str = "pad"
    ranking_rule: str = "signed"
    log_base: float = math.e

    def __post_init__(self) -> None:
        for k in self.k_grid:
            if not 0 < k <= 100:
                raise ConfigError(f"k must be in (0, 100], got {k}")
        if self.perturb_mode not in ("pad", "delete"):
            raise ConfigError(f"unknown perturbation mode {self.perturb_mode!r}")
        if self.ranking_rule not in ("signed", "absolute"):
            raise ConfigError(f"unknown ranking rule {self.ranking_rule!r}")


@dataclass(frozen=True)
class MetricRow:
    method: str
    k: float
    metric: str
    values: Tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> Optional[float]:
        if len(self.values) < 2:
            return None
        return float(np.std(self.values, ddof=1))


@dataclass(frozen=True)
class EvalReport:
    """Per-method, per-k metric values over one or more seeded runs."""

    rows: Tuple[MetricRow, ...]
    n_instances: int

    def __post_init__(self) -> None:
        if self.n_instances < 1:
            raise ConfigError("report needs at least one instance")

    def to_json_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "rows": [
                {
                    "method": r.method,
                    "k": r.k,
                    "metric": r.metric,
                    "mean": r.mean,
                    "std": r.std,
                    "values": list(r.values),
                }
                for r in self.rows
            ],
        }

    def to_csv_text(self) -> str:
        """Wide table: one row per (method, k), metric mean/std columns."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["method", "k"]
        for metric in METRICS:
            header += [f"{metric}_mean", f"{metric}_std"]
        writer.writerow(header)
        keys = sorted({(r.method, r.k) for r in self.rows}, key=lambda mk: (mk[0], mk[1]))
        index = {(r.method, r.k, r.metric): r for r in self.rows}
        for method, k in keys:
            row: List[object] = [method, _num(k)]
            for metric in METRICS:
                r = index.get((method, k, metric))
                if r is None:
                    row += ["", ""]
                else:
                    row += [repr(r.mean), "" if r.std is None else repr(r.std)]
            writer.writerow(row)
        return buf.getvalue()

    def to_long_csv_text(self) -> str:
        """Plot-ready long format: method, k, metric, seed index, value."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "k", "metric", "seed_index", "value"])
        for r in self.rows:
            for idx, v in enumerate(r.values):
                writer.writerow([r.method, _num(r.k), r.metric, idx, repr(v)])
        return buf.getvalue()

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def _num(k: float) -> object:
    return int(k) if float(k).is_integer() else k


def top_count(n: int, k: float) -> int:
    """Number of positions in the top k%: ceil(k*n/100), at least 1."""
    return max(1, math.ceil(k * n / 100.0))


def rank_features(attr: AttributionVector, rule: str = "signed") -> Ranking:
    """Stable descending sort of the attribution scores; ties break toward the
    lower feature index. The absolute rule sorts by magnitude instead."""
    scores = attr.phi
    if rule == "signed":
        key = scores
    elif rule == "absolute":
        key = np.abs(scores)
    else:
        raise ConfigError(f"unknown ranking rule {rule!r}")
    order = sorted(range(attr.n), key=lambda i: (-key[i], i))
    return Ranking(tuple(order), scores)


def perturb(x: Instance, ranking: Ranking, k: float, which: str, mode: str) -> Instance:
    """Perturb the top-k% positions (or everything else for ``non-top``):
    pad mode overwrites with the pad value, delete mode removes positions.

    If deletion would empty the sequence, a single pad is kept so the result
    remains a valid instance.
    """
    if not 0 < k <= 100:
        raise ConfigError(f"k must be in (0, 100], got {k}")
    if ranking.n != x.n:
        raise ValueError(f"ranking over {ranking.n} features, instance has {x.n}")
    count = top_count(x.n, k)
    if which == "top":
        chosen = set(ranking.order[:count])
    elif which == "non-top":
        chosen = set(ranking.order[count:])
    else:
        raise ConfigError(f"unknown selection {which!r}")
    if mode == "pad":
        vals = tuple(x.pad if i in chosen else v for i, v in enumerate(x.values))
        return Instance(vals, x.pad)
    if mode == "delete":
        vals = tuple(v for i, v in enumerate(x.values) if i not in chosen)
        if not vals:
            vals = (x.pad,)
        return Instance(vals, x.pad)
    raise ConfigError(f"unknown perturbation mode {mode!r}")


def _predicted_probs(
    model: Model, data: Sequence[Tuple[Instance, Ranking]], k: float, which: str, mode: str
) -> Tuple[np.ndarray, np.ndarray]:
    originals = [x for x, _ in data]
    perturbed = [perturb(x, r, k, which, mode) for x, r in data]
    rows = np.asarray(model.batch_predict(originals), dtype=float)
    classes = rows.argmax(axis=1)
    before = rows[np.arange(len(data)), classes]
    after_rows = np.asarray(model.batch_predict(perturbed), dtype=float)
    after = after_rows[np.arange(len(data)), classes]
    return before, after


def log_odds(
    model: Model,
    data: Sequence[Tuple[Instance, Ranking]],
    k: float,
    mode: str = "pad",
    log_base: float = math.e,
) -> float:
    """Mean log-ratio of the predicted-class probability after perturbing the
    top-k% positions. Lower means the removed features mattered more."""
    if not data:
        raise MetricError("no instances to evaluate")
    before, after = _predicted_probs(model, data, k, "top", mode)
    terms = []
    for idx, (b, a) in enumerate(zip(before, after)):
        if b <= 0.0 or a <= 0.0:
            raise MetricError(f"instance {idx}: predicted-class probability is 0")
        terms.append(math.log(a / b) / math.log(log_base))
    return float(np.mean(terms))


def sufficiency(
    model: Model, data: Sequence[Tuple[Instance, Ranking]], k: float, mode: str = "pad"
) -> float:
    """Mean confidence drop when only the top-k% positions are kept.
    Lower is better."""
    if not data:
        raise MetricError("no instances to evaluate")
    before, after = _predicted_probs(model, data, k, "non-top", mode)
    return float(np.mean(before - after))


def comprehensiveness(
    model: Model, data: Sequence[Tuple[Instance, Ranking]], k: float, mode: str = "pad"
) -> float:
    """Mean confidence drop when the top-k% positions are removed.
    Higher is better."""
    if not data:
        raise MetricError("no instances to evaluate")
    before, after = _predicted_probs(model, data, k, "top", mode)
    return float(np.mean(before - after))


def metric_grid(
    model: Model,
    data: Sequence[Tuple[Instance, Ranking]],
    cfg: EvalConfig,
) -> Dict[Tuple[float, str], float]:
    """All three metrics across the configured k grid for one run."""
    out: Dict[Tuple[float, str], float] = {}
    for k in cfg.k_grid:
        out[(k, "lor")] = log_odds(model, data, k, cfg.perturb_mode, cfg.log_base)
        out[(k, "sf")] = sufficiency(model, data, k, cfg.perturb_mode)
        out[(k, "cm")] = comprehensiveness(model, data, k, cfg.perturb_mode)
    return out


def spearman(r1: Ranking, r2: Ranking) -> float:
    """Spearman rank correlation between two strict rankings."""
    if r1.n != r2.n:
        raise ValueError(f"rankings differ in length: {r1.n} vs {r2.n}")
    n = r1.n
    if n < 2:
        raise ValueError("Spearman correlation needs at least two features")
    pos1 = np.empty(n)
    pos2 = np.empty(n)
    for rank, feature in enumerate(r1.order):
        pos1[feature] = rank
    for rank, feature in enumerate(r2.order):
        pos2[feature] = rank
    d2 = float(np.sum((pos1 - pos2) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def overlap_rate(r1: Ranking, r2: Ranking, k: float) -> float:
    """Fraction of shared positions between the two top-k% sets."""
    if r1.n != r2.n:
        raise ValueError(f"rankings differ in length: {r1.n} vs {r2.n}")
    if not 0 < k <= 100:
        raise ConfigError(f"k must be in (0, 100], got {k}")
    count = top_count(r1.n, k)
    return len(set(r1.order[:count]) & set(r2.order[:count])) / count
