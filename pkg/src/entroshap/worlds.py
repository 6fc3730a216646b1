"""Built-in models and small self-contained worlds used by the CLI, the
service, and the test suite: table-lookup classifiers, an additive two-feature
score model with a degenerate paired joint, and a bundled two-label sentiment
world with a deterministic token-weight classifier.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .core import Instance, Model, Token
from .distributions import Dataset, TabularJointModel
from .errors import ConfigError, EvaluationError


class ConstantModel(Model):
    """Ignores its input entirely."""

    def __init__(self, row: Sequence[float]):
        self.row = np.asarray(row, dtype=float)
        self.label_count = int(self.row.size)

    def batch_predict(self, instances):
        return np.tile(self.row, (len(instances), 1))


class LookupModel(Model):
    """Explicit table from token sequences to label-score rows."""

    def __init__(
        self,
        table: Dict[Tuple[Token, ...], Sequence[float]],
        label_count: int,
        default: Optional[Sequence[float]] = None,
    ):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.label_count = label_count
        self.default = None if default is None else np.asarray(default, dtype=float)

    def batch_predict(self, instances):
        rows = np.empty((len(instances), self.label_count))
        for idx, inst in enumerate(instances):
            row = self.table.get(inst.values)
            if row is None:
                if self.default is None:
                    raise EvaluationError(f"no table row for {inst.values}")
                row = self.default
            rows[idx] = row
        return rows

    @staticmethod
    def load_json(path: Union[str, Path]) -> "LookupModel":
        """``{"labels": L, "rows": [[[tok,...],[score,...]], ...], "default": [...]}``"""
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        table = {tuple(tokens): scores for tokens, scores in payload["rows"]}
        return LookupModel(table, int(payload["labels"]), payload.get("default"))


class AdditivePairModel(Model):
    """Single-output score model over two numeric features: f(a, b) = a + b."""

    label_count = 1

    def batch_predict(self, instances):
        rows = np.empty((len(instances), 1))
        for idx, inst in enumerate(instances):
            if inst.n != 2:
                raise EvaluationError("additive pair model expects exactly two features")
            rows[idx, 0] = float(inst.values[0]) + float(inst.values[1])
        return rows


class TokenWeightModel(Model):
    """Softmax classifier over summed per-token logit rows. Unknown tokens and
    the pad contribute nothing, so the model is a pure table of its inputs."""

    def __init__(self, weights: Dict[Token, Sequence[float]], label_count: int):
        self.weights = {tok: np.asarray(w, dtype=float) for tok, w in weights.items()}
        self.label_count = label_count
        for w in self.weights.values():
            if w.size != label_count:
                raise ConfigError("every weight row must match the label count")

    def batch_predict(self, instances):
        rows = np.empty((len(instances), self.label_count))
        for idx, inst in enumerate(instances):
            logits = np.zeros(self.label_count)
            for tok in inst.values:
                w = self.weights.get(tok)
                if w is not None:
                    logits = logits + w
            shifted = np.exp(logits - logits.max())
            rows[idx] = shifted / shifted.sum()
        return rows


PAIR_PAD = 0


def matched_pair_joint() -> TabularJointModel:
    """Two perfectly correlated binary features: both 0 or both 1, each with
    probability one half."""
    return TabularJointModel(
        (
            (Instance((0, 0), PAIR_PAD), 0.5),
            (Instance((1, 1), PAIR_PAD), 0.5),
        )
    )


def matched_pair_dataset() -> Dataset:
    return Dataset(tuple(inst for inst, _ in matched_pair_joint().support))


def uniform_binary_joint(n: int) -> TabularJointModel:
    """Uniform joint over all binary sequences of length ``n``."""
    support = []
    total = 1 << n
    for mask in range(total):
        values = tuple((mask >> i) & 1 for i in range(n))
        support.append((Instance(values, PAIR_PAD), 1.0 / total))
    return TabularJointModel(tuple(support))


SENTIMENT_PAD = "<pad>"

_SENTIMENT_WEIGHTS: Dict[Token, float] = {
    "great": 2.0,
    "fine": 0.8,
    "dull": -0.8,
    "awful": -2.0,
    "the": 0.0,
    "plot": 0.0,
    "movie": 0.0,
    "was": 0.0,
    "acting": 0.0,
}

_SENTIMENT_SENTENCES: Tuple[Tuple[str, ...], ...] = (
    ("the", "movie", "was", "great", "fine"),
    ("the", "plot", "was", "awful", "dull"),
    ("the", "acting", "was", "fine", "fine"),
    ("the", "movie", "was", "dull", "awful"),
    ("the", "plot", "was", "great", "fine"),
    ("the", "acting", "was", "awful", "awful"),
    ("the", "movie", "was", "fine", "great"),
    ("the", "plot", "was", "dull", "dull"),
    ("the", "acting", "was", "great", "dull"),
    ("the", "movie", "was", "awful", "fine"),
    ("the", "plot", "was", "fine", "fine"),
    ("the", "acting", "was", "dull", "great"),
)


def sentiment_model() -> TokenWeightModel:
    """Two-label classifier: positive sentiment probability rises with the
    summed token weights."""
    weights = {tok: (w, -w) for tok, w in _SENTIMENT_WEIGHTS.items()}
    return TokenWeightModel(weights, 2)


def sentiment_dataset() -> Dataset:
    model = sentiment_model()
    instances = tuple(Instance(s, SENTIMENT_PAD) for s in _SENTIMENT_SENTENCES)
    rows = model.batch_predict(list(instances))
    labels = tuple(int(r.argmax()) for r in rows)
    return Dataset(instances, labels)


BUILTIN_MODELS = {
    "matched-pair": AdditivePairModel,
    "sentiment-demo": sentiment_model,
}


def resolve_builtin_model(name: str) -> Model:
    if name not in BUILTIN_MODELS:
        raise ConfigError(f"unknown builtin model {name!r}; have {sorted(BUILTIN_MODELS)}")
    return BUILTIN_MODELS[name]()


def builtin_dataset(name: str) -> Dataset:
    if name == "matched-pair":
        return matched_pair_dataset()
    if name == "sentiment-demo":
        return sentiment_dataset()
    raise ConfigError(f"no bundled dataset for {name!r}")


def builtin_pad(name: str) -> Token:
    if name == "matched-pair":
        return PAIR_PAD
    if name == "sentiment-demo":
        return SENTIMENT_PAD
    raise ConfigError(f"no bundled pad for {name!r}")
