"""Pydantic request/response models for the attribution service.

Every request is self-contained (instances inline, model and donor sources by
declarative spec), so the service holds no state and identical requests yield
identical responses.
"""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, model_validator

WireToken = Union[int, str]


class ModelSpec(BaseModel):
    kind: Literal["builtin", "lookup", "remote"]
    name: Optional[str] = None
    path: Optional[str] = None
    address: Optional[str] = None

    @model_validator(mode="after")
    def _check_fields(self) -> "ModelSpec":
        needed = {"builtin": self.name, "lookup": self.path, "remote": self.address}
        if needed[self.kind] is None:
            field = {"builtin": "name", "lookup": "path", "remote": "address"}[self.kind]
            raise ValueError(f"model.{field} is required for kind={self.kind!r}")
        return self


class ProviderSpec(BaseModel):
    """Where conditional completions come from."""

    kind: Literal["empirical", "joint-csv", "remote"] = "empirical"
    path: Optional[str] = None
    address: Optional[str] = None

    @model_validator(mode="after")
    def _check_fields(self) -> "ProviderSpec":
        if self.kind == "joint-csv" and self.path is None:
            raise ValueError("provider.path is required for kind='joint-csv'")
        if self.kind == "remote" and self.address is None:
            raise ValueError("provider.address is required for kind='remote'")
        return self


class BaselineSpec(BaseModel):
    kind: Literal["random", "conditional"] = "random"
    provider: Optional[ProviderSpec] = None


class JointSpec(BaseModel):
    """Exhaustive joint used by exact attribution and interaction analysis."""

    kind: Literal["empirical", "csv", "inline"] = "empirical"
    path: Optional[str] = None
    support: Optional[List[Tuple[List[WireToken], float]]] = None

    @model_validator(mode="after")
    def _check_fields(self) -> "JointSpec":
        if self.kind == "csv" and self.path is None:
            raise ValueError("joint.path is required for kind='csv'")
        if self.kind == "inline" and not self.support:
            raise ValueError("joint.support is required for kind='inline'")
        return self


class SamplingSpec(BaseModel):
    m: int = Field(default=1000, ge=1)
    seed: int = 0
    reweighted: bool = False
    include_baseline_expectation: bool = False
    entropy_context: Literal["singleton", "composed"] = "singleton"


class AttributeRequest(BaseModel):
    instances: List[List[WireToken]]
    pad: WireToken
    model: ModelSpec
    baseline: BaselineSpec = BaselineSpec()
    sampling: SamplingSpec = SamplingSpec()
    exact: bool = False
    joint: JointSpec = JointSpec()
    target_label: Optional[int] = None
    donors: Optional[List[List[WireToken]]] = None
    ranking_rule: Literal["signed", "absolute"] = "signed"
    workers: int = Field(default=1, ge=1)


class AttributionResult(BaseModel):
    index: int
    tokens: List[WireToken]
    target_label: int
    phi: List[float]
    stderr: Optional[List[float]] = None
    order: List[int]
    meta: Dict[str, Any]


class FailureRecord(BaseModel):
    index: int
    error: str


class AttributeResponse(BaseModel):
    results: List[AttributionResult]
    failures: List[FailureRecord]
    manifest: Dict[str, Any]


class MethodSpec(BaseModel):
    """One attribution method to evaluate: a baseline plus estimator options."""

    name: str
    baseline: BaselineSpec = BaselineSpec()
    reweighted: bool = False
    exact: bool = False


class PrecomputedMethod(BaseModel):
    """Already-computed attributions, one vector per instance in order."""

    name: str
    phi: List[List[float]]


class EvaluateRequest(BaseModel):
    instances: List[List[WireToken]]
    pad: WireToken
    model: ModelSpec
    methods: List[MethodSpec] = []
    precomputed: List[PrecomputedMethod] = []
    sampling: SamplingSpec = SamplingSpec()
    joint: JointSpec = JointSpec()
    donors: Optional[List[List[WireToken]]] = None
    seeds: List[int] = [0]
    k_grid: List[float] = [10, 20, 30, 40, 50]
    perturb_mode: Literal["pad", "delete"] = "pad"
    ranking_rule: Literal["signed", "absolute"] = "signed"
    target_label: Optional[int] = None
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_methods(self) -> "EvaluateRequest":
        if not self.methods and not self.precomputed:
            raise ValueError("evaluate needs a method list or precomputed attributions")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        return self


class EvaluateResponse(BaseModel):
    report: Dict[str, Any]
    csv: str
    long_csv: str
    manifest: Dict[str, Any]


class InteractRequest(BaseModel):
    instance: List[WireToken]
    pad: WireToken
    model: ModelSpec
    joint: JointSpec = JointSpec()
    donors: Optional[List[List[WireToken]]] = None
    target_label: Optional[int] = None
    order_cap: int = Field(default=1, ge=1)


class EdgePayload(BaseModel):
    tail: List[int]
    head: List[int]
    weight: float


class InteractResponse(BaseModel):
    nodes: List[int]
    order_cap: int
    edges: List[EdgePayload]
    influence: List[float]
    dot: str
    manifest: Dict[str, Any]


class HealthResponse(BaseModel):
    status: str
    version: str
