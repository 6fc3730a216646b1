"""Orchestration shared by the service endpoints: resolves declarative model,
donor, and joint specs into engine objects and drives per-instance runs.

Every run emits a manifest (canonical request, its hash, package version)
sufficient to reproduce the outputs byte for byte. Per-instance seeds are
spawned from the configured seed up front, so worker counts never change
results.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bridge import RemoteConditionalProvider, RemoteEndpoint, RemoteModel
from .core import CONCURRENT_SAFE, Instance, Model, SamplingConfig, Token
from .distributions import ConditionalProvider, Dataset, TabularJointModel
from .engine import (
    ConditionalBaseline,
    DonorSource,
    RandomBaseline,
    ValueFunctionSpec,
    exact_shapley,
    shapley_sampling,
)
from .errors import ConfigError, EntroshapError
from .evaluation import EvalConfig, EvalReport, MetricRow, Ranking, metric_grid, rank_features
from .interaction import WorldModel, build_influence_graph, feature_influence, graph_to_dot
from .service import schemas
from .worlds import LookupModel, resolve_builtin_model


def make_manifest(task: str, request) -> Dict[str, object]:
    payload = request.model_dump(mode="json")
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return {
        "task": task,
        "request": payload,
        "config_hash": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
        "version": __version__,
    }


def resolve_model(spec: schemas.ModelSpec) -> Model:
    if spec.kind == "builtin":
        return resolve_builtin_model(spec.name)
    if spec.kind == "lookup":
        return LookupModel.load_json(spec.path)
    return RemoteModel(RemoteEndpoint(spec.address))


def build_dataset(rows: Sequence[Sequence[Token]], pad: Token) -> Dataset:
    return Dataset(tuple(Instance(tuple(r), pad) for r in rows))


def resolve_joint(
    spec: schemas.JointSpec, donors: Optional[Dataset], pad: Token
) -> TabularJointModel:
    if spec.kind == "csv":
        return TabularJointModel.load_csv(spec.path, pad)
    if spec.kind == "inline":
        support = tuple((Instance(tuple(tokens), pad), float(p)) for tokens, p in spec.support)
        return TabularJointModel(support)
    if donors is None:
        raise ConfigError("an empirical joint needs donor instances")
    return TabularJointModel.fit_empirical(donors)


def resolve_donor_source(
    baseline: schemas.BaselineSpec,
    donors: Optional[Dataset],
    pad: Token,
) -> DonorSource:
    if baseline.kind == "random":
        if donors is None:
            raise ConfigError("random baseline needs donor instances")
        return RandomBaseline(donors)
    provider_spec = baseline.provider or schemas.ProviderSpec()
    provider: ConditionalProvider
    if provider_spec.kind == "empirical":
        if donors is None:
            raise ConfigError("empirical conditional provider needs donor instances")
        provider = TabularJointModel.fit_empirical(donors)
    elif provider_spec.kind == "joint-csv":
        provider = TabularJointModel.load_csv(provider_spec.path, pad)
    else:
        provider = RemoteConditionalProvider(RemoteEndpoint(provider_spec.address))
    return ConditionalBaseline(provider)


def _instance_seeds(seed: int, count: int) -> List[int]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _attribute_one(
    model: Model,
    x: Instance,
    donor_source: DonorSource,
    sampling: schemas.SamplingSpec,
    instance_seed: int,
    exact: bool,
    joint: Optional[TabularJointModel],
    target_label: Optional[int],
    ranking_rule: str,
) -> Tuple[int, np.ndarray, Optional[np.ndarray], Ranking, dict]:
    if target_label is None:
        target = int(np.argmax(model.predict(x)))
    else:
        target = target_label
    spec = ValueFunctionSpec(
        model, target, donor_source, sampling.include_baseline_expectation
    )
    if exact:
        if joint is None:
            raise ConfigError("exact attribution needs a joint specification")
        attr = exact_shapley(spec, x, joint)
        stderr = None
    else:
        cfg = SamplingConfig(
            m=sampling.m,
            seed=instance_seed,
            reweighted=sampling.reweighted,
            include_baseline_expectation=sampling.include_baseline_expectation,
            entropy_context=sampling.entropy_context,
        )
        estimate = shapley_sampling(spec, x, cfg)
        attr = estimate.attribution
        stderr = estimate.stderr
    ranking = rank_features(attr, ranking_rule)
    meta = dict(attr.meta)
    meta["instance_seed"] = instance_seed
    return target, attr.phi, stderr, ranking, meta


def run_attribute(req: schemas.AttributeRequest) -> schemas.AttributeResponse:
    model = resolve_model(req.model)
    instances = [Instance(tuple(row), req.pad) for row in req.instances]
    donor_rows = req.donors if req.donors is not None else req.instances
    donors = build_dataset(donor_rows, req.pad)
    donor_source = resolve_donor_source(req.baseline, donors, req.pad)
    joint = None
    if req.exact:
        joint = resolve_joint(req.joint, donors, req.pad)
    seeds = _instance_seeds(req.sampling.seed, len(instances))

    def work(idx: int):
        return _attribute_one(
            model,
            instances[idx],
            donor_source,
            req.sampling,
            seeds[idx],
            req.exact,
            joint,
            req.target_label,
            req.ranking_rule,
        )

    results: List[schemas.AttributionResult] = []
    failures: List[schemas.FailureRecord] = []
    outcomes: List[Tuple[int, object]] = []
    workers = req.workers if model.concurrency_class == CONCURRENT_SAFE else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {idx: pool.submit(work, idx) for idx in range(len(instances))}
        for idx in range(len(instances)):
            try:
                outcomes.append((idx, futures[idx].result()))
            except EntroshapError as exc:
                outcomes.append((idx, exc))
    else:
        for idx in range(len(instances)):
            try:
                outcomes.append((idx, work(idx)))
            except EntroshapError as exc:
                outcomes.append((idx, exc))
    for idx, outcome in outcomes:
        if isinstance(outcome, Exception):
            failures.append(schemas.FailureRecord(index=idx, error=str(outcome)))
            continue
        target, phi, stderr, ranking, meta = outcome
        results.append(
            schemas.AttributionResult(
                index=idx,
                tokens=list(req.instances[idx]),
                target_label=target,
                phi=[float(v) for v in phi],
                stderr=None if stderr is None else [float(v) for v in stderr],
                order=list(ranking.order),
                meta=meta,
            )
        )
    return schemas.AttributeResponse(
        results=results, failures=failures, manifest=make_manifest("attribute", req)
    )


def _method_rankings(
    model: Model,
    instances: List[Instance],
    donors: Dataset,
    method: schemas.MethodSpec,
    req: schemas.EvaluateRequest,
    seed: int,
) -> List[Ranking]:
    donor_source = resolve_donor_source(method.baseline, donors, req.pad)
    joint = resolve_joint(req.joint, donors, req.pad) if method.exact else None
    sampling = schemas.SamplingSpec(
        m=req.sampling.m,
        seed=seed,
        reweighted=method.reweighted,
        include_baseline_expectation=req.sampling.include_baseline_expectation,
        entropy_context=req.sampling.entropy_context,
    )
    seeds = _instance_seeds(seed, len(instances))
    rankings: List[Ranking] = []
    for idx, x in enumerate(instances):
        _, _, _, ranking, _ = _attribute_one(
            model,
            x,
            donor_source,
            sampling,
            seeds[idx],
            method.exact,
            joint,
            req.target_label,
            req.ranking_rule,
        )
        rankings.append(ranking)
    return rankings


def run_evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
    model = resolve_model(req.model)
    instances = [Instance(tuple(row), req.pad) for row in req.instances]
    donor_rows = req.donors if req.donors is not None else req.instances
    donors = build_dataset(donor_rows, req.pad)
    cfg = EvalConfig(
        k_grid=tuple(req.k_grid),
        perturb_mode=req.perturb_mode,
        ranking_rule=req.ranking_rule,
    )
    rows: List[MetricRow] = []
    for method in req.methods:
        per_seed: Dict[Tuple[float, str], List[float]] = {}
        for seed in req.seeds:
            rankings = _method_rankings(model, instances, donors, method, req, seed)
            grid = metric_grid(model, list(zip(instances, rankings)), cfg)
            for key, value in grid.items():
                per_seed.setdefault(key, []).append(value)
        for (k, metric), values in sorted(per_seed.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            rows.append(MetricRow(method.name, k, metric, tuple(values)))
    for pre in req.precomputed:
        if len(pre.phi) != len(instances):
            raise ConfigError(
                f"precomputed method {pre.name!r} has {len(pre.phi)} vectors "
                f"for {len(instances)} instances"
            )
        rankings = [
            rank_features_from_scores(scores, req.ranking_rule) for scores in pre.phi
        ]
        grid = metric_grid(model, list(zip(instances, rankings)), cfg)
        for (k, metric), value in sorted(grid.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            rows.append(MetricRow(pre.name, k, metric, (value,)))
    report = EvalReport(tuple(rows), len(instances))
    return schemas.EvaluateResponse(
        report=report.to_json_dict(),
        csv=report.to_csv_text(),
        long_csv=report.to_long_csv_text(),
        manifest=make_manifest("evaluate", req),
    )


def rank_features_from_scores(scores: Sequence[float], rule: str) -> Ranking:
    from .core import AttributionVector

    return rank_features(AttributionVector(np.asarray(scores, dtype=float)), rule)


def run_interact(req: schemas.InteractRequest) -> schemas.InteractResponse:
    model = resolve_model(req.model)
    x = Instance(tuple(req.instance), req.pad)
    donors = None
    if req.donors is not None:
        donors = build_dataset(req.donors, req.pad)
    joint = resolve_joint(req.joint, donors, req.pad)
    if req.target_label is None:
        target = int(np.argmax(model.predict(x)))
    else:
        target = req.target_label
    world = WorldModel(joint, model, target)
    graph = build_influence_graph(world, x, req.order_cap)
    edges = [
        schemas.EdgePayload(
            tail=list(e.tail.indices), head=list(e.head.indices), weight=float(e.weight)
        )
        for e in graph.edges
    ]
    influence = [float(feature_influence(graph, i)) for i in graph.nodes]
    return schemas.InteractResponse(
        nodes=list(graph.nodes),
        order_cap=graph.order_cap,
        edges=edges,
        influence=influence,
        dot=graph_to_dot(graph, x),
        manifest=make_manifest("interact", req),
    )
