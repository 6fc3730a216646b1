"""HTTP client for remote black-box models and remote conditional providers.

Wire protocol (JSON over HTTP POST):

* ``POST /predict``    ``{"instances": [[token, ...], ...]}`` ->
  ``{"probs": [[p, ...], ...]}``, one row per instance, order preserved.
* ``POST /conditional`` ``{"observed": {"<index>": token, ...}, "n": int,
  "count": int, "seed": int}`` -> ``{"completions": [[token, ...], ...]}``,
  each completion agreeing with every observed position.
* ``GET /meta``        ``{"label_count": int, "pad_token": token}``.

Tokens travel as strings; this module owns the interning, so engine-side
pipelines built on remote endpoints work with string tokens throughout.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import httpx
import numpy as np

from .core import Instance, LabelDistribution, Model, PartialInstance, Token
from .distributions import ConditionalProvider
from .errors import BridgeError, ProtocolError

logger = logging.getLogger("entroshap.bridge")

ENDPOINT_ENV_VAR = "ENTROSHAP_ENDPOINT"


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    timeout: float = 10.0
    max_batch: int = 64
    retry_attempts: int = 3
    retry_backoff: float = 0.1

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


class CountingClient:
    """httpx client wrapper that counts issued requests, for conformance."""

    def __init__(self, client: httpx.Client):
        self._client = client
        self.request_count = 0
        self.counts_by_path: Dict[str, int] = {}

    def request(self, method: str, url: str, **kwargs) -> httpx.Response:
        self.request_count += 1
        path = url if url.startswith("/") else "/" + url.split("/", 3)[-1]
        self.counts_by_path[path] = self.counts_by_path.get(path, 0) + 1
        return self._client.request(method, url, **kwargs)

    def close(self) -> None:
        self._client.close()


def _make_client(ep: RemoteEndpoint) -> httpx.Client:
    return httpx.Client(base_url=ep.base_url, timeout=ep.timeout)


def _request(ep: RemoteEndpoint, client, method: str, path: str, payload: Optional[dict]) -> dict:
    last_error: Optional[Exception] = None
    for attempt in range(ep.retry_attempts):
        try:
            kwargs = {} if payload is None else {"json": payload}
            response = client.request(method, path, **kwargs)
        except httpx.TransportError as exc:
            last_error = exc
            if attempt + 1 < ep.retry_attempts:
                time.sleep(ep.retry_backoff * (2**attempt))
            continue
        if response.status_code != 200:
            raise ProtocolError(
                f"{method} {path} returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{method} {path} sent non-JSON: {response.text[:200]}") from exc
    raise BridgeError(f"{method} {path} failed after {ep.retry_attempts} attempts: {last_error}")


def remote_meta(ep: RemoteEndpoint, client=None) -> dict:
    owned = client is None
    client = client or _make_client(ep)
    try:
        payload = _request(ep, client, "GET", "/meta", None)
    finally:
        if owned:
            client.close()
    if "label_count" not in payload or "pad_token" not in payload:
        raise ProtocolError(f"/meta missing fields: {json.dumps(payload)[:200]}")
    if not isinstance(payload["label_count"], int) or payload["label_count"] < 1:
        raise ProtocolError(f"/meta label_count invalid: {payload['label_count']!r}")
    return payload


def _parse_prob_row(row, width_hint: Optional[int]) -> np.ndarray:
    arr = np.asarray(row, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ProtocolError(f"malformed probability row: {row!r}")
    if width_hint is not None and arr.size != width_hint:
        raise ProtocolError(f"row width {arr.size} differs from earlier rows ({width_hint})")
    if np.any(arr < 0):
        raise ProtocolError(f"negative probability in row: {row!r}")
    total = float(arr.sum())
    if abs(total - 1.0) > 1e-4:
        raise ProtocolError(f"probabilities sum to {total}, beyond the 1e-4 envelope: {row!r}")
    if abs(total - 1.0) > 1e-6:
        logger.warning("renormalizing probability row off by %.3g", total - 1.0)
    return arr / total


def remote_predict(
    ep: RemoteEndpoint, batch: Sequence[Instance], client=None
) -> List[LabelDistribution]:
    """Predict a batch, auto-chunking to ``max_batch`` and preserving order."""
    if not batch:
        return []
    owned = client is None
    client = client or _make_client(ep)
    try:
        out: List[LabelDistribution] = []
        width: Optional[int] = None
        for start in range(0, len(batch), ep.max_batch):
            chunk = batch[start : start + ep.max_batch]
            payload = {"instances": [[str(t) for t in inst.values] for inst in chunk]}
            reply = _request(ep, client, "POST", "/predict", payload)
            rows = reply.get("probs")
            if not isinstance(rows, list) or len(rows) != len(chunk):
                raise ProtocolError(
                    f"/predict returned {0 if rows is None else len(rows)} rows for "
                    f"{len(chunk)} instances: {json.dumps(reply)[:200]}"
                )
            for row in rows:
                parsed = _parse_prob_row(row, width)
                width = parsed.size
                out.append(LabelDistribution(parsed))
        return out
    finally:
        if owned:
            client.close()


def remote_conditional(
    ep: RemoteEndpoint,
    observed: PartialInstance,
    count: int,
    seed: int,
    pad: Token,
    client=None,
) -> List[Instance]:
    """Request ``count`` completions agreeing with the observed positions."""
    if count < 1:
        raise ValueError("count must be >= 1")
    owned = client is None
    client = client or _make_client(ep)
    try:
        payload = {
            "observed": {str(i): str(tok) for i, tok in observed.observed.items()},
            "n": observed.n,
            "count": count,
            "seed": int(seed),
        }
        reply = _request(ep, client, "POST", "/conditional", payload)
        completions = reply.get("completions")
        if not isinstance(completions, list) or len(completions) != count:
            raise ProtocolError(
                f"/conditional returned {0 if completions is None else len(completions)} "
                f"completions for count={count}: {json.dumps(reply)[:200]}"
            )
        out: List[Instance] = []
        for tokens in completions:
            if not isinstance(tokens, list) or len(tokens) != observed.n:
                raise ProtocolError(f"completion of wrong length: {tokens!r}")
            for i, tok in observed.observed.items():
                if str(tokens[i]) != str(tok):
                    raise ProtocolError(
                        f"completion violates observed position {i}: "
                        f"{tokens[i]!r} != {tok!r}"
                    )
            out.append(Instance(tuple(tokens), pad))
        return out
    finally:
        if owned:
            client.close()


class RemoteModel(Model):
    """ModelContract implementation backed by a remote /predict endpoint."""

    def __init__(self, ep: RemoteEndpoint, client=None):
        self.ep = ep
        self._client = client or _make_client(ep)
        meta = remote_meta(ep, self._client)
        self.label_count = int(meta["label_count"])
        self.pad_token = meta["pad_token"]

    def batch_predict(self, instances: Sequence[Instance]) -> np.ndarray:
        dists = remote_predict(self.ep, instances, self._client)
        if not dists:
            return np.zeros((0, self.label_count))
        rows = np.stack([d.probs for d in dists])
        if rows.shape[1] != self.label_count:
            raise ProtocolError(
                f"/predict width {rows.shape[1]} contradicts /meta label_count {self.label_count}"
            )
        return rows


class RemoteConditionalProvider(ConditionalProvider):
    """ConditionalProvider backed by a remote /conditional endpoint. Each draw
    sends a seed derived from the caller's rng, so replays are reproducible."""

    supports_exact_conditionals = False

    def __init__(self, ep: RemoteEndpoint, client=None):
        self.ep = ep
        self._client = client or _make_client(ep)
        self.pad_token = remote_meta(ep, self._client)["pad_token"]

    def sample_completion(self, observed: PartialInstance, rng: np.random.Generator) -> Instance:
        seed = int(rng.integers(0, 2**63 - 1))
        return remote_conditional(self.ep, observed, 1, seed, self.pad_token, self._client)[0]


@dataclass
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


def run_conformance(
    ep: RemoteEndpoint, client_factory: Optional[Callable[[], httpx.Client]] = None
) -> List[ConformanceCheck]:
    """Exercise a remote endpoint against the wire contract.

    Covers /meta shape, prediction determinism, order preservation across
    chunk boundaries, exact chunk request counts, conditional completions
    honoring observed positions, and seeded replay.
    """
    checks: List[ConformanceCheck] = []
    factory = client_factory or (lambda: _make_client(ep))

    def run(name: str, fn: Callable[[], str]) -> None:
        try:
            detail = fn()
            checks.append(ConformanceCheck(name, True, detail))
        except Exception as exc:  # noqa: BLE001 - every failure becomes a diff
            checks.append(ConformanceCheck(name, False, f"{type(exc).__name__}: {exc}"))

    client = CountingClient(factory())
    try:
        try:
            meta = remote_meta(ep, client)
        except Exception as exc:  # noqa: BLE001
            checks.append(
                ConformanceCheck("meta-reachable", False, f"{type(exc).__name__}: {exc}")
            )
            return checks
        pad = meta["pad_token"]
        label_count = int(meta["label_count"])
        instances = [
            Instance(("alpha", "beta", "gamma"), pad),
            Instance(("beta", "gamma", "alpha"), pad),
            Instance(("gamma", "alpha", "alpha"), pad),
            Instance((str(pad), "beta", "beta"), pad),
            Instance(("alpha", "alpha", "alpha"), pad),
        ]

        def check_meta() -> str:
            rows = remote_predict(ep, instances[:1], client)
            if rows[0].label_count != label_count:
                raise ProtocolError(
                    f"/predict width {rows[0].label_count} != /meta label_count {label_count}"
                )
            return f"label_count={label_count}"

        run("meta-consistency", check_meta)

        def check_determinism() -> str:
            a = remote_predict(ep, instances, client)
            b = remote_predict(ep, instances, client)
            for i, (ra, rb) in enumerate(zip(a, b)):
                if not np.array_equal(ra.probs, rb.probs):
                    raise ProtocolError(f"row {i} changed between identical requests")
            return "identical rows on replay"

        run("predict-determinism", check_determinism)

        def check_order() -> str:
            batched = remote_predict(ep, instances, client)
            singles = [remote_predict(ep, [inst], client)[0] for inst in instances]
            for i, (rb, rs) in enumerate(zip(batched, singles)):
                if not np.array_equal(rb.probs, rs.probs):
                    raise ProtocolError(f"batched row {i} differs from its single prediction")
            return f"{len(instances)} rows aligned"

        run("predict-order-preservation", check_order)

        def check_chunking() -> str:
            small = RemoteEndpoint(
                ep.base_url,
                timeout=ep.timeout,
                max_batch=2,
                retry_attempts=ep.retry_attempts,
                retry_backoff=ep.retry_backoff,
            )
            before = client.counts_by_path.get("/predict", 0)
            rows = remote_predict(small, instances, client)  # 5 = 2 * max_batch + 1
            issued = client.counts_by_path.get("/predict", 0) - before
            if issued != 3:
                raise ProtocolError(f"expected 3 chunked requests, issued {issued}")
            singles = [remote_predict(ep, [inst], client)[0] for inst in instances]
            for i, (rb, rs) in enumerate(zip(rows, singles)):
                if not np.array_equal(rb.probs, rs.probs):
                    raise ProtocolError(f"chunked row {i} misaligned")
            return "3 requests for 2*max_batch+1 instances, rows aligned"

        run("predict-chunking", check_chunking)

        def check_conditional_full() -> str:
            observed = PartialInstance({0: "alpha", 1: "beta", 2: "gamma"}, 3)
            comps = remote_conditional(ep, observed, 4, 17, pad, client)
            for comp in comps:
                if tuple(str(v) for v in comp.values) != ("alpha", "beta", "gamma"):
                    raise ProtocolError(f"fully observed request not echoed: {comp.values}")
            return "4 echoes"

        run("conditional-fully-observed", check_conditional_full)

        def check_conditional_partial() -> str:
            observed = PartialInstance({1: "beta"}, 4)
            comps = remote_conditional(ep, observed, 3, 99, pad, client)
            return f"3 completions of length {comps[0].n} honoring observed positions"

        run("conditional-honors-observed", check_conditional_partial)

        def check_conditional_replay() -> str:
            observed = PartialInstance({0: "alpha"}, 3)
            a = remote_conditional(ep, observed, 5, 1234, pad, client)
            b = remote_conditional(ep, observed, 5, 1234, pad, client)
            if [c.values for c in a] != [c.values for c in b]:
                raise ProtocolError("identical seeded requests produced different completions")
            return "seeded replay identical"

        run("conditional-seeded-replay", check_conditional_replay)
    finally:
        client.close()
    return checks
