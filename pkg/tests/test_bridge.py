import hashlib
import json

import httpx
import numpy as np
import pytest

from entroshap.bridge import (
    RemoteConditionalProvider,
    RemoteEndpoint,
    RemoteModel,
    remote_conditional,
    remote_meta,
    remote_predict,
    run_conformance,
)
from entroshap.core import Instance, PartialInstance
from entroshap.errors import BridgeError, ProtocolError

PAD = "<pad>"


def stub_probs(tokens, label_count=2):
    """Deterministic distribution from the token hash, like a stub server."""
    digest = hashlib.sha256("\x1f".join(tokens).encode("utf-8")).digest()
    raw = [1 + digest[i] for i in range(label_count)]
    total = sum(raw)
    return [v / total for v in raw]


def make_stub_handler(state=None):
    state = state if state is not None else {}
    state.setdefault("predict_calls", 0)

    def handler(request: httpx.Request) -> httpx.Response:
        path = request.url.path
        if path == "/meta":
            return httpx.Response(200, json={"label_count": 2, "pad_token": PAD})
        if path == "/predict":
            state["predict_calls"] += 1
            payload = json.loads(request.content)
            rows = [stub_probs(tokens) for tokens in payload["instances"]]
            return httpx.Response(200, json={"probs": rows})
        if path == "/conditional":
            payload = json.loads(request.content)
            observed = {int(k): v for k, v in payload["observed"].items()}
            n, count, seed = payload["n"], payload["count"], payload["seed"]
            completions = []
            for c in range(count):
                rng = np.random.default_rng(seed + c)
                row = []
                for i in range(n):
                    if i in observed:
                        row.append(observed[i])
                    else:
                        row.append(f"w{int(rng.integers(0, 5))}")
                completions.append(row)
            return httpx.Response(200, json={"completions": completions})
        return httpx.Response(404, json={"error": {"message": "no such route"}})

    return handler


def stub_client(state=None):
    return httpx.Client(
        transport=httpx.MockTransport(make_stub_handler(state)), base_url="http://stub"
    )


EP = RemoteEndpoint("http://stub", max_batch=2, retry_backoff=0.0)


def inst(*values):
    return Instance(tuple(values), PAD)


class TestRemotePredict:
    def test_rows_match_server_function(self):
        batch = [inst("a", "b"), inst("b", "a")]
        out = remote_predict(EP, batch, stub_client())
        for x, dist in zip(batch, out):
            assert np.allclose(dist.probs, stub_probs([str(t) for t in x.values]))

    def test_empty_batch_issues_no_requests(self):
        state = {}
        out = remote_predict(EP, [], stub_client(state))
        assert out == []
        assert state["predict_calls"] == 0

    def test_chunking_issues_three_requests_for_five(self):
        state = {}
        batch = [inst(f"t{i}") for i in range(5)]  # 2 * max_batch + 1
        out = remote_predict(EP, batch, stub_client(state))
        assert state["predict_calls"] == 3
        assert len(out) == 5

    def test_order_preserved_across_chunks(self):
        batch = [inst(f"t{i}") for i in range(7)]
        client = stub_client()
        chunked = remote_predict(EP, batch, client)
        singles = [remote_predict(EP, [x], client)[0] for x in batch]
        for a, b in zip(chunked, singles):
            assert np.array_equal(a.probs, b.probs)

    def test_retry_after_transport_error_is_idempotent(self):
        attempts = {"n": 0}
        inner = make_stub_handler()

        def flaky(request: httpx.Request) -> httpx.Response:
            attempts["n"] += 1
            if attempts["n"] == 1:
                raise httpx.ConnectError("boom", request=request)
            return inner(request)

        client = httpx.Client(transport=httpx.MockTransport(flaky), base_url="http://stub")
        out = remote_predict(EP, [inst("a", "b")], client)
        assert np.allclose(out[0].probs, stub_probs(["a", "b"]))
        assert attempts["n"] == 2

    def test_transport_failure_after_retries_raises_bridge_error(self):
        def dead(request: httpx.Request) -> httpx.Response:
            raise httpx.ConnectError("down", request=request)

        client = httpx.Client(transport=httpx.MockTransport(dead), base_url="http://stub")
        with pytest.raises(BridgeError):
            remote_predict(EP, [inst("a")], client)

    def test_small_sum_drift_renormalized_with_warning(self, caplog):
        def handler(request: httpx.Request) -> httpx.Response:
            if request.url.path == "/predict":
                return httpx.Response(200, json={"probs": [[0.6, 0.4 + 5e-5]]})
            return make_stub_handler()(request)

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with caplog.at_level("WARNING", logger="entroshap.bridge"):
            out = remote_predict(EP, [inst("a")], client)
        assert abs(out[0].probs.sum() - 1.0) < 1e-12
        assert any("renormalizing" in r.message for r in caplog.records)

    def test_large_sum_drift_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"probs": [[0.6, 0.6]]})

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError):
            remote_predict(EP, [inst("a")], client)

    def test_negative_probability_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"probs": [[1.1, -0.1]]})

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError):
            remote_predict(EP, [inst("a")], client)

    def test_row_count_mismatch_rejected_with_payload_excerpt(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"probs": [[0.5, 0.5]]})

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError, match="probs"):
            remote_predict(EP, [inst("a"), inst("b")], client)

    def test_non_json_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, content=b"not json")

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError):
            remote_predict(EP, [inst("a")], client)

    def test_http_error_status_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(500, json={"error": {"message": "kaput"}})

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError, match="500"):
            remote_predict(EP, [inst("a")], client)


class TestRemoteConditional:
    def test_fully_observed_echo(self):
        observed = PartialInstance({0: "a", 1: "b"}, 2)
        out = remote_conditional(EP, observed, 3, 7, PAD, stub_client())
        assert all(c.values == ("a", "b") for c in out)

    def test_completions_honor_observed_positions(self):
        observed = PartialInstance({1: "keep"}, 4)
        out = remote_conditional(EP, observed, 5, 3, PAD, stub_client())
        for c in out:
            assert c.values[1] == "keep"
            assert c.n == 4

    def test_seeded_replay_is_identical(self):
        observed = PartialInstance({0: "a"}, 3)
        a = remote_conditional(EP, observed, 4, 99, PAD, stub_client())
        b = remote_conditional(EP, observed, 4, 99, PAD, stub_client())
        assert [c.values for c in a] == [c.values for c in b]

    def test_violation_of_observed_positions_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"completions": [["x", "y"]]})

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError, match="observed position"):
            remote_conditional(EP, PartialInstance({0: "a"}, 2), 1, 0, PAD, client)


class TestRemoteWrappers:
    def test_remote_model_contract(self):
        model = RemoteModel(EP, stub_client())
        assert model.label_count == 2
        batch = [inst("a", "b"), inst("c", "d")]
        rows = model.batch_predict(batch)
        assert rows.shape == (2, 2)
        singles = np.stack([model.predict(x) for x in batch])
        assert np.array_equal(rows, singles)

    def test_remote_provider_agrees_with_observed(self):
        provider = RemoteConditionalProvider(EP, stub_client())
        rng = np.random.default_rng(0)
        observed = PartialInstance({0: "a", 2: "c"}, 4)
        out = provider.sample_completion(observed, rng)
        assert out.values[0] == "a" and out.values[2] == "c"
        assert out.pad == PAD

    def test_meta_missing_fields_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"label_count": 2})

        client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://stub")
        with pytest.raises(ProtocolError):
            remote_meta(EP, client)


class TestConformance:
    def test_compliant_stub_passes_all_checks(self):
        checks = run_conformance(EP, client_factory=stub_client)
        assert all(c.passed for c in checks), [
            (c.name, c.detail) for c in checks if not c.passed
        ]
        names = {c.name for c in checks}
        assert {
            "meta-consistency",
            "predict-determinism",
            "predict-order-preservation",
            "predict-chunking",
            "conditional-fully-observed",
            "conditional-honors-observed",
            "conditional-seeded-replay",
        } <= names

    def test_non_deterministic_server_fails_determinism_check(self):
        counter = {"n": 0}

        def handler(request: httpx.Request) -> httpx.Response:
            if request.url.path == "/predict":
                counter["n"] += 1
                p = 0.4 + 0.01 * counter["n"]
                payload = json.loads(request.content)
                return httpx.Response(
                    200, json={"probs": [[p, 1 - p] for _ in payload["instances"]]}
                )
            return make_stub_handler()(request)

        checks = run_conformance(
            EP,
            client_factory=lambda: httpx.Client(
                transport=httpx.MockTransport(handler), base_url="http://stub"
            ),
        )
        by_name = {c.name: c for c in checks}
        assert not by_name["predict-determinism"].passed
