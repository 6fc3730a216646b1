"""Operator CLI. Each data-processing subcommand builds a declarative request,
sends it to the attribution service (an external URL via --service or the
ENTROSHAP_SERVICE environment variable, otherwise an in-process instance of
the same app), and writes the response artifacts to files.

Option precedence: built-in defaults < --config file (TOML) < explicit flags.
Progress goes to standard error; all data goes to files, never stdout.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import click
import httpx

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bridge import ENDPOINT_ENV_VAR, RemoteEndpoint, run_conformance
from .distributions import load_dataset_csv, load_dataset_jsonl
from .errors import ConfigError
from .worlds import BUILTIN_MODELS, builtin_dataset, builtin_pad

SERVICE_ENV_VAR = "ENTROSHAP_SERVICE"


class EngineClient:
    """Thin HTTP client for the attribution service; runs the app in-process
    when no service URL is configured."""

    def __init__(self, service_url: Optional[str]):
        if service_url:
            self._client = httpx.Client(base_url=service_url, timeout=3600.0)
        else:
            from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ConfigError(f"{path} failed ({response.status_code}): {detail}")
        return response.json()

    def close(self) -> None:
        self._client.close()


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise click.UsageError(f"config file not found: {path}")
    if p.suffix == ".json":
        with open(p, "r", encoding="utf-8") as fh:
            return json.load(fh)
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def _manifest_request(config: dict, task: str) -> Optional[dict]:
    if config.get("task") == task and "request" in config:
        return config["request"]
    return None


def _merge(config: dict, flags: dict) -> dict:
    merged = dict(config)
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    return merged


def _section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    return dict(value) if isinstance(value, dict) else {}


def _parse_model(merged: dict) -> dict:
    endpoint = merged.get("endpoint") or os.environ.get(ENDPOINT_ENV_VAR)
    model = merged.get("model")
    if model is None and endpoint:
        model = "remote:" + endpoint
    if model is None:
        raise click.UsageError("no model configured (use --model or --endpoint)")
    if model.startswith("lookup:"):
        return {"kind": "lookup", "path": model.split(":", 1)[1]}
    if model.startswith("remote:"):
        address = model.split(":", 1)[1] or endpoint
        if not address:
            raise click.UsageError(f"remote model needs an address (set {ENDPOINT_ENV_VAR})")
        return {"kind": "remote", "address": address}
    if model in BUILTIN_MODELS:
        return {"kind": "builtin", "name": model}
    raise click.UsageError(
        f"unknown model {model!r}; builtins: {sorted(BUILTIN_MODELS)}, "
        "or use lookup:<path> / remote:<url>"
    )


def _parse_provider(value: Optional[str]) -> dict:
    if value is None or value == "empirical":
        return {"kind": "empirical"}
    if value.startswith("csv:"):
        return {"kind": "joint-csv", "path": value.split(":", 1)[1]}
    if value.startswith("remote:"):
        return {"kind": "remote", "address": value.split(":", 1)[1]}
    raise click.UsageError(f"unknown provider {value!r} (empirical | csv:<path> | remote:<url>)")


def _parse_joint(value: Optional[str]) -> dict:
    if value is None or value == "empirical":
        return {"kind": "empirical"}
    if value.startswith("csv:"):
        return {"kind": "csv", "path": value.split(":", 1)[1]}
    raise click.UsageError(f"unknown joint {value!r} (empirical | csv:<path>)")


def _resolve_pad(merged: dict, model_spec: dict):
    pad = merged.get("pad")
    if pad is not None:
        return pad
    if model_spec["kind"] == "builtin":
        return builtin_pad(model_spec["name"])
    raise click.UsageError("no pad token configured (use --pad)")


def _load_instances(merged: dict, model_spec: dict, pad, key: str) -> Optional[List[list]]:
    path = merged.get(key)
    if path is None:
        if key == "dataset" and model_spec["kind"] == "builtin":
            try:
                data = builtin_dataset(model_spec["name"])
            except ConfigError:
                return None
            return [list(inst.values) for inst in data.instances]
        return None
    p = Path(path)
    if not p.exists():
        raise click.UsageError(f"{key} file not found: {path}")
    if p.suffix == ".csv":
        data = load_dataset_csv(p, pad)
    else:
        data = load_dataset_jsonl(p, pad)
    return [list(inst.values) for inst in data.instances]


def _sampling_payload(merged: dict) -> dict:
    section = _section(merged, "sampling")
    payload = {
        "m": int(merged.get("m", section.get("m", 1000))),
        "seed": int(merged.get("seed", section.get("seed", 0))),
        "reweighted": bool(merged.get("reweight", section.get("reweighted", False))),
        "include_baseline_expectation": bool(
            merged.get(
                "include_baseline_expectation",
                section.get("include_baseline_expectation", False),
            )
        ),
        "entropy_context": merged.get(
            "entropy_context", section.get("entropy_context", "singleton")
        ),
    }
    return payload


def _parse_int_list(value) -> List[int]:
    if isinstance(value, str):
        return [int(v) for v in value.split(",") if v.strip()]
    return [int(v) for v in value]


def _parse_float_list(value) -> List[float]:
    if isinstance(value, str):
        return [float(v) for v in value.split(",") if v.strip()]
    return [float(v) for v in value]


def _parse_methods(value, provider: dict) -> List[dict]:
    names = [v.strip() for v in value.split(",")] if isinstance(value, str) else list(value)
    methods = []
    for name in names:
        if not name:
            continue
        parts = name.split("+")
        base = parts[0]
        if base not in ("random", "conditional"):
            raise click.UsageError(f"method {name!r} must start with random|conditional")
        baseline: dict = {"kind": base}
        if base == "conditional":
            baseline["provider"] = provider
        methods.append(
            {
                "name": name,
                "baseline": baseline,
                "reweighted": "uw" in parts[1:],
                "exact": "exact" in parts[1:],
            }
        )
    return methods


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / name
    with open(target, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return target


def _write_json(out_dir: Path, name: str, payload) -> Path:
    return _write(out_dir, name, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _echo(message: str) -> None:
    click.echo(message, err=True)


def _out_dir(merged: dict) -> Path:
    out = merged.get("out")
    if out is None:
        raise click.UsageError("no output directory configured (use --out)")
    return Path(out)


_shared_options = [
    click.option("--config", "config_path", type=str, default=None, help="TOML config file or a manifest.json to replay; flags override the config."),
    click.option("--model", type=str, default=None, help="Builtin name, lookup:<path>, or remote:<url>."),
    click.option("--endpoint", type=str, default=None, help=f"Remote model endpoint (env {ENDPOINT_ENV_VAR})."),
    click.option("--dataset", type=str, default=None, help="Instances to explain (JSONL or CSV)."),
    click.option("--donors", type=str, default=None, help="Donor pool (defaults to the dataset)."),
    click.option("--baseline", type=click.Choice(["random", "conditional"]), default=None),
    click.option("--provider", type=str, default=None, help="Conditional provider: empirical | csv:<path> | remote:<url>."),
    click.option("--pad", type=str, default=None, help="Pad token for file-loaded instances."),
    click.option("--reweight/--no-reweight", "reweight", default=None, help="Uncertainty-based reweighting of the replacement term."),
    click.option("--m", type=int, default=None, help="Sampling iterations per instance."),
    click.option("--seed", type=int, default=None, help="Root seed."),
    click.option("--target-label", "target_label", type=int, default=None, help="Explain this label instead of the predicted class."),
    click.option("--workers", type=int, default=None, help="Instance-level parallelism; never changes results."),
    click.option("--out", type=str, default=None, help="Output directory."),
    click.option("--service", type=str, default=None, help=f"Attribution service URL (env {SERVICE_ENV_VAR}); default runs in-process."),
]


def shared_options(fn):
    for option in reversed(_shared_options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Shapley attribution service client."""


@main.command()
@shared_options
@click.option("--exact", is_flag=True, default=None, help="Exact enumeration over the joint instead of sampling.")
@click.option("--joint", type=str, default=None, help="Joint for exact mode: empirical | csv:<path>.")
@click.option("--ranking-rule", type=click.Choice(["signed", "absolute"]), default=None)
def attribute(config_path, **flags) -> None:
    """Per-instance attributions and rankings, written as JSONL."""
    config = _load_config(config_path)
    replay = _manifest_request(config, "attribute")
    merged = _merge(config, flags)
    out_dir = _out_dir(merged)
    if replay is not None:
        request = replay
        _echo("replaying manifest request")
    else:
        model_spec = _parse_model(merged)
        pad = _resolve_pad(merged, model_spec)
        instances = _load_instances(merged, model_spec, pad, "dataset")
        if instances is None:
            raise click.UsageError("no dataset configured (use --dataset)")
        donors = _load_instances(merged, model_spec, pad, "donors")
        baseline: dict = {"kind": merged.get("baseline", "random")}
        if baseline["kind"] == "conditional":
            baseline["provider"] = _parse_provider(merged.get("provider"))
        request = {
            "instances": instances,
            "pad": pad,
            "model": model_spec,
            "baseline": baseline,
            "sampling": _sampling_payload(merged),
            "exact": bool(merged.get("exact", False)),
            "joint": _parse_joint(merged.get("joint")),
            "target_label": merged.get("target_label"),
            "ranking_rule": merged.get("ranking_rule", "signed"),
            "workers": int(merged.get("workers", 1)),
        }
        if donors is not None:
            request["donors"] = donors
    client = EngineClient(merged.get("service") or os.environ.get(SERVICE_ENV_VAR))
    try:
        response = client.post("/attribute", request)
    finally:
        client.close()
    rows = [json.dumps(r, sort_keys=True) for r in response["results"]]
    _write(out_dir, "attributions.jsonl", "".join(line + "\n" for line in rows))
    _write_json(out_dir, "manifest.json", response["manifest"])
    _echo(f"wrote {len(rows)} attribution rows to {out_dir}")
    if response["failures"]:
        _write_json(out_dir, "failures.json", response["failures"])
        _echo(f"{len(response['failures'])} instances failed; see failures.json")
        sys.exit(1)


def _evaluate_request(merged: dict) -> dict:
    model_spec = _parse_model(merged)
    pad = _resolve_pad(merged, model_spec)
    instances = _load_instances(merged, model_spec, pad, "dataset")
    if instances is None:
        raise click.UsageError("no dataset configured (use --dataset)")
    donors = _load_instances(merged, model_spec, pad, "donors")
    eval_section = _section(merged, "eval")
    provider = _parse_provider(merged.get("provider"))
    methods_value = merged.get("methods", eval_section.get("methods"))
    precomputed = []
    attr_path = merged.get("attributions")
    if attr_path is not None:
        phi: List[List[float]] = []
        with open(attr_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    phi.append(json.loads(line)["phi"])
        precomputed.append({"name": merged.get("attributions_name", "precomputed"), "phi": phi})
    if methods_value is None and not precomputed:
        raise click.UsageError("no methods configured (use --methods or --attributions)")
    request = {
        "instances": instances,
        "pad": pad,
        "model": model_spec,
        "methods": _parse_methods(methods_value, provider) if methods_value else [],
        "precomputed": precomputed,
        "sampling": _sampling_payload(merged),
        "joint": _parse_joint(merged.get("joint")),
        "seeds": _parse_int_list(merged.get("seeds", eval_section.get("seeds", [0]))),
        "k_grid": _parse_float_list(
            merged.get("k_grid", eval_section.get("k_grid", [10, 20, 30, 40, 50]))
        ),
        "perturb_mode": merged.get("mode", eval_section.get("mode", "pad")),
        "ranking_rule": merged.get("ranking_rule", "signed"),
        "target_label": merged.get("target_label"),
        "workers": int(merged.get("workers", 1)),
    }
    if donors is not None:
        request["donors"] = donors
    return request


def _run_evaluate(merged: dict, out_dir: Path, replay: Optional[dict]) -> dict:
    request = replay if replay is not None else _evaluate_request(merged)
    client = EngineClient(merged.get("service") or os.environ.get(SERVICE_ENV_VAR))
    try:
        response = client.post("/evaluate", request)
    finally:
        client.close()
    _write_json(out_dir, "report.json", response["report"])
    _write(out_dir, "report.csv", response["csv"])
    _write(out_dir, "report_long.csv", response["long_csv"])
    _write_json(out_dir, "manifest.json", response["manifest"])
    return response


@main.command()
@shared_options
@click.option("--methods", type=str, default=None, help="Comma list, e.g. random,random+uw,conditional+uw,random+exact.")
@click.option("--attributions", type=str, default=None, help="Precomputed attributions JSONL to evaluate.")
@click.option("--seeds", type=str, default=None, help="Comma list of seeds.")
@click.option("--k-grid", "k_grid", type=str, default=None, help="Comma list of k percentages.")
@click.option("--mode", type=click.Choice(["pad", "delete"]), default=None)
@click.option("--joint", type=str, default=None)
@click.option("--ranking-rule", type=click.Choice(["signed", "absolute"]), default=None)
def evaluate(config_path, **flags) -> None:
    """Faithfulness metrics (log-odds, sufficiency, comprehensiveness)."""
    config = _load_config(config_path)
    merged = _merge(config, flags)
    out_dir = _out_dir(merged)
    _run_evaluate(merged, out_dir, _manifest_request(config, "evaluate"))
    _echo(f"wrote evaluation report to {out_dir}")


@main.command()
@shared_options
@click.option("--methods", type=str, default=None)
@click.option("--seeds", type=str, default=None, help="Comma list of seeds (required).")
@click.option("--k-grid", "k_grid", type=str, default=None)
@click.option("--mode", type=click.Choice(["pad", "delete"]), default=None)
@click.option("--joint", type=str, default=None)
@click.option("--ranking-rule", type=click.Choice(["signed", "absolute"]), default=None)
def compare(config_path, **flags) -> None:
    """Multi-seed robustness report: per-method mean and spread."""
    config = _load_config(config_path)
    merged = _merge(config, flags)
    eval_section = _section(merged, "eval")
    if merged.get("seeds", eval_section.get("seeds")) is None:
        raise click.UsageError("compare needs --seeds")
    out_dir = _out_dir(merged)
    response = _run_evaluate(merged, out_dir, _manifest_request(config, "evaluate"))
    lines = ["method,k,metric,mean_std"]
    for row in response["report"]["rows"]:
        std = row["std"]
        formatted = f"{row['mean']:.4f}" if std is None else f"{row['mean']:.4f}±{std:.4f}"
        lines.append(f"{row['method']},{row['k']},{row['metric']},{formatted}")
    _write(out_dir, "summary.csv", "\n".join(lines) + "\n")
    _echo(f"wrote robustness summary to {out_dir}")


@main.command()
@shared_options
@click.option("--order-cap", "order_cap", type=int, default=None, help="Max subset size for interaction edges.")
@click.option("--joint", type=str, default=None, help="World joint: empirical | csv:<path>.")
@click.option("--instance-index", "instance_index", type=int, default=None, help="Which dataset row to analyze (default 0).")
def interact(config_path, **flags) -> None:
    """Directed interaction graph and per-feature influence for one instance."""
    config = _load_config(config_path)
    replay = _manifest_request(config, "interact")
    merged = _merge(config, flags)
    out_dir = _out_dir(merged)
    if replay is not None:
        request = replay
    else:
        model_spec = _parse_model(merged)
        pad = _resolve_pad(merged, model_spec)
        instances = _load_instances(merged, model_spec, pad, "dataset")
        if instances is None:
            raise click.UsageError("no dataset configured (use --dataset)")
        donors = _load_instances(merged, model_spec, pad, "donors")
        section = _section(merged, "interact")
        idx = int(merged.get("instance_index", section.get("instance_index", 0)))
        if not 0 <= idx < len(instances):
            raise click.UsageError(f"instance index {idx} outside the dataset (N={len(instances)})")
        request = {
            "instance": instances[idx],
            "pad": pad,
            "model": model_spec,
            "joint": _parse_joint(merged.get("joint", section.get("joint"))),
            "donors": donors if donors is not None else instances,
            "target_label": merged.get("target_label"),
            "order_cap": int(merged.get("order_cap", section.get("order_cap", 1))),
        }
    client = EngineClient(merged.get("service") or os.environ.get(SERVICE_ENV_VAR))
    try:
        response = client.post("/interact", request)
    finally:
        client.close()
    _write(out_dir, "graph.dot", response["dot"])
    _write_json(
        out_dir,
        "graph.json",
        {
            "nodes": response["nodes"],
            "order_cap": response["order_cap"],
            "edges": response["edges"],
            "influence": response["influence"],
        },
    )
    tokens = request["instance"]
    lines = ["feature,token,influence"]
    for i, value in enumerate(response["influence"]):
        lines.append(f"{i},{tokens[i]},{value!r}")
    _write(out_dir, "influence.csv", "\n".join(lines) + "\n")
    _write_json(out_dir, "manifest.json", response["manifest"])
    _echo(f"wrote interaction graph ({len(response['edges'])} edges) to {out_dir}")


@main.command()
@click.option("--endpoint", type=str, default=None, help=f"Endpoint to test (env {ENDPOINT_ENV_VAR}).")
@click.option("--out", type=str, default=None, help="Optional directory for conformance.json.")
def conformance(endpoint: Optional[str], out: Optional[str]) -> None:
    """Run the wire-protocol conformance suite against a model endpoint."""
    address = endpoint or os.environ.get(ENDPOINT_ENV_VAR)
    if not address:
        raise click.UsageError(f"no endpoint given (use --endpoint or {ENDPOINT_ENV_VAR})")
    checks = run_conformance(RemoteEndpoint(address))
    failed = [c for c in checks if not c.passed]
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        _echo(f"[{status}] {check.name}: {check.detail}")
    if out is not None:
        _write_json(
            Path(out),
            "conformance.json",
            [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
        )
    _echo(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        sys.exit(1)


@main.command()
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--port", type=int, default=8100)
def serve(host: str, port: int) -> None:
    """Run the attribution service."""
    import uvicorn

    uvicorn.run("entroshap.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
