"""Stage functions, configuration and the end-to-end run."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import platform
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .abstraction import AbstractNode, TemplateVocabulary, render_markup
from .abstractor import Abstractor
from .classify import (
    DEPTH_CAP,
    ClassificationResult,
    build_candidate_hierarchy,
    classify_tree,
    describe_page,
    segments_from_records,
)
from .errors import BundleInvalid, ConfigError, InputError, StageError, ViscaError
from .gateway import Gateway, HTTPProvider, ResponseCache
from .mock import MockProvider
from .prune import PIXEL_TOLERANCE, UNIFORMITY, PruneReport, apply_prune, prune_redundant
from .segmenter import Segmentation, segment
from .snapshot import PageSnapshot, TreeNode, build_visible_hierarchy, load_snapshot
from .testgen import FeatureSpec, generate_tests, infer_all_features, render_webdriver_script

log = logging.getLogger(__name__)

STAGES = ("prune", "segment", "classify", "abstract", "testgen")
ARTIFACTS = {
    "prune": ("prune-report.json",),
    "segment": ("segments.json",),
    "classify": ("classified.json",),
    "abstract": ("abstraction.json", "abstraction.jsx"),
    "testgen": ("suite.json", "suite.txt"),
}


@dataclass
class PipelineConfig:
    provider: str = "mock"
    endpoint: str | None = None
    model: str = "mock"
    api_key: str | None = field(default=None, repr=False)
    temperature: float = 0.0
    cache_dir: str | None = None
    pixel_tolerance: int = PIXEL_TOLERANCE
    uniformity: float = UNIFORMITY
    depth_cap: int = DEPTH_CAP
    workers: int = 4
    max_in_flight: int = 4
    max_retries: int = 2
    backoff: float = 0.5
    timeout: float = 60.0
    vocabulary: str | None = None
    webdriver_script: bool = True

    def validate(self) -> PipelineConfig:
        checks = [
            (self.provider in ("mock", "http"), "provider must be 'mock' or 'http'"),
            (self.provider != "http" or bool(self.endpoint), "the http provider needs an endpoint"),
            (self.temperature >= 0, "temperature must be >= 0"),
            (0 <= self.pixel_tolerance <= 255, "pixel_tolerance must be within 0..255"),
            (0 < self.uniformity <= 1, "uniformity must be within (0, 1]"),
            (self.depth_cap >= 1, "depth_cap must be >= 1"),
            (self.workers >= 1 and self.max_in_flight >= 1, "concurrency bounds must be >= 1"),
            (self.max_retries >= 0 and self.backoff >= 0, "retry settings must be >= 0"),
            (self.timeout > 0, "timeout must be > 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def public_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out.pop("api_key")
        return out

    def digest(self) -> str:
        text = json.dumps(self.public_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> PipelineConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate_env(value: Any, env: dict[str, str] | None = None) -> Any:
    env = os.environ if env is None else env
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            if m.group(1) not in env:
                raise ConfigError(f"environment variable {m.group(1)} is not set")
            return env[m.group(1)]

        return _ENV_REF.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate_env(v, env) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate_env(v, env) for v in value]
    return value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = interpolate_env(data)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig.from_mapping(data)


def make_gateway(config: PipelineConfig, provider=None) -> Gateway:
    if provider is None:
        if config.provider == "mock":
            provider = MockProvider()
        else:
            provider = HTTPProvider(config.endpoint or "", config.api_key, config.timeout)
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    return Gateway(
        provider,
        cache,
        model=config.model,
        temperature=config.temperature,
        max_retries=config.max_retries,
        backoff=config.backoff,
        max_in_flight=config.max_in_flight,
    )


# -- artifact io -------------------------------------------------------------


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def read_json(path: str | Path, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputError(f"{what} not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise BundleInvalid(f"{what} is not valid JSON: {exc}", str(path)) from exc


def _visible_tree(snapshot: PageSnapshot) -> TreeNode:
    tree = build_visible_hierarchy(snapshot)
    if tree is None:
        raise BundleInvalid("the snapshot has no visible nodes", "nodes")
    return tree


def pruned_tree(snapshot: PageSnapshot, pruned_ids) -> TreeNode:
    return apply_prune(_visible_tree(snapshot), pruned_ids)


# -- stages --------------------------------------------------------------------


def stage_prune(snapshot: PageSnapshot, config: PipelineConfig) -> tuple[TreeNode, dict]:
    tree, report = prune_redundant(_visible_tree(snapshot), snapshot, config.pixel_tolerance, config.uniformity)
    return tree, report.to_dict()


def stage_segment(tree: TreeNode, prune_report: dict) -> tuple[Segmentation, dict]:
    seg = segment(tree)
    data = {
        "pruned_node_ids": list(prune_report["pruned_node_ids"]),
        "candidates": seg.candidate_ids,
        "total_potential": seg.total_potential(),
        "nodes": seg.to_records(tree),
    }
    return seg, data


def stage_classify(
    snapshot: PageSnapshot, segments: dict, gateway: Gateway, config: PipelineConfig
) -> tuple[ClassificationResult, dict]:
    tree = pruned_tree(snapshot, segments["pruned_node_ids"])
    seg = Segmentation.from_records(segments["nodes"], tree)
    hierarchy = build_candidate_hierarchy(tree, seg)
    page_context = describe_page(snapshot, gateway)
    result = classify_tree(
        hierarchy, gateway, page_context, snapshot, depth_cap=config.depth_cap, workers=config.workers
    )
    candidates = set(seg.candidate_ids)
    data = {"pruned_node_ids": list(segments["pruned_node_ids"]), **result.to_dict()}
    for rec in data["segments"]:
        rec["candidate"] = rec["id"] in candidates
    return result, data


def stage_abstract(
    snapshot: PageSnapshot, classified: dict, gateway: Gateway, config: PipelineConfig
) -> tuple[AbstractNode, list[str]]:
    tree = pruned_tree(snapshot, classified["pruned_node_ids"])
    root = segments_from_records(classified["segments"], tree)
    vocab = TemplateVocabulary.load(config.vocabulary)
    result = Abstractor(gateway, snapshot, vocab, config.workers).transform_page(root)
    page = result.root
    if page.role == "page":
        page.context = classified.get("page_context")
    return page, result.warnings


def stage_testgen(
    snapshot: PageSnapshot, abstraction: AbstractNode, gateway: Gateway, config: PipelineConfig
) -> tuple[dict, str]:
    warnings: list[str] = []
    page_context = abstraction.context or snapshot.title
    features = infer_all_features(abstraction, page_context, gateway, config.workers, warnings)
    scripts, dropped = generate_tests(features, snapshot, {"provider": gateway.provider.name, "model": gateway.model})
    suite = suite_dict(snapshot.url, features, scripts, dropped, warnings)
    return suite, render_webdriver_script(scripts)


def suite_dict(url, features: list[FeatureSpec], scripts, dropped, warnings) -> dict:
    return {
        "url": url,
        "features": [f.to_dict() for f in features],
        "scripts": [s.to_dict() for s in scripts],
        "dropped": [d.to_dict() for d in dropped],
        "warnings": list(warnings),
        "summary": {
            "features": len(features),
            "scripts": len(scripts),
            "dropped": len(dropped),
            "feature_instances": sum(f.instances for f in features),
        },
    }


# -- run -------------------------------------------------------------------------


@dataclass
class RunResult:
    out_dir: Path
    artifacts: dict[str, Path]
    manifest: dict[str, Any]


def _versions() -> dict[str, str]:
    import PIL

    return {"visca": __version__, "python": platform.python_version(), "numpy": np.__version__, "pillow": PIL.__version__}


def run_pipeline(
    bundle: str | Path,
    config: PipelineConfig,
    out_dir: str | Path,
    from_stage: str = "prune",
    provider=None,
    clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
) -> RunResult:
    """Run the stages from ``from_stage`` on; earlier artifacts are read from ``out_dir``.

    New artifacts are written as ``<name>.partial`` and renamed only when every
    stage succeeded; a failing stage raises StageError and leaves the partials.
    """
    if from_stage not in STAGES:
        raise ConfigError(f"unknown stage {from_stage!r}; expected one of {', '.join(STAGES)}")
    config.validate()
    out = Path(out_dir)
    snapshot = load_snapshot(bundle)
    out.mkdir(parents=True, exist_ok=True)
    gateway = make_gateway(config, provider)
    started = clock()
    timings: dict[str, float] = {}
    warnings: list[str] = []
    written: dict[str, Path] = {}
    start_at = STAGES.index(from_stage)

    def write(name: str, text: str) -> None:
        part = out / f"{name}.partial"
        part.write_text(text, encoding="utf-8")
        written[name] = part

    def earlier(name: str) -> Any:
        return read_json(out / name, f"artifact {name} (needed by --from {from_stage})")

    def run_stage(name: str, fn: Callable[[], Any]) -> Any:
        t0 = time.perf_counter()
        try:
            value = fn()
        except ViscaError as exc:
            raise StageError(name, exc) from exc
        except Exception as exc:  # unexpected failures still name the stage
            raise StageError(name, exc) from exc
        timings[name] = round(time.perf_counter() - t0, 6)
        return value

    active = STAGES[start_at:]
    prune_report = segments = classified = None
    abstraction: AbstractNode | None = None
    tree = None

    if "prune" in active:
        tree, prune_report = run_stage("prune", lambda: stage_prune(snapshot, config))
        write("prune-report.json", dump_json(prune_report))
    else:
        prune_report = earlier("prune-report.json")

    if "segment" in active:
        if tree is None:
            tree = pruned_tree(snapshot, PruneReport.from_dict(prune_report).pruned_node_ids)
        _, segments = run_stage("segment", lambda: stage_segment(tree, prune_report))
        write("segments.json", dump_json(segments))

    if "classify" in active:
        if segments is None:
            segments = earlier("segments.json")
        result, classified = run_stage("classify", lambda: stage_classify(snapshot, segments, gateway, config))
        warnings += [f"classify {e['id']}: {e['error']}" for e in result.errors]
        write("classified.json", dump_json(classified))

    if "abstract" in active:
        if classified is None:
            classified = earlier("classified.json")
        abstraction, abs_warnings = run_stage(
            "abstract", lambda: stage_abstract(snapshot, classified, gateway, config)
        )
        warnings += abs_warnings
        write("abstraction.json", dump_json(abstraction.to_dict()))
        write("abstraction.jsx", render_markup(abstraction))

    if abstraction is None:
        abstraction = AbstractNode.from_dict(earlier("abstraction.json"))
    suite, script_text = run_stage("testgen", lambda: stage_testgen(snapshot, abstraction, gateway, config))
    warnings += suite["warnings"]
    write("suite.json", dump_json(suite))
    if config.webdriver_script:
        write("suite.txt", script_text)

    finished = clock()
    manifest = {
        "bundle": str(Path(bundle)),
        "url": snapshot.url,
        "from_stage": from_stage,
        "versions": _versions(),
        "config": config.public_dict(),
        "config_hash": config.digest(),
        "provider": {"name": gateway.provider.name, "model": gateway.model, **gateway.stats.to_dict()},
        "timings": timings,
        "warnings": warnings,
        "started_at": started.isoformat(),
        "finished_at": finished.isoformat(),
    }
    write("run-manifest.json", dump_json(manifest))
    final = {}
    for name, part in written.items():
        target = out / name
        os.replace(part, target)
        final[name] = target
    return RunResult(out, final, manifest)
