"""Feature inference from component abstractions and end-to-end test emission."""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml

from .abstraction import AbstractNode, render_markup
from .abstractor import ancestor_chain, component_nodes
from .errors import ConfigError, ResponseFormatError, SelectorError
from .gateway import Gateway
from .prompts import feature_request
from .selectors import SelectorIndex
from .snapshot import VIRTUAL_ROOT_ID, PageSnapshot

DECORATIVE = frozenset({"Divider", "Skeleton", "Spinner"})
INTERACTIVE = frozenset(
    {
        "Accordion", "Button", "ButtonGroup", "Checkbox", "Chip", "Collapse", "DatePicker",
        "Dropdown", "Input", "Link", "Menu", "Pagination", "Radio", "Rating", "SearchBar",
        "Select", "Slider", "Switch", "Tab", "Textarea",
    }
)
ACTION_KINDS = ("click", "type", "select", "navigate", "assert_visible", "assert_text")
FEATURE_ACTIONS = ("click", "type", "select")


@dataclass(frozen=True)
class ActionStep:
    kind: str
    target: str
    value: str | None = None
    node_id: str | None = None

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind in ("type", "select", "assert_text") and self.value is None:
            raise ValueError(f"{self.kind} needs a value")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "target": self.target}
        if self.value is not None:
            out["value"] = self.value
        if self.node_id is not None:
            out["node"] = self.node_id
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ActionStep:
        return cls(d["kind"], d.get("target", ""), d.get("value"), d.get("node"))


@dataclass
class FeatureSpec:
    feature_id: str
    name: str
    source_component: str
    actions: list[ActionStep]
    assertion_hint: str = ""
    assert_node: str | None = None
    instances: int = 1  # items behind a List representative; reporting only

    def __post_init__(self):
        if not self.actions:
            raise ValueError("a feature needs at least one action")

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_id": self.feature_id,
            "name": self.name,
            "source_component": self.source_component,
            "actions": [a.to_dict() for a in self.actions],
            "assertion_hint": self.assertion_hint,
            "assert_node": self.assert_node,
            "instances": self.instances,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FeatureSpec:
        return cls(
            d["feature_id"],
            d["name"],
            d["source_component"],
            [ActionStep.from_dict(a) for a in d["actions"]],
            d.get("assertion_hint", ""),
            d.get("assert_node"),
            int(d.get("instances", 1)),
        )


@dataclass
class TestScript:
    __test__ = False  # keep pytest from collecting this class

    script_id: str
    feature_id: str
    steps: list[ActionStep]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.steps or self.steps[0].kind != "navigate":
            raise ValueError("a test script must start with a navigate step")

    def to_dict(self) -> dict[str, Any]:
        return {
            "script_id": self.script_id,
            "feature_id": self.feature_id,
            "steps": [s.to_dict() for s in self.steps],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TestScript:
        return cls(d["script_id"], d["feature_id"], [ActionStep.from_dict(s) for s in d["steps"]], d.get("metadata", {}))


# -- inference -----------------------------------------------------------------


def has_interactive(node: AbstractNode) -> bool:
    return any(n.template in INTERACTIVE for n in node.walk())


def _check_features(value: Any) -> list:
    if isinstance(value, dict):
        value = value.get("features")
    if not isinstance(value, list):
        raise ValueError('expected {"features": [...]}')
    return value


def _feature_from_raw(raw: Any, component: AbstractNode) -> FeatureSpec:
    if not isinstance(raw, dict):
        raise ValueError("feature must be an object")
    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ValueError("feature needs a name")
    actions = []
    for a in raw.get("actions") or []:
        if not isinstance(a, dict) or a.get("kind") not in FEATURE_ACTIONS or not a.get("node"):
            raise ValueError(f"bad action {a!r}")
        value = a.get("value")
        actions.append(ActionStep(a["kind"], "", None if value is None else str(value), str(a["node"])))
    hint = raw.get("assertion_hint") or ""
    assert_node = raw.get("assert_node")
    return FeatureSpec(
        "",
        name.strip(),
        component.segment or "",
        actions,
        hint if isinstance(hint, str) else str(hint),
        str(assert_node) if assert_node else None,
    )


def infer_features(
    component: AbstractNode,
    page_context: str,
    gateway: Gateway,
    ancestors: Sequence[AbstractNode] = (),
    list_node: AbstractNode | None = None,
    warnings: list[str] | None = None,
) -> list[FeatureSpec]:
    """Features for one component. Returns ``[]`` without a model call when nothing is interactive."""
    warnings = warnings if warnings is not None else []
    if component.template in DECORATIVE or not has_interactive(component):
        return []
    context = [{"title": a.name or a.template, "context": a.context or f"{a.template} segment"} for a in ancestors]
    request = feature_request(
        component.to_dict(),
        render_markup(component),
        page_context,
        context,
        list_node.segment if list_node is not None else None,
        gateway.model,
        gateway.temperature,
    )
    try:
        raw_features = gateway.complete_json(request, _check_features)
    except ResponseFormatError as exc:
        warnings.append(f"component {component.segment}: no usable feature list ({exc})")
        return []
    out = []
    for raw in raw_features:
        try:
            feature = _feature_from_raw(raw, component)
        except (ValueError, TypeError) as exc:
            warnings.append(f"component {component.segment}: dropped feature ({exc})")
            continue
        if list_node is not None and list_node.count is not None:
            feature.instances = list_node.count
        out.append(feature)
    return out


def infer_all_features(
    abstraction: AbstractNode,
    page_context: str,
    gateway: Gateway,
    workers: int = 1,
    warnings: list[str] | None = None,
) -> list[FeatureSpec]:
    """Features for every component of a page, numbered F001, F002, ... in document order."""
    warnings = warnings if warnings is not None else []
    jobs = component_nodes(abstraction)

    def run(job):
        comp, list_node = job
        local: list[str] = []
        feats = infer_features(comp, page_context, gateway, ancestor_chain(abstraction, comp), list_node, local)
        return feats, local

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    features = []
    for feats, local in results:
        warnings.extend(local)
        features.extend(feats)
    for i, f in enumerate(features, 1):
        f.feature_id = f"F{i:03d}"
    return features


# -- test emission ---------------------------------------------------------------


@dataclass
class DroppedScript:
    feature_id: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"feature_id": self.feature_id, "reason": self.reason}


def generate_tests(
    features: Iterable[FeatureSpec],
    snapshot: PageSnapshot,
    metadata: dict[str, Any] | None = None,
) -> tuple[list[TestScript], list[DroppedScript]]:
    """One script per feature: navigate, the feature's actions, then a visibility assertion."""
    index = SelectorIndex(snapshot)
    cache: dict[str, str] = {}

    def selector(node_id: str) -> str:
        if node_id == VIRTUAL_ROOT_ID:
            node_id = snapshot.root.id
        if node_id not in cache:
            cache[node_id] = index.build(node_id)
        return cache[node_id]

    scripts, dropped = [], []
    for f in features:
        try:
            steps = [ActionStep("navigate", snapshot.url)]
            for a in f.actions:
                steps.append(ActionStep(a.kind, a.target or selector(a.node_id or ""), a.value, a.node_id))
            anchor = f.assert_node or f.source_component
            steps.append(ActionStep("assert_visible", selector(anchor), None, anchor))
        except SelectorError as exc:
            dropped.append(DroppedScript(f.feature_id, str(exc)))
            continue
        meta = {"url": snapshot.url, "feature": f.name, "assertion_hint": f.assertion_hint}
        meta.update(metadata or {})
        scripts.append(TestScript(f"T{f.feature_id[1:]}" if f.feature_id.startswith("F") else f"T-{f.feature_id}",
                                  f.feature_id, steps, meta))
    return scripts, dropped


def _py(value: str) -> str:
    return json.dumps(value, ensure_ascii=False)


def render_webdriver_script(scripts: Sequence[TestScript]) -> str:
    """Selenium (Python) rendering of a suite; pytest-style functions taking a ``driver`` fixture."""
    lines = [
        "from selenium.webdriver.common.by import By",
        "from selenium.webdriver.support.ui import Select",
    ]
    for s in scripts:
        name = re.sub(r"\W+", "_", s.script_id).strip("_").lower()
        lines += ["", "", f"def test_{name}(driver):", f"    # {s.metadata.get('feature', s.feature_id)}"]
        for st in s.steps:
            find = f"driver.find_element(By.CSS_SELECTOR, {_py(st.target)})"
            if st.kind == "navigate":
                lines.append(f"    driver.get({_py(st.target)})")
            elif st.kind == "click":
                lines.append(f"    {find}.click()")
            elif st.kind == "type":
                lines += [f"    field = {find}", "    field.clear()", f"    field.send_keys({_py(st.value or '')})"]
            elif st.kind == "select":
                lines.append(f"    Select({find}).select_by_visible_text({_py(st.value or '')})")
            elif st.kind == "assert_visible":
                lines.append(f"    assert {find}.is_displayed()")
            else:
                lines.append(f"    assert {_py(st.value or '')} in {find}.text")
    return "\n".join(lines) + "\n"


# -- coverage ------------------------------------------------------------------

MATCH_THRESHOLD = 0.6
_NAME_STOPWORDS = frozenset("a an the to of in on for from and or by with into at".split())


def tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


@dataclass(frozen=True)
class TruthFeature:
    name: str
    keywords: tuple[str, ...] = ()

    def key_tokens(self) -> set[str]:
        if self.keywords:
            return set().union(*(tokens(k) for k in self.keywords))
        return tokens(self.name) - _NAME_STOPWORDS


@dataclass
class GroundTruth:
    features: list[TruthFeature]
    overrides: dict[str, list[str]] = field(default_factory=dict)
    app: str = ""

    @classmethod
    def load(cls, path: str | Path, overrides_path: str | Path | None = None) -> GroundTruth:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if isinstance(data, list):
            data = {"features": data}
        raw = data.get("features") or []
        if not raw:
            raise ConfigError(f"ground truth {path} lists no features")
        feats = []
        for item in raw:
            if isinstance(item, str):
                feats.append(TruthFeature(item))
            else:
                feats.append(TruthFeature(item["name"], tuple(item.get("keywords") or ())))
        overrides = dict(data.get("overrides") or {})
        if overrides_path is not None:
            overrides.update(yaml.safe_load(Path(overrides_path).read_text(encoding="utf-8")) or {})
        overrides = {k: ([v] if isinstance(v, str) else list(v or [])) for k, v in overrides.items()}
        return cls(feats, overrides, str(data.get("app", "")))


def feature_matches(inferred: str, truth: TruthFeature, threshold: float = MATCH_THRESHOLD) -> bool:
    key = truth.key_tokens()
    if not key:
        return False
    return len(tokens(inferred) & key) / len(key) >= threshold


@dataclass(frozen=True)
class CoverageReport:
    total: int
    correct: int
    truth_total: int
    covered: int

    @property
    def precision(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def recall(self) -> float:
        return self.covered / self.truth_total if self.truth_total else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def coverage(self) -> float:
        return self.recall

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "correct": self.correct,
            "truth_total": self.truth_total,
            "covered": self.covered,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "coverage": self.coverage,
        }


def match_features(
    inferred: Sequence[str], truth: GroundTruth, threshold: float = MATCH_THRESHOLD
) -> dict[str, list[str]]:
    """Inferred name -> matched ground-truth names (override entries win)."""
    out = {}
    for name in inferred:
        if name in truth.overrides:
            out[name] = list(truth.overrides[name])
        else:
            out[name] = [t.name for t in truth.features if feature_matches(name, t, threshold)]
    return out


def coverage_report(
    features: Sequence[FeatureSpec | str], truth: GroundTruth, threshold: float = MATCH_THRESHOLD
) -> CoverageReport:
    if not truth.features:
        raise ConfigError("ground truth is empty")
    names = [f if isinstance(f, str) else f.name for f in features]
    matched = match_features(names, truth, threshold)
    correct = sum(1 for n in names if matched[n])
    covered = {t for hits in matched.values() for t in hits}
    known = {t.name for t in truth.features}
    return CoverageReport(len(names), correct, len(truth.features), len(covered & known))


def aggregate_rows(rows: Iterable[tuple[int, int]]) -> float:
    """Pooled precision over per-application ``(total, correct)`` rows."""
    rows = list(rows)
    total = sum(t for t, _ in rows)
    if total == 0:
        raise ValueError("no inferred features in any row")
    return sum(c for _, c in rows) / total
