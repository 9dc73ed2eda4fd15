"""Segmentation scoring with B-Cubed and classification statistics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import BundleInvalid, ElementMismatch, InvalidSegmentation
from .snapshot import PageSnapshot, TreeNode


@dataclass(frozen=True)
class Clustering:
    clusters: Mapping[str, str]  # element -> cluster id

    @property
    def elements(self) -> frozenset[str]:
        return frozenset(self.clusters)

    def groups(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for el, c in self.clusters.items():
            out.setdefault(c, set()).add(el)
        return out

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[str]]) -> Clustering:
        mapping: dict[str, str] = {}
        for i, g in enumerate(groups):
            for el in g:
                if el in mapping:
                    raise ValueError(f"element {el!r} is in two clusters")
                mapping[el] = f"c{i}"
        return cls(mapping)


@dataclass(frozen=True)
class B3Scores:
    precision: float
    recall: float

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def to_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def segments_to_clustering(segment_ids: Sequence[str], tree: TreeNode) -> Clustering:
    """Visible leaves of ``tree`` grouped by their nearest segment ancestor (or themselves)."""
    marked = set(segment_ids)
    nodes = {n.id: n for n in tree.preorder()}
    unknown = marked - set(nodes)
    if unknown:
        raise InvalidSegmentation(f"segments not in the tree: {sorted(unknown)}")
    for sid in marked:
        cur = nodes[sid].parent
        while cur is not None:
            if cur.id in marked:
                raise InvalidSegmentation(f"segment {sid!r} lies inside segment {cur.id!r}")
            cur = cur.parent
    mapping = {}
    for leaf in tree.leaves():
        cur: TreeNode | None = leaf
        while cur is not None and cur.id not in marked:
            cur = cur.parent
        mapping[leaf.id] = cur.id if cur is not None else f"leaf:{leaf.id}"
    return Clustering(mapping)


def b3_scores(hypothesis: Clustering, truth: Clustering) -> B3Scores:
    if hypothesis.elements != truth.elements:
        missing = sorted(truth.elements - hypothesis.elements)[:5]
        extra = sorted(hypothesis.elements - truth.elements)[:5]
        raise ElementMismatch(f"element sets differ (missing {missing}, extra {extra})")
    if not truth.elements:
        raise ElementMismatch("no elements to score")
    hyp, ref = hypothesis.groups(), truth.groups()
    p_sum = r_sum = 0.0
    for el in truth.elements:
        h = hyp[hypothesis.clusters[el]]
        t = ref[truth.clusters[el]]
        shared = len(h & t)
        p_sum += shared / len(h)
        r_sum += shared / len(t)
    n = len(truth.elements)
    return B3Scores(p_sum / n, r_sum / n)


# -- ground truth ----------------------------------------------------------------

_XPATH_STEP = re.compile(r"^([a-z][\w-]*)(?:\[(\d+)\])?$")


def resolve_xpath(snapshot: PageSnapshot, xpath: str) -> str:
    """Resolve a simple absolute XPath like ``/html/body/div[2]/ul/li[3]``."""
    if not xpath.startswith("/"):
        raise BundleInvalid(f"not an absolute XPath: {xpath!r}", "truth")
    cur = None
    for step in xpath.strip("/").split("/"):
        m = _XPATH_STEP.match(step.lower())
        if not m:
            raise BundleInvalid(f"unsupported XPath step {step!r}", "truth")
        tag, pos = m.group(1), int(m.group(2) or 1)
        pool = [snapshot.root] if cur is None else snapshot.children(cur.id)
        same = [r for r in pool if r.tag == tag]
        if len(same) < pos:
            raise BundleInvalid(f"XPath {xpath!r} does not resolve", "truth")
        cur = same[pos - 1]
    assert cur is not None
    return cur.id


def load_truth(path: str | Path, snapshot: PageSnapshot | None = None) -> Clustering:
    """Truth file: ``{element id or XPath: cluster id | [coarse, ..., finest]}``.

    Hierarchical labels are flattened to their finest level. Keys may name
    inner nodes; every leaf below inherits the label unless it has its own.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "clusters" in data:
        data = data["clusters"]
    if not isinstance(data, dict):
        raise BundleInvalid("truth file must map elements to clusters", "truth")
    labels: dict[str, str] = {}
    for key, value in data.items():
        node_id = resolve_xpath(snapshot, key) if key.startswith("/") and snapshot is not None else key
        if isinstance(value, list):
            if not value:
                raise BundleInvalid(f"empty label list for {key!r}", f"truth.{key}")
            value = value[-1]
        labels[node_id] = str(value)
    return Clustering(labels)


def truth_for_leaves(truth: Clustering, tree: TreeNode) -> Clustering:
    """Project a truth labelling onto the tree's leaves (nearest labelled ancestor wins)."""
    if set(truth.clusters) == {leaf.id for leaf in tree.leaves()}:
        return truth
    mapping = {}
    for leaf in tree.leaves():
        cur: TreeNode | None = leaf
        while cur is not None and cur.id not in truth.clusters:
            cur = cur.parent
        mapping[leaf.id] = truth.clusters[cur.id] if cur is not None else f"leaf:{leaf.id}"
    return Clustering(mapping)


# -- classification statistics ---------------------------------------------------


@dataclass(frozen=True)
class ClassificationStats:
    pages: int
    avg_segments: float
    component_fraction: float
    non_component_fraction: float

    def row(self) -> str:
        return f"{self.component_fraction * 100:.1f}% / {self.non_component_fraction * 100:.1f}%"

    def to_dict(self) -> dict[str, Any]:
        return {
            "pages": self.pages,
            "avg_segments": self.avg_segments,
            "component_fraction": self.component_fraction,
            "non_component_fraction": self.non_component_fraction,
            "row": self.row(),
        }


def classification_stats(pages: Sequence[Sequence[str]]) -> ClassificationStats:
    """Per-page class label lists in; fractions are averaged over pages."""
    pages = [list(p) for p in pages if p]
    if not pages:
        raise ValueError("classification_stats needs at least one page with segments")
    fractions = [sum(1 for c in p if c == "Component") / len(p) for p in pages]
    comp = sum(fractions) / len(pages)
    return ClassificationStats(len(pages), sum(len(p) for p in pages) / len(pages), comp, 1.0 - comp)
