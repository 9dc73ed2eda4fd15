"""Segment classification and context extraction.

The tree walked here is the candidate hierarchy: the pruned page tree cut off
at the marked candidates. Ancestors of candidates stay as structural nodes;
subtrees holding no candidate become residual leaves, so the whole page stays
covered. A leaf judged to be a Container is expanded with its pruned-tree
children on demand.

Classification runs top down, level by level, so every segment is described
after all of its ancestors.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ClassificationError, ResponseFormatError
from .gateway import Gateway
from .mock import longest_text
from .prompts import classification_request, page_description_request
from .segmenter import Segmentation
from .snapshot import PageSnapshot, TreeNode, crop_rendering

DEPTH_CAP = 6


class SegmentClass(str, enum.Enum):
    CONTAINER = "Container"
    LIST = "List"
    COMPONENT = "Component"


@dataclass(frozen=True)
class SegmentContext:
    title: str
    context: str

    def to_dict(self) -> dict[str, str]:
        return {"title": self.title, "context": self.context}


@dataclass(eq=False)
class SegmentNode:
    tree: TreeNode
    kind: str = "candidate"  # structural | candidate | residual | expanded
    children: list[SegmentNode] = field(default_factory=list)
    parent: SegmentNode | None = field(default=None, repr=False)
    seg_class: SegmentClass | None = None
    context: SegmentContext | None = None
    origin: str | None = None  # llm | list-item | default | cap

    @property
    def id(self) -> str:
        return self.tree.id

    @property
    def tag(self) -> str:
        return self.tree.tag

    def add(self, child: SegmentNode) -> SegmentNode:
        child.parent = self
        self.children.append(child)
        return child

    def preorder(self) -> Iterator[SegmentNode]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def ancestors(self) -> list[SegmentNode]:
        out, cur = [], self.parent
        while cur is not None:
            out.append(cur)
            cur = cur.parent
        return out[::-1]

    def ensure_children(self) -> list[SegmentNode]:
        if not self.children:
            for child in self.tree.children:
                self.add(SegmentNode(child, "expanded"))
        return self.children

    def __repr__(self) -> str:
        cls = self.seg_class.value if self.seg_class else None
        return f"SegmentNode({self.id!r}, {self.kind}, {cls}, children={len(self.children)})"


def segment_tree_from_nested(spec) -> SegmentNode:
    """Test helper: a segment hierarchy mirroring a nested ``(tag, [...])`` spec."""
    from .snapshot import tree_from_nested

    def wrap(node: TreeNode) -> SegmentNode:
        seg = SegmentNode(node, "structural" if node.children else "candidate")
        for c in node.children:
            seg.add(wrap(c))
        return seg

    return wrap(tree_from_nested(spec))


def build_candidate_hierarchy(pruned_root: TreeNode, segmentation: Segmentation) -> SegmentNode:
    marked = {n.id for n in segmentation.candidates}
    has_marked: dict[str, bool] = {}
    for node in pruned_root.postorder():
        has_marked[node.id] = node.id in marked or any(has_marked[c.id] for c in node.children)

    def build(node: TreeNode) -> SegmentNode:
        if node.id in marked:
            return SegmentNode(node, "candidate")
        if not has_marked[node.id]:
            return SegmentNode(node, "residual")
        seg = SegmentNode(node, "structural")
        for child in node.children:
            seg.add(build(child))
        return seg

    return build(pruned_root)


def outline(node: TreeNode) -> dict[str, Any]:
    return {"tag": node.tag, "children": [outline(c) for c in node.children]}


def segment_texts(segment: SegmentNode, snapshot: PageSnapshot | None = None) -> list[str]:
    rec = segment.tree.record
    if snapshot is not None:
        return snapshot.visible_texts(rec.id if rec is not None else None)
    return [
        n.record.text.strip()
        for n in segment.tree.preorder()
        if n.record is not None and n.record.text and n.record.text.strip()
    ]


def fallback_context(segment: SegmentNode, texts: Sequence[str], reason: str) -> SegmentContext:
    title = longest_text(list(texts)) or f"{segment.tag} section"
    return SegmentContext(title, reason)


# -- LLM calls -----------------------------------------------------------------


def describe_page(snapshot: PageSnapshot, gateway: Gateway) -> str:
    request = page_description_request(
        snapshot.screenshot, snapshot.title, snapshot.visible_texts(), gateway.model, gateway.temperature
    )

    def check(value):
        text = value["description"] if isinstance(value, dict) else value
        if not isinstance(text, str) or not text.strip():
            raise ValueError("expected a non-empty description")
        return text.strip()

    return gateway.complete_json(request, check)


def _check_classification(value: Any) -> tuple[SegmentClass, SegmentContext]:
    if not isinstance(value, dict):
        raise ValueError("expected a JSON object")
    raw = str(value.get("class", "")).strip().capitalize()
    try:
        cls = SegmentClass(raw)
    except ValueError:
        raise ValueError(f"class must be Container, List or Component, got {raw!r}") from None
    title, ctx = value.get("title"), value.get("context")
    if not isinstance(title, str) or not title.strip():
        raise ValueError("missing title")
    if not isinstance(ctx, str) or not ctx.strip():
        raise ValueError("missing context")
    return cls, SegmentContext(title.strip(), ctx.strip())


def classify_segment(
    segment: SegmentNode,
    rendering: np.ndarray,
    page_context: str,
    ancestor_contexts: Sequence[SegmentContext],
    gateway: Gateway,
    texts: Sequence[str] | None = None,
) -> tuple[SegmentClass, SegmentContext]:
    payload = {
        "id": segment.id,
        "tag": segment.tag,
        "children": [outline(c.tree) for c in segment.children],
        "texts": list(texts if texts is not None else segment_texts(segment)),
    }
    request = classification_request(
        payload,
        rendering,
        page_context,
        [c.to_dict() for c in ancestor_contexts],
        gateway.model,
        gateway.temperature,
    )
    try:
        return gateway.complete_json(request, _check_classification)
    except ResponseFormatError as exc:
        raise ClassificationError(f"segment {segment.id}: {exc}") from exc


@dataclass
class ClassificationResult:
    root: SegmentNode
    page_context: str
    errors: list[dict[str, str]] = field(default_factory=list)
    llm_calls: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "page_context": self.page_context,
            "segments": segments_to_records(self.root),
            "errors": list(self.errors),
        }


def _parallel(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def classify_tree(
    root: SegmentNode,
    gateway: Gateway,
    page_context: str,
    snapshot: PageSnapshot | None = None,
    render: Callable[[SegmentNode], np.ndarray] | None = None,
    depth_cap: int = DEPTH_CAP,
    workers: int = 1,
) -> ClassificationResult:
    """Container -> recurse; List -> children become Components without calls; Component -> stop."""
    result = ClassificationResult(root, page_context)

    def rendering(seg: SegmentNode) -> np.ndarray:
        if render is not None:
            return render(seg)
        if snapshot is not None:
            return crop_rendering(snapshot, seg.tree)
        return np.zeros((1, 1, 3), dtype=np.uint8)

    def run(item: tuple[SegmentNode, list[SegmentContext]]):
        seg, ancestors = item
        texts = segment_texts(seg, snapshot)
        try:
            cls, ctx = classify_segment(seg, rendering(seg), page_context, ancestors, gateway, texts)
            return cls, ctx, "llm", None
        except ClassificationError as exc:
            ctx = fallback_context(seg, texts, "Unclassified segment, kept as a structural grouping.")
            return SegmentClass.CONTAINER, ctx, "default", str(exc)

    level: list[tuple[SegmentNode, list[SegmentContext]]] = [(root, [])]
    depth = 0
    while level:
        capped = depth >= depth_cap
        if capped:
            outcomes = []
            for seg, _ in level:
                ctx = fallback_context(seg, segment_texts(seg, snapshot), "Segment below the classification depth cap.")
                outcomes.append((SegmentClass.COMPONENT, ctx, "cap", None))
        else:
            outcomes = _parallel(run, level, workers)
            result.llm_calls += len(level)
        following: list[tuple[SegmentNode, list[SegmentContext]]] = []
        for (seg, ancestors), (cls, ctx, origin, error) in zip(level, outcomes):
            seg.seg_class, seg.context, seg.origin = cls, ctx, origin
            if error is not None:
                result.errors.append({"id": seg.id, "error": error})
            if cls is SegmentClass.CONTAINER:
                following.extend((child, ancestors + [ctx]) for child in seg.ensure_children())
            elif cls is SegmentClass.LIST:
                for child in seg.ensure_children():
                    child.seg_class = SegmentClass.COMPONENT
                    child.context = SegmentContext(f"{ctx.title} item", ctx.context)
                    child.origin = "list-item"
                    child.children = []
            else:
                # a Component keeps its content below it; nothing further is classified
                seg.children = []
        level = following
        depth += 1
    return result


# -- serialization -------------------------------------------------------------


def segments_to_records(root: SegmentNode) -> list[dict[str, Any]]:
    out = []
    for seg in root.preorder():
        out.append(
            {
                "id": seg.id,
                "parent_id": seg.parent.id if seg.parent is not None else None,
                "tag": seg.tag,
                "kind": seg.kind,
                "class": seg.seg_class.value if seg.seg_class else None,
                "title": seg.context.title if seg.context else None,
                "context": seg.context.context if seg.context else None,
                "origin": seg.origin,
            }
        )
    return out


def segments_from_records(records: Iterable[dict[str, Any]], pruned_root: TreeNode) -> SegmentNode:
    nodes = {n.id: n for n in pruned_root.preorder()}
    made: dict[str, SegmentNode] = {}
    root = None
    for rec in records:
        tree = nodes.get(rec["id"])
        if tree is None:
            raise KeyError(f"segment {rec['id']!r} is not in the pruned tree")
        seg = SegmentNode(tree, rec.get("kind", "candidate"))
        if rec.get("class"):
            seg.seg_class = SegmentClass(rec["class"])
        if rec.get("title") is not None:
            seg.context = SegmentContext(rec["title"], rec.get("context") or "")
        seg.origin = rec.get("origin")
        made[seg.id] = seg
        if rec.get("parent_id") is None:
            root = seg
        else:
            made[rec["parent_id"]].add(seg)
    if root is None:
        raise ValueError("no root segment in records")
    return root
