"""Snapshot bundles: a frozen capture of a page that every stage reads from.

A bundle is a directory holding ``manifest.json``, ``page.html`` and
``screenshot.png``. Nodes are listed in document order; children inherit that
order. Each node stores only its own direct text.
"""

from __future__ import annotations

import html
import json
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .errors import BundleIncomplete, BundleInvalid, NotRenderable

MANIFEST = "manifest.json"
PAGE_HTML = "page.html"
SCREENSHOT = "screenshot.png"

VOID_TAGS = frozenset(
    "area base br col embed hr img input link meta source track wbr".split()
)


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return max(self.w, 0) * max(self.h, 0)

    def clamp(self, width: int, height: int) -> BBox:
        x0 = min(max(self.x, 0), width)
        y0 = min(max(self.y, 0), height)
        x1 = min(max(self.x + self.w, 0), width)
        y1 = min(max(self.y + self.h, 0), height)
        return BBox(x0, y0, x1 - x0, y1 - y0)

    def to_dict(self) -> dict[str, int]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class NodeRecord:
    id: str
    parent_id: str | None
    tag: str
    attrs: Mapping[str, str] = field(default_factory=dict)
    text: str | None = None
    bbox: BBox = BBox(0, 0, 0, 0)
    visible: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "parent_id": self.parent_id,
            "tag": self.tag,
            "attrs": dict(self.attrs),
            "text": self.text,
            "bbox": self.bbox.to_dict(),
            "visible": self.visible,
        }


@dataclass(frozen=True, eq=False)
class PageSnapshot:
    page_html: str
    nodes: tuple[NodeRecord, ...]
    screenshot: np.ndarray
    viewport: tuple[int, int]
    url: str = ""

    def __post_init__(self):
        shot = np.ascontiguousarray(self.screenshot, dtype=np.uint8)
        shot.flags.writeable = False
        object.__setattr__(self, "screenshot", shot)
        object.__setattr__(self, "nodes", tuple(self.nodes))
        validate_snapshot(self)

    @cached_property
    def by_id(self) -> dict[str, NodeRecord]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def order(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def children_of(self) -> dict[str | None, list[NodeRecord]]:
        out: dict[str | None, list[NodeRecord]] = {}
        for n in self.nodes:
            out.setdefault(n.parent_id, []).append(n)
        return out

    @property
    def root(self) -> NodeRecord:
        return self.children_of[None][0]

    @property
    def size(self) -> tuple[int, int]:
        """Screenshot (width, height)."""
        return self.screenshot.shape[1], self.screenshot.shape[0]

    def children(self, node_id: str) -> list[NodeRecord]:
        return self.children_of.get(node_id, [])

    def ancestors(self, node_id: str) -> Iterator[NodeRecord]:
        node = self.by_id[node_id]
        while node.parent_id is not None:
            node = self.by_id[node.parent_id]
            yield node

    def descendants(self, node_id: str) -> Iterator[NodeRecord]:
        stack = list(reversed(self.children(node_id)))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(self.children(node.id)))

    def is_ancestor(self, ancestor_id: str, node_id: str) -> bool:
        return any(a.id == ancestor_id for a in self.ancestors(node_id))

    @cached_property
    def title(self) -> str:
        for n in self.nodes:
            if n.tag == "title" and n.text:
                return n.text.strip()
        start = self.page_html.lower().find("<title")
        if start >= 0:
            start = self.page_html.find(">", start) + 1
            end = self.page_html.lower().find("</title>", start)
            if end > start:
                return html.unescape(self.page_html[start:end]).strip()
        return ""

    def visible_texts(self, node_id: str | None = None) -> list[str]:
        """Own text of every visible node in document order (optionally below ``node_id``)."""
        if node_id is None:
            pool: Iterator[NodeRecord] = iter(self.nodes)
        else:
            pool = _chain_self(self.by_id[node_id], self.descendants(node_id))
        return [n.text.strip() for n in pool if n.visible and n.text and n.text.strip()]

    def manifest(self) -> dict[str, Any]:
        return {
            "url": self.url,
            "viewport": {"width": self.viewport[0], "height": self.viewport[1]},
            "nodes": [n.to_dict() for n in self.nodes],
        }


def _chain_self(first, rest):
    yield first
    yield from rest


def validate_snapshot(snap: PageSnapshot) -> None:
    if snap.screenshot.ndim != 3 or snap.screenshot.shape[2] != 3:
        raise BundleInvalid("screenshot must be an RGB image", "screenshot")
    height, width = snap.screenshot.shape[:2]
    ids: dict[str, NodeRecord] = {}
    for i, n in enumerate(snap.nodes):
        if n.id in ids:
            raise BundleInvalid(f"duplicate node id {n.id!r}", f"nodes[{i}].id")
        ids[n.id] = n
    roots = [n for n in snap.nodes if n.parent_id is None]
    if len(roots) != 1:
        raise BundleInvalid(f"expected exactly one root node, found {len(roots)}", "nodes")
    for i, n in enumerate(snap.nodes):
        if n.parent_id is not None and n.parent_id not in ids:
            raise BundleInvalid(f"unknown parent {n.parent_id!r}", f"nodes[{i}].parent_id")
        if n.visible:
            if n.bbox.w <= 0 or n.bbox.h <= 0:
                raise BundleInvalid("visible node needs a positive box", f"nodes[{i}].bbox")
            if n.bbox.clamp(width, height).area == 0:
                raise BundleInvalid(
                    f"box {n.bbox.to_dict()} lies outside the {width}x{height} screenshot",
                    f"nodes[{i}].bbox",
                )
    # cycle check: every chain must reach the root within len(nodes) steps
    state: dict[str, int] = {}
    for n in snap.nodes:
        path = []
        cur: NodeRecord | None = n
        while cur is not None and state.get(cur.id) != 2:
            if state.get(cur.id) == 1:
                raise BundleInvalid(f"parent cycle through {cur.id!r}", "nodes")
            state[cur.id] = 1
            path.append(cur.id)
            cur = ids[cur.parent_id] if cur.parent_id is not None else None
        for pid in path:
            state[pid] = 2


# -- bundle IO ---------------------------------------------------------------


def _expect(cond: bool, message: str, where: str) -> None:
    if not cond:
        raise BundleInvalid(message, where)


def _int(value: Any, where: str) -> int:
    ok = (isinstance(value, int) and not isinstance(value, bool)) or (
        isinstance(value, float) and value.is_integer()
    )
    _expect(ok, f"expected integer, got {value!r}", where)
    return int(value)


def _parse_node(raw: Any, i: int) -> NodeRecord:
    where = f"nodes[{i}]"
    _expect(isinstance(raw, dict), "expected object", where)
    for key in ("id", "parent_id", "tag", "bbox", "visible"):
        _expect(key in raw, "missing key", f"{where}.{key}")
    _expect(isinstance(raw["id"], str) and raw["id"] != "", "expected non-empty string", f"{where}.id")
    pid = raw["parent_id"]
    _expect(pid is None or isinstance(pid, str), "expected string or null", f"{where}.parent_id")
    _expect(isinstance(raw["tag"], str) and raw["tag"] != "", "expected non-empty string", f"{where}.tag")
    attrs = raw.get("attrs") or {}
    _expect(isinstance(attrs, dict), "expected object", f"{where}.attrs")
    for k, v in attrs.items():
        _expect(isinstance(v, str), "attribute values must be strings", f"{where}.attrs.{k}")
    text = raw.get("text")
    _expect(text is None or isinstance(text, str), "expected string or null", f"{where}.text")
    box = raw["bbox"]
    _expect(isinstance(box, dict), "expected object", f"{where}.bbox")
    coords = []
    for key in ("x", "y", "w", "h"):
        _expect(key in box, "missing key", f"{where}.bbox.{key}")
        coords.append(_int(box[key], f"{where}.bbox.{key}"))
    _expect(isinstance(raw["visible"], bool), "expected boolean", f"{where}.visible")
    return NodeRecord(
        id=raw["id"],
        parent_id=pid,
        tag=raw["tag"].lower(),
        attrs=dict(attrs),
        text=text,
        bbox=BBox(*coords),
        visible=raw["visible"],
    )


def load_snapshot(bundle_path: str | Path) -> PageSnapshot:
    root = Path(bundle_path)
    for name in (MANIFEST, PAGE_HTML, SCREENSHOT):
        if not (root / name).is_file():
            raise BundleIncomplete(f"{root / name} is missing")
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleInvalid(f"manifest is not valid UTF-8 JSON: {exc}", "manifest") from exc
    _expect(isinstance(manifest, dict), "expected object", "manifest")
    url = manifest.get("url", "")
    _expect(isinstance(url, str), "expected string", "url")
    vp = manifest.get("viewport")
    _expect(isinstance(vp, dict), "expected object", "viewport")
    viewport = (_int(vp.get("width"), "viewport.width"), _int(vp.get("height"), "viewport.height"))
    raw_nodes = manifest.get("nodes")
    _expect(isinstance(raw_nodes, list), "expected array", "nodes")
    nodes = tuple(_parse_node(raw, i) for i, raw in enumerate(raw_nodes))
    try:
        with Image.open(root / SCREENSHOT) as im:
            shot = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise BundleInvalid(f"unreadable PNG: {exc}", "screenshot") from exc
    page_html = (root / PAGE_HTML).read_text(encoding="utf-8")
    return PageSnapshot(page_html=page_html, nodes=nodes, screenshot=shot, viewport=viewport, url=url)


def save_snapshot(snapshot: PageSnapshot, bundle_path: str | Path) -> Path:
    root = Path(bundle_path)
    root.mkdir(parents=True, exist_ok=True)
    (root / MANIFEST).write_text(
        json.dumps(snapshot.manifest(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (root / PAGE_HTML).write_text(snapshot.page_html, encoding="utf-8")
    Image.fromarray(np.asarray(snapshot.screenshot)).save(root / SCREENSHOT, format="PNG")
    return root


# -- visible hierarchy ------------------------------------------------------


@dataclass(eq=False)
class TreeNode:
    """Mutable node of the visible (and later pruned) hierarchy."""

    id: str
    tag: str
    record: NodeRecord | None = None
    children: list[TreeNode] = field(default_factory=list)
    parent: TreeNode | None = field(default=None, repr=False)

    def add(self, child: TreeNode) -> TreeNode:
        child.parent = self
        self.children.append(child)
        return child

    def preorder(self) -> Iterator[TreeNode]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def postorder(self) -> Iterator[TreeNode]:
        stack: list[tuple[TreeNode, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                yield node
            else:
                stack.append((node, True))
                stack.extend((c, False) for c in reversed(node.children))

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.preorder() if not n.children]

    def size(self) -> int:
        return sum(1 for _ in self.preorder())

    def depth(self) -> int:
        d, cur = 0, self.parent
        while cur is not None:
            d, cur = d + 1, cur.parent
        return d

    def find(self, node_id: str) -> TreeNode | None:
        return next((n for n in self.preorder() if n.id == node_id), None)

    def to_nested(self) -> tuple:
        return (self.tag, [c.to_nested() for c in self.children])

    def copy(self) -> TreeNode:
        clone = TreeNode(self.id, self.tag, self.record)
        for c in self.children:
            clone.add(c.copy())
        return clone

    def __repr__(self) -> str:
        return f"TreeNode({self.id!r}, {self.tag!r}, children={len(self.children)})"


def tree_from_nested(spec, _counter=None) -> TreeNode:
    """Build a TreeNode tree from ``(label, [children...])`` tuples; ids are preorder ``n0, n1, ...``."""
    counter = _counter if _counter is not None else [0]
    label, kids = (spec, []) if isinstance(spec, str) else spec
    node = TreeNode(f"n{counter[0]}", label)
    counter[0] += 1
    for kid in kids:
        node.add(tree_from_nested(kid, counter))
    return node


VIRTUAL_ROOT_ID = "#document"


def build_visible_hierarchy(snapshot: PageSnapshot) -> TreeNode | None:
    """Tree of the visible nodes, each parented to its nearest visible ancestor.

    Returns None when nothing is visible. If the DOM root itself is hidden and
    several visible subtrees hang below it, they are gathered under a virtual
    ``#document`` node that renders as the whole screenshot.
    """
    made: dict[str, TreeNode] = {}
    tops: list[TreeNode] = []
    for rec in snapshot.nodes:  # document order: parents precede children
        if not rec.visible:
            continue
        node = TreeNode(rec.id, rec.tag, rec)
        made[rec.id] = node
        anchor = None
        pid = rec.parent_id
        while pid is not None:
            if pid in made:
                anchor = made[pid]
                break
            pid = snapshot.by_id[pid].parent_id
        if anchor is None:
            tops.append(node)
        else:
            anchor.add(node)
    if not tops:
        return None
    if len(tops) == 1:
        return tops[0]
    root = TreeNode(VIRTUAL_ROOT_ID, "#document")
    for t in tops:
        root.add(t)
    return root


def crop_rendering(snapshot: PageSnapshot, node: NodeRecord | TreeNode | str) -> np.ndarray:
    """Screenshot sub-image under the node's box, clamped to the screenshot."""
    if isinstance(node, str):
        node = snapshot.by_id[node]
    if isinstance(node, TreeNode):
        if node.record is None:
            return snapshot.screenshot
        node = node.record
    if not node.visible:
        raise NotRenderable(f"node {node.id!r} is not visible")
    width, height = snapshot.size
    box = node.bbox.clamp(width, height)
    return snapshot.screenshot[box.y : box.y + box.h, box.x : box.x + box.w]


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


# -- HTML serialization ----------------------------------------------------

ID_ATTR = "data-vid"


def outer_html(
    snapshot: PageSnapshot,
    node_id: str,
    *,
    with_ids: bool = True,
    visible_only: bool = True,
    indent: int = 0,
) -> str:
    """Serialize the original DOM subtree of ``node_id``.

    Hidden nodes are skipped (their visible descendants are kept in place) when
    ``visible_only`` is set. ``with_ids`` tags every element with its node id so
    model answers can be grounded back onto the DOM.
    """
    lines: list[str] = []

    def emit(rec: NodeRecord, depth: int, keep_hidden: bool = False) -> None:
        if visible_only and not rec.visible and not keep_hidden:
            for child in snapshot.children(rec.id):
                emit(child, depth)
            return
        pad = "  " * (indent + depth)
        attrs = dict(rec.attrs)
        if with_ids:
            attrs[ID_ATTR] = rec.id
        attr_text = "".join(f' {k}="{html.escape(v, quote=True)}"' for k, v in attrs.items())
        kids = snapshot.children(rec.id)
        text = html.escape(rec.text.strip(), quote=False) if rec.text and rec.text.strip() else ""
        if rec.tag in VOID_TAGS:
            lines.append(f"{pad}<{rec.tag}{attr_text}>")
        elif not kids:
            lines.append(f"{pad}<{rec.tag}{attr_text}>{text}</{rec.tag}>")
        else:
            lines.append(f"{pad}<{rec.tag}{attr_text}>{text}")
            for child in kids:
                # a closed select reports its options as hidden; they are still its state
                emit(child, depth + 1, keep_hidden or rec.tag == "select")
            lines.append(f"{pad}</{rec.tag}>")

    emit(snapshot.by_id[node_id], 0)
    return "\n".join(lines)
