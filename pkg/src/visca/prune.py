"""Visual pruning of redundant single-child wrappers.

A parent with exactly one child is compared against that child's rendering.
When the two look the same (identical, padded, or shifted over a uniform
background) the child is dropped and its children move up to the parent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import GeometryError
from .snapshot import PageSnapshot, TreeNode, crop_rendering

PIXEL_TOLERANCE = 2
UNIFORMITY = 0.95

Rule = Literal["exact", "padding", "shift"]


@dataclass
class PruneReport:
    pruned_node_ids: list[str] = field(default_factory=list)
    rule_used: dict[str, Rule] = field(default_factory=dict)
    before_count: int = 0
    after_count: int = 0

    def to_dict(self) -> dict:
        return {
            "pruned_node_ids": list(self.pruned_node_ids),
            "rule_used": dict(self.rule_used),
            "before_count": self.before_count,
            "after_count": self.after_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PruneReport:
        return cls(
            list(data["pruned_node_ids"]),
            dict(data["rule_used"]),
            int(data["before_count"]),
            int(data["after_count"]),
        )


def _as_int(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.int16)


def compare_exact(a: np.ndarray, b: np.ndarray, tolerance: int = PIXEL_TOLERANCE) -> bool:
    if a.shape != b.shape:
        return False
    if a.size == 0:
        return True
    return bool(np.abs(_as_int(a) - _as_int(b)).max() <= tolerance)


def dominant_fraction(pixels: np.ndarray) -> float:
    """Share of the most common exact RGB triple among ``pixels`` (N x 3)."""
    if len(pixels) == 0:
        return 1.0
    p = np.asarray(pixels, dtype=np.uint32)
    packed = (p[:, 0] << 16) | (p[:, 1] << 8) | p[:, 2]
    _, counts = np.unique(packed, return_counts=True)
    return float(counts.max()) / len(packed)


def _residual(parent: np.ndarray, dx: int, dy: int, h: int, w: int) -> np.ndarray:
    mask = np.ones(parent.shape[:2], dtype=bool)
    mask[dy : dy + h, dx : dx + w] = False
    return parent[mask]


def compare_padding(
    parent_img: np.ndarray,
    child_img: np.ndarray,
    child_offset: tuple[int, int],
    tolerance: int = PIXEL_TOLERANCE,
    uniformity: float = UNIFORMITY,
) -> bool:
    dx, dy = child_offset
    ph, pw = parent_img.shape[:2]
    ch, cw = child_img.shape[:2]
    if dx < 0 or dy < 0 or dx + cw > pw or dy + ch > ph:
        raise GeometryError(
            f"child {cw}x{ch} at ({dx},{dy}) does not fit inside parent {pw}x{ph}"
        )
    if not compare_exact(parent_img[dy : dy + ch, dx : dx + cw], child_img, tolerance):
        return False
    return dominant_fraction(_residual(parent_img, dx, dy, ch, cw)) >= uniformity


def compare_shift(
    parent_img: np.ndarray,
    child_img: np.ndarray,
    tolerance: int = PIXEL_TOLERANCE,
    uniformity: float = UNIFORMITY,
) -> bool:
    ph, pw = parent_img.shape[:2]
    ch, cw = child_img.shape[:2]
    if ch > ph or cw > pw:
        raise GeometryError(f"child {cw}x{ch} is larger than parent {pw}x{ph}")
    if ch == 0 or cw == 0:
        return dominant_fraction(parent_img.reshape(-1, 3)) >= uniformity
    parent = _as_int(parent_img)
    child = _as_int(child_img)
    # only offsets whose top-left pixel already agrees are worth a full check
    windows = parent[: ph - ch + 1, : pw - cw + 1]
    seed = np.abs(windows - child[0, 0]).max(axis=2) <= tolerance
    for dy, dx in zip(*np.nonzero(seed)):
        if np.abs(parent[dy : dy + ch, dx : dx + cw] - child).max() > tolerance:
            continue
        if dominant_fraction(_residual(parent_img, dx, dy, ch, cw)) >= uniformity:
            return True
    return False


def match_rule(
    parent_img: np.ndarray,
    child_img: np.ndarray,
    child_offset: tuple[int, int] | None,
    tolerance: int = PIXEL_TOLERANCE,
    uniformity: float = UNIFORMITY,
) -> Rule | None:
    """First of exact / padding / shift that holds, or None."""
    if compare_exact(parent_img, child_img, tolerance):
        return "exact"
    ph, pw = parent_img.shape[:2]
    ch, cw = child_img.shape[:2]
    if child_offset is not None:
        dx, dy = child_offset
        if 0 <= dx and 0 <= dy and dx + cw <= pw and dy + ch <= ph:
            if compare_padding(parent_img, child_img, child_offset, tolerance, uniformity):
                return "padding"
    if ch <= ph and cw <= pw and compare_shift(parent_img, child_img, tolerance, uniformity):
        return "shift"
    return None


def _offset(snapshot: PageSnapshot, parent: TreeNode, child: TreeNode) -> tuple[int, int] | None:
    if child.record is None:
        return None
    width, height = snapshot.size
    cbox = child.record.bbox.clamp(width, height)
    if parent.record is None:
        return cbox.x, cbox.y
    pbox = parent.record.bbox.clamp(width, height)
    return cbox.x - pbox.x, cbox.y - pbox.y


def prune_redundant(
    tree: TreeNode,
    snapshot: PageSnapshot,
    tolerance: int = PIXEL_TOLERANCE,
    uniformity: float = UNIFORMITY,
) -> tuple[TreeNode, PruneReport]:
    """Prune in place and return ``(tree, report)``.

    Only a single child that itself has children is a pruning candidate: a
    leaf carries the page content and the leaf set must survive.
    """
    report = PruneReport(before_count=tree.size())
    render_cache: dict[str, np.ndarray] = {}

    def render(node: TreeNode) -> np.ndarray:
        if node.id not in render_cache:
            render_cache[node.id] = crop_rendering(snapshot, node)
        return render_cache[node.id]

    changed = True
    while changed:
        changed = False
        stack = [tree]
        while stack:
            parent = stack.pop()
            while len(parent.children) == 1 and parent.children[0].children:
                child = parent.children[0]
                rule = match_rule(
                    render(parent), render(child), _offset(snapshot, parent, child), tolerance, uniformity
                )
                if rule is None:
                    break
                parent.children = child.children
                for grandchild in parent.children:
                    grandchild.parent = parent
                child.children = []
                child.parent = None
                report.pruned_node_ids.append(child.id)
                report.rule_used[child.id] = rule
                changed = True
            stack.extend(reversed(parent.children))
    report.after_count = tree.size()
    return tree, report


def apply_prune(tree: TreeNode, pruned_ids) -> TreeNode:
    """Replay a recorded prune (splicing out the listed nodes) without renders."""
    drop = set(pruned_ids)
    for node in list(tree.postorder()):
        if node.id in drop and node.parent is not None:
            parent = node.parent
            at = parent.children.index(node)
            parent.children[at : at + 1] = node.children
            for grandchild in node.children:
                grandchild.parent = parent
            node.children = []
            node.parent = None
    return tree
