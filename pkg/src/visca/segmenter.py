"""Candidate segment extraction.

Each node of the pruned tree gets a potential that grows with its subtree size
and shrinks with its structural distance to its siblings::

    psi(n) = ln( size(n) / (1 + sum_i dist(n, sib_i(n))) )

A post-order pass then keeps, for every subtree, whichever is larger: the
node's own potential or the combined best of its children. The nodes that win
form an antichain of candidate segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .snapshot import TreeNode
from .ted import DistanceCache

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PotentialScore:
    node_id: str
    size: int
    sibling_distance_sum: float
    psi: float


@dataclass
class CandidateMarking:
    node_id: str
    is_candidate: bool = False
    assigned_potential: float = 0.0


@dataclass
class Segmentation:
    scores: dict[str, PotentialScore]
    markings: dict[str, CandidateMarking]
    candidates: list[TreeNode] = field(default_factory=list)

    @property
    def candidate_ids(self) -> list[str]:
        return [n.id for n in self.candidates]

    def total_potential(self) -> float:
        return sum(self.scores[i].psi for i in self.candidate_ids)

    @classmethod
    def from_records(cls, records: list[dict], root: TreeNode) -> Segmentation:
        nodes = {n.id: n for n in root.preorder()}
        scores, markings = {}, {}
        for r in records:
            if r["id"] not in nodes:
                raise KeyError(f"segment record {r['id']!r} is not in the tree")
            scores[r["id"]] = PotentialScore(r["id"], r["size"], r["distance_sum"], r["psi"])
            markings[r["id"]] = CandidateMarking(r["id"], r["is_candidate"], r["assigned_potential"])
        candidates = [n for n in root.preorder() if n.id in markings and markings[n.id].is_candidate]
        return cls(scores, markings, candidates)

    def to_records(self, root: TreeNode) -> list[dict]:
        out = []
        for node in root.preorder():
            s, m = self.scores[node.id], self.markings[node.id]
            out.append(
                {
                    "id": node.id,
                    "parent_id": node.parent.id if node.parent is not None else None,
                    "tag": node.tag,
                    "size": s.size,
                    "distance_sum": s.sibling_distance_sum,
                    "psi": s.psi,
                    "is_candidate": m.is_candidate,
                    "assigned_potential": m.assigned_potential,
                }
            )
        return out


def subtree_size(node: TreeNode) -> int:
    return node.size()


def potential_value(size: int, distance_sum: float) -> float:
    if size < 1 or distance_sum < 0:
        raise ValueError(f"need size >= 1 and distance_sum >= 0, got {size}, {distance_sum}")
    return math.log(size / (1 + distance_sum))


def sibling_distance_sum(node: TreeNode, cache: DistanceCache | None = None) -> int:
    if node.parent is None:
        return 0
    cache = cache or DistanceCache()
    return sum(cache.distance(node, sib) for sib in node.parent.children if sib is not node)


def potential(node: TreeNode, cache: DistanceCache | None = None) -> PotentialScore:
    size = subtree_size(node)
    dsum = sibling_distance_sum(node, cache)
    return PotentialScore(node.id, size, dsum, potential_value(size, dsum))


def compute_potentials(root: TreeNode, cache: DistanceCache | None = None) -> dict[str, PotentialScore]:
    """Potentials for every node; sibling groups are evaluated once per parent."""
    cache = cache or DistanceCache()
    sizes: dict[str, int] = {}
    for node in root.postorder():
        sizes[node.id] = 1 + sum(sizes[c.id] for c in node.children)
    dsums: dict[str, int] = {root.id: 0}
    for node in root.preorder():
        if node.children:
            for child, total in zip(node.children, cache.sibling_sums(node.children)):
                dsums[child.id] = total
    return {
        nid: PotentialScore(nid, sizes[nid], dsums[nid], potential_value(sizes[nid], dsums[nid]))
        for nid in sizes
    }


def _wins(own: float, combined: float) -> bool:
    return own >= combined or math.isclose(own, combined, rel_tol=TIE_TOLERANCE, abs_tol=TIE_TOLERANCE)


def mark_candidate_segments(
    root: TreeNode,
    scores: dict[str, PotentialScore] | None = None,
    cache: DistanceCache | None = None,
) -> Segmentation:
    if scores is None:
        scores = compute_potentials(root, cache)
    markings = {n.id: CandidateMarking(n.id) for n in root.preorder()}
    # marked nodes currently inside each finished subtree; every other
    # descendant is already unmarked, so these are all a win has to clear
    frontier: dict[str, list[str]] = {}
    for node in root.postorder():
        own = scores[node.id].psi
        combined = sum(markings[c.id].assigned_potential for c in node.children)
        mark = markings[node.id]
        below = [i for c in node.children for i in frontier.pop(c.id)]
        if _wins(own, combined):
            mark.is_candidate = True
            mark.assigned_potential = own
            for desc_id in below:
                markings[desc_id].is_candidate = False
            frontier[node.id] = [node.id]
        else:
            mark.is_candidate = False
            mark.assigned_potential = combined
            frontier[node.id] = below
    candidates = [n for n in root.preorder() if markings[n.id].is_candidate]
    return Segmentation(scores, markings, candidates)


def segment(root: TreeNode) -> Segmentation:
    return mark_candidate_segments(root, compute_potentials(root))
