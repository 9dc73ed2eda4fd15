"""Walk the mini-cart fixture through pruning and candidate marking.

Run with ``python3 demos/segment_page.py``. Prints which wrappers were pruned
and why, then the pruned tree with each node's potential; marked candidates
are starred.
"""

from __future__ import annotations

from pathlib import Path

import visca
from visca.prune import prune_redundant
from visca.segmenter import segment
from visca.snapshot import build_visible_hierarchy, load_snapshot

BUNDLE = Path(visca.__file__).parent / "fixtures" / "mini-cart"


def main() -> None:
    snap = load_snapshot(BUNDLE)
    tree, report = prune_redundant(build_visible_hierarchy(snap), snap)
    print(f"{snap.url}: {report.before_count} visible nodes, {report.after_count} after pruning")
    for nid in report.pruned_node_ids:
        print(f"  pruned {nid} <{snap.by_id[nid].tag}> by the {report.rule_used[nid]} rule")

    seg = segment(tree)
    print(f"\ncandidates {seg.candidate_ids}, total potential {seg.total_potential():.3f}\n")
    for node in tree.preorder():
        depth = len(list(_ancestors(node)))
        score = seg.scores[node.id]
        star = "*" if seg.markings[node.id].is_candidate else " "
        print(f"{star} {'  ' * depth}{node.tag} {node.id}  size={score.size} dsum={score.sibling_distance_sum} psi={score.psi:+.3f}")


def _ancestors(node):
    cur = node.parent
    while cur is not None:
        yield cur
        cur = cur.parent


if __name__ == "__main__":
    main()
