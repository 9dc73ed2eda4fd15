"""Ordered tree edit distance (Zhang & Shasha, 1989) with unit costs.

Nodes are compared by label only. The default accessors read ``.tag`` and
``.children`` so TreeNode trees work directly; anything else can be passed
through ``label`` / ``children``.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any


def _tag(node: Any) -> str:
    return node.tag


def _kids(node: Any) -> Sequence[Any]:
    return node.children


class _Annotated:
    """Postorder labels, leftmost-leaf indices and keyroots of one tree."""

    __slots__ = ("labels", "lmd", "keyroots")

    def __init__(self, root, label, children):
        # frames are [node, kids, next kid, lmd of first kid]; positions rather
        # than object ids, so inputs may share subtrees
        labels: list[str] = []
        lmd: list[int] = []
        frames = [[root, children(root), 0, None]]
        while frames:
            frame = frames[-1]
            node, kids, k, first = frame
            if k < len(kids):
                frame[2] += 1
                frames.append([kids[k], children(kids[k]), 0, None])
                continue
            frames.pop()
            i = len(labels)
            labels.append(label(node))
            lmd.append(i if first is None else first)
            if frames and frames[-1][2] == 1:
                frames[-1][3] = lmd[i]
        self.labels = labels
        self.lmd = lmd
        highest: dict[int, int] = {}
        for i, left in enumerate(lmd):
            highest[left] = i
        self.keyroots = sorted(highest.values())


def tree_edit_distance(
    a: Any,
    b: Any,
    label: Callable[[Any], str] = _tag,
    children: Callable[[Any], Sequence[Any]] = _kids,
) -> int:
    """Minimum number of node insertions, deletions and relabelings turning ``a`` into ``b``."""
    ta = _Annotated(a, label, children)
    tb = _Annotated(b, label, children)
    la, lb = ta.lmd, tb.lmd
    na, nb = len(la), len(lb)
    treedist = [[0] * nb for _ in range(na)]
    for i in ta.keyroots:
        li = la[i]
        m = i - li + 2
        for j in tb.keyroots:
            lj = lb[j]
            n = j - lj + 2
            fd = [[0] * n for _ in range(m)]
            for x in range(1, m):
                fd[x][0] = x
            row0 = fd[0]
            for y in range(1, n):
                row0[y] = y
            for x in range(1, m):
                i1 = li + x - 1
                li1 = la[i1]
                lab_i = ta.labels[i1]
                prev = fd[x - 1]
                cur = fd[x]
                td_row = treedist[i1]
                for y in range(1, n):
                    j1 = lj + y - 1
                    if li1 == li and lb[j1] == lj:
                        best = prev[y - 1] + (lab_i != tb.labels[j1])
                        if prev[y] + 1 < best:
                            best = prev[y] + 1
                        if cur[y - 1] + 1 < best:
                            best = cur[y - 1] + 1
                        cur[y] = best
                        td_row[j1] = best
                    else:
                        best = fd[li1 - li][lb[j1] - lj] + td_row[j1]
                        if prev[y] + 1 < best:
                            best = prev[y] + 1
                        if cur[y - 1] + 1 < best:
                            best = cur[y - 1] + 1
                        cur[y] = best
    return treedist[na - 1][nb - 1]


def canonical_form(node: Any, label: Callable[[Any], str] = _tag, children=_kids) -> str:
    """Label-isomorphism key: two subtrees share it iff their distance is 0."""
    frames: list[list[Any]] = [[node, children(node), 0, []]]
    while True:
        frame = frames[-1]
        cur, kids, k, parts = frame
        if k < len(kids):
            frame[2] += 1
            frames.append([kids[k], children(kids[k]), 0, []])
            continue
        frames.pop()
        text = f"{label(cur)}({','.join(parts)})" if kids else label(cur)
        if not frames:
            return text
        frames[-1][3].append(text)


class DistanceCache:
    """Memoizes distances by the unordered pair of subtree canonical forms.

    Repeated structures (list items, table rows) collapse onto one entry, so a
    sibling group of N copies costs a single distance computation.
    """

    def __init__(self, label=_tag, children=_kids):
        self._label = label
        self._children = children
        self._forms: dict[int, tuple[Any, str]] = {}
        self._dist: dict[tuple[str, str], int] = {}
        self.computed = 0

    def form(self, node: Any) -> str:
        hit = self._forms.get(id(node))
        if hit is None or hit[0] is not node:
            hit = (node, canonical_form(node, self._label, self._children))
            self._forms[id(node)] = hit
        return hit[1]

    def distance(self, a: Any, b: Any) -> int:
        fa, fb = self.form(a), self.form(b)
        if fa == fb:
            return 0
        key = (fa, fb) if fa < fb else (fb, fa)
        hit = self._dist.get(key)
        if hit is None:
            hit = tree_edit_distance(a, b, self._label, self._children)
            self._dist[key] = hit
            self.computed += 1
        return hit

    def sibling_sums(self, siblings: Sequence[Any]) -> list[int]:
        """For each sibling, the summed distance to every other sibling."""
        k = len(siblings)
        sums = [0] * k
        for i in range(k):
            for j in range(i + 1, k):
                d = self.distance(siblings[i], siblings[j])
                sums[i] += d
                sums[j] += d
        return sums
