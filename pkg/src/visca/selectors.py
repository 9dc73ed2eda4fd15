"""Small CSS selector subset: build unique selectors and match them against a snapshot.

Supported syntax: ``tag``, ``#id``, ``.class``, ``[attr="value"]``,
``:nth-of-type(n)``, descendant (whitespace) and child (``>``) combinators.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import SelectorError
from .snapshot import NodeRecord, PageSnapshot

_IDENT = re.compile(r"^-?[A-Za-z_][\w-]*$")
_SAFE_VALUE = re.compile(r'^[^"\\\n\r]*$')
ATTR_PRIORITY = ("name", "href", "src", "aria-label", "placeholder", "for", "alt", "title", "value", "type")


@dataclass
class Compound:
    tag: str | None = None
    id: str | None = None
    classes: list[str] = field(default_factory=list)
    attrs: list[tuple[str, str]] = field(default_factory=list)
    nth_of_type: int | None = None


_PART = re.compile(
    r"""(?P<tag>[A-Za-z][\w-]*|\*)
      |\#(?P<id>-?[A-Za-z_][\w-]*)
      |\.(?P<cls>-?[A-Za-z_][\w-]*)
      |\[(?P<attr>[\w:-]+)="(?P<val>[^"]*)"\]
      |:nth-of-type\((?P<nth>\d+)\)""",
    re.VERBOSE,
)


def parse_selector(text: str) -> list[tuple[str, Compound]]:
    """Returns ``[(combinator, compound), ...]``; the first combinator is ``""``."""
    steps: list[tuple[str, Compound]] = []
    i, n = 0, len(text)
    comb = ""
    while i < n:
        while i < n and text[i].isspace():
            i += 1
            if steps and comb == "":
                comb = " "
        if i >= n:
            break
        if text[i] == ">":
            if not steps:
                raise SelectorError(f"selector starts with a combinator: {text!r}")
            comb = ">"
            i += 1
            continue
        comp = Compound()
        start = i
        while i < n:
            m = _PART.match(text, i)
            if not m or m.start() != i:
                break
            if m.group("tag") is not None:
                if i != start:
                    raise SelectorError(f"tag must come first in {text!r}")
                comp.tag = None if m.group("tag") == "*" else m.group("tag").lower()
            elif m.group("id") is not None:
                comp.id = m.group("id")
            elif m.group("cls") is not None:
                comp.classes.append(m.group("cls"))
            elif m.group("attr") is not None:
                comp.attrs.append((m.group("attr"), m.group("val")))
            else:
                comp.nth_of_type = int(m.group("nth"))
            i = m.end()
        if i == start:
            raise SelectorError(f"cannot parse selector {text!r} at offset {i}")
        steps.append((comb or "", comp))
        comb = ""
    if not steps or comb == ">":
        raise SelectorError(f"incomplete selector {text!r}")
    return steps


class SelectorIndex:
    """Selector matching over every node of a snapshot (hidden ones included, as a browser would)."""

    def __init__(self, snapshot: PageSnapshot):
        self.snapshot = snapshot
        self._type_pos: dict[str, int] = {}
        for parent_id, kids in snapshot.children_of.items():
            seen: dict[str, int] = {}
            for k in kids:
                seen[k.tag] = seen.get(k.tag, 0) + 1
                self._type_pos[k.id] = seen[k.tag]

    def nth_of_type(self, rec: NodeRecord) -> int:
        return self._type_pos[rec.id]

    def same_type_siblings(self, rec: NodeRecord) -> int:
        return sum(1 for s in self.snapshot.children_of.get(rec.parent_id, []) if s.tag == rec.tag)

    def _fits(self, rec: NodeRecord, c: Compound) -> bool:
        if c.tag is not None and rec.tag != c.tag:
            return False
        if c.id is not None and rec.attrs.get("id") != c.id:
            return False
        if c.classes:
            have = set(rec.attrs.get("class", "").split())
            if not set(c.classes) <= have:
                return False
        for key, value in c.attrs:
            if rec.attrs.get(key) != value:
                return False
        if c.nth_of_type is not None and self._type_pos[rec.id] != c.nth_of_type:
            return False
        return True

    def _matches(self, rec: NodeRecord, steps: list[tuple[str, Compound]], k: int) -> bool:
        comb, comp = steps[k]
        if not self._fits(rec, comp):
            return False
        if k == 0:
            return True
        by_id = self.snapshot.by_id
        parent = by_id.get(rec.parent_id) if rec.parent_id is not None else None
        if comb == ">":
            return parent is not None and self._matches(parent, steps, k - 1)
        while parent is not None:
            if self._matches(parent, steps, k - 1):
                return True
            parent = by_id.get(parent.parent_id) if parent.parent_id is not None else None
        return False

    def select(self, selector: str) -> list[str]:
        steps = parse_selector(selector)
        last = len(steps) - 1
        return [rec.id for rec in self.snapshot.nodes if self._matches(rec, steps, last)]

    def is_unique(self, selector: str, node_id: str) -> bool:
        return self.select(selector) == [node_id]

    # -- building --------------------------------------------------------------

    def _local(self, rec: NodeRecord) -> list[str]:
        """Short single-compound options, most readable first."""
        out = []
        el_id = rec.attrs.get("id", "")
        if el_id and _IDENT.match(el_id):
            out.append(f"#{el_id}")
        for key in ATTR_PRIORITY:
            value = rec.attrs.get(key)
            if value and _SAFE_VALUE.match(value):
                out.append(f'{rec.tag}[{key}="{value}"]')
        classes = [c for c in rec.attrs.get("class", "").split() if _IDENT.match(c)]
        if classes:
            out.append(rec.tag + "".join(f".{c}" for c in classes))
        out.append(rec.tag)
        return out

    def _step(self, rec: NodeRecord) -> str:
        if self.same_type_siblings(rec) > 1:
            return f"{rec.tag}:nth-of-type({self.nth_of_type(rec)})"
        return rec.tag

    def build(self, node_id: str) -> str:
        """A selector matching exactly ``node_id``; raises SelectorError otherwise."""
        rec = self.snapshot.by_id.get(node_id)
        if rec is None:
            raise SelectorError(f"node {node_id!r} is not in the snapshot")
        for cand in self._local(rec):
            if self.is_unique(cand, node_id):
                return cand
        # structural path up to the nearest ancestor with a unique id (or the root)
        parts = [self._step(rec)]
        cur = rec
        while cur.parent_id is not None:
            cur = self.snapshot.by_id[cur.parent_id]
            el_id = cur.attrs.get("id", "")
            if el_id and _IDENT.match(el_id) and self.is_unique(f"#{el_id}", cur.id):
                parts.append(f"#{el_id}")
                break
            parts.append(self._step(cur) if cur.parent_id is not None else cur.tag)
        cand = " > ".join(reversed(parts))
        if self.is_unique(cand, node_id):
            return cand
        raise SelectorError(f"no unique selector for node {node_id!r} (tried {cand!r})")


def build_selector(snapshot: PageSnapshot, node_id: str) -> str:
    return SelectorIndex(snapshot).build(node_id)


def select(snapshot: PageSnapshot, selector: str) -> list[str]:
    return SelectorIndex(snapshot).select(selector)
