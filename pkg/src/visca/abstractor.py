"""Turn a classified segment tree into a component abstraction.

Components are sent to the model one at a time together with their HTML and
rendering. A List sends only one representative item and records how many
items it had. Containers are assembled locally from their children. The
component calls are independent and may run in parallel; composition happens
afterwards in a single bottom-up pass.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .abstraction import AbstractNode, TemplateVocabulary, substitute_unknown, unknown_templates
from .classify import SegmentClass, SegmentContext, SegmentNode
from .errors import ResponseFormatError
from .gateway import Gateway, extract_json
from .prompts import transform_request
from .snapshot import VIRTUAL_ROOT_ID, PageSnapshot, crop_rendering, outer_html

log = logging.getLogger(__name__)


@dataclass
class AbstractionResult:
    root: AbstractNode
    warnings: list[str] = field(default_factory=list)
    transform_calls: int = 0


def segment_html(snapshot: PageSnapshot, segment_id: str) -> str:
    """Original DOM subtree of a segment, so nothing is lost to pruning."""
    node_id = snapshot.root.id if segment_id == VIRTUAL_ROOT_ID else segment_id
    return outer_html(snapshot, node_id)


def representative(segment: SegmentNode) -> SegmentNode | None:
    """Largest item subtree, first in document order on ties."""
    if not segment.children:
        return None
    return max(segment.children, key=lambda c: c.tree.size())


def _contexts(segment: SegmentNode) -> list[dict[str, str]]:
    return [a.context.to_dict() for a in segment.ancestors() if a.context is not None]


def _title(segment: SegmentNode) -> str:
    return segment.context.title if segment.context else segment.tag


class Abstractor:
    def __init__(
        self,
        gateway: Gateway,
        snapshot: PageSnapshot,
        vocabulary: TemplateVocabulary | None = None,
        workers: int = 1,
    ):
        self.gateway = gateway
        self.snapshot = snapshot
        self.vocabulary = vocabulary or TemplateVocabulary.load()
        self.workers = max(1, workers)
        self.warnings: list[str] = []
        self.transform_calls = 0

    # -- single component ------------------------------------------------------

    def _parse(self, value: Any, strict: bool) -> AbstractNode:
        node = AbstractNode.from_dict(value)
        if strict:
            unknown = unknown_templates(node, self.vocabulary)
            if unknown:
                raise ValueError(f"unknown templates {unknown}; use only the listed templates")
        return node

    def transform_component(
        self,
        segment: SegmentNode,
        html_snippet: str | None = None,
        rendering: np.ndarray | None = None,
        ancestor_contexts: list[dict[str, str]] | None = None,
    ) -> AbstractNode:
        if html_snippet is None:
            html_snippet = segment_html(self.snapshot, segment.id)
        if rendering is None:
            rendering = crop_rendering(self.snapshot, segment.tree)
        if ancestor_contexts is None:
            ancestor_contexts = _contexts(segment)
        context = segment.context or SegmentContext(segment.tag, "")
        request = transform_request(
            segment.id,
            context.title,
            context.context,
            html_snippet,
            rendering,
            ancestor_contexts,
            self.vocabulary.prompt_text(),
            self.vocabulary.names,
            self.gateway.model,
            self.gateway.temperature,
        )
        self.transform_calls += 1
        try:
            node = self.gateway.complete_json(request, lambda v: self._parse(v, strict=True))
        except ResponseFormatError as exc:
            # still unusable after the repair round: keep the structure, demote unknown names
            node = self._parse(extract_json(exc.text), strict=False)
            replaced = substitute_unknown(node, self.vocabulary)
            self.warnings.append(
                f"segment {segment.id}: unknown templates {sorted(set(replaced))} replaced by Container"
            )
        node.segment = segment.id
        node.role = "component"
        node.context = context.context or None
        if not node.name:
            node.name = context.title
        return node

    # -- composition -----------------------------------------------------------

    def _shell(self, segment: SegmentNode, template: str, role: str) -> AbstractNode:
        ctx = segment.context
        return AbstractNode(
            template,
            name=_title(segment),
            segment=segment.id,
            role=role,
            context=ctx.context if ctx else None,
        )

    def transform_list(self, segment: SegmentNode, done: dict[str, AbstractNode] | None = None) -> AbstractNode:
        node = self._shell(segment, "List", "list")
        node.count = len(segment.children)
        rep = representative(segment)
        if rep is None:
            self.warnings.append(f"segment {segment.id}: empty List")
            return node
        child = done.get(rep.id) if done else None
        node.children = [child if child is not None else self.transform_component(rep)]
        return node

    def transform_container(self, segment: SegmentNode, children: list[AbstractNode]) -> AbstractNode:
        node = self._shell(segment, "Container", "container")
        node.children = list(children)
        if not children:
            self.warnings.append(f"segment {segment.id}: empty Container")
        return node

    def _jobs(self, root: SegmentNode) -> list[SegmentNode]:
        jobs = []
        for seg in root.preorder():
            if seg.seg_class is SegmentClass.COMPONENT and (
                seg.parent is None or seg.parent.seg_class is not SegmentClass.LIST
            ):
                jobs.append(seg)
            elif seg.seg_class is SegmentClass.LIST:
                rep = representative(seg)
                if rep is not None:
                    jobs.append(rep)
        return jobs

    def transform_page(self, root: SegmentNode) -> AbstractionResult:
        jobs = self._jobs(root)
        if self.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(self.transform_component, jobs))
        else:
            results = [self.transform_component(j) for j in jobs]
        done = {seg.id: node for seg, node in zip(jobs, results)}

        built: dict[str, AbstractNode] = {}
        stack: list[tuple[SegmentNode, bool]] = [(root, False)]
        while stack:
            seg, ready = stack.pop()
            if seg.seg_class is SegmentClass.COMPONENT:
                built[seg.id] = done[seg.id]
            elif seg.seg_class is SegmentClass.LIST:
                built[seg.id] = self.transform_list(seg, done)
            elif not ready:
                stack.append((seg, True))
                stack.extend((c, False) for c in reversed(seg.children))
            else:
                built[seg.id] = self.transform_container(seg, [built[c.id] for c in seg.children])
        page = built[root.id]
        if page.role == "container":
            page.role = "page"
            if self.snapshot.title:
                page.name = self.snapshot.title
        return AbstractionResult(page, list(self.warnings), self.transform_calls)


def component_nodes(root: AbstractNode) -> list[tuple[AbstractNode, AbstractNode | None]]:
    """Transformed components in document order, each with its enclosing List node (if any)."""
    out: list[tuple[AbstractNode, AbstractNode | None]] = []

    def visit(node: AbstractNode, parent: AbstractNode | None) -> None:
        if node.role == "component":
            out.append((node, parent if parent is not None and parent.role == "list" else None))
            return
        for child in node.children:
            visit(child, node)

    visit(root, None)
    return out


def ancestor_chain(root: AbstractNode, target: AbstractNode) -> list[AbstractNode]:
    """Abstraction nodes strictly above ``target``, outermost first."""
    path: list[AbstractNode] = []

    def visit(node: AbstractNode) -> bool:
        if node is target:
            return True
        path.append(node)
        for child in node.children:
            if visit(child):
                return True
        path.pop()
        return False

    return path if visit(root) else []
