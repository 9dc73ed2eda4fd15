"""Component abstraction: template vocabulary, node tree and JSX-like markup."""

from __future__ import annotations

import html
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterator

# keys with a dedicated slot on AbstractNode; model attrs using them are renamed
RESERVED = ("name", "count", "node", "segment", "role", "context")
MARKUP_FIELDS = ("name", "count", "node")


@dataclass(frozen=True)
class Template:
    name: str
    definition: str
    attributes: tuple[str, ...] = ()


class TemplateVocabulary:
    SIZE = 50

    def __init__(self, templates: list[Template]):
        names = [t.name for t in templates]
        if len(names) != self.SIZE:
            raise ValueError(f"vocabulary needs exactly {self.SIZE} templates, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError("template names must be unique")
        missing = {"Card", "Table", "Navbar", "Tab", "Container", "List", "Image", "Input", "Button"} - set(names)
        if missing:
            raise ValueError(f"vocabulary lacks required templates: {sorted(missing)}")
        self.templates = list(templates)
        self._by_name = {t.name: t for t in templates}

    @classmethod
    def load(cls, path: str | Path | None = None) -> TemplateVocabulary:
        if path is None:
            text = resources.files("visca").joinpath("vocabulary.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text)
        return cls(
            [Template(t["name"], t.get("definition", ""), tuple(t.get("attributes", []))) for t in data["templates"]]
        )

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.templates]

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self.templates)

    def __getitem__(self, name: str) -> Template:
        return self._by_name[name]

    def prompt_text(self) -> str:
        lines = []
        for t in self.templates:
            hint = f" (attributes: {', '.join(t.attributes)})" if t.attributes else ""
            lines.append(f"- {t.name}: {t.definition}{hint}")
        return "\n".join(lines)


@dataclass(eq=True)
class AbstractNode:
    template: str
    name: str = ""
    attrs: dict[str, str] = field(default_factory=dict)
    children: list[AbstractNode] = field(default_factory=list)
    count: int | None = None
    node: str | None = None  # DOM node id the element was grounded on
    segment: str | None = None  # source segment id
    role: str | None = None  # page | container | list | component
    context: str | None = None

    def walk(self) -> Iterator[AbstractNode]:
        stack = [self]
        while stack:
            cur = stack.pop()
            yield cur
            stack.extend(reversed(cur.children))

    def strings(self) -> list[str]:
        """Every name and attribute value in the subtree."""
        out = []
        for n in self.walk():
            if n.name:
                out.append(n.name)
            out.extend(v for v in n.attrs.values() if v)
        return out

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"template": self.template, "name": self.name, "attrs": dict(self.attrs)}
        for key in ("count", "node", "segment", "role", "context"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out["children"] = [c.to_dict() for c in self.children]
        return out

    @classmethod
    def from_dict(cls, data: Any) -> AbstractNode:
        """Build from JSON; strict about shape, lenient about attribute value types."""
        if not isinstance(data, dict):
            raise ValueError("abstraction node must be an object")
        template = data.get("template")
        if not isinstance(template, str) or not template:
            raise ValueError("abstraction node needs a template name")
        raw_attrs = data.get("attrs")
        raw_attrs = {} if raw_attrs is None else raw_attrs
        if not isinstance(raw_attrs, dict):
            raise ValueError("attrs must be an object")
        attrs: dict[str, str] = {}
        for key, value in raw_attrs.items():
            if value is None or isinstance(value, (dict, list)):
                continue
            key = str(key)
            if key in RESERVED:
                key = f"{key}_attr"
            attrs[key] = value if isinstance(value, str) else json.dumps(value)
        kids = data.get("children")
        kids = [] if kids is None else kids
        if not isinstance(kids, list):
            raise ValueError("children must be a list")
        count = data.get("count")
        if count is not None and (isinstance(count, bool) or not isinstance(count, int) or count < 0):
            raise ValueError("count must be a non-negative integer")
        name = data.get("name") or ""
        return cls(
            template=template,
            name=name if isinstance(name, str) else str(name),
            attrs=attrs,
            children=[cls.from_dict(c) for c in kids],
            count=count,
            node=_opt_str(data.get("node")),
            segment=_opt_str(data.get("segment")),
            role=_opt_str(data.get("role")),
            context=_opt_str(data.get("context")),
        )


def _opt_str(value: Any) -> str | None:
    return None if value is None else str(value)


def unknown_templates(root: AbstractNode, vocabulary: TemplateVocabulary) -> list[str]:
    return sorted({n.template for n in root.walk() if n.template not in vocabulary})


def substitute_unknown(root: AbstractNode, vocabulary: TemplateVocabulary) -> list[str]:
    """Replace unknown templates with Container in place; returns the names replaced."""
    replaced = []
    for n in root.walk():
        if n.template not in vocabulary:
            replaced.append(n.template)
            n.template = "Container"
    return replaced


# -- markup ------------------------------------------------------------------


def _markup_attrs(node: AbstractNode) -> list[tuple[str, str]]:
    pairs = [(k, v) for k, v in node.attrs.items()]
    if node.name:
        pairs.append(("name", node.name))
    if node.count is not None:
        pairs.append(("count", str(node.count)))
    if node.node is not None:
        pairs.append(("node", node.node))
    return sorted(pairs)


def render_markup(root: AbstractNode) -> str:
    """JSX-like text; 2-space indent, attributes sorted by name, values escaped."""
    lines: list[str] = []

    def emit(node: AbstractNode, depth: int) -> None:
        pad = "  " * depth
        attrs = "".join(f' {k}="{html.escape(v, quote=True)}"' for k, v in _markup_attrs(node))
        if not node.children:
            lines.append(f"{pad}<{node.template}{attrs} />")
            return
        lines.append(f"{pad}<{node.template}{attrs}>")
        for child in node.children:
            emit(child, depth + 1)
        lines.append(f"{pad}</{node.template}>")

    emit(root, 0)
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(
    r"<(?P<close>/)?(?P<tag>[A-Za-z][\w.]*)(?P<attrs>(?:\s+[^\s=/>]+=\"[^\"]*\")*)\s*(?P<self>/)?>"
)
_ATTR = re.compile(r"([^\s=/>]+)=\"([^\"]*)\"")


def parse_markup(text: str) -> AbstractNode:
    """Inverse of :func:`render_markup` (fields outside the markup are not recovered)."""
    stack: list[AbstractNode] = []
    root: AbstractNode | None = None
    pos = 0
    for m in _TOKEN.finditer(text):
        if text[pos : m.start()].strip():
            raise ValueError(f"unexpected text at offset {pos}")
        pos = m.end()
        tag = m.group("tag")
        if m.group("close"):
            if not stack or stack[-1].template != tag:
                raise ValueError(f"unbalanced closing tag </{tag}>")
            stack.pop()
            continue
        node = AbstractNode(tag)
        for key, raw in _ATTR.findall(m.group("attrs")):
            value = html.unescape(raw)
            if key == "name":
                node.name = value
            elif key == "count":
                node.count = int(value)
            elif key == "node":
                node.node = value
            else:
                node.attrs[key] = value
        if stack:
            stack[-1].children.append(node)
        elif root is None:
            root = node
        else:
            raise ValueError("markup has more than one root element")
        if not m.group("self"):
            stack.append(node)
    if text[pos:].strip() or stack or root is None:
        raise ValueError("incomplete markup")
    return root
