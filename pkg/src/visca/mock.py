"""Deterministic stand-in for a multimodal model.

It answers from the structured input block of each prompt using fixed rules:

* classify: ``List`` when the segment has two or more children that are all
  structurally identical, ``Container`` when it has two or more children with
  differing tags, ``Component`` otherwise. The title is the longest text in the
  segment, cut to 40 characters.
* transform: a tag rule table over the segment HTML (img -> Image, a -> Link,
  button -> Button, input -> Input, table -> Table, ul/ol -> List,
  nav -> Navbar, ...); generic elements become Card at the segment root and
  Container below it, with loose text folded into attributes.
* features: one feature per interactive element of the component.
"""

from __future__ import annotations

import json
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from html.parser import HTMLParser
from itertools import combinations
from typing import Any

from .gateway import CompletionRequest
from .prompts import read_input_block
from .snapshot import ID_ATTR, VOID_TAGS
from .ted import tree_edit_distance

TITLE_LIMIT = 40

STOPWORDS = frozenset(
    "the and for with your you our are from this that all over into its has have was were not "
    "but can any new more about out off per via now get".split()
)


@dataclass
class El:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list[El] = field(default_factory=list)

    @property
    def node(self) -> str | None:
        return self.attrs.get(ID_ATTR)

    def all_text(self) -> str:
        parts = [self.text] if self.text else []
        parts += [c.all_text() for c in self.children]
        return " ".join(p for p in parts if p)


class _SnippetParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = El("#root")
        self.stack = [self.root]

    def handle_starttag(self, tag, attrs):
        el = El(tag, {k: (v or "") for k, v in attrs})
        self.stack[-1].children.append(el)
        if tag not in VOID_TAGS:
            self.stack.append(el)

    def handle_startendtag(self, tag, attrs):
        self.stack[-1].children.append(El(tag, {k: (v or "") for k, v in attrs}))

    def handle_endtag(self, tag):
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                break

    def handle_data(self, data):
        text = " ".join(data.split())
        if text:
            cur = self.stack[-1]
            cur.text = f"{cur.text} {text}".strip()


def parse_snippet(html_text: str) -> El:
    parser = _SnippetParser()
    parser.feed(html_text)
    parser.close()
    kids = parser.root.children
    return kids[0] if len(kids) == 1 else parser.root


def _outline_kids(outline: dict) -> list[dict]:
    return outline.get("children", [])


def _outline_tag(outline: dict) -> str:
    return outline["tag"]


def classify_by_rule(children: list[dict]) -> str:
    if len(children) >= 2:
        identical = all(
            tree_edit_distance(a, b, _outline_tag, _outline_kids) == 0
            for a, b in combinations(children, 2)
        )
        if identical:
            return "List"
        if len({c["tag"] for c in children}) > 1:
            return "Container"
    return "Component"


def longest_text(texts: list[str]) -> str:
    best = ""
    for t in texts:
        t = " ".join(t.split())
        if len(t) > len(best):
            best = t
    return best[:TITLE_LIMIT].rstrip()


def dominant_word(texts: list[str]) -> str | None:
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    for t in texts:
        for w in re.findall(r"[a-z]{3,}", t.lower()):
            if w in STOPWORDS:
                continue
            counts[w] += 1
            first_seen.setdefault(w, len(first_seen))
    if not counts:
        return None
    return min(counts, key=lambda w: (-counts[w], first_seen[w]))


# -- transform rule table ------------------------------------------------------

BUTTON_INPUT_TYPES = {"button", "submit", "reset"}
GENERIC_WITH_TEMPLATE = {"nav": "Navbar", "footer": "Footer", "form": "Form", "li": "ListItem"}


def _fold(node: dict, texts: list[str]) -> None:
    for t in texts:
        key, k = "text", 1
        while key in node["attrs"]:
            k += 1
            key = f"text_{k}"
        node["attrs"][key] = t


def _node(template: str, el: El, name: str = "", **attrs: str) -> dict:
    out = {"template": template, "name": name, "attrs": {k: v for k, v in attrs.items() if v}, "children": []}
    if el.node:
        out["node"] = el.node
    return out


def _with_children(node: dict, el: El, own_text: bool = True) -> dict:
    loose = [el.text] if own_text and el.text else []
    for child in el.children:
        nodes, texts = convert(child)
        node["children"].extend(nodes)
        loose.extend(texts)
    _fold(node, loose)
    return node


def convert(el: El, root: bool = False) -> tuple[list[dict], list[str]]:
    """Map one element to abstraction nodes plus texts the caller should fold in."""
    tag = el.tag
    a = el.attrs
    if tag == "img":
        name = a.get("alt", "")
        return [_node("Image", el, name, src=a.get("src", ""), alt=a.get("alt", ""))], []
    if tag == "a":
        link = _node("Link", el, el.all_text(), href=a.get("href", ""))
        for child in el.children:
            nodes, _ = convert(child)
            link["children"].extend(nodes)
        return [link], []
    if tag == "button" or (tag == "input" and a.get("type", "").lower() in BUTTON_INPUT_TYPES):
        label = el.all_text() or a.get("value", "") or a.get("aria-label", "")
        return [_node("Button", el, label, value=a.get("value", ""), type=a.get("type", ""))], []
    if tag == "input":
        kind = a.get("type", "text").lower()
        template = {"checkbox": "Checkbox", "radio": "Radio", "search": "SearchBar"}.get(kind, "Input")
        label = a.get("placeholder") or a.get("aria-label") or a.get("name") or kind
        return [
            _node(
                template, el, label,
                placeholder=a.get("placeholder", ""), value=a.get("value", ""),
                type=a.get("type", ""), field=a.get("name", ""),
            )
        ], []
    if tag == "textarea":
        label = a.get("placeholder") or a.get("aria-label") or a.get("name") or "text"
        return [_node("Textarea", el, label, placeholder=a.get("placeholder", ""), value=el.text)], []
    if tag == "select":
        options = [o.all_text() for o in el.children if o.tag == "option"]
        chosen = next((o.all_text() for o in el.children if "selected" in o.attrs), options[0] if options else "")
        label = a.get("aria-label") or a.get("name") or "options"
        return [_node("Select", el, label, options=" | ".join(options), value=chosen, field=a.get("name", ""))], []
    if tag == "table":
        table = _node("Table", el)
        _fold(table, _texts(el))
        # cells keep their links and buttons so they stay addressable
        for cell_el in _descendants(el):
            if cell_el.tag in ("a", "button", "input", "select", "textarea", "img"):
                table["children"].extend(convert(cell_el)[0])
        return [table], []
    if tag in ("ul", "ol"):
        items = [c for c in el.children]
        node = _with_children(_node("List", el), el)
        node["count"] = len(items)
        return [node], []
    if tag in GENERIC_WITH_TEMPLATE and not (root and tag == "li"):
        return [_with_children(_node(GENERIC_WITH_TEMPLATE[tag], el), el)], []
    # generic element
    kids = el.children
    if len(kids) == 1 and not el.text:
        return convert(kids[0], root)
    if root:
        return [_with_children(_node("Card", el), el)], []
    if not kids:
        return [], [el.text] if el.text else []
    return [_with_children(_node("Container", el), el)], []


def _descendants(el: El):
    """Elements below ``el`` that are not nested inside another addressable element."""
    for c in el.children:
        yield c
        if c.tag not in ("a", "button", "select", "textarea"):
            yield from _descendants(c)


def _texts(el: El) -> list[str]:
    out = [el.text] if el.text else []
    for c in el.children:
        out.extend(_texts(c))
    return out


def transform_by_rule(html_text: str, title: str) -> dict:
    root = parse_snippet(html_text)
    nodes, texts = convert(root, root=True)
    if not nodes:
        node = {"template": "Card", "name": title, "attrs": {}, "children": []}
        _fold(node, texts)
        return node
    top = nodes[0]
    if not top["name"]:
        top["name"] = longest_text(_texts(root)) or title
    return top


# -- features ------------------------------------------------------------------

CLICK = {"Button", "Link", "Checkbox", "Radio", "Switch", "Tab", "Chip", "Pagination"}
TYPE = {"Input", "Textarea", "SearchBar", "DatePicker"}
SELECT = {"Select", "Dropdown"}
INTERACTIVE = CLICK | TYPE | SELECT
SAMPLE_TEXT = "sample text"


def _interactive(node: dict) -> list[dict]:
    found = []
    for child in node.get("children", []):
        if child.get("template") in INTERACTIVE:
            found.append(child)
        else:
            found.extend(_interactive(child))
    return found


def features_by_rule(component: dict, list_segment: str | None) -> list[dict]:
    comp_name = component.get("name") or component.get("template", "component")
    targets = [component] if component.get("template") in INTERACTIVE else _interactive(component)
    assert_node = list_segment or component.get("segment") or component.get("node")
    if list_segment:
        hint = f"The list holding {comp_name} is still visible"
    else:
        hint = f"{comp_name} is still visible"
    out = []
    for t in targets:
        template = t["template"]
        attrs = t.get("attrs", {})
        label = t.get("name") or attrs.get("value") or attrs.get("placeholder") or template
        action: dict[str, Any] = {"node": t.get("node")}
        if template == "Link":
            name = f"Navigate to {label} from {comp_name}"
            action["kind"] = "click"
        elif template in TYPE:
            name = f"Enter {label} in {comp_name}"
            action.update(kind="type", value=SAMPLE_TEXT)
        elif template in SELECT:
            name = f"Select {label} in {comp_name}"
            options = [o.strip() for o in attrs.get("options", "").split("|") if o.strip()]
            action.update(kind="select", value=options[0] if options else attrs.get("value", "option"))
        elif template == "Button":
            name = f"{label} in {comp_name}"
            action["kind"] = "click"
        else:
            name = f"Toggle {label} in {comp_name}"
            action["kind"] = "click"
        out.append({"name": name, "actions": [action], "assertion_hint": hint, "assert_node": assert_node})
    return out


class MockProvider:
    """Thread-safe rule-based provider with a call log for assertions."""

    name = "mock"

    def __init__(self):
        self.calls: list[tuple[str, str | None]] = []
        self._lock = threading.Lock()

    def count(self, task: str) -> int:
        return sum(1 for t, _ in self.calls if t == task)

    def send(self, request: CompletionRequest) -> tuple[str, dict[str, int] | None]:
        payload = read_input_block(request.text)
        if payload is None:
            raise ValueError("mock provider needs a structured input block")
        task = payload["task"]
        with self._lock:
            subject = payload.get("segment", {}).get("id") if task == "classify" else payload.get("segment_id")
            self.calls.append((task, subject))
        answer = getattr(self, f"_{task}")(payload)
        return json.dumps(answer, ensure_ascii=False, sort_keys=True), None

    def _describe_page(self, p: dict) -> dict:
        title = p.get("title") or ""
        word = dominant_word([title] + list(p.get("texts", [])))
        head = title or "Unknown page"
        if word:
            return {"description": f"{head}. A page mainly about {word}."}
        return {"description": head}

    def _classify(self, p: dict) -> dict:
        seg = p["segment"]
        cls = classify_by_rule(seg.get("children", []))
        title = longest_text(seg.get("texts", [])) or f"{seg.get('tag', 'page')} section"
        where = p.get("ancestors") or []
        parent = where[-1]["title"] if where else "the page"
        phrase = {
            "Container": "groups several page sections",
            "List": "repeats one kind of item",
            "Component": "is a self-contained UI component",
        }[cls]
        return {
            "reasoning": f"{len(seg.get('children', []))} child segments; rule gives {cls}.",
            "class": cls,
            "title": title,
            "context": f"This segment {phrase} within {parent}.",
        }

    def _transform(self, p: dict) -> dict:
        return transform_by_rule(p["html"], p.get("title", ""))

    def _features(self, p: dict) -> dict:
        return {"features": features_by_rule(p["component"], p.get("list_segment"))}
