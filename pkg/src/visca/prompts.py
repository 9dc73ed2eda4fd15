"""Prompt templates.

Every prompt ends with a structured input block delimited by ``<<<INPUT`` and
``INPUT>>>``. Models get the block as grounding; the mock provider reads it to
answer deterministically.
"""

from __future__ import annotations

import json
from typing import Any, Sequence

import numpy as np

from .gateway import CompletionRequest, ImagePart, TextPart

INPUT_OPEN = "<<<INPUT"
INPUT_CLOSE = "INPUT>>>"

CATEGORY_DEFINITIONS = """\
Segment categories:
- Container: an organizational grouping of sub-segments by layout or page structure, without strong semantic cohesion among them. A Container may hold segments of any category.
- List: a grouping whose sub-segments are multiple instances of the same conceptual entity or fill the same role. A List holds only Components, all instances of a single template.
- Component: an instance of a common UI template forming one coherent unit of information and functionality. A Component may nest Lists or smaller Components."""


def input_block(payload: dict[str, Any]) -> str:
    return f"{INPUT_OPEN}\n{json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=1)}\n{INPUT_CLOSE}"


def read_input_block(text: str) -> dict[str, Any] | None:
    start = text.find(INPUT_OPEN)
    if start < 0:
        return None
    end = text.find(INPUT_CLOSE, start)
    if end < 0:
        return None
    return json.loads(text[start + len(INPUT_OPEN) : end])


def _request(model, parts, temperature, max_output) -> CompletionRequest:
    return CompletionRequest(model=model, parts=tuple(parts), temperature=temperature, max_output=max_output)


def _ancestors_text(ancestors: Sequence[dict[str, str]]) -> str:
    if not ancestors:
        return "(this segment has no classified ancestors)"
    return "\n".join(f"{i + 1}. {a['title']}: {a['context']}" for i, a in enumerate(ancestors))


def page_description_request(
    screenshot: np.ndarray,
    title: str,
    texts: Sequence[str],
    model: str,
    temperature: float = 0.0,
    max_output: int = 1024,
) -> CompletionRequest:
    instructions = (
        "You are analysing a screenshot of a web application page.\n"
        "Describe in one or two sentences what this page is for and what a user can do on it.\n"
        'Reply with JSON only: {"description": "..."}'
    )
    payload = {"task": "describe_page", "title": title, "texts": list(texts)[:200]}
    return _request(
        model,
        [TextPart(instructions), ImagePart.from_array(screenshot), TextPart(input_block(payload))],
        temperature,
        max_output,
    )


def classification_request(
    segment: dict[str, Any],
    rendering: np.ndarray,
    page_context: str,
    ancestors: Sequence[dict[str, str]],
    model: str,
    temperature: float = 0.0,
    max_output: int = 2048,
) -> CompletionRequest:
    instructions = (
        "You classify one segment of a web page.\n\n"
        f"{CATEGORY_DEFINITIONS}\n\n"
        f"Page context: {page_context}\n\n"
        f"Ancestor segments, outermost first:\n{_ancestors_text(ancestors)}\n\n"
        "The image shows the segment's visual rendering. Think step by step: look at how "
        "homogeneous its content and structure are, whether its parts repeat one template, "
        "and whether it forms one functional unit. Then pick the category, and give the "
        "segment a short title and a one to three sentence description of its role on "
        "this page.\n"
        'Reply with JSON only: {"reasoning": "...", "class": "Container|List|Component", '
        '"title": "...", "context": "..."}'
    )
    payload = {
        "task": "classify",
        "segment": segment,
        "page_context": page_context,
        "ancestors": list(ancestors),
    }
    return _request(
        model,
        [TextPart(instructions), ImagePart.from_array(rendering), TextPart(input_block(payload))],
        temperature,
        max_output,
    )


def transform_request(
    segment_id: str,
    title: str,
    context: str,
    html_snippet: str,
    rendering: np.ndarray,
    ancestors: Sequence[dict[str, str]],
    vocabulary_text: str,
    vocabulary_names: Sequence[str],
    model: str,
    temperature: float = 0.0,
    max_output: int = 4096,
) -> CompletionRequest:
    instructions = (
        "You convert one UI component of a web page into a component abstraction built only "
        "from the common templates listed below.\n\n"
        f"Common templates:\n{vocabulary_text}\n\n"
        f"This segment: {title}: {context}\n"
        f"Ancestor segments, outermost first:\n{_ancestors_text(ancestors)}\n\n"
        "The image shows the segment's rendering; the HTML below is its source. Keep the "
        "essential text, link targets (href), image sources (src), input placeholders and "
        "values as attributes. Elements carry a data-vid attribute; copy it into \"node\" "
        "for every element you represent.\n"
        'Reply with JSON only: {"template": "...", "name": "...", "attrs": {...}, '
        '"node": "...", "children": [ ...same shape... ]}'
    )
    payload = {
        "task": "transform",
        "segment_id": segment_id,
        "title": title,
        "context": context,
        "html": html_snippet,
        "templates": list(vocabulary_names),
    }
    return _request(
        model,
        [TextPart(instructions), ImagePart.from_array(rendering), TextPart(input_block(payload))],
        temperature,
        max_output,
    )


def feature_request(
    component: dict[str, Any],
    markup: str,
    page_context: str,
    ancestors: Sequence[dict[str, str]],
    list_segment: str | None,
    model: str,
    temperature: float = 0.0,
    max_output: int = 4096,
) -> CompletionRequest:
    instructions = (
        "Below is one component of a web application, written as a component abstraction. "
        "List the application features a user can exercise through this component's "
        "interactive elements (buttons, links, inputs, selects, ...). Name each feature as "
        "an imperative phrase and give the action sequence that exercises it.\n\n"
        f"Page context: {page_context}\n"
        f"Where the component sits, outermost first:\n{_ancestors_text(ancestors)}\n\n"
        f"Component:\n{markup}\n\n"
        'Reply with JSON only: {"features": [{"name": "...", "actions": [{"kind": '
        '"click|type|select", "node": "<node id>", "value": "..."}], '
        '"assertion_hint": "...", "assert_node": "<node id>"}]}'
    )
    payload = {
        "task": "features",
        "component": component,
        "page_context": page_context,
        "ancestors": list(ancestors),
        "list_segment": list_segment,
    }
    return _request(model, [TextPart(instructions), TextPart(input_block(payload))], temperature, max_output)
