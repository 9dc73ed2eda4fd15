from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import make_snapshot, node
from visca.classify import describe_page
from visca.gateway import CompletionRequest, Gateway, TextPart
from visca.mock import (
    MockProvider,
    classify_by_rule,
    features_by_rule,
    longest_text,
    parse_snippet,
    transform_by_rule,
)
from visca.prompts import classification_request, input_block, read_input_block
from visca.snapshot import load_snapshot


def leaf(tag):
    return {"tag": tag, "children": []}


def card():
    return {"tag": "li", "children": [leaf("img"), leaf("a")]}


def test_classification_rules():
    assert classify_by_rule([card(), card(), card()]) == "List"
    assert classify_by_rule([leaf("h1"), card()]) == "Container"
    assert classify_by_rule([card()]) == "Component"
    assert classify_by_rule([]) == "Component"
    # same tags, different shapes: neither identical nor heterogeneous
    assert classify_by_rule([card(), leaf("li")]) == "Component"


def test_longest_text_truncates():
    assert longest_text(["ab", "  a   much   longer text  ", "xyz"]) == "a much longer text"
    assert len(longest_text(["x" * 100])) == 40
    assert longest_text([]) == ""


def test_input_block_round_trip():
    payload = {"task": "classify", "segment": {"id": "n1", "children": []}}
    text = "preamble\n" + input_block(payload) + "\ntrailer"
    assert read_input_block(text) == payload
    assert read_input_block("nothing") is None


def test_lone_image():
    node = transform_by_rule('<img src="logo.png" data-vid="n4">', "Logo")
    assert node["template"] == "Image"
    assert node["attrs"]["src"] == "logo.png"
    assert node["node"] == "n4"


def test_cart_item_card():
    html = (
        '<li class="cart-item" data-vid="n16">'
        '<img src="/img/a.jpg" data-vid="n17">'
        '<a href="/p/a" data-vid="n18">Clean Code</a>'
        '<span data-vid="n19">$37.99</span>'
        '<button data-vid="n20">Delete</button>'
        "</li>"
    )
    node = transform_by_rule(html, "Cart item")
    assert node["template"] == "Card"
    assert [c["template"] for c in node["children"]] == ["Image", "Link", "Button"]
    assert node["children"][2]["name"] == "Delete"
    assert node["children"][1]["attrs"]["href"] == "/p/a"
    assert "$37.99" in json.dumps(node)


def test_parse_snippet_handles_void_tags():
    root = parse_snippet('<div><input type="text"><img src="x.png"><p>t</p></div>')
    assert [c.tag for c in root.children] == ["input", "img", "p"]


def test_feature_names_follow_template_and_name():
    comp = {
        "template": "Card",
        "name": "Shopping Cart Item",
        "segment": "n16",
        "children": [{"template": "Button", "name": "Delete Cart Item", "attrs": {}, "node": "n20", "children": []}],
    }
    feats = features_by_rule(comp, None)
    assert [f["name"] for f in feats] == ["Delete Cart Item in Shopping Cart Item"]
    assert feats[0]["actions"] == [{"node": "n20", "kind": "click"}]
    assert feats[0]["assert_node"] == "n16"


def test_navbar_links_give_one_feature_each():
    links = [{"template": "Link", "name": n, "attrs": {}, "node": f"n{i}", "children": []} for i, n in enumerate("ABC")]
    nav = {"template": "Navbar", "name": "Top", "children": links}
    assert [f["name"] for f in features_by_rule(nav, None)] == [
        "Navigate to A from Top",
        "Navigate to B from Top",
        "Navigate to C from Top",
    ]


def test_mock_answers_classification_through_a_prompt():
    provider = MockProvider()
    seg = {"id": "n1", "tag": "ul", "children": [card(), card()], "texts": ["Item one", "Item"]}
    req = classification_request(seg, np.zeros((2, 2, 3), np.uint8), "ctx", [], "mock")
    answer = json.loads(provider.send(req)[0])
    assert answer["class"] == "List"
    assert answer["title"] == "Item one"
    assert provider.calls == [("classify", "n1")]


def test_mock_needs_structured_input():
    with pytest.raises(ValueError):
        MockProvider().send(CompletionRequest("m", [TextPart("free text")]))


def test_page_description(mini_cart):
    gw = Gateway(MockProvider())
    text = describe_page(load_snapshot(mini_cart), gw)
    assert "Mini Cart" in text
    assert "cart" in text.lower().replace("mini cart", "")


def test_blank_page_description():
    snap = make_snapshot([node("r", None, "html", (0, 0, 100, 100))])
    assert describe_page(snap, Gateway(MockProvider())) == "Unknown page"
