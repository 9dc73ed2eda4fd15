"""Regenerate the bundled snapshot fixtures.

Each fixture is declared once as a tree of boxes. From it this script writes
the bundle (manifest.json, page.html, screenshot.png) plus the hand-labelled
segmentation truth (truth.json) and ground-truth feature list (features.yaml).

    python3 tools/build_fixtures.py            # writes src/visca/fixtures/
"""

from __future__ import annotations

import argparse
import html
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image, ImageDraw

from visca.snapshot import BBox, NodeRecord, PageSnapshot, VOID_TAGS, save_snapshot

OUT = Path(__file__).resolve().parents[1] / "src" / "visca" / "fixtures"

WHITE = (255, 255, 255)
DARK = (35, 47, 62)
GRAY = (242, 242, 242)
INK = (20, 20, 20)
LIGHT_INK = (230, 230, 230)
BLUE = (0, 102, 192)
ORANGE = (255, 153, 0)


@dataclass
class Box:
    tag: str
    xywh: tuple[int, int, int, int] = (0, 0, 0, 0)
    attrs: dict[str, str] = field(default_factory=dict)
    text: str | None = None
    fill: tuple[int, int, int] | str | None = None  # colour, "stripes", "picture"
    ink: tuple[int, int, int] = INK
    visible: bool = True
    children: list[Box] = field(default_factory=list)
    cluster: str | None = None  # truth label for every leaf below

    def __post_init__(self):
        if not self.visible:
            self.xywh = (0, 0, 0, 0)


def B(tag, xywh=(0, 0, 0, 0), *children, **kw) -> Box:
    attrs = kw.pop("attrs", {})
    return Box(tag, xywh, dict(attrs), children=list(children), **kw)


def hidden(tag, *children, **kw) -> Box:
    return B(tag, (0, 0, 0, 0), *children, visible=False, **kw)


# -- rendering -------------------------------------------------------------------


def _picture(draw: ImageDraw.ImageDraw, x, y, w, h, seed: int) -> None:
    rng = np.random.default_rng(seed)
    step = 6
    for yy in range(y, y + h, step):
        for xx in range(x, x + w, step):
            c = tuple(int(v) for v in rng.integers(60, 200, 3))
            draw.rectangle([xx, yy, min(xx + step, x + w) - 1, min(yy + step, y + h) - 1], fill=c)


def paint(root: Box, size: tuple[int, int]) -> np.ndarray:
    img = Image.new("RGB", size, WHITE)
    draw = ImageDraw.Draw(img)
    seed = [0]

    def visit(b: Box) -> None:
        if b.visible:
            x, y, w, h = b.xywh
            if b.fill == "stripes":
                for i, yy in enumerate(range(y, y + h, 4)):
                    draw.rectangle([x, yy, x + w - 1, min(yy + 4, y + h) - 1], fill=(250, 224, 178) if i % 2 else ORANGE)
            elif b.fill == "picture":
                seed[0] += 1
                _picture(draw, x, y, w, h, seed[0])
            elif b.fill is not None:
                draw.rectangle([x, y, x + w - 1, y + h - 1], fill=b.fill)
            if b.text:
                draw.text((x + 4, y + max(0, (h - 11) // 2)), b.text, fill=b.ink)
        for c in b.children:
            visit(c)

    visit(root)
    return np.asarray(img)


def flatten(root: Box) -> tuple[list[NodeRecord], dict[int, str]]:
    records: list[NodeRecord] = []
    ids: dict[int, str] = {}

    def visit(b: Box, parent: str | None) -> None:
        nid = f"n{len(records)}"
        ids[id(b)] = nid
        x, y, w, h = b.xywh
        records.append(NodeRecord(nid, parent, b.tag, dict(b.attrs), b.text, BBox(x, y, w, h), b.visible))
        for c in b.children:
            visit(c, nid)

    visit(root, None)
    return records, ids


def to_html(root: Box) -> str:
    def emit(b: Box, depth: int) -> list[str]:
        pad = "  " * depth
        attrs = "".join(f' {k}="{html.escape(v, quote=True)}"' for k, v in b.attrs.items())
        text = html.escape(b.text, quote=False) if b.text else ""
        if b.tag in VOID_TAGS:
            return [f"{pad}<{b.tag}{attrs}>"]
        if not b.children:
            return [f"{pad}<{b.tag}{attrs}>{text}</{b.tag}>"]
        lines = [f"{pad}<{b.tag}{attrs}>{text}"]
        for c in b.children:
            lines += emit(c, depth + 1)
        return lines + [f"{pad}</{b.tag}>"]

    return "<!DOCTYPE html>\n" + "\n".join(emit(root, 0)) + "\n"


def truth_labels(root: Box, ids: dict[int, str]) -> dict[str, str]:
    """Cluster label per labelled node; leaves inherit the nearest label when scored."""
    out: dict[str, str] = {}

    def visit(b: Box) -> None:
        if b.cluster is not None:
            out[ids[id(b)]] = b.cluster
        for c in b.children:
            visit(c)

    visit(root)
    return out


def write_fixture(name: str, root: Box, size, url: str, features: list[dict], out: Path = OUT) -> PageSnapshot:
    records, ids = flatten(root)
    snap = PageSnapshot(to_html(root), tuple(records), paint(root, size), size, url)
    target = out / name
    save_snapshot(snap, target)
    (target / "truth.json").write_text(json.dumps(truth_labels(root, ids), indent=2) + "\n", encoding="utf-8")
    (target / "features.yaml").write_text(
        yaml.safe_dump({"app": name, "features": features}, sort_keys=False, allow_unicode=True), encoding="utf-8"
    )
    return snap


# -- mini-cart ---------------------------------------------------------------------


def cart_item(i: int, title: str, slug: str, price: str) -> Box:
    y = 188 + i * 88
    return B(
        "li", (48, y, 704, 80),
        B("img", (56, y + 8, 64, 64), attrs={"src": f"/img/{slug}.jpg", "alt": ""}, fill="picture"),
        B("a", (136, y + 12, 320, 20), attrs={"class": "item-title", "href": f"/p/{slug}"}, text=title, ink=BLUE),
        B("span", (136, y + 44, 120, 20), attrs={"class": "price"}, text=price),
        B("button", (640, y + 28, 96, 28), attrs={"class": "delete"}, text="Delete", fill=GRAY),
        attrs={"class": "cart-item"}, fill=WHITE, cluster=f"item-{i + 1}",
    )


def mini_cart() -> Box:
    return B(
        "html", (0, 0, 800, 720),
        hidden("head", hidden("title", text="Mini Cart")),
        B(
            "body", (0, 0, 800, 720),
            B(
                "header", (0, 0, 800, 64),
                B(
                    "nav", (16, 8, 768, 48),
                    B("img", (24, 16, 32, 32), attrs={"class": "logo", "src": "/static/logo.png", "alt": "Mini Cart"},
                      fill="picture"),
                    B("span", (64, 20, 160, 24), attrs={"class": "brand"}, text="Mini Cart Store", ink=LIGHT_INK),
                    B("a", (520, 20, 64, 24), attrs={"href": "/"}, text="Home", ink=LIGHT_INK),
                    B("a", (600, 20, 64, 24), attrs={"href": "/deals"}, text="Deals", ink=LIGHT_INK),
                    B("a", (680, 20, 64, 24), attrs={"href": "/cart"}, text="Cart", ink=LIGHT_INK),
                    attrs={"id": "main-nav"}, fill=DARK,
                ),
                attrs={"class": "site-header"}, fill=DARK, cluster="header",
            ),
            B(
                "main", (0, 64, 800, 560),
                B(
                    "div", (24, 88, 752, 512),
                    B("h1", (48, 104, 704, 40), text="Your Shopping Cart (3 items)", cluster="heading"),
                    hidden(
                        "div",
                        B("ul", (40, 180, 720, 272),
                          cart_item(0, "Clean Code", "clean-code", "$37.99"),
                          cart_item(1, "Refactoring", "refactoring", "$42.50"),
                          cart_item(2, "Design Patterns", "design-patterns", "$54.00"),
                          attrs={"id": "cart-items", "class": "cart-list"}),
                        attrs={"class": "contents"},
                    ),
                    B(
                        "section", (40, 468, 720, 112),
                        B("div", (56, 484, 688, 80),
                          B("span", (72, 500, 320, 20), text="Free shipping over $25"),
                          B("a", (72, 532, 96, 20), attrs={"href": "/shipping"}, text="Details", ink=BLUE),
                          attrs={"class": "promo-body"}, fill=WHITE),
                        attrs={"class": "promo"}, fill="stripes", cluster="promo",
                    ),
                    attrs={"class": "page-wrapper"}, fill=WHITE,
                ),
                attrs={"id": "content"}, fill=GRAY,
            ),
            B(
                "footer", (0, 624, 800, 96),
                B("p", (16, 640, 320, 24), text="© 2024 Mini Cart", ink=LIGHT_INK),
                B("a", (16, 680, 64, 20), attrs={"href": "/help"}, text="Help", ink=LIGHT_INK),
                B("a", (96, 680, 80, 20), attrs={"href": "/contact"}, text="Contact", ink=LIGHT_INK),
                fill=DARK, cluster="footer",
            ),
            hidden("div", hidden("button", text="Close"), attrs={"id": "modal", "class": "modal"}),
            hidden("script", attrs={"src": "/static/app.js"}),
        ),
        attrs={"lang": "en"}, fill=WHITE,
    )


MINI_CART_FEATURES = [
    {"name": "Go to the home page", "keywords": ["home"]},
    {"name": "Browse deals", "keywords": ["deals"]},
    {"name": "Open the shopping cart", "keywords": ["navigate", "cart"]},
    {"name": "Open a product page", "keywords": ["navigate", "code"]},
    {"name": "Delete a product from the cart", "keywords": ["delete"]},
    {"name": "Read the shipping details", "keywords": ["details"]},
    {"name": "Get help", "keywords": ["help"]},
    {"name": "Contact the shop", "keywords": ["contact"]},
    {"name": "Apply a coupon code", "keywords": ["coupon"]},
]


# -- book-search -------------------------------------------------------------------


def result_card(i: int, title: str, slug: str, author: str, price: str) -> Box:
    y = 136 + i * 104
    return B(
        "div", (256, y, 528, 96),
        B("img", (264, y + 8, 60, 80), attrs={"src": f"/covers/{slug}.png", "alt": title}, fill="picture"),
        B("h3", (336, y + 8, 300, 22),
          B("a", (336, y + 8, 300, 22), attrs={"href": f"/books/{slug}"}, text=title, ink=BLUE)),
        B("p", (336, y + 36, 300, 20), attrs={"class": "author"}, text=author),
        B("span", (336, y + 64, 80, 20), attrs={"class": "price"}, text=price),
        B("button", (672, y + 56, 104, 28), attrs={"class": "add", "type": "button"}, text="Add to cart", fill=ORANGE),
        attrs={"class": "result-card"}, fill=WHITE, cluster=f"result-{i + 1}",
    )


def filter_row(i: int, key: str, label: str) -> Box:
    y = 136 + i * 32
    return B(
        "div", (16, y, 208, 28),
        B("input", (20, y + 6, 16, 16), attrs={"type": "checkbox", "id": f"f-{key}", "name": key}, fill=WHITE),
        B("label", (44, y + 4, 170, 20), attrs={"for": f"f-{key}"}, text=label),
        attrs={"class": "filter"}, fill=GRAY,
    )


def book_search() -> Box:
    options = [hidden("option", text=t, attrs={"value": t.lower()}) for t in ("All", "Fiction", "Science")]
    return B(
        "html", (0, 0, 800, 720),
        hidden("head", hidden("title", text="Book Search")),
        B(
            "body", (0, 0, 800, 720),
            B(
                "header", (0, 0, 800, 72),
                B("a", (16, 16, 40, 40), B("img", (16, 16, 40, 40), attrs={"src": "/static/owl.png", "alt": "Home"},
                                          fill="picture"), attrs={"href": "/", "class": "logo"}),
                B(
                    "form", (96, 16, 560, 40),
                    B("input", (100, 20, 300, 32),
                      attrs={"type": "search", "name": "q", "placeholder": "Search books", "value": "python"}, fill=WHITE),
                    B("select", (408, 20, 120, 32), *options, attrs={"name": "category"}, fill=WHITE),
                    B("button", (536, 20, 112, 32), attrs={"type": "submit"}, text="Search", fill=ORANGE),
                    attrs={"id": "search", "action": "/search"}, fill=DARK,
                ),
                fill=DARK, cluster="search-bar",
            ),
            B(
                "main", (0, 72, 800, 592),
                B(
                    "aside", (8, 88, 224, 232),
                    B("h2", (16, 96, 200, 28), text="Filters"),
                    filter_row(0, "stock", "In stock"),
                    filter_row(1, "free", "Free shipping"),
                    filter_row(2, "sale", "On sale"),
                    attrs={"class": "filters"}, fill=GRAY, cluster="filters",
                ),
                B(
                    "section", (248, 88, 544, 568),
                    B("h2", (256, 96, 400, 28), text="Results for python", cluster="results-heading"),
                    B(
                        "div", (252, 132, 536, 416),
                        result_card(0, "Fluent Python", "fluent-python", "Luciano Ramalho", "$49.99"),
                        result_card(1, "Python Tricks", "python-tricks", "Dan Bader", "$29.99"),
                        result_card(2, "Effective Python", "effective-python", "Brett Slatkin", "$39.99"),
                        result_card(3, "Think Python", "think-python", "Allen Downey", "$24.99"),
                        attrs={"id": "results", "class": "result-list"}, fill=WHITE,
                    ),
                    B(
                        "nav", (256, 560, 528, 32),
                        B("a", (264, 564, 32, 24), attrs={"href": "/search?page=1"}, text="1", ink=BLUE),
                        B("a", (304, 564, 32, 24), attrs={"href": "/search?page=2"}, text="2", ink=BLUE),
                        B("a", (344, 564, 32, 24), attrs={"href": "/search?page=3"}, text="3", ink=BLUE),
                        B("a", (392, 564, 64, 24), attrs={"href": "/search?page=2", "rel": "next"}, text="Next",
                          ink=BLUE),
                        attrs={"class": "pagination"}, fill=WHITE, cluster="pagination",
                    ),
                    B(
                        "table", (256, 600, 528, 48),
                        B("tr", (256, 600, 528, 24),
                          B("th", (256, 600, 176, 24), text="Format"),
                          B("th", (432, 600, 176, 24), text="Delivery"),
                          B("th", (608, 600, 176, 24), text="Help")),
                        B("tr", (256, 624, 528, 24),
                          B("td", (256, 624, 176, 24), text="Paperback"),
                          B("td", (432, 624, 176, 24), text="2-4 days"),
                          B("td", (608, 624, 176, 24),
                            B("a", (612, 628, 120, 16), attrs={"href": "/help/delivery"}, text="Delivery FAQ",
                              ink=BLUE))),
                        attrs={"class": "specs"}, fill=WHITE, cluster="specs",
                    ),
                    attrs={"class": "results"}, fill=WHITE,
                ),
                fill=GRAY,
            ),
            B("footer", (0, 664, 800, 56),
              B("p", (16, 680, 400, 24), text="Prices include VAT", ink=LIGHT_INK),
              B("a", (600, 680, 120, 24), attrs={"href": "/about"}, text="About us", ink=LIGHT_INK),
              fill=DARK, cluster="footer"),
        ),
        attrs={"lang": "en"}, fill=WHITE,
    )


BOOK_SEARCH_FEATURES = [
    {"name": "Search books by keyword", "keywords": ["search", "enter"]},
    {"name": "Filter search by category", "keywords": ["select", "category"]},
    {"name": "Submit the search", "keywords": ["search"]},
    {"name": "Filter results to items in stock", "keywords": ["stock"]},
    {"name": "Filter results to free shipping", "keywords": ["free", "shipping"]},
    {"name": "Filter results to items on sale", "keywords": ["sale"]},
    {"name": "Add a book to the cart", "keywords": ["add", "cart"]},
    {"name": "Open a book page", "keywords": ["navigate", "python"]},
    {"name": "Go to the next results page", "keywords": ["next"]},
    {"name": "Read the delivery FAQ", "keywords": ["delivery", "faq"]},
    {"name": "Read about the shop", "keywords": ["about"]},
    {"name": "Sign in", "keywords": ["sign", "in"]},
]


FIXTURES = {
    "mini-cart": (mini_cart, (800, 720), "https://shop.example/cart", MINI_CART_FEATURES),
    "book-search": (book_search, (800, 720), "https://books.example/search?q=python", BOOK_SEARCH_FEATURES),
}


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=OUT)
    args = parser.parse_args(argv)
    for name, (build, size, url, features) in FIXTURES.items():
        snap = write_fixture(name, build(), size, url, features, args.out)
        visible = sum(1 for n in snap.nodes if n.visible)
        print(f"{name}: {len(snap.nodes)} nodes, {visible} visible -> {args.out / name}")


if __name__ == "__main__":
    main()
