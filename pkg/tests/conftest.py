from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest

import visca
from visca.snapshot import BBox, NodeRecord, PageSnapshot, TreeNode

FIXTURES = Path(visca.__file__).parent / "fixtures"
MINI_CART = FIXTURES / "mini-cart"
BOOK_SEARCH = FIXTURES / "book-search"


@pytest.fixture
def mini_cart() -> Path:
    return MINI_CART


@pytest.fixture
def book_search() -> Path:
    return BOOK_SEARCH


def node(nid, parent, tag, /, box=(0, 0, 10, 10), visible=True, text=None, **attrs) -> NodeRecord:
    return NodeRecord(nid, parent, tag, dict(attrs), text, BBox(*box), visible)


def make_snapshot(records, size=(100, 100), fill=255, url="https://example.test/", html="<html></html>"):
    width, height = size
    shot = np.full((height, width, 3), fill, dtype=np.uint8)
    return PageSnapshot(html, tuple(records), shot, (width, height), url)


def random_tree(rng: random.Random, max_nodes: int, labels: str = "abc") -> TreeNode:
    """Random ordered labelled tree with 1..max_nodes nodes and random branching."""
    n = rng.randint(1, max_nodes)
    root = TreeNode("n0", rng.choice(labels))
    nodes = [root]
    for i in range(1, n):
        # bias towards recent nodes for depth, towards the root for breadth
        parent = nodes[rng.randrange(len(nodes))] if rng.random() < 0.5 else nodes[max(0, len(nodes) - 1 - rng.randrange(3))]
        nodes.append(parent.add(TreeNode(f"n{i}", rng.choice(labels))))
    # renumber in preorder so ids follow document order
    for i, nd in enumerate(root.preorder()):
        nd.id = f"n{i}"
    return root


def random_page(rng: random.Random, max_nodes: int = 25, size=(120, 120)) -> PageSnapshot:
    """Random visible-node snapshot whose boxes nest and whose screenshot paints every box.

    Single-child chains are common and get a mix of identical boxes, uniform
    padding and decorated padding, so all prune outcomes occur.
    """
    width, height = size
    shot = np.zeros((height, width, 3), dtype=np.uint8)
    records: list[NodeRecord] = []
    counter = [0]

    def paint(box: BBox, colour) -> None:
        shot[box.y : box.y + box.h, box.x : box.x + box.w] = colour

    def grow(parent_id, box: BBox, depth: int) -> None:
        nid = f"n{counter[0]}"
        counter[0] += 1
        records.append(NodeRecord(nid, parent_id, rng.choice(["div", "span", "p", "a"]), {}, None, box, True))
        style = rng.random()
        if style < 0.3:
            paint(box, (250, 250, 250))
        elif style < 0.8:
            paint(box, tuple(rng.randrange(256) for _ in range(3)))
        else:
            # noisy background: never a uniform residual
            h, w = box.h, box.w
            shot[box.y : box.y + h, box.x : box.x + w] = np.frombuffer(rng.randbytes(h * w * 3), np.uint8).reshape(h, w, 3)
        budget = max_nodes - counter[0]
        if budget <= 0 or depth > 6 or box.w < 4 or box.h < 4:
            return
        kids = rng.choice([0, 1, 1, 1, 2, 3])
        kids = min(kids, budget)
        if kids == 1:
            pad = rng.choice([0, 0, 1, 2])
            inner = BBox(box.x + pad, box.y + pad, box.w - 2 * pad, box.h - 2 * pad)
            if inner.w > 0 and inner.h > 0:
                grow(nid, inner, depth + 1)
        elif kids > 1:
            step = box.w // kids
            for k in range(kids):
                if step < 1:
                    break
                grow(nid, BBox(box.x + k * step, box.y, step, box.h), depth + 1)

    grow(None, BBox(0, 0, width, height), 0)
    return PageSnapshot("<html></html>", tuple(records), shot, (width, height), "https://random.test/")


class Stub:
    """Local chat-completions endpoint replaying a script of (status, body) answers."""

    def __init__(self, script):
        self.script = list(script)
        self.seen: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                stub.seen.append({"headers": dict(self.headers), "body": json.loads(self.rfile.read(length))})
                status, body = stub.script.pop(0)
                data = body.encode() if isinstance(body, str) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def ok(text):
    return 200, {"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 7}}
