"""Best-effort snapshot capture from a running Chrome/Chromium.

Start the browser with ``--remote-debugging-port=9222`` (headless is fine);
:func:`capture` opens a new tab over the DevTools protocol, loads the page,
walks the DOM in the page and takes one full-page screenshot.
"""

from __future__ import annotations

import base64
import io
import itertools
import json
import time
import urllib.parse
import urllib.request
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .errors import InputError, ViscaError
from .snapshot import BBox, NodeRecord, PageSnapshot, round_half_up, save_snapshot

# Returns [{tag, parent, attrs, text, box:[x,y,w,h], shown}] in document order.
DOM_WALK_JS = r"""
(() => {
  const out = [];
  const sx = window.scrollX, sy = window.scrollY;
  const walk = (el, parent) => {
    const idx = out.length;
    const style = getComputedStyle(el);
    const r = el.getBoundingClientRect();
    const attrs = {};
    for (const a of el.attributes) attrs[a.name] = a.value;
    let text = "";
    for (const n of el.childNodes) if (n.nodeType === 3) text += n.textContent;
    text = text.replace(/\s+/g, " ").trim();
    out.push({
      tag: el.tagName.toLowerCase(), parent, attrs, text: text || null,
      box: [r.left + sx, r.top + sy, r.width, r.height],
      shown: style.display !== "none" && style.visibility !== "hidden" && style.opacity !== "0",
    });
    for (const c of el.children) walk(c, idx);
  };
  walk(document.documentElement, null);
  return JSON.stringify({
    nodes: out,
    width: Math.max(document.documentElement.scrollWidth, window.innerWidth),
    height: Math.max(document.documentElement.scrollHeight, window.innerHeight),
    html: document.documentElement.outerHTML,
  });
})()
"""


def normalize_nodes(raw: list[dict[str, Any]], width: int, height: int, scale: float = 1.0) -> list[NodeRecord]:
    """Turn the in-page walk into node records.

    Boxes are scaled to device pixels and rounded half-up. A node counts as
    visible when its style shows it and its box keeps a non-zero area once
    clamped to the screenshot.
    """
    records = []
    for i, item in enumerate(raw):
        x, y, w, h = (float(v) * scale for v in item["box"])
        x0, y0 = round_half_up(x), round_half_up(y)
        box = BBox(x0, y0, max(0, round_half_up(x + w) - x0), max(0, round_half_up(y + h) - y0))
        visible = bool(item.get("shown")) and box.w > 0 and box.h > 0 and box.clamp(width, height).area > 0
        parent = item.get("parent")
        records.append(
            NodeRecord(
                id=f"n{i}",
                parent_id=None if parent is None else f"n{parent}",
                tag=str(item["tag"]).lower(),
                attrs={str(k): str(v) for k, v in (item.get("attrs") or {}).items()},
                text=item.get("text") or None,
                bbox=box,
                visible=visible,
            )
        )
    return records


class DevToolsSession:
    def __init__(self, ws_url: str, timeout: float = 30.0):
        try:
            from websockets.sync.client import connect
        except ImportError as exc:  # optional dependency
            raise ViscaError("capture needs the 'websockets' package (pip install visca[capture])") from exc
        self.ws = connect(ws_url, max_size=None, open_timeout=timeout)
        self.timeout = timeout
        self._ids = itertools.count(1)
        self.events: list[dict] = []

    def call(self, method: str, **params) -> dict:
        msg_id = next(self._ids)
        self.ws.send(json.dumps({"id": msg_id, "method": method, "params": params}))
        deadline = time.monotonic() + self.timeout
        while time.monotonic() < deadline:
            msg = json.loads(self.ws.recv(timeout=max(0.1, deadline - time.monotonic())))
            if msg.get("id") == msg_id:
                if "error" in msg:
                    raise ViscaError(f"{method}: {msg['error'].get('message')}")
                return msg.get("result", {})
            self.events.append(msg)
        raise ViscaError(f"{method}: no reply within {self.timeout}s")

    def wait_event(self, method: str) -> dict:
        for i, ev in enumerate(self.events):
            if ev.get("method") == method:
                return self.events.pop(i)
        deadline = time.monotonic() + self.timeout
        while time.monotonic() < deadline:
            msg = json.loads(self.ws.recv(timeout=max(0.1, deadline - time.monotonic())))
            if msg.get("method") == method:
                return msg
            self.events.append(msg)
        raise ViscaError(f"no {method} event within {self.timeout}s")

    def close(self) -> None:
        self.ws.close()


def _new_target(host: str, port: int) -> str:
    url = f"http://{host}:{port}/json/new?{urllib.parse.quote('about:blank', safe='')}"
    req = urllib.request.Request(url, method="PUT")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return json.loads(resp.read())["webSocketDebuggerUrl"]
    except OSError as exc:
        raise InputError(f"no DevTools endpoint at {host}:{port} ({exc})") from exc


def capture(
    url: str,
    out_dir: str | Path,
    host: str = "127.0.0.1",
    port: int = 9222,
    viewport: tuple[int, int] = (1280, 800),
    settle: float = 0.5,
) -> PageSnapshot:
    session = DevToolsSession(_new_target(host, port))
    try:
        session.call("Page.enable")
        session.call(
            "Emulation.setDeviceMetricsOverride",
            width=viewport[0], height=viewport[1], deviceScaleFactor=1, mobile=False,
        )
        session.call("Page.navigate", url=url)
        session.wait_event("Page.loadEventFired")
        time.sleep(settle)
        walked = session.call("Runtime.evaluate", expression=DOM_WALK_JS, returnByValue=True)
        data = json.loads(walked["result"]["value"])
        width, height = int(data["width"]), int(data["height"])
        shot = session.call(
            "Page.captureScreenshot",
            format="png",
            captureBeyondViewport=True,
            clip={"x": 0, "y": 0, "width": width, "height": height, "scale": 1},
        )
    finally:
        session.close()
    image = np.asarray(Image.open(io.BytesIO(base64.b64decode(shot["data"]))).convert("RGB"))
    real_h, real_w = image.shape[:2]
    snapshot = PageSnapshot(
        page_html=data["html"],
        nodes=tuple(normalize_nodes(data["nodes"], real_w, real_h)),
        screenshot=image,
        viewport=(real_w, real_h),
        url=url,
    )
    save_snapshot(snapshot, out_dir)
    return snapshot
