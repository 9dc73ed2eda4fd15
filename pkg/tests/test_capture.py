from __future__ import annotations

import pytest

from visca.capture import normalize_nodes
from visca.snapshot import BBox


def item(box, parent=None, shown=True, tag="DIV", **extra):
    return {"tag": tag, "parent": parent, "attrs": extra.pop("attrs", {}), "text": extra.pop("text", None), "box": box, "shown": shown}


def test_ids_parents_and_attrs():
    recs = normalize_nodes([item([0, 0, 50, 50]), item([1, 1, 5, 5], parent=0, attrs={"id": 3}, text="hi")], 100, 100)
    assert [(r.id, r.parent_id, r.tag) for r in recs] == [("n0", None, "div"), ("n1", "n0", "div")]
    assert recs[1].attrs == {"id": "3"} and recs[1].text == "hi"


def test_rounding_is_half_up_on_edges():
    (rec,) = normalize_nodes([item([0.5, 1.49, 10.0, 2.5])], 100, 100)
    # x: 0.5 -> 1, right edge 10.5 -> 11; y: 1.49 -> 1, bottom 3.99 -> 4
    assert rec.bbox == BBox(1, 1, 10, 3)


def test_device_scale():
    (rec,) = normalize_nodes([item([10, 20, 30, 40])], 200, 200, scale=2.0)
    assert rec.bbox == BBox(20, 40, 60, 80)


@pytest.mark.parametrize(
    "raw,visible",
    [
        (item([0, 0, 10, 10]), True),
        (item([0, 0, 10, 10], shown=False), False),
        (item([0, 0, 0, 10]), False),
        (item([100, 0, 10, 10]), False),
        (item([-20, -20, 10, 10]), False),
        (item([95, 95, 10, 10]), True),
    ],
)
def test_visibility(raw, visible):
    assert normalize_nodes([raw], 100, 100)[0].visible is visible
