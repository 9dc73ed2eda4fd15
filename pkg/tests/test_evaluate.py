from __future__ import annotations

import json

import pytest

from conftest import make_snapshot, node
from visca.errors import BundleInvalid, ElementMismatch, InvalidSegmentation
from visca.evaluate import (
    Clustering,
    b3_scores,
    classification_stats,
    load_truth,
    resolve_xpath,
    segments_to_clustering,
    truth_for_leaves,
)
from visca.snapshot import build_visible_hierarchy, tree_from_nested

TRUTH = Clustering.from_groups([["a", "b", "c"], ["d", "e"]])


def test_identical_clusterings_score_one():
    s = b3_scores(TRUTH, TRUTH)
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)


def test_hand_computed_example():
    # a,b: 2/2 shared; c: 1/3; d,e: 2/3 (precision side), mirrored for recall
    s = b3_scores(Clustering.from_groups([["a", "b"], ["c", "d", "e"]]), TRUTH)
    assert s.precision == pytest.approx(11 / 15)
    assert s.recall == pytest.approx(11 / 15)


def test_singletons_and_one_cluster_are_dual():
    singles = b3_scores(Clustering.from_groups([[x] for x in "abcde"]), TRUTH)
    assert singles.precision == 1.0 and singles.recall == pytest.approx(2 / 5)
    whole = b3_scores(Clustering.from_groups(["abcde"]), TRUTH)
    assert whole.recall == 1.0 and whole.precision == pytest.approx(13 / 25)


def test_element_sets_must_match():
    with pytest.raises(ElementMismatch):
        b3_scores(Clustering.from_groups([["a"]]), TRUTH)
    with pytest.raises(ElementMismatch):
        b3_scores(Clustering({}), Clustering({}))
    with pytest.raises(ValueError):
        Clustering.from_groups([["a"], ["a"]])


def tree():
    return tree_from_nested(("r", [("x", ["a", "b"]), ("y", ["c", ("z", ["d"])]), "e"]))


def test_segments_to_clustering():
    t = tree()
    ids = {n.tag: n.id for n in t.preorder()}
    groups = segments_to_clustering([ids["x"], ids["y"]], t).groups()
    labels = {frozenset(t.find(i).tag for i in g) for g in groups.values()}
    assert labels == {frozenset("ab"), frozenset("cd"), frozenset("e")}


def test_nested_or_unknown_segments_rejected():
    t = tree()
    ids = {n.tag: n.id for n in t.preorder()}
    with pytest.raises(InvalidSegmentation):
        segments_to_clustering([ids["y"], ids["z"]], t)
    with pytest.raises(InvalidSegmentation):
        segments_to_clustering(["ghost"], t)


@pytest.fixture
def page():
    return make_snapshot(
        [
            node("h", None, "html"),
            node("b", "h", "body"),
            node("d1", "b", "div"),
            node("d2", "b", "div"),
            node("l1", "d2", "li"),
            node("l2", "d2", "li"),
        ]
    )


def test_resolve_xpath(page):
    assert resolve_xpath(page, "/html/body/div[2]/li[2]") == "l2"
    assert resolve_xpath(page, "/html/body/div") == "d1"
    for bad in ("html/body", "/html/body/div[3]", "/html/body/*"):
        with pytest.raises(BundleInvalid):
            resolve_xpath(page, bad)


def test_load_truth_flattens_and_projects(page, tmp_path):
    path = tmp_path / "truth.json"
    path.write_text(json.dumps({"clusters": {"/html/body/div[2]": ["main", "list"], "l2": "other", "d1": "top"}}))
    truth = load_truth(path, page)
    assert dict(truth.clusters) == {"d2": "list", "l2": "other", "d1": "top"}
    leaves = truth_for_leaves(truth, build_visible_hierarchy(page))
    assert dict(leaves.clusters) == {"d1": "top", "l1": "list", "l2": "other"}
    path.write_text(json.dumps({"x": []}))
    with pytest.raises(BundleInvalid):
        load_truth(path)
    path.write_text("[1]")
    with pytest.raises(BundleInvalid):
        load_truth(path)


def test_classification_stats_row():
    # two pages: 3 of 4 and 1 of 4 components, then a 149/200 page averages in
    stats = classification_stats([["Component"] * 3 + ["List"], ["Component", "Container", "List", "List"]])
    assert stats.component_fraction == 0.5 and stats.avg_segments == 4
    single = classification_stats([["Component"] * 149 + ["Container"] * 51])
    assert single.row() == "74.5% / 25.5%"
    assert single.to_dict()["pages"] == 1
    with pytest.raises(ValueError):
        classification_stats([[]])
