from __future__ import annotations

import json
import unicodedata

import pytest
from hypothesis import given, strategies as st

from ragintent.errors import CatalogError, IntentPathError
from ragintent.taxonomy import (
    IntentCatalog,
    IntentPath,
    Vertical,
    parse_intent_path,
    path_prefix,
    render_intent_path,
    validate_catalog,
)

V3 = Vertical("3p", "Retail", ("l1", "l2", "l3"))
VERTS = {"3p": V3}


def test_parse_track_order():
    p = parse_intent_path("Order Issue > Track Order", "3p", VERTS)
    assert p.labels == ("Order Issue", "Track Order")
    assert p.vertical_id == "3p"


def test_parse_single_label():
    assert parse_intent_path("A", "3p", VERTS).labels == ("A",)


def test_parse_empty_segment():
    with pytest.raises(IntentPathError, match="empty segment"):
        parse_intent_path("A > > B", "3p", VERTS)


def test_parse_too_deep_and_unknown_vertical():
    with pytest.raises(IntentPathError, match="depth"):
        parse_intent_path("A > B > C > D", "3p", VERTS)
    with pytest.raises(IntentPathError, match="unknown vertical"):
        parse_intent_path("A", "zz", VERTS)


def test_parse_trims_sloppy_spacing():
    assert parse_intent_path("  A>B  ", "3p").labels == ("A", "B")


def test_render():
    assert render_intent_path(IntentPath("3p", ("Order Issue", "Track Order"))) == "Order Issue > Track Order"
    assert render_intent_path(IntentPath("3p", ("A",))) == "A"


def test_labels_are_nfc_and_case_sensitive():
    decomposed = unicodedata.normalize("NFD", "Café")
    assert IntentPath("3p", (decomposed,)) == IntentPath("3p", ("Café",))
    assert IntentPath("3p", ("a",)) != IntentPath("3p", ("A",))


def test_label_with_separator_rejected():
    with pytest.raises(IntentPathError):
        IntentPath("3p", ("a > b",))


label = st.text(alphabet=st.characters(blacklist_characters=">", blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp")),
                min_size=1, max_size=8)


@given(st.lists(label, min_size=1, max_size=3))
def test_round_trip_property(labels):
    p = IntentPath("3p", tuple(labels))
    assert parse_intent_path(render_intent_path(p), "3p", VERTS) == p


def test_round_trip_over_catalog_paths(bench_corpus):
    paths = bench_corpus.catalog.paths()[:1000]
    assert len(paths) == 912
    for p in paths:
        assert parse_intent_path(render_intent_path(p), p.vertical_id, bench_corpus.catalog.verticals) == p


def test_path_prefix():
    p = IntentPath("3p", ("Order Issue", "Track Order"))
    assert path_prefix(p, 1).labels == ("Order Issue",)
    assert path_prefix(p, 2) == p
    with pytest.raises(IntentPathError):
        path_prefix(p, 0)
    with pytest.raises(IntentPathError):
        path_prefix(p, 3)


def test_prefix_closure(bench_corpus):
    cat = bench_corpus.catalog
    for p in cat.paths():
        for d in range(1, p.depth + 1):
            cat.check(path_prefix(p, d))


def test_branching_violation_at_51_children():
    v = Vertical("x", "X", ("a", "b"))
    cat = IntentCatalog({"x": v}, frozenset(IntentPath("x", ("root", f"c{i}")) for i in range(51)))
    out = validate_catalog(cat, 50)
    assert [o.rule for o in out] == ["branching-factor"]
    assert out[0].node == "x:root"
    assert validate_catalog(IntentCatalog({"x": v}, frozenset(list(cat.intents)[:50])), 50) == []


def test_empty_catalog_is_clean():
    assert validate_catalog(IntentCatalog.empty()) == []


def test_orphan_vertical():
    cat = IntentCatalog(VERTS, frozenset({IntentPath("ghost", ("A",)), IntentPath("3p", ("B",))}))
    out = validate_catalog(cat)
    assert [(o.rule, o.node) for o in out] == [("unknown-vertical", "ghost:A")]


def test_validate_is_order_independent():
    paths = [IntentPath("3p", ("A", str(i))) for i in range(60)]
    a = IntentCatalog(VERTS, frozenset(paths))
    b = IntentCatalog(VERTS, frozenset(reversed(paths)))
    assert validate_catalog(a) == validate_catalog(b)


def test_children_and_check():
    cat = IntentCatalog(VERTS, frozenset({IntentPath("3p", ("A", "x")), IntentPath("3p", ("A", "y"))}))
    assert cat.children(None, "3p") == (IntentPath("3p", ("A",)),)
    assert len(cat.children(IntentPath("3p", ("A",)))) == 2
    cat.check(IntentPath("3p", ("A",)))
    with pytest.raises(CatalogError):
        cat.check(IntentPath("3p", ("B",)))
    with pytest.raises(CatalogError):
        cat.parse("A > z", "3p")


def test_with_intent():
    cat = IntentCatalog(VERTS, frozenset({IntentPath("3p", ("A", "x", "1"))}))
    grown = cat.with_intent(IntentPath("3p", ("New", "Thing", "Here")))
    assert grown.is_leaf(IntentPath("3p", ("New", "Thing", "Here")))
    assert not cat.is_known(IntentPath("3p", ("New",)))
    with pytest.raises(CatalogError, match="unknown vertical"):
        cat.with_intent(IntentPath("zz", ("A", "B", "C")))
    with pytest.raises(CatalogError, match="depth"):
        cat.with_intent(IntentPath("3p", ("A", "B")))


def test_with_intent_respects_branching_limit():
    v = Vertical("x", "X", ("a", "b"))
    cat = IntentCatalog({"x": v}, frozenset(IntentPath("x", ("r", f"c{i}")) for i in range(3)), branching_limit=3)
    with pytest.raises(CatalogError, match="branching"):
        cat.with_intent(IntentPath("x", ("r", "new")))
    cat.with_intent(IntentPath("x", ("other", "new")))


def test_json_round_trip(tmp_path, small_corpus):
    path = tmp_path / "cat.json"
    small_corpus.catalog.save(path)
    loaded = IntentCatalog.load(path)
    assert loaded.intents == small_corpus.catalog.intents
    assert loaded.verticals == small_corpus.catalog.verticals


def test_loader_rejects_unknown_fields():
    doc = {"verticals": [{"id": "a", "level_names": ["x"], "colour": "red"}], "intents": []}
    with pytest.raises(CatalogError, match="unknown field"):
        IntentCatalog.from_json(json.dumps(doc))
    with pytest.raises(CatalogError, match="unknown field"):
        IntentCatalog.from_dict({"verticals": [], "intents": [], "extra": 1})
