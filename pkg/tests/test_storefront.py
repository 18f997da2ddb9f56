from __future__ import annotations

import copy
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TINY_DOC
from synthab.errors import DuplicateProductId, SchemaError, UnknownCollectionRef
from synthab.storefront import (
    AccessibilityNode,
    Back,
    Click,
    Navigate,
    Scroll,
    TypeText,
    UnparseableDocument,
    action_from_json,
    apply,
    format_money,
    load_storefront,
    new_session,
    observe,
    parse_html_to_axtree,
    parse_money,
    serialize,
)
from synthab.synthetic import make_storefront


def refs_by_name(root: AccessibilityNode) -> dict[str, str]:
    return {n.name: n.ref for n in root.interactive()}


def click(state, name):
    _, root = observe(state)
    return apply(state, Click(refs_by_name(root)[name]))


# ---------------------------------------------------------------- loading


def test_load_minimal(tiny_doc):
    doc = copy.deepcopy(tiny_doc)
    doc["catalog"] = doc["catalog"][:1]
    doc["collections"][0]["product_ids"] = ["d1"]
    sf = load_storefront(doc)
    assert list(sf.catalog) == ["d1"] and set(sf.themes) == {"control", "treatment"}


def test_load_duplicate_id(tiny_doc):
    tiny_doc["catalog"].append(dict(tiny_doc["catalog"][0]))
    with pytest.raises(DuplicateProductId):
        load_storefront(tiny_doc)


def test_load_unknown_collection(tiny_doc):
    tiny_doc["themes"]["treatment"]["home_collections"] = ["ghosts"]
    with pytest.raises(UnknownCollectionRef):
        load_storefront(tiny_doc)


def test_load_schema_errors(tiny_doc):
    bad = copy.deepcopy(tiny_doc)
    bad["catalog"][0]["price"] = -1
    with pytest.raises(SchemaError):
        load_storefront(bad)
    bad = copy.deepcopy(tiny_doc)
    bad["themes"]["control"]["products_per_page"] = 0
    with pytest.raises(SchemaError):
        load_storefront(bad)
    bad = copy.deepcopy(tiny_doc)
    del bad["themes"]["treatment"]
    with pytest.raises(SchemaError):
        load_storefront(bad)


def test_round_trip(tiny_store):
    assert load_storefront(tiny_store.to_json()).to_json() == tiny_store.to_json()


def test_category_medians(tiny_store):
    assert tiny_store.category_medians() == {"figurines": 700.0}


def test_money_helpers():
    assert format_money(3318) == "$33.18" and format_money(5) == "$0.05"
    assert parse_money("Price: $33.18") == 3318 and parse_money("free") is None


# ---------------------------------------------------------------- observe


def test_home_nav_links(tiny_store):
    _, root = observe(new_session(tiny_store, "control"))
    header = root.children[0]
    names = [n.name for n in header.children if n.role == "link"]
    assert names[1:3] == ["Shop", "About"]
    refs = [n.ref for n in header.children if n.name in ("Shop", "About")]
    assert len(set(refs)) == 2 and None not in refs


def test_search_disabled_has_no_textbox(tiny_doc):
    for theme in tiny_doc["themes"].values():
        theme["search_enabled"] = False
    sf = load_storefront(tiny_doc)
    state = new_session(sf, "control")
    for _ in range(3):
        _, root = observe(state)
        assert all(n.role != "textbox" for n in root.walk())
        link = next(n for n in root.interactive() if n.role == "link" and n.name not in ("Dragon Den",))
        apply(state, Click(link.ref))


def test_observe_deterministic(tiny_store):
    state = new_session(tiny_store, "treatment")
    a, b = observe(state), observe(state)
    assert a[0] == b[0] and serialize(a[1]) == serialize(b[1])


def test_refs_unique_and_interactive(tiny_store):
    state = new_session(tiny_store, "control")
    click(state, "Figurines")
    _, root = observe(state)
    refs = [n.ref for n in root.walk() if n.ref is not None]
    assert len(refs) == len(set(refs))
    assert all((n.ref is not None) == (n.role in ("link", "button", "textbox")) for n in root.walk())


def test_serialize_format():
    node = AccessibilityNode("region", "R", children=[AccessibilityNode("link", "Go", ref="e1")])
    assert serialize(node) == 'region "R"\n  link "Go" [ref=e1]'


def test_node_json_round_trip(tiny_store):
    _, root = observe(new_session(tiny_store, "control"))
    assert AccessibilityNode.from_json(root.to_json()) == root


# ---------------------------------------------------------------- apply


def test_add_premium_figure(tiny_store):
    state = new_session(tiny_store, "control")
    click(state, "Figurines")
    click(state, "Premium Crystal Wing Dragon")
    res = click(state, "Add to cart")
    assert res.error is None
    assert state.cart == [("d3", 3318)] and state.cart_value == 3318
    notice = [n for n in res.observation[1].walk() if n.name == "Cart notification"]
    assert notice and "$33.18" in notice[0].children[0].name


def test_unknown_ref_leaves_state(tiny_store):
    state = new_session(tiny_store, "control")
    before = observe(state)
    res = apply(state, Click("zzz"))
    assert res.error.code == "no_such_ref"
    assert res.observation[0] == before[0] and serialize(res.observation[1]) == serialize(before[1])


def test_back_on_fresh_home(tiny_store):
    state = new_session(tiny_store, "control")
    res = apply(state, Back())
    assert res.error.code == "nav_blocked" and res.observation[0].endswith("/")


def test_out_of_stock(tiny_doc):
    tiny_doc["catalog"][0]["in_stock"] = False
    state = new_session(load_storefront(tiny_doc), "control")
    click(state, "Figurines")
    click(state, "Pocket Dragon")
    res = click(state, "Add to cart")
    assert res.error.code == "out_of_stock" and state.cart == []


def test_external_navigation(tiny_store):
    state = new_session(tiny_store, "control")
    res = apply(state, Navigate("https://elsewhere.example/x"))
    assert res.error is None and state.exited
    assert res.observation[0] == "https://elsewhere.example/x"
    assert apply(state, Back()).observation[0].endswith("/")


def test_navigate_unknown_path(tiny_store):
    state = new_session(tiny_store, "control")
    assert apply(state, Navigate("/nowhere")).error.code == "nav_blocked"


def test_search_submits(tiny_store):
    state = new_session(tiny_store, "control")
    _, root = observe(state)
    box = next(n for n in root.walk() if n.role == "textbox")
    res = apply(state, TypeText(box.ref, "crystal"))
    names = [n.name for n in res.observation[1].walk() if n.role == "link"]
    assert "Premium Crystal Wing Dragon" in names and "Pocket Dragon" not in names


def test_type_into_link_rejected(tiny_store):
    state = new_session(tiny_store, "control")
    _, root = observe(state)
    assert apply(state, TypeText(refs_by_name(root)["Shop"], "x")).error.code == "not_editable"


def test_scroll_is_noop(tiny_store):
    state = new_session(tiny_store, "control")
    before = serialize(observe(state)[1])
    res = apply(state, Scroll("down"))
    assert res.error is None and serialize(res.observation[1]) == before


def test_deeper_theme_adds_a_click(tiny_store):
    ctl, trt = new_session(tiny_store, "control"), new_session(tiny_store, "treatment")
    click(ctl, "Figurines")
    assert "collections/figurines" in observe(ctl)[0]
    click(trt, "Start shopping")
    click(trt, "Figurines")
    assert "collections/figurines" in observe(trt)[0]


def test_pagination():
    sf = load_storefront(make_storefront(0, seed=1, treatment="identical"))
    state = new_session(sf, "control")
    _, root = observe(state)
    main = next(n for n in root.children if n.name == "Main")
    apply(state, Click(main.interactive()[0].ref))
    _, root = observe(state)
    cards = [n for n in root.walk() if n.role == "listitem"]
    assert len(cards) == 8
    res = click(state, "Next page")
    assert "page=2" in res.observation[0]
    assert "Previous page" in refs_by_name(res.observation[1])


def test_action_json():
    for act in (Click("e1"), TypeText("e2", "rug"), Scroll("up"), Navigate("/cart"), Back()):
        assert action_from_json(act.to_json()) == act
    with pytest.raises(ValueError):
        action_from_json({"type": "click"})
    with pytest.raises(ValueError):
        action_from_json({"type": "hover"})


# ---------------------------------------------------------------- properties


def _replay(sf, theme, refs):
    state = new_session(sf, theme)
    for ref in refs:
        apply(state, Click(ref))
    return state


def _bfs_depths(sf, theme, limit):
    """Shortest click sequence from home to each product's cart-add."""
    found = {}
    queue = deque([()])
    seen = set()
    while queue:
        path = queue.popleft()
        if len(path) >= limit:
            continue
        state = _replay(sf, theme, path)
        url, root = observe(state)
        if url in seen:
            continue
        seen.add(url)
        for node in root.interactive():
            if node.role == "textbox":
                continue
            nxt = _replay(sf, theme, path + (node.ref,))
            if len(nxt.cart) > len(state.cart):
                found.setdefault(nxt.cart[-1][0], len(path) + 1)
            else:
                queue.append(path + (node.ref,))
    return found


@pytest.mark.parametrize("theme", ["control", "treatment"])
def test_a2c_reachability(tiny_store, theme):
    depth = tiny_store.theme(theme).collection_depth
    found = _bfs_depths(tiny_store, theme, depth + 2)
    assert set(found) == {"d1", "d2", "d3"}
    assert max(found.values()) <= depth + 2


def test_a2c_reachability_synthetic():
    sf = load_storefront(make_storefront(2, seed=0, treatment="deeper"))
    for theme in ("control", "treatment"):
        spec = sf.theme(theme)
        found = _bfs_depths(sf, theme, spec.collection_depth + 2)
        expected = {
            pid
            for cid in spec.home_collections
            for pid in sf.collections[cid].product_ids[: spec.products_per_page]
            if sf.catalog[pid].in_stock
        }
        assert expected <= set(found)
        assert max(found.values()) <= spec.collection_depth + 2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 30), max_size=12), st.sampled_from(["control", "treatment"]))
def test_replay_determinism_and_cart_monotone(picks, theme):
    sf = load_storefront(TINY_DOC)
    runs = []
    for _ in range(2):
        state = new_session(sf, theme)
        trace, carts = [], [0]
        for pick in picks:
            _, root = observe(state)
            nodes = [n for n in root.interactive() if n.role != "textbox"]
            res = apply(state, Click(nodes[pick % len(nodes)].ref) if pick < 28 else Back())
            trace.append((res.observation[0], serialize(res.observation[1]), res.error))
            carts.append(len(state.cart))
        runs.append((trace, state.cart, state.visited))
        assert all(b >= a for a, b in zip(carts, carts[1:]))
    assert runs[0] == runs[1]


# ---------------------------------------------------------------- html


def test_html_single_link():
    root = parse_html_to_axtree("<a href=x>Shop</a>")
    [link] = root.children
    assert (link.role, link.name, link.ref) == ("link", "Shop", "e1")


def test_html_nested_heading():
    html = "<div><h1>Title <a href=/a>Inner</a></h1><a href=/b>B</a><a href=/c>C</a></div>"
    root = parse_html_to_axtree(html)
    heading = root.children[0]
    assert heading.role == "heading" and heading.ref is None
    assert [(n.role, n.name, n.ref) for n in root.interactive()] == [
        ("link", "Inner", "e1"),
        ("link", "B", "e2"),
        ("link", "C", "e3"),
    ]


def test_html_script_only():
    root = parse_html_to_axtree("<html><body><script>var a = 1;</script></body></html>")
    assert root.role == "region" and root.children == []


def test_html_roles_and_names():
    html = (
        '<nav><a href="#"><img alt="Home icon"></a></nav>'
        '<form><input type="search" aria-label="Find"><input type="submit" value="Go"></form>'
        '<button aria-label="Close">X</button><!-- hidden --><style>p {}</style><p>hello <b>world</b></p>'
    )
    root = parse_html_to_axtree(html)
    assert [(n.role, n.name, n.ref) for n in root.interactive()] == [
        ("link", "Home icon", "e1"),
        ("textbox", "Find", "e2"),
        ("button", "Go", "e3"),
        ("button", "X", "e4"),
    ]
    assert any(n.role == "text" and n.name == "hello world" for n in root.walk())
    assert "hidden" not in serialize(root) and "{}" not in serialize(root)


@pytest.mark.parametrize("bad", ["", "   ", "\x00\x01\x02"])
def test_html_unparseable(bad):
    with pytest.raises(UnparseableDocument):
        parse_html_to_axtree(bad)
