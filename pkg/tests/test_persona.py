from __future__ import annotations

import json
import re
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_persona, make_profile
from synthab.errors import (
    EmptyClusterSummary,
    EmptyInput,
    LengthMismatch,
    MissingNorms,
    NoCategories,
    NoPricedProducts,
    SchemaFailure,
    TooFewAgents,
)
from synthab.ingest import Event, EventType, sessionize
from synthab.llm.scripted import ScriptedBackend
from synthab.persona import (
    BuyerAggregate,
    ClusterSummary,
    ExplorationRegime,
    Lexicons,
    PriceTier,
    ProductPreferences,
    ShopMeta,
    ShopNorms,
    aggregate_buyers,
    allocate_agents,
    build_persona,
    calibrate_intent_mix,
    compose_profiles,
    extract_preferences,
    generate_intents,
    has_forbidden_term,
    regime_for_score,
    score_exploration,
    score_price_sensitivity,
    score_values,
    tier_for_gap,
)
from synthab.persona.intents import BROWSE_PHRASES, FORBIDDEN_TERMS, PURCHASE_PHRASES, BuyerIntent


class Canned:
    """Backend replaying fixed strings, recording what it was asked."""

    def __init__(self, *answers):
        self.answers = list(answers)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.answers[min(len(self.requests), len(self.answers)) - 1]


class Down:
    def complete(self, request):
        return "the service is unavailable"


def agg(browsed=(), purchased=(), **kw) -> BuyerAggregate:
    base = dict(session_count=1, a2c_rate=0.0, checkout_rate=0.0, purchase_rate=0.0, avg_cart_value=0.0, avg_order_value=0.0)
    base.update(kw)
    return BuyerAggregate(browsed_products=list(browsed), purchased_products=list(purchased), **base)


# ---------------------------------------------------------------- preferences


def test_scripted_preferences_shoe_cluster():
    summary = ClusterSummary(
        0,
        browsed=[("Trail Runner 2", 9000, "sneakers")] * 6 + [("Running Shorts", 3000, "athletic wear")] * 2,
        purchased=[("Trail Runner 2", 9000, "sneakers")],
    )
    prefs = extract_preferences(ShopMeta("Stride"), summary, ScriptedBackend(), catalog_titles=["Trail Runner 2"])
    assert prefs.categories[:2] == ["sneakers", "athletic wear"]
    assert prefs.products[0] == "Trail Runner 2"


def test_preferences_truncated_and_normalized():
    cats = [f"Category {i}" for i in range(14)] + ["category 0"]
    backend = Canned(json.dumps({"categories": cats, "products": [f"p{i}" for i in range(12)], "reasoning": "r"}))
    prefs = extract_preferences(ShopMeta("s"), ClusterSummary(0, browsed=[("x", 1, "c")]), backend)
    assert len(prefs.categories) == 10 and len(prefs.products) == 10
    assert prefs.categories[0] == "category 0"


def test_preferences_drop_product_names():
    answer = {"categories": ["Deluxe Lamp", "lamps"], "products": ["Deluxe Lamp"], "reasoning": ""}
    prefs = extract_preferences(ShopMeta("s"), ClusterSummary(0, browsed=[("x", 1, "c")]), Canned(json.dumps(answer)), catalog_titles=["Deluxe Lamp"])
    assert prefs.categories == ["lamps"]


def test_preferences_schema_failure():
    backend = Canned("not json", "still not", "{}")
    with pytest.raises(SchemaFailure):
        extract_preferences(ShopMeta("s"), ClusterSummary(0, browsed=[("x", 1, "c")]), backend)
    assert len(backend.requests) == 3
    assert "rejected" in backend.requests[-1].user_text


def test_preferences_empty_summary():
    with pytest.raises(EmptyClusterSummary):
        extract_preferences(ShopMeta("s"), ClusterSummary(3), ScriptedBackend())


# ---------------------------------------------------------------- calibration


def oracle_mix(a, n):
    return min(max(int(Decimal(str(a)) * n + Decimal("0.5")), 1), n - 1)


@pytest.mark.parametrize("a, n, want", [(0.0, 10, 1), (1.0, 10, 9), (0.33, 12, 4), (0.35, 10, 4), (0.25, 2, 1)])
def test_calibrate_examples(a, n, want):
    assert calibrate_intent_mix(a, n) == want


def test_calibrate_too_few():
    with pytest.raises(TooFewAgents):
        calibrate_intent_mix(0.5, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100), st.integers(0, 100), st.integers(2, 200))
def test_calibrate_bounds_and_monotone(a, b, n):
    lo, hi = sorted((a / 100, b / 100))
    x, y = calibrate_intent_mix(lo, n), calibrate_intent_mix(hi, n)
    assert 1 <= x <= y <= n - 1
    assert x == oracle_mix(lo, n)


# ---------------------------------------------------------------- intents

_TWO = re.compile(r"^You are looking for [^.]+\. [^.]+\.$")


def test_browsing_intent_text():
    prefs = ProductPreferences(["chairs"], ["Oak Chair"])
    intents = generate_intents(prefs, 1, 2, seed=0)
    browse = next(i for i in intents if not i.purchase_focused)
    assert browse.text.startswith("You are looking for chairs. ")
    assert browse.text.split(". ", 1)[1] in BROWSE_PHRASES
    assert "You are researching options." in BROWSE_PHRASES


def test_purchase_phrases():
    intents = generate_intents(ProductPreferences(["lamps"], ["x"]), 5, 6, seed=3)
    assert sum(i.purchase_focused for i in intents) == 5
    for i in intents:
        if i.purchase_focused:
            assert i.text.split(". ", 1)[1] in PURCHASE_PHRASES
    assert {"You are ready to purchase.", "You are planning to buy."} <= set(PURCHASE_PHRASES)


def test_forbidden_category_skipped():
    prefs = ProductPreferences(["discount mugs", "mugs", "size guide"], ["x"])
    intents = generate_intents(prefs, 2, 6, seed=1)
    assert {i.category for i in intents} == {"mugs"}
    with pytest.raises(NoCategories):
        generate_intents(ProductPreferences(["bundles"], ["x"]), 1, 2)


def test_intents_round_robin():
    prefs = ProductPreferences(["a", "b", "c"], ["x"])
    cats = [i.category for i in generate_intents(prefs, 3, 7, seed=5)]
    assert cats == ["a", "b", "c", "a", "b", "c", "a"]


def test_intents_deterministic():
    prefs = ProductPreferences(["rugs", "throws"], ["x"])
    assert generate_intents(prefs, 4, 9, seed=8) == generate_intents(prefs, 4, 9, seed=8)


def test_intent_template_enforced():
    with pytest.raises(ValueError):
        BuyerIntent("rugs", True, "Find rugs now")


def test_no_forbidden_terms_over_many_generations():
    prefs = ProductPreferences(["candles", "discount bins", "wall art", "throw pillows"], ["x"])
    for seed in range(2500):
        for intent in generate_intents(prefs, 1 + seed % 3, 4, seed=seed):
            assert _TWO.match(intent.text)
            assert not has_forbidden_term(intent.text)


def test_forbidden_matcher():
    for term in FORBIDDEN_TERMS:
        assert has_forbidden_term(f"You are looking for {term}s. x.")
    assert not has_forbidden_term("You are looking for sizeable rugs. x.")


# ---------------------------------------------------------------- aggregation


def _ev(sid, ts, kind, buyer="b", **kw):
    return Event(sid, buyer, "shop", ts, EventType(kind), **kw)


def test_aggregate_a2c_rate():
    evs = [_ev(f"s{i}", i, "page_view") for i in range(4)]
    evs.append(_ev("s2", 10, "add_to_cart", product_id="p", cart_value=300))
    a = aggregate_buyers(sessionize(evs))
    assert a.a2c_rate == 0.25 and a.purchase_rate == 0.0 and a.avg_order_value == 0.0


def test_aggregate_mixed_recount():
    evs = [
        _ev("s1", 0, "product_view", product_id="p1", product_title="Lamp", product_price=1000),
        _ev("s1", 1, "add_to_cart", product_id="p1", product_title="Lamp", product_price=1000, cart_value=1000),
        _ev("s1", 2, "begin_checkout"),
        _ev("s1", 3, "purchase", order_value=1000),
        _ev("s2", 5, "product_view", product_id="p2", product_title="Rug", product_price=4000),
        _ev("s2", 6, "product_view", product_id="p2", product_title="Rug", product_price=4000),
        _ev("s2", 7, "add_to_cart", product_id="p2", product_title="Rug", product_price=4000, cart_value=4000),
        _ev("s3", 9, "search", search_query="vase"),
    ]
    a = aggregate_buyers(sessionize(evs))
    # hand recount: 3 sessions, 2 with A2C, 1 checkout, 1 purchase
    assert (a.session_count, a.a2c_rate, a.checkout_rate, a.purchase_rate) == (3, 2 / 3, 1 / 3, 1 / 3)
    assert a.avg_cart_value == 2500.0 and a.avg_order_value == 1000.0
    assert [t for t, _, _ in a.browsed_products] == ["Lamp", "Rug", "Rug"]
    assert [t for t, _, _ in a.purchased_products] == ["Lamp"]


def test_aggregate_empty():
    with pytest.raises(EmptyInput):
        aggregate_buyers([])


# ---------------------------------------------------------------- scoring


@pytest.mark.parametrize("gap, tier", [(0.60, "Budget"), (0.40, "MidRange"), (0.10, "Premium"), (0.50, "MidRange"), (0.30, "Premium")])
def test_tier_bands(gap, tier):
    assert tier_for_gap(gap).value == tier


@pytest.mark.parametrize("score, regime", [(0.20, "Shallow"), (0.50, "Moderate"), (0.90, "Deep"), (0.35, "Moderate"), (0.65, "Deep")])
def test_regime_bands(score, regime):
    assert regime_for_score(score).value == regime


def test_threshold_grid():
    for i in range(101):
        x = i / 100
        assert tier_for_gap(x) == (PriceTier.BUDGET if i > 50 else PriceTier.MID_RANGE if i > 30 else PriceTier.PREMIUM)
        assert regime_for_score(x) == (ExplorationRegime.SHALLOW if i < 35 else ExplorationRegime.MODERATE if i < 65 else ExplorationRegime.DEEP)


def test_price_gap_category_normalized():
    medians = {"mugs": 1000.0, "rugs": 10000.0}
    a = agg(browsed=[("m", 2000, "mugs"), ("r", 10000, "rugs")], purchased=[("r2", 8000, "rugs")])
    tier, gap = score_price_sensitivity(a, medians)
    # normalized: browsed 2.0 and 1.0, purchased 0.8, gap = (2 - 0.8) / 2
    assert gap == pytest.approx(0.6) and tier is PriceTier.BUDGET


def test_price_gap_without_purchases():
    a = agg(browsed=[("a", 1000, "c"), ("b", 600, "c")])
    _, gap = score_price_sensitivity(a, {"c": 1000.0})
    assert gap == pytest.approx((1.0 - 0.8) / 1.0)


def test_price_no_prices():
    with pytest.raises(NoPricedProducts):
        score_price_sensitivity(agg(browsed=[("a", None, "c")]), {"c": 1.0})


def test_exploration_percentiles():
    norms = ShopNorms([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 1.0, 2.0], [1.0, 2.0, 3.0, 4.0])
    a = agg(mean_duration_s=4.0, mean_searches=2.0, mean_product_views=4.0)
    score, regime = score_exploration(a, norms)
    assert score == pytest.approx(7 / 8) and regime is ExplorationRegime.DEEP
    with pytest.raises(MissingNorms):
        score_exploration(a, None)


def test_values_revealed_preference():
    browsed = [("Organic Tote", 1, "bags")] * 3 + [("Tote", 1, "bags")] * 7
    purchased = [("Organic Tote", 1, "bags")]
    v = score_values(agg(browsed, purchased))
    assert v.ethics == pytest.approx(0.79) and v.ethics > 0.30


def test_values_no_matches():
    v = score_values(agg([("Plain Mug", 1, "mugs")], [("Plain Mug", 1, "mugs")]))
    assert (v.premium, v.performance, v.ethics) == (0.0, 0.0, 0.0)


def test_values_purchased_only():
    v = score_values(agg([("Mug", 1, "mugs")], [("Handcrafted Mug", 1, "mugs")]))
    assert v.premium == pytest.approx(0.70)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10), st.integers(1, 10), st.integers(0, 10), st.integers(0, 9))
def test_values_monotone_in_purchased_share(hits_b, total_p, extra_b, hits_p):
    hits_p = min(hits_p, total_p - 1)
    browsed = [("Eco Cup", 1, "c")] * hits_b + [("Cup", 1, "c")] * extra_b
    if not browsed:
        browsed = [("Cup", 1, "c")]
    low = [("Eco Cup", 1, "c")] * hits_p + [("Cup", 1, "c")] * (total_p - hits_p)
    high = [("Eco Cup", 1, "c")] * (hits_p + 1) + [("Cup", 1, "c")] * (total_p - hits_p - 1)
    a, b = score_values(agg(browsed, low)).ethics, score_values(agg(browsed, high)).ethics
    assert 0.0 <= a <= b <= 1.0


def test_lexicons_json_round_trip(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({"premium": ["gold"], "performance": ["fast"], "ethics": ["fair"]}))
    lex = Lexicons.load(path)
    assert lex.premium == ("gold",)
    assert score_values(agg([("Gold Ring", 1, "r")]), lex).premium == 1.0


def _norms():
    return ShopNorms([0.0, 10.0, 20.0], [0.0, 1.0, 2.0], [1.0, 2.0, 3.0])


def test_build_persona_single_session_confidence():
    p = build_persona(agg([("x", 100, "c")], session_count=1), {"c": 100.0}, _norms())
    assert set(p.confidence.values()) == {0.5}


def test_build_persona_budget_ethics():
    browsed = [("Organic Soap", 3000, "soap")] + [("Bamboo Brush", 1000, "soap")] * 3
    purchased = [("Organic Soap Bar", 800, "soap")]
    p = build_persona(agg(browsed, purchased, session_count=3), {"soap": 1000.0}, _norms())
    # gap: (3.0 - 0.8) / 3.0 = 0.733; ethics: 0.3 * 1.0 + 0.7 * 1.0
    assert p.price_tier is PriceTier.BUDGET and p.ethics_focus > 0.5
    assert p.confidence["price_sensitivity"] == pytest.approx(0.75)


def test_build_persona_backend_down():
    a = agg([("x", 100, "c")], session_count=2)
    plain = build_persona(a, {"c": 100.0}, _norms())
    p = build_persona(a, {"c": 100.0}, _norms(), backend=Down())
    assert p.to_json() == plain.to_json()


def test_build_persona_backend_cannot_move_scores():
    answer = {"reasoning": "looks thrifty", "confidence": {"price_sensitivity": 0.9}, "price_gap": 0.0}
    p = build_persona(agg([("x", 100, "c"), ("y", 50, "c")]), {"c": 100.0}, _norms(), backend=Canned(json.dumps(answer)))
    assert p.reasoning == "looks thrifty" and p.confidence["price_sensitivity"] == 0.9
    assert p.price_gap == pytest.approx(0.25)


# ---------------------------------------------------------------- profiles


def test_compose_one():
    intent = BuyerIntent("figurines", True, "You are looking for figurines. You are ready to purchase.")
    persona = make_persona("Premium", "Deep", premium=0.8)
    [profile] = compose_profiles([intent], [persona], ProductPreferences(["figurines"], ["Dragon"]), 2, "s")
    assert profile.intent is intent and profile.persona is persona
    text = profile.prompt_text
    assert intent.text in text and "Premium" in text and "Deep" in text


def test_compose_length_mismatch():
    intents = generate_intents(ProductPreferences(["a"], ["x"]), 1, 3)
    with pytest.raises(LengthMismatch):
        compose_profiles(intents, [make_persona()] * 4, ProductPreferences(["a"], ["x"]))


def test_render_budget_performance_blocks():
    text = make_profile(tier="Budget", performance=0.6).prompt_text
    assert "discount signals" in text and "detailed specifications" in text
    assert "Budget Tier Preferences:" in text and "Performance Value Preferences:" in text
    assert "Ethics Value Preferences" not in text


def test_profile_json_round_trip():
    p = make_profile(tier="MidRange", regime="Moderate", ethics=0.4)
    back = type(p).from_json(json.loads(json.dumps(p.to_json())))
    assert back.to_json() == p.to_json()


def test_profile_category_must_be_preferred():
    p = make_profile()
    with pytest.raises(ValueError):
        type(p)(p.intent, p.persona, ProductPreferences(["lamps"], ["x"]), 0, "s")


@pytest.mark.parametrize(
    "sizes, total, want",
    [
        ({0: 50, 1: 50}, 10, {0: 5, 1: 5}),
        ({0: 99, 1: 1}, 10, {0: 9, 1: 1}),
        ({0: 3, 1: 3, 2: 4}, 10, {0: 3, 1: 3, 2: 4}),
        ({0: 0, 1: 7}, 3, {0: 0, 1: 3}),
    ],
)
def test_allocate_examples(sizes, total, want):
    assert allocate_agents(sizes, total) == want


def test_allocate_too_few():
    with pytest.raises(TooFewAgents):
        allocate_agents([1, 1, 1], 2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=1, max_size=8), st.integers(0, 1000))
def test_allocate_properties(sizes, extra):
    live = sum(1 for s in sizes if s > 0)
    total = live + extra
    out = allocate_agents(sizes, total)
    if live:
        assert sum(out.values()) == total
    assert all(out[i] >= 1 for i, s in enumerate(sizes) if s > 0)
    assert all(out[i] == 0 for i, s in enumerate(sizes) if s == 0)
