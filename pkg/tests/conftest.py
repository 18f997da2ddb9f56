from __future__ import annotations

import copy
import json
from pathlib import Path

import pytest

from synthab.persona.intents import BROWSE_PHRASES, PURCHASE_PHRASES, BuyerIntent, intent_text
from synthab.persona.preferences import ProductPreferences
from synthab.persona.profiles import AgentProfile
from synthab.persona.scoring import ExplorationRegime, PersonaDimensions, PriceTier, regime_for_score

FIXTURES = Path(__file__).parent / "fixtures"

THEME = {
    "theme_id": "classic",
    "home_collections": ["figurines"],
    "products_per_page": 8,
    "nav_links": ["Shop", "About"],
    "search_enabled": True,
    "product_card_fields": ["title", "price", "reviews", "badge"],
    "collection_depth": 1,
}

# three figurines: two cheap ones and a premium one at $33.18
TINY_DOC = {
    "shop": {"name": "Dragon Den", "industry": "collectibles", "country": "US"},
    "catalog": [
        {"product_id": "d1", "title": "Pocket Dragon", "price": 450, "category": "figurines",
         "tags": ["mini", "gift idea"], "in_stock": True, "rating": 4.1, "review_count": 12},
        {"product_id": "d2", "title": "Resin Dragon", "price": 700, "category": "figurines",
         "tags": ["resin"], "in_stock": True},
        {"product_id": "d3", "title": "Premium Crystal Wing Dragon", "price": 3318, "category": "figurines",
         "tags": ["handcrafted", "limited edition"], "in_stock": True, "badge": "Bestseller"},
    ],
    "collections": [{"id": "figurines", "title": "Figurines", "product_ids": ["d1", "d2", "d3"]}],
    "themes": {"control": dict(THEME), "treatment": dict(THEME, theme_id="modern", collection_depth=2)},
}


@pytest.fixture
def tiny_doc():
    return copy.deepcopy(TINY_DOC)


@pytest.fixture
def tiny_store(tiny_doc):
    from synthab.storefront import load_storefront

    return load_storefront(tiny_doc)


def make_persona(tier="Budget", regime="Shallow", premium=0.0, performance=0.0, ethics=0.0) -> PersonaDimensions:
    gap = {"Budget": 0.6, "MidRange": 0.4, "Premium": 0.1}[tier]
    score = {"Shallow": 0.2, "Moderate": 0.5, "Deep": 0.8}[regime]
    assert regime_for_score(score).value == regime
    return PersonaDimensions(
        price_tier=PriceTier(tier),
        price_gap=gap,
        exploration=score,
        regime=ExplorationRegime(regime),
        premium_focus=premium,
        performance_focus=performance,
        ethics_focus=ethics,
    )


def make_profile(category="figurines", purchase=True, refs=None, shop_id="tiny", agent_index=0, **persona_kw) -> AgentProfile:
    phrase = (PURCHASE_PHRASES if purchase else BROWSE_PHRASES)[0]
    intent = BuyerIntent(category, purchase, intent_text(category, phrase))
    prefs = ProductPreferences([category], ["Pocket Dragon"], "fixture")
    refs = {"figurines": 700.0} if refs is None else refs
    return AgentProfile(intent, make_persona(**persona_kw), prefs, 0, shop_id, refs, agent_index)


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- acceptance verdicts

_VERDICTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        _VERDICTS[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, verdict = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}")
