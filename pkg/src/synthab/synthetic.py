"""Deterministic synthetic shops, clickstreams and agent profiles.

Used by the test-suite, the acceptance checks and ``synthab synth``. Nothing
here is meant to look like real traffic beyond having the right shape: a few
buyer archetypes with distinct price, depth and value habits, so clustering
and persona scoring have something to find.
"""

from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass

from .ingest import Event, EventType
from .persona.intents import BROWSE_PHRASES, PURCHASE_PHRASES, BuyerIntent, intent_text
from .persona.preferences import ProductPreferences
from .persona.profiles import AgentProfile
from .persona.scoring import ExplorationRegime, PersonaDimensions, PriceTier
from .seeding import derive_seed

# category, collection title, product nouns, base price in cents
CATEGORIES = (
    ("chairs", "Chairs", ("Lounge Chair", "Desk Chair", "Dining Chair", "Rocking Chair"), 12000),
    ("lamps", "Lamps", ("Table Lamp", "Floor Lamp", "Desk Lamp", "Reading Lamp"), 6000),
    ("rugs", "Rugs", ("Wool Rug", "Runner Rug", "Round Rug", "Jute Rug"), 9000),
    ("mugs", "Mugs", ("Coffee Mug", "Travel Mug", "Tea Mug", "Espresso Cup"), 1800),
    ("candles", "Candles", ("Pillar Candle", "Jar Candle", "Taper Candle", "Tea Light Set"), 2200),
    ("planters", "Planters", ("Ceramic Planter", "Hanging Planter", "Window Box", "Plant Stand"), 3500),
    ("throws", "Throws", ("Knit Throw", "Fleece Throw", "Linen Throw", "Quilted Throw"), 5500),
    ("notebooks", "Notebooks", ("Dot Notebook", "Lined Journal", "Sketchbook", "Planner"), 1500),
)
ADJECTIVES = ("Classic", "Modern", "Nordic", "Coastal", "Urban", "Harbor", "Meadow", "Summit", "Canyon", "Willow")
VALUE_TAGS = {
    "premium": ("handcrafted", "artisan", "limited edition", "luxury"),
    "performance": ("durable", "heavy duty", "professional grade", "tested"),
    "ethics": ("organic", "recycled", "fair trade", "sustainable"),
}
PLAIN_TAGS = ("bestseller", "new", "gift idea", "everyday", "compact", "colorful")
SHOP_NAMES = ("Maple Lane", "North Loft", "Cedar House", "Blue Harbor", "Olive Row", "Stone Mill", "Fern Hall", "Copper Yard")
TREATMENTS = ("deeper", "shallower", "hide_home", "search_on", "identical")


def _theme(theme_id: str, collections: list[str], depth: int, search: bool, per_page: int = 8) -> dict:
    return {
        "theme_id": theme_id,
        "home_collections": list(collections),
        "products_per_page": per_page,
        "nav_links": ["Shop", "About"],
        "search_enabled": search,
        "product_card_fields": ["title", "price", "reviews", "badge"],
        "collection_depth": depth,
    }


def make_storefront(
    shop_index: int,
    seed: int = 0,
    treatment: str = "deeper",
    n_categories: int = 4,
    products_per_category: int = 12,
    search: bool = False,
    depth: int = 1,
) -> dict:
    """A storefront document whose treatment theme differs from control as named.

    ``deeper`` adds one browse level, ``shallower`` removes one (control starts
    one deeper), ``hide_home`` features a single collection on the home page,
    ``search_on`` enables search in treatment only, ``identical`` changes
    nothing but the theme id.
    """
    if treatment not in TREATMENTS:
        raise ValueError(f"unknown treatment {treatment!r}")
    rng = random.Random(derive_seed(seed, "storefront", shop_index))
    cats = rng.sample(CATEGORIES, n_categories)
    catalog, collections = [], []
    for ci, (category, title, nouns, base) in enumerate(cats):
        pids = []
        for j in range(products_per_category):
            pid = f"p{ci:02d}{j:02d}"
            tags = list(rng.sample(PLAIN_TAGS, 2))
            axis = rng.choice((None, None, "premium", "performance", "ethics"))
            if axis:
                tags.append(rng.choice(VALUE_TAGS[axis]))
            spread = {None: 1.0, "premium": 1.8, "performance": 1.3, "ethics": 1.2}[axis]
            price = int(base * spread * rng.lognormvariate(0.0, 0.35))
            catalog.append(
                {
                    "product_id": pid,
                    "title": f"{ADJECTIVES[j % len(ADJECTIVES)]} {nouns[j % len(nouns)]} {j // len(ADJECTIVES) + 1}",
                    "price": max(price, 100),
                    "category": category,
                    "tags": tags,
                    "in_stock": rng.random() > 0.05,
                    "description": f"A {category[:-1]} from the {title.lower()} range.",
                    "rating": round(rng.uniform(3.2, 5.0), 1),
                    "review_count": rng.randrange(0, 400),
                    "badge": "New" if "new" in tags else None,
                }
            )
            pids.append(pid)
        collections.append({"id": category, "title": title, "product_ids": pids})
    all_ids = [c["id"] for c in collections]
    control_depth = depth + 1 if treatment == "shallower" else depth
    control = _theme("control", all_ids, control_depth, search and treatment != "search_on")
    treat = _theme("treatment", all_ids, control_depth, search or treatment == "search_on")
    if treatment == "deeper":
        treat["collection_depth"] = control_depth + 1
    elif treatment == "shallower":
        treat["collection_depth"] = control_depth - 1
    elif treatment == "hide_home":
        treat["home_collections"] = all_ids[:1]
    name = SHOP_NAMES[shop_index % len(SHOP_NAMES)] + ("" if shop_index < len(SHOP_NAMES) else f" {shop_index}")
    return {
        "shop": {"name": name, "industry": "home goods", "country": "US"},
        "catalog": catalog,
        "collections": collections,
        "themes": {"control": control, "treatment": treat},
    }


# ------------------------------------------------------------ clickstreams


@dataclass(frozen=True, slots=True)
class Archetype:
    name: str
    price_pick: str  # "cheap" | "dear" | "any"
    views: tuple[int, int]
    searches: tuple[int, int]
    buy_prob: float
    value_axis: str | None = None


ARCHETYPES = (
    Archetype("bargain", "cheap", (2, 4), (0, 1), 0.45),
    Archetype("connoisseur", "dear", (3, 6), (0, 2), 0.55, "premium"),
    Archetype("researcher", "any", (8, 16), (2, 5), 0.25, "performance"),
    Archetype("green", "any", (4, 8), (1, 3), 0.40, "ethics"),
)


def make_clickstream(storefront: dict, shop_id: str, n_buyers: int = 60, seed: int = 0) -> list[Event]:
    rng = random.Random(derive_seed(seed, "clickstream", shop_id))
    products = storefront["catalog"]
    by_cat: dict[str, list[dict]] = {}
    for p in products:
        by_cat.setdefault(p["category"], []).append(p)
    events: list[Event] = []
    clock = 1_700_000_000_000
    for b in range(n_buyers):
        arch = ARCHETYPES[b % len(ARCHETYPES)]
        buyer = f"{shop_id}-b{b:04d}"
        home_cat = rng.choice(sorted(by_cat))
        for s in range(rng.randint(1, 3)):
            sid = f"{buyer}-s{s}"
            t = clock + rng.randrange(0, 10_000_000)
            clock += 60_000

            def emit(etype, **kw):
                nonlocal t
                events.append(Event(sid, buyer, shop_id, t, etype, **kw))
                t += rng.randrange(4_000, 40_000 if arch.name != "researcher" else 90_000)

            emit(EventType.PAGE_VIEW)
            for _ in range(rng.randint(*arch.searches)):
                emit(EventType.SEARCH, search_query=home_cat)
            pool = by_cat[home_cat] if rng.random() < 0.8 else products
            viewed = rng.sample(pool, min(len(pool), rng.randint(*arch.views)))
            for p in viewed:
                emit(EventType.PRODUCT_VIEW, product_id=p["product_id"], product_title=p["title"], product_price=p["price"])
            if rng.random() >= arch.buy_prob:
                continue
            ranked = sorted(viewed, key=lambda p: p["price"])
            if arch.value_axis:
                keen = [p for p in ranked if any(t in VALUE_TAGS[arch.value_axis] for t in p["tags"])]
                ranked = keen or ranked
            pick = {"cheap": ranked[0], "dear": ranked[-1]}.get(arch.price_pick, ranked[len(ranked) // 2])
            emit(EventType.ADD_TO_CART, product_id=pick["product_id"], product_title=pick["title"],
                 product_price=pick["price"], cart_value=pick["price"])
            if rng.random() < 0.7:
                emit(EventType.BEGIN_CHECKOUT, cart_value=pick["price"])
                if rng.random() < 0.7:
                    emit(EventType.PURCHASE, order_value=pick["price"])
    return events


# ---------------------------------------------------------------- profiles


def make_profiles(
    storefront: dict,
    shop_id: str,
    n: int,
    seed: int = 0,
    regime_mix: Sequence[float] = (0.7, 0.2, 0.1),
    tier_mix: Sequence[float] = (0.3, 0.5, 0.2),
    purchase_share: float = 0.5,
) -> list[AgentProfile]:
    """Profiles drawn straight from mixes, bypassing the clickstream stages."""
    rng = random.Random(derive_seed(seed, "profiles", shop_id))
    categories = [c["id"] for c in storefront["collections"]]
    medians: dict[str, float] = {}
    for cat in categories:
        prices = sorted(p["price"] for p in storefront["catalog"] if p["category"] == cat)
        mid = len(prices) // 2
        medians[cat] = float(prices[mid]) if len(prices) % 2 else (prices[mid - 1] + prices[mid]) / 2
    prefs = ProductPreferences(categories, [p["title"] for p in storefront["catalog"][:5]], "synthetic")
    regimes = list(ExplorationRegime)
    tiers = [PriceTier.BUDGET, PriceTier.MID_RANGE, PriceTier.PREMIUM]
    gaps = {PriceTier.BUDGET: 0.6, PriceTier.MID_RANGE: 0.4, PriceTier.PREMIUM: 0.1}
    scores = {ExplorationRegime.SHALLOW: 0.2, ExplorationRegime.MODERATE: 0.5, ExplorationRegime.DEEP: 0.8}
    out = []
    for i in range(n):
        regime = rng.choices(regimes, weights=regime_mix)[0]
        tier = rng.choices(tiers, weights=tier_mix)[0]
        purchase = rng.random() < purchase_share
        category = categories[i % len(categories)]
        phrases = PURCHASE_PHRASES if purchase else BROWSE_PHRASES
        intent = BuyerIntent(category, purchase, intent_text(category, phrases[i % len(phrases)]))
        persona = PersonaDimensions(
            price_tier=tier,
            price_gap=gaps[tier],
            exploration=scores[regime],
            regime=regime,
            premium_focus=0.6 if tier is PriceTier.PREMIUM else 0.1,
            performance_focus=0.2,
            ethics_focus=0.1,
            confidence={},
            reasoning="synthetic profile",
        )
        out.append(AgentProfile(intent, persona, prefs, i % 3, shop_id, medians, agent_index=i))
    return out


# ---------------------------------------------------------------- fixtures

HUMAN_DELTAS = {"deeper": -0.02, "shallower": 0.015, "hide_home": -0.01, "search_on": 0.01, "identical": 0.0}


def write_fixture(
    outdir,
    n_shops: int = 5,
    n_buyers: int = 60,
    agents_per_shop: int = 100,
    seed: int = 0,
    repeat: int = 1,
    treatments: Sequence[str] | None = None,
) -> "Path":
    """Write storefronts, clickstreams and a ``config.yaml`` that runs them."""
    import json
    from pathlib import Path

    import yaml

    out = Path(outdir)
    (out / "shops").mkdir(parents=True, exist_ok=True)
    treatments = list(treatments or [TREATMENTS[i % len(TREATMENTS)] for i in range(n_shops)])
    shops = []
    for i in range(n_shops):
        shop_id = f"shop{i:02d}"
        doc = make_storefront(i, seed, treatments[i])
        (out / "shops" / f"{shop_id}.storefront.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        events = make_clickstream(doc, shop_id, n_buyers, seed)
        (out / "shops" / f"{shop_id}.events.jsonl").write_text(
            "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in events)
        )
        shops.append(
            {
                "shop_id": shop_id,
                "clickstream_path": f"shops/{shop_id}.events.jsonl",
                "storefront_path": f"shops/{shop_id}.storefront.json",
                "human_delta": HUMAN_DELTAS[treatments[i]] * (1 + 0.25 * (i // len(TREATMENTS))),
            }
        )
    config = {
        "shops": shops,
        "agents_per_shop": agents_per_shop,
        "k": "auto",
        "k_range": [2, 6],
        "restarts": 3,
        "backend": {"kind": "scripted"},
        "limits": {"max_steps": 30, "max_wall_time": 300, "loop_threshold": 3, "llm_retries": 3},
        "seeds": {"run_seed": seed},
        "repeat": repeat,
        "output_dir": "out",
        "mc_samples": 100000,
        "bootstrap": {"sizes": list(range(50, 701, 50)), "iterations": 1000},
    }
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return path
