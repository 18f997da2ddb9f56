"""Per-cluster product preference extraction via a model backend."""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from ..errors import EmptyClusterSummary
from ..llm.base import BackendRequest, complete_with_retries
from .aggregate import BuyerAggregate, ProductRef

MAX_CATEGORIES = 10
MAX_PRODUCTS = 10

PREFERENCES_SCHEMA = {
    "type": "object",
    "required": ["categories", "products", "reasoning"],
    "properties": {
        "categories": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "products": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "reasoning": {"type": "string"},
    },
}

# Original prompt wording for this harness.
PREFERENCES_SYSTEM = (
    "You are an e-commerce analyst. Given a summary of what one group of shoppers "
    "browsed and bought in a store, name the broad product categories they care "
    "about (generic descriptors only, never product or brand names, at most ten), "
    "list up to ten individual products that are unusually popular with them, and "
    "give a short reasoning. Answer with JSON only."
)


@dataclass(frozen=True, slots=True)
class ShopMeta:
    name: str
    industry: str = ""
    country: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "industry": self.industry, "country": self.country}


@dataclass(slots=True)
class ClusterSummary:
    cluster_id: int
    browsed: list[ProductRef] = field(default_factory=list)
    purchased: list[ProductRef] = field(default_factory=list)

    @classmethod
    def from_aggregate(cls, cluster_id: int, agg: BuyerAggregate) -> "ClusterSummary":
        return cls(cluster_id, list(agg.browsed_products), list(agg.purchased_products))

    def counts(self) -> dict:
        def tally(items):
            c = Counter((t, cat) for t, _, cat in items)
            return [{"title": t, "category": cat, "count": n} for (t, cat), n in sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))]

        return {"browsed": tally(self.browsed), "purchased": tally(self.purchased)}


@dataclass(slots=True)
class ProductPreferences:
    categories: list[str]
    products: list[str]
    reasoning: str = ""

    def to_json(self) -> dict:
        return {"categories": list(self.categories), "products": list(self.products), "reasoning": self.reasoning}

    @classmethod
    def from_json(cls, obj: dict) -> "ProductPreferences":
        return cls(list(obj["categories"]), list(obj["products"]), obj.get("reasoning", ""))


def _clean_categories(raw: Iterable[str], catalog_titles: Sequence[str]) -> list[str]:
    titles = [t.lower() for t in catalog_titles if t]
    out: list[str] = []
    for cat in raw:
        c = " ".join(cat.lower().replace(".", " ").split())
        if not c or c in out:
            continue
        if any(t in c for t in titles):
            continue
        out.append(c)
    return out[:MAX_CATEGORIES]


def extract_preferences(
    shop: ShopMeta,
    summary: ClusterSummary,
    backend,
    catalog_titles: Sequence[str] = (),
    retries: int = 3,
) -> ProductPreferences:
    if not summary.browsed and not summary.purchased:
        raise EmptyClusterSummary(f"cluster {summary.cluster_id} has no browsed or purchased products")

    def check(value: dict) -> str | None:
        if not _clean_categories(value["categories"], catalog_titles):
            return "categories must be generic descriptors, not product names"
        if not any(p.strip() for p in value["products"]):
            return "products must not be empty"
        return None

    payload = {"shop": shop.to_json(), "cluster_id": summary.cluster_id, **summary.counts()}
    request = BackendRequest(
        system_text=PREFERENCES_SYSTEM,
        user_text=json.dumps(payload, sort_keys=True),
        schema=PREFERENCES_SCHEMA,
        task="preferences",
        context={"shop": shop, "summary": summary},
    )
    value, _ = complete_with_retries(backend, request, retries=retries, check=check)
    products = [p.strip() for p in value["products"] if p.strip()][:MAX_PRODUCTS]
    return ProductPreferences(
        categories=_clean_categories(value["categories"], catalog_titles),
        products=products,
        reasoning=value["reasoning"],
    )
