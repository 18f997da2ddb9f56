"""Storefront documents: catalog, collections and the two theme variants."""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass, field

import jsonschema

from ..errors import DuplicateProductId, SchemaError, UnknownCollectionRef

CARD_FIELDS = ("title", "price", "reviews", "badge")

_THEME_SCHEMA = {
    "type": "object",
    "required": [
        "theme_id",
        "home_collections",
        "products_per_page",
        "nav_links",
        "search_enabled",
        "product_card_fields",
        "collection_depth",
    ],
    "properties": {
        "theme_id": {"type": "string", "minLength": 1},
        "home_collections": {"type": "array", "items": {"type": "string"}},
        "products_per_page": {"type": "integer", "minimum": 1},
        "nav_links": {"type": "array", "items": {"type": "string", "minLength": 1}},
        "search_enabled": {"type": "boolean"},
        "product_card_fields": {
            "type": "array",
            "items": {"enum": list(CARD_FIELDS)},
            "uniqueItems": True,
        },
        "collection_depth": {"type": "integer", "minimum": 1},
        "external_links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "url"],
                "properties": {"label": {"type": "string"}, "url": {"type": "string"}},
            },
        },
    },
}

STOREFRONT_SCHEMA = {
    "type": "object",
    "required": ["shop", "catalog", "collections", "themes"],
    "properties": {
        "shop": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"type": "string", "minLength": 1},
                "industry": {"type": "string"},
                "country": {"type": "string"},
            },
        },
        "catalog": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["product_id", "title", "price", "category"],
                "properties": {
                    "product_id": {"type": "string", "minLength": 1},
                    "title": {"type": "string", "minLength": 1},
                    "price": {"type": "integer", "minimum": 0},
                    "category": {"type": "string", "minLength": 1},
                    "tags": {"type": "array", "items": {"type": "string"}},
                    "in_stock": {"type": "boolean"},
                    "description": {"type": "string"},
                    "rating": {"type": ["number", "null"]},
                    "review_count": {"type": "integer", "minimum": 0},
                    "badge": {"type": ["string", "null"]},
                },
            },
        },
        "collections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "title", "product_ids"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "title": {"type": "string", "minLength": 1},
                    "product_ids": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "themes": {
            "type": "object",
            "required": ["control", "treatment"],
            "properties": {"control": _THEME_SCHEMA, "treatment": _THEME_SCHEMA},
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(STOREFRONT_SCHEMA)


@dataclass(frozen=True, slots=True)
class Product:
    product_id: str
    title: str
    price: int
    category: str
    tags: tuple[str, ...] = ()
    in_stock: bool = True
    description: str = ""
    rating: float | None = None
    review_count: int = 0
    badge: str | None = None

    def to_json(self) -> dict:
        return {
            "product_id": self.product_id,
            "title": self.title,
            "price": self.price,
            "category": self.category,
            "tags": list(self.tags),
            "in_stock": self.in_stock,
            "description": self.description,
            "rating": self.rating,
            "review_count": self.review_count,
            "badge": self.badge,
        }


@dataclass(frozen=True, slots=True)
class Collection:
    id: str
    title: str
    product_ids: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class ThemeSpec:
    theme_id: str
    home_collections: tuple[str, ...]
    products_per_page: int
    nav_links: tuple[str, ...]
    search_enabled: bool
    product_card_fields: frozenset[str]
    collection_depth: int
    external_links: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_json(cls, obj: dict) -> "ThemeSpec":
        return cls(
            theme_id=obj["theme_id"],
            home_collections=tuple(obj["home_collections"]),
            products_per_page=obj["products_per_page"],
            nav_links=tuple(obj["nav_links"]),
            search_enabled=obj["search_enabled"],
            product_card_fields=frozenset(obj["product_card_fields"]),
            collection_depth=obj["collection_depth"],
            external_links=tuple((e["label"], e["url"]) for e in obj.get("external_links", [])),
        )

    def to_json(self) -> dict:
        return {
            "theme_id": self.theme_id,
            "home_collections": list(self.home_collections),
            "products_per_page": self.products_per_page,
            "nav_links": list(self.nav_links),
            "search_enabled": self.search_enabled,
            "product_card_fields": [f for f in CARD_FIELDS if f in self.product_card_fields],
            "collection_depth": self.collection_depth,
            "external_links": [{"label": lbl, "url": url} for lbl, url in self.external_links],
        }


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-") or "shop"


@dataclass(slots=True)
class Storefront:
    name: str
    industry: str
    country: str
    catalog: dict[str, Product]
    collections: dict[str, Collection]
    themes: dict[str, ThemeSpec]
    by_category: dict[str, list[str]] = field(default_factory=dict)

    @property
    def host(self) -> str:
        return f"{slugify(self.name)}.store.test"

    def theme(self, theme_id: str) -> ThemeSpec:
        """Look a theme up by variant key ("control"/"treatment") or by theme_id."""
        if theme_id in self.themes:
            return self.themes[theme_id]
        for spec in self.themes.values():
            if spec.theme_id == theme_id:
                return spec
        raise KeyError(theme_id)

    def category_medians(self) -> dict[str, float]:
        return {
            cat: float(statistics.median(self.catalog[pid].price for pid in pids))
            for cat, pids in self.by_category.items()
        }

    def to_json(self) -> dict:
        return {
            "shop": {"name": self.name, "industry": self.industry, "country": self.country},
            "catalog": [p.to_json() for p in self.catalog.values()],
            "collections": [
                {"id": c.id, "title": c.title, "product_ids": list(c.product_ids)}
                for c in self.collections.values()
            ],
            "themes": {key: spec.to_json() for key, spec in self.themes.items()},
        }


def load_storefront(doc: dict) -> Storefront:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"storefront document invalid at {where}: {err.message}")

    catalog: dict[str, Product] = {}
    by_category: dict[str, list[str]] = {}
    for raw in doc["catalog"]:
        pid = raw["product_id"]
        if pid in catalog:
            raise DuplicateProductId(f"duplicate product_id {pid!r}")
        catalog[pid] = Product(
            product_id=pid,
            title=raw["title"],
            price=raw["price"],
            category=raw["category"],
            tags=tuple(raw.get("tags", ())),
            in_stock=raw.get("in_stock", True),
            description=raw.get("description", ""),
            rating=raw.get("rating"),
            review_count=raw.get("review_count", 0),
            badge=raw.get("badge"),
        )
        by_category.setdefault(raw["category"], []).append(pid)

    collections: dict[str, Collection] = {}
    for raw in doc["collections"]:
        missing = [pid for pid in raw["product_ids"] if pid not in catalog]
        if missing:
            raise SchemaError(f"collection {raw['id']!r} references unknown products {missing}")
        collections[raw["id"]] = Collection(raw["id"], raw["title"], tuple(raw["product_ids"]))

    themes = {}
    for key in ("control", "treatment"):
        spec = ThemeSpec.from_json(doc["themes"][key])
        unknown = [cid for cid in spec.home_collections if cid not in collections]
        if unknown:
            raise UnknownCollectionRef(f"theme {spec.theme_id!r} references unknown collections {unknown}")
        themes[key] = spec

    shop = doc["shop"]
    return Storefront(
        name=shop["name"],
        industry=shop.get("industry", ""),
        country=shop.get("country", ""),
        catalog=catalog,
        collections=collections,
        themes=themes,
        by_category=by_category,
    )


def format_money(amount: int) -> str:
    return f"${amount // 100}.{amount % 100:02d}"


def parse_money(text: str) -> int | None:
    m = re.search(r"\$(\d+)\.(\d{2})", text)
    if not m:
        return None
    return int(m.group(1)) * 100 + int(m.group(2))
