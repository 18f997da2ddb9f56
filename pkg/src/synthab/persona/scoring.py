"""Five persona dimensions: price tier, exploration depth and three value axes."""

from __future__ import annotations

import bisect
import json
import logging
import re
import statistics
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from ..errors import BackendError, MissingNorms, NoPricedProducts
from ..ingest import SessionFeatures
from ..llm.base import BackendRequest, complete_json
from .aggregate import BuyerAggregate, ProductRef

log = logging.getLogger(__name__)

VALUE_AXES = ("premium", "performance", "ethics")
DIMENSIONS = ("price_sensitivity", "exploration_depth") + tuple(f"{a}_focus" for a in VALUE_AXES)

BROWSED_WEIGHT = 0.3
PURCHASED_WEIGHT = 0.7


class PriceTier(str, Enum):
    BUDGET = "Budget"
    MID_RANGE = "MidRange"
    PREMIUM = "Premium"


class ExplorationRegime(str, Enum):
    SHALLOW = "Shallow"
    MODERATE = "Moderate"
    DEEP = "Deep"


def tier_for_gap(gap: float) -> PriceTier:
    if gap > 0.50:
        return PriceTier.BUDGET
    if gap > 0.30:
        return PriceTier.MID_RANGE
    return PriceTier.PREMIUM


def regime_for_score(score: float) -> ExplorationRegime:
    if score < 0.35:
        return ExplorationRegime.SHALLOW
    if score < 0.65:
        return ExplorationRegime.MODERATE
    return ExplorationRegime.DEEP


# ------------------------------------------------------------------ price


def score_price_sensitivity(
    agg: BuyerAggregate, category_medians: Mapping[str, float]
) -> tuple[PriceTier, float]:
    """Gap between the dearest browsed item and the average purchase.

    Each price is divided by its category's median catalog price first, so a
    gap means the same thing for water bottles as for shoes. Buyers with no
    purchases are measured against their average browsed price instead.
    """
    fallback = statistics.median(category_medians.values()) if category_medians else None

    def norm(items: Sequence[ProductRef]) -> list[float]:
        out = []
        for _, price, category in items:
            if price is None:
                continue
            median = category_medians.get(category) or fallback
            out.append(price / median if median else float(price))
        return out

    browsed = norm(agg.browsed_products)
    if not browsed:
        raise NoPricedProducts("buyer has no browsed product with a price")
    purchased = norm(agg.purchased_products)
    top = max(browsed)
    if top <= 0:
        return PriceTier.PREMIUM, 0.0
    reference = sum(purchased) / len(purchased) if purchased else sum(browsed) / len(browsed)
    gap = min(1.0, max(0.0, (top - reference) / top))
    return tier_for_gap(gap), gap


# ------------------------------------------------------------ exploration


@dataclass(slots=True)
class ShopNorms:
    """Sorted per-session distributions for one shop."""

    duration_s: list[float]
    searches: list[float]
    product_views: list[float]

    @classmethod
    def from_features(cls, features: Sequence[SessionFeatures]) -> "ShopNorms":
        return cls(
            duration_s=sorted(float(f.duration_s) for f in features),
            searches=sorted(float(f.search_count) for f in features),
            product_views=sorted(float(f.product_views) for f in features),
        )

    def to_json(self) -> dict:
        return {"duration_s": self.duration_s, "searches": self.searches, "product_views": self.product_views}

    @classmethod
    def from_json(cls, obj: dict) -> "ShopNorms":
        return cls(obj["duration_s"], obj["searches"], obj["product_views"])


def percentile_rank(sorted_values: Sequence[float], value: float) -> float:
    """Mid-rank percentile in [0, 1]: ties count half."""
    n = len(sorted_values)
    lo = bisect.bisect_left(sorted_values, value)
    hi = bisect.bisect_right(sorted_values, value)
    return (lo + 0.5 * (hi - lo)) / n


def score_exploration(agg: BuyerAggregate, norms: ShopNorms | None) -> tuple[float, ExplorationRegime]:
    if norms is None or not (norms.duration_s and norms.searches and norms.product_views):
        raise MissingNorms("shop norms are required to rank exploration")
    score = (
        percentile_rank(norms.duration_s, agg.mean_duration_s)
        + percentile_rank(norms.searches, agg.mean_searches)
        + percentile_rank(norms.product_views, agg.mean_product_views)
    ) / 3.0
    return score, regime_for_score(score)


# ----------------------------------------------------------------- values


@dataclass(frozen=True, slots=True)
class Lexicons:
    premium: tuple[str, ...] = (
        "premium", "luxury", "handcrafted", "handmade", "artisan", "crafted",
        "deluxe", "limited edition", "prestige", "signature",
    )
    performance: tuple[str, ...] = (
        "durable", "professional", "pro grade", "professional grade", "commercial grade",
        "heavy duty", "certified", "reliable", "high performance", "tested",
    )
    ethics: tuple[str, ...] = (
        "organic", "sustainable", "eco", "recycled", "fair trade", "ethically sourced",
        "vegan", "biodegradable", "bamboo", "upcycled",
    )

    def axis(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)

    @classmethod
    def from_json(cls, obj: dict) -> "Lexicons":
        return cls(**{axis: tuple(obj[axis]) for axis in VALUE_AXES if axis in obj})

    @classmethod
    def load(cls, path: str | Path) -> "Lexicons":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {axis: list(self.axis(axis)) for axis in VALUE_AXES}


def _normalize(text: str) -> str:
    return " " + re.sub(r"[^a-z0-9]+", " ", text.lower()).strip() + " "


def matches_lexicon(text: str, keywords: Sequence[str]) -> bool:
    hay = _normalize(text)
    return any(_normalize(k) in hay for k in keywords)


@dataclass(frozen=True, slots=True)
class ValueScores:
    premium: float
    performance: float
    ethics: float

    def as_dict(self) -> dict[str, float]:
        return {"premium": self.premium, "performance": self.performance, "ethics": self.ethics}


def _share(items: Sequence[ProductRef], keywords: Sequence[str]) -> float:
    if not items:
        return 0.0
    return sum(1 for title, _, cat in items if matches_lexicon(f"{title} {cat}", keywords)) / len(items)


def score_values(agg: BuyerAggregate, lexicons: Lexicons = Lexicons()) -> ValueScores:
    scores = {}
    for axis in VALUE_AXES:
        kw = lexicons.axis(axis)
        browsed = _share(agg.browsed_products, kw)
        if agg.purchased_products:
            scores[axis] = BROWSED_WEIGHT * browsed + PURCHASED_WEIGHT * _share(agg.purchased_products, kw)
        else:
            scores[axis] = browsed
    return ValueScores(**scores)


# ---------------------------------------------------------------- persona


@dataclass(slots=True)
class PersonaDimensions:
    price_tier: PriceTier
    price_gap: float
    exploration: float
    regime: ExplorationRegime
    premium_focus: float
    performance_focus: float
    ethics_focus: float
    confidence: dict[str, float] = field(default_factory=dict)
    reasoning: str = ""
    session_count: int = 1

    def values(self) -> dict[str, float]:
        return {"premium": self.premium_focus, "performance": self.performance_focus, "ethics": self.ethics_focus}

    def to_json(self) -> dict:
        return {
            "price_tier": self.price_tier.value,
            "price_gap": self.price_gap,
            "exploration": self.exploration,
            "regime": self.regime.value,
            "premium_focus": self.premium_focus,
            "performance_focus": self.performance_focus,
            "ethics_focus": self.ethics_focus,
            "confidence": dict(self.confidence),
            "reasoning": self.reasoning,
            "session_count": self.session_count,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PersonaDimensions":
        return cls(
            price_tier=PriceTier(obj["price_tier"]),
            price_gap=obj["price_gap"],
            exploration=obj["exploration"],
            regime=ExplorationRegime(obj["regime"]),
            premium_focus=obj["premium_focus"],
            performance_focus=obj["performance_focus"],
            ethics_focus=obj["ethics_focus"],
            confidence=dict(obj.get("confidence", {})),
            reasoning=obj.get("reasoning", ""),
            session_count=obj.get("session_count", 1),
        )


PERSONA_SCHEMA = {
    "type": "object",
    "required": ["reasoning", "confidence"],
    "properties": {
        "reasoning": {"type": "string"},
        "confidence": {
            "type": "object",
            "properties": {d: {"type": "number", "minimum": 0, "maximum": 1} for d in DIMENSIONS},
        },
    },
}

PERSONA_SYSTEM = (
    "You review shopper behaviour summaries for an online store. Numeric scores are "
    "already computed; explain them briefly and rate how confident each one is (0-1). "
    "Answer with JSON only."
)


def default_confidence(session_count: int) -> float:
    return 1.0 - 1.0 / (1.0 + session_count)


def build_persona(
    agg: BuyerAggregate,
    category_medians: Mapping[str, float],
    norms: ShopNorms,
    lexicons: Lexicons = Lexicons(),
    backend=None,
    retries: int = 3,
) -> PersonaDimensions:
    """Score all five dimensions; an optional backend may only rewrite the
    reasoning text and the confidences, never the scores."""
    tier, gap = score_price_sensitivity(agg, category_medians)
    exploration, regime = score_exploration(agg, norms)
    values = score_values(agg, lexicons)
    conf = default_confidence(agg.session_count)
    persona = PersonaDimensions(
        price_tier=tier,
        price_gap=gap,
        exploration=exploration,
        regime=regime,
        premium_focus=values.premium,
        performance_focus=values.performance,
        ethics_focus=values.ethics,
        confidence={d: conf for d in DIMENSIONS},
        session_count=agg.session_count,
    )
    persona.reasoning = (
        f"{tier.value} tier (price gap {gap:.2f}); {regime.value.lower()} exploration "
        f"(score {exploration:.2f}); values premium {values.premium:.2f}, "
        f"performance {values.performance:.2f}, ethics {values.ethics:.2f} "
        f"over {agg.session_count} session(s)."
    )
    if backend is None:
        return persona
    request = BackendRequest(
        system_text=PERSONA_SYSTEM,
        user_text=json.dumps({"aggregate": agg.to_json(), "scores": persona.to_json()}, sort_keys=True),
        schema=PERSONA_SCHEMA,
        task="persona",
        context={"aggregate": agg, "persona": persona},
    )
    try:
        answer = complete_json(backend, request, retries=retries)
    except BackendError as exc:
        log.warning("persona refinement unavailable, keeping defaults: %s", exc)
        return persona
    persona.reasoning = answer["reasoning"] or persona.reasoning
    for dim, value in answer.get("confidence", {}).items():
        if dim in persona.confidence:
            persona.confidence[dim] = min(1.0, max(0.0, float(value)))
    return persona
