from .aggregate import BuyerAggregate, aggregate_buyers, group_by_buyer
from .intents import BuyerIntent, calibrate_intent_mix, generate_intents, has_forbidden_term
from .preferences import ClusterSummary, ProductPreferences, ShopMeta, extract_preferences
from .profiles import AgentProfile, allocate_agents, compose_profiles, render_persona, render_profile
from .scoring import (
    ExplorationRegime,
    Lexicons,
    PersonaDimensions,
    PriceTier,
    ShopNorms,
    ValueScores,
    build_persona,
    regime_for_score,
    score_exploration,
    score_price_sensitivity,
    score_values,
    tier_for_gap,
)

__all__ = [
    "AgentProfile",
    "BuyerAggregate",
    "BuyerIntent",
    "ClusterSummary",
    "ExplorationRegime",
    "Lexicons",
    "PersonaDimensions",
    "PriceTier",
    "ProductPreferences",
    "ShopMeta",
    "ShopNorms",
    "ValueScores",
    "aggregate_buyers",
    "allocate_agents",
    "build_persona",
    "calibrate_intent_mix",
    "compose_profiles",
    "extract_preferences",
    "generate_intents",
    "group_by_buyer",
    "has_forbidden_term",
    "regime_for_score",
    "render_persona",
    "render_profile",
    "score_exploration",
    "score_price_sensitivity",
    "score_values",
    "tier_for_gap",
]
