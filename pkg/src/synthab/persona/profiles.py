"""Agent profiles: one intent paired with one persona, rendered for prompts."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from ..errors import LengthMismatch, TooFewAgents
from .intents import BuyerIntent
from .preferences import ProductPreferences
from .scoring import VALUE_AXES, ExplorationRegime, PersonaDimensions, PriceTier

VALUE_LISTING_MIN = 0.3

TIER_LABELS = {
    PriceTier.BUDGET: "Budget (watches prices closely)",
    PriceTier.MID_RANGE: "Mid-range (weighs price against quality)",
    PriceTier.PREMIUM: "Premium (quality comes before price)",
}
REGIME_LABELS = {
    ExplorationRegime.SHALLOW: "Shallow (goes straight for a match, views few products)",
    ExplorationRegime.MODERATE: "Moderate (compares a handful of options)",
    ExplorationRegime.DEEP: "Deep (explores widely before deciding)",
}
VALUE_LABELS = {
    "premium": "Premium & Craftsmanship",
    "performance": "Performance & Reliability",
    "ethics": "Sustainability & Ethics",
}
TIER_BLOCKS = {
    PriceTier.BUDGET: (
        "Budget Tier Preferences",
        [
            "Responsive to discount signals, social proof and urgency cues",
            "Checks prices against alternatives before adding anything to cart",
        ],
    ),
    PriceTier.MID_RANGE: (
        "Mid-Range Tier Preferences",
        [
            "Accepts moderate prices when quality cues are visible",
            "Uses ratings to separate good value from cheap",
        ],
    ),
    PriceTier.PREMIUM: (
        "Premium Tier Preferences",
        [
            "Looks for luxury materials, refined craftsmanship and prestige cues",
            "Skips products that look cheap or mass-produced",
        ],
    ),
}
VALUE_BLOCKS = {
    "premium": ("Premium Value Preferences", ["Favors handcrafted, limited or signature items"]),
    "performance": (
        "Performance Value Preferences",
        ["Reads detailed specifications, customer reviews and materials information"],
    ),
    "ethics": ("Ethics Value Preferences", ["Prefers sustainable, organic or ethically sourced goods"]),
}


def listed_values(persona: PersonaDimensions) -> list[str]:
    vals = persona.values()
    return [a for a in VALUE_AXES if vals[a] >= VALUE_LISTING_MIN]


@dataclass(slots=True)
class AgentProfile:
    intent: BuyerIntent
    persona: PersonaDimensions
    preferences: ProductPreferences
    cluster_id: int
    shop_id: str
    price_reference: dict[str, float] = field(default_factory=dict)
    agent_index: int | None = None

    def __post_init__(self):
        if self.intent.category not in self.preferences.categories:
            raise ValueError(f"intent category {self.intent.category!r} not among preferences")

    @property
    def prompt_text(self) -> str:
        return render_profile(self)

    def to_json(self) -> dict:
        return {
            "shop_id": self.shop_id,
            "cluster_id": self.cluster_id,
            "agent_index": self.agent_index,
            "intent": self.intent.to_json(),
            "persona": self.persona.to_json(),
            "preferences": self.preferences.to_json(),
            "price_reference": dict(sorted(self.price_reference.items())),
            "prompt": self.prompt_text,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgentProfile":
        return cls(
            intent=BuyerIntent.from_json(obj["intent"]),
            persona=PersonaDimensions.from_json(obj["persona"]),
            preferences=ProductPreferences.from_json(obj["preferences"]),
            cluster_id=obj["cluster_id"],
            shop_id=obj["shop_id"],
            price_reference=dict(obj.get("price_reference", {})),
            agent_index=obj.get("agent_index"),
        )


def render_profile(profile: AgentProfile) -> str:
    return f"Intent: {profile.intent.text}\n\n" + render_persona(profile)


def render_persona(profile: AgentProfile) -> str:
    """Profile text without the intent line (price tier, depth, values, preferences)."""
    p = profile.persona
    lines = [
        "Shopping Profile:",
        f"- Price Tier: {TIER_LABELS[p.price_tier]}",
        f"- Exploration Depth: {REGIME_LABELS[p.regime]}",
        "",
        "Values:",
    ]
    axes = listed_values(p)
    lines += [f"- {VALUE_LABELS[a]}" for a in axes] or ["- No strong value orientation"]
    lines += ["", "Shopping Experience Preferences:"]
    title, items = TIER_BLOCKS[p.price_tier]
    lines.append(f"{title}:")
    lines += [f"- {item}" for item in items]
    for axis in axes:
        title, items = VALUE_BLOCKS[axis]
        lines.append(f"{title}:")
        lines += [f"- {item}" for item in items]
    if profile.preferences.products:
        lines += ["", "Products this shopper group likes: " + ", ".join(profile.preferences.products[:5])]
    return "\n".join(lines)


def compose_profiles(
    intents: Sequence[BuyerIntent],
    personas: Sequence[PersonaDimensions],
    prefs: ProductPreferences,
    cluster_id: int = 0,
    shop_id: str = "",
    price_reference: Mapping[str, float] | None = None,
) -> list[AgentProfile]:
    if len(intents) != len(personas):
        raise LengthMismatch(f"{len(intents)} intents vs {len(personas)} personas")
    ref = dict(price_reference or {})
    return [
        AgentProfile(intent, persona, prefs, cluster_id, shop_id, ref)
        for intent, persona in zip(intents, personas)
    ]


def allocate_agents(cluster_sizes: Mapping[int, int] | Sequence[int], total_agents: int) -> dict[int, int]:
    """Largest-remainder apportionment with a floor of one agent per non-empty cluster.

    Every non-empty cluster is first given one agent; the rest are shared in
    proportion to session counts, leftover seats going to the largest
    fractional remainders (ties to the lower cluster id).
    """
    sizes = dict(cluster_sizes) if isinstance(cluster_sizes, Mapping) else dict(enumerate(cluster_sizes))
    live = sorted(cid for cid, size in sizes.items() if size > 0)
    if total_agents < len(live):
        raise TooFewAgents(f"{total_agents} agents cannot cover {len(live)} non-empty clusters")
    out = {cid: 0 for cid in sizes}
    if not live:
        return out
    total_sessions = sum(sizes[c] for c in live)
    spare = total_agents - len(live)
    quotas = {c: spare * sizes[c] / total_sessions for c in live}
    for c in live:
        out[c] = 1 + int(quotas[c])
    leftover = total_agents - sum(out.values())
    order = sorted(live, key=lambda c: (-(quotas[c] - int(quotas[c])), c))
    for c in order[:leftover]:
        out[c] += 1
    return out
