"""Purchase/browse intent mix and two-sentence intent generation."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from ..errors import NoCategories, TooFewAgents
from .preferences import ProductPreferences

PURCHASE_PHRASES = (
    "You are ready to purchase.",
    "You are planning to buy.",
    "You are intending to make a purchase.",
)
BROWSE_PHRASES = (
    "You are researching options.",
    "You are browsing for ideas.",
    "You are comparing what is available.",
)

FORBIDDEN_TERMS = ("bundle", "size", "discount", "button", "banner", "menu", "theme", "layout")
_FORBIDDEN = re.compile(r"\b(?:" + "|".join(FORBIDDEN_TERMS) + r")(?:s|es)?\b", re.IGNORECASE)
_TEMPLATE = re.compile(r"^You are looking for ([^.]+)\. ([^.]+\.)$")


def has_forbidden_term(text: str) -> bool:
    return _FORBIDDEN.search(text) is not None


@dataclass(frozen=True, slots=True)
class BuyerIntent:
    category: str
    purchase_focused: bool
    text: str

    def __post_init__(self):
        m = _TEMPLATE.match(self.text)
        if not m or m.group(1) != self.category:
            raise ValueError(f"intent text does not follow the template: {self.text!r}")

    def to_json(self) -> dict:
        return {"category": self.category, "purchase_focused": self.purchase_focused, "text": self.text}

    @classmethod
    def from_json(cls, obj: dict) -> "BuyerIntent":
        return cls(obj["category"], obj["purchase_focused"], obj["text"])


def round_half_away(x: Decimal) -> int:
    sign = -1 if x < 0 else 1
    return sign * int(abs(x).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def calibrate_intent_mix(a2c_mean: float, n: int) -> int:
    """Number of purchase-focused agents out of ``n``.

    The product is taken in decimal from the shortest repr of ``a2c_mean``,
    so 0.35 * 10 rounds to 4 rather than falling on the binary side of .5.
    """
    if n < 2:
        raise TooFewAgents(f"need at least 2 agents to mix intents, got {n}")
    if not 0.0 <= a2c_mean <= 1.0:
        raise ValueError(f"a2c_mean must be in [0, 1], got {a2c_mean}")
    count = round_half_away(Decimal(repr(float(a2c_mean))) * n)
    return min(max(count, 1), n - 1)


def intent_text(category: str, phrase: str) -> str:
    return f"You are looking for {category}. {phrase}"


def generate_intents(prefs: ProductPreferences, purchase_count: int, n: int, seed: int = 0) -> list[BuyerIntent]:
    """``n`` intents, exactly ``purchase_count`` of them purchase-focused.

    Categories are dealt round-robin; which agents get the purchase intents and
    where each phrase list starts are drawn from ``seed``. Any candidate text
    hitting a forbidden term is discarded and the next category is tried.
    """
    if not 1 <= purchase_count <= n - 1:
        raise ValueError(f"purchase_count must be in [1, {n - 1}], got {purchase_count}")
    categories = [" ".join(c.replace(".", " ").split()) for c in prefs.categories]
    categories = [c for c in categories if c and not has_forbidden_term(intent_text(c, BROWSE_PHRASES[0]))]
    if not categories:
        raise NoCategories("no usable categories to build intents from")
    rng = random.Random(seed)
    flags = [True] * purchase_count + [False] * (n - purchase_count)
    rng.shuffle(flags)
    offsets = {True: rng.randrange(len(PURCHASE_PHRASES)), False: rng.randrange(len(BROWSE_PHRASES))}
    used = {True: 0, False: 0}
    intents = []
    cursor = 0
    for purchase in flags:
        phrases = PURCHASE_PHRASES if purchase else BROWSE_PHRASES
        for _ in range(len(categories) * len(phrases)):
            category = categories[cursor % len(categories)]
            phrase = phrases[(offsets[purchase] + used[purchase]) % len(phrases)]
            cursor += 1
            text = intent_text(category, phrase)
            if not has_forbidden_term(text):
                break
            used[purchase] += 1
        else:
            raise NoCategories("every candidate intent hit a forbidden term")
        used[purchase] += 1
        intents.append(BuyerIntent(category, purchase, text))
    return intents
