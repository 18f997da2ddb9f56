"""Deterministic shopper policy used in place of a language model.

The policy reads the same inputs an LLM planner would (profile, current
accessibility tree, full session memory) and returns an
:class:`~synthab.agent.records.AgentDecision`. All of its progress
bookkeeping is recovered from the memory entries, so withholding memory
degrades it the way it degrades a real planner.

Reasoning strings carry short machine-readable tags (``[reject:price]``,
``[skip-price:2]``) that later steps read back out of memory.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from ..agent.records import AgentDecision, MemoryEntry, TerminationReason
from ..persona.scoring import Lexicons, matches_lexicon
from ..seeding import derive_seed
from ..storefront.axtree import AccessibilityNode
from ..storefront.env import Back, Click, TypeText
from ..storefront.model import parse_money

ENTRY_NAMES = {
    "start shopping", "see all departments", "shop", "shop all", "catalog", "collections",
    "browse", "all products", "products", "store", "all collections",
}
_TAG = re.compile(r"\[reject:(\w+)\]")
_SKIP = re.compile(r"\[skip-price:(\d+)\]")


@dataclass(frozen=True)
class ScriptedPolicyConfig:
    price_tolerance: float = 0.10
    exploration_budget: dict[str, int] = field(
        default_factory=lambda: {"Shallow": 3, "Moderate": 6, "Deep": 12}
    )
    # steps an agent will spend looking for the catalogue before giving up
    navigation_patience: dict[str, int] = field(
        default_factory=lambda: {"Shallow": 2, "Moderate": 4, "Deep": 7}
    )
    values_match_min: float = 0.2
    values_dominance: float = 0.5
    lexicons: Lexicons = field(default_factory=Lexicons)

    def __post_init__(self):
        if any(v < 1 for v in self.exploration_budget.values()):
            raise ValueError("exploration budgets must be >= 1")
        if any(v < 1 for v in self.navigation_patience.values()):
            raise ValueError("navigation patience must be >= 1")
        for name in ("price_tolerance", "values_match_min", "values_dominance"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @classmethod
    def from_json(cls, obj: dict) -> "ScriptedPolicyConfig":
        kwargs = dict(obj)
        if "lexicons" in kwargs:
            kwargs["lexicons"] = Lexicons.from_json(kwargs["lexicons"])
        return cls(**kwargs)


# ------------------------------------------------------------ page reading


@dataclass
class Card:
    ref: str
    title: str
    price: int | None
    sold_out: bool


@dataclass
class ProductInfo:
    title: str
    price: int | None
    category: str
    tags: list[str]
    in_stock: bool
    add_ref: str | None


@dataclass
class PageView:
    url: str
    kind: str
    title: str
    links: list[tuple[str, str]] = field(default_factory=list)
    nav: list[tuple[str, str]] = field(default_factory=list)
    cards: list[Card] = field(default_factory=list)
    home_ref: str | None = None
    next_ref: str | None = None
    textbox_ref: str | None = None
    product: ProductInfo | None = None
    notice: bool = False
    cart_count: int = 0


def page_kind(url: str) -> str:
    path = urlsplit(url).path or "/"
    segs = [s for s in path.split("/") if s]
    if not segs:
        return "home"
    head = segs[0]
    if head == "collections":
        return "collection" if len(segs) > 1 else "directory"
    return {
        "products": "product", "search": "search", "browse": "browse", "cart": "cart",
        "checkout": "checkout", "pages": "info",
    }.get(head, "other")


def _region(root: AccessibilityNode, name: str) -> AccessibilityNode | None:
    return next((c for c in root.children if c.role == "region" and c.name == name), None)


def read_page(url: str, root: AccessibilityNode) -> PageView:
    header = _region(root, "Header")
    main = _region(root, "Main") or root
    view = PageView(url=url, kind=page_kind(url) if header else "external", title=root.name.split(" | ")[0])
    view.notice = _region(root, "Cart notification") is not None
    if header:
        links = [n for n in header.children if n.role == "link"]
        if links:
            view.home_ref = links[0].ref
        for n in header.children:
            if n.role == "textbox":
                view.textbox_ref = n.ref
            if n.role == "link":
                m = re.fullmatch(r"Cart \((\d+)\)", n.name)
                if m:
                    view.cart_count = int(m.group(1))
                elif n is not links[0]:
                    view.nav.append((n.ref, n.name))
    for node in main.children:
        if node.role == "link":
            if node.name == "Next page":
                view.next_ref = node.ref
            elif node.name != "Previous page":
                view.links.append((node.ref, node.name))
        elif node.role == "listitem":
            link = next((c for c in node.children if c.role == "link"), None)
            if link is None:
                continue
            texts = [c.name for c in node.children if c.role == "text"]
            if view.kind in ("collection", "search"):
                price = next((parse_money(t) for t in texts if parse_money(t) is not None), None)
                view.cards.append(Card(link.ref, link.name, price, "Sold out" in texts))
            else:
                view.links.append((link.ref, link.name))
    if view.kind == "product":
        texts = [n.name for n in main.children if n.role == "text"]
        heading = next((n.name for n in main.children if n.role == "heading"), view.title)
        add = next((n.ref for n in main.children if n.role == "button" and n.name == "Add to cart"), None)

        def field_value(prefix):
            return next((t[len(prefix):] for t in texts if t.startswith(prefix)), "")

        view.product = ProductInfo(
            title=heading,
            price=parse_money(field_value("Price: ")),
            category=field_value("Category: "),
            tags=[t.strip() for t in field_value("Tags: ").split(",") if t.strip()],
            in_stock="Sold out" not in texts,
            add_ref=add,
        )
    return view


# ----------------------------------------------------------- memory reading


@dataclass
class History:
    steps: int = 0
    viewed: list[str] = field(default_factory=list)
    listing_titles: set[str] = field(default_factory=set)
    reached_listing: bool = False
    searched: bool = False
    failed_add: set[str] = field(default_factory=set)
    rejections: Counter = field(default_factory=Counter)

    @classmethod
    def from_memory(cls, memory: list[MemoryEntry]) -> "History":
        h = cls(steps=len(memory))
        for entry in memory:
            kind = page_kind(entry.url) if entry.url else "other"
            title = entry.page.split(" | ")[0]
            if kind == "product" and title not in h.viewed:
                h.viewed.append(title)
            if kind in ("collection", "search"):
                h.reached_listing = True
                if kind == "collection":
                    h.listing_titles.add(title)
            if isinstance(entry.action, TypeText):
                h.searched = True
            if entry.error == "out_of_stock":
                h.failed_add.add(title)
                h.rejections["stock"] += 1
            for tag in _TAG.findall(entry.reasoning):
                h.rejections[tag] += 1
            for n in _SKIP.findall(entry.reasoning):
                h.rejections["price"] += int(n)
        return h


# ---------------------------------------------------------------- helpers


def _tokens(text: str) -> set[str]:
    return {w[:-1] if len(w) > 3 and w.endswith("s") else w for w in re.findall(r"[a-z0-9]+", text.lower())}


def category_matches(category: str, label: str) -> bool:
    a, b = _tokens(category), _tokens(label)
    return bool(a) and bool(b) and (a <= b or b <= a)


def price_ceiling(profile, category: str) -> float | None:
    tier = profile.persona.price_tier.value
    if tier == "Premium":
        return None
    refs = profile.price_reference
    ref = refs.get(category)
    if ref is None and refs:
        ref = sorted(refs.values())[len(refs) // 2]
    if ref is None:
        return None
    return ref if tier == "Budget" else 2.0 * ref


def dominant_value(profile, config: ScriptedPolicyConfig) -> str | None:
    values = profile.persona.values()
    axis = max(values, key=lambda a: (values[a], a == "premium", a))
    return axis if values[axis] >= config.values_dominance else None


def values_overlap(product: ProductInfo, keywords) -> float:
    items = product.tags + [product.title]
    return sum(1 for t in items if matches_lexicon(t, keywords)) / len(items)


def judge(profile, product: ProductInfo, config: ScriptedPolicyConfig) -> str | None:
    """Rejection tag for a product, or None when it is acceptable."""
    if not category_matches(profile.intent.category, product.category):
        return "category"
    ceiling = price_ceiling(profile, product.category)
    if ceiling is not None and product.price is not None and product.price > ceiling * (1 + config.price_tolerance):
        return "price"
    if profile.persona.price_tier.value == "Premium" and not matches_lexicon(
        " ".join(product.tags + [product.title]), config.lexicons.premium
    ):
        return "premium"
    axis = dominant_value(profile, config)
    if axis is not None and values_overlap(product, config.lexicons.axis(axis)) < config.values_match_min:
        return "values"
    return None


def patience(profile, config: ScriptedPolicyConfig, seed: int) -> int:
    base = config.navigation_patience[profile.persona.regime.value]
    return max(1, base + derive_seed(seed, "patience") % 3 - 1)


def _act(reasoning: str, action) -> AgentDecision:
    return AgentDecision(reasoning=reasoning, terminate=False, action=action)


def _stop(reasoning: str, reason: TerminationReason) -> AgentDecision:
    return AgentDecision(reasoning=reasoning, terminate=True, termination_reason=reason)


def _give_up(profile, hist: History, extra: Counter | None = None) -> AgentDecision:
    counts = hist.rejections + (extra or Counter())
    if not profile.intent.purchase_focused:
        return _stop("Seen enough for now; not adding anything to the cart.", TerminationReason.NO_A2C_DECISION)
    price = counts["price"]
    if price and price >= max((v for k, v in counts.items() if k != "price"), default=0):
        return _stop(
            f"Everything suitable in {profile.intent.category} is above what I am willing to pay.",
            TerminationReason.PRICE_TOO_HIGH,
        )
    return _stop(
        f"I could not find a {profile.intent.category} product that fits what I want.",
        TerminationReason.NO_SUITABLE_PRODUCT,
    )


# ----------------------------------------------------------------- policy


def scripted_decide(
    profile,
    observation: tuple[str, AccessibilityNode],
    memory: list[MemoryEntry],
    config: ScriptedPolicyConfig | None = None,
    seed: int = 0,
) -> AgentDecision:
    config = config or ScriptedPolicyConfig()
    url, root = observation
    view = read_page(url, root)
    hist = History.from_memory(memory)
    intent = profile.intent
    budget = config.exploration_budget[profile.persona.regime.value]

    if view.cart_count > 0:
        return _stop("The product is in my cart; my goal is reached.", TerminationReason.GOAL_REACHED)
    if view.kind == "external":
        return _act("This left the store; going back.", Back())

    if view.kind == "product" and view.product is not None:
        product = view.product
        if product.title in hist.failed_add:
            return _act(f"{product.title} could not be added earlier; looking elsewhere. [reject:stock]", Back())
        verdict = judge(profile, product, config)
        views = len(hist.viewed)
        if intent.purchase_focused and verdict is None and product.add_ref is not None:
            return _act(f"{product.title} matches my goal and profile; adding it to the cart.", Click(product.add_ref))
        if not intent.purchase_focused:
            if views >= budget:
                return _give_up(profile, hist)
            return _act(f"Noted {product.title}; continuing to compare options.", Back())
        if views >= budget:
            return _give_up(profile, hist, Counter({verdict: 1}))
        return _act(f"{product.title} does not suit me ({verdict}); going back. [reject:{verdict}]", Back())

    if view.kind in ("collection", "search"):
        if len(hist.viewed) >= budget:
            return _give_up(profile, hist)
        ceiling = price_ceiling(profile, intent.category)
        skipped = 0
        for card in view.cards:
            if card.title in hist.viewed:
                continue
            if ceiling is not None and card.price is not None and card.price > ceiling * (1 + config.price_tolerance):
                skipped += 1
                continue
            note = f" [skip-price:{skipped}]" if skipped else ""
            return _act(f"Opening {card.title} to look closer.{note}", Click(card.ref))
        note = f" [skip-price:{skipped}]" if skipped else ""
        if view.next_ref is not None:
            return _act(f"Nothing suitable on this page; trying the next one.{note}", Click(view.next_ref))
        if view.home_ref is not None:
            return _act(f"This list is exhausted; heading back to the store front.{note}", Click(view.home_ref))
        return _give_up(profile, hist, Counter({"price": skipped}))

    # navigation pages: home, browse levels, directory, info, cart, checkout
    if not hist.reached_listing and hist.steps >= patience(profile, config, seed):
        return _stop(
            f"I cannot find where the {intent.category} are; leaving without a match.",
            TerminationReason.NO_SUITABLE_PRODUCT,
        )
    for ref, name in view.links + view.nav:
        if category_matches(intent.category, name) and name not in hist.listing_titles:
            return _act(f"'{name}' should have {intent.category}; opening it.", Click(ref))
    if hist.listing_titles:
        return _give_up(profile, hist)
    # header entry links lead back to browse/directory pages, so skip them there
    entries = view.links + ([] if view.kind in ("browse", "directory") else view.nav)
    for ref, name in entries:
        if name.lower() in ENTRY_NAMES:
            return _act(f"Following '{name}' to find {intent.category}.", Click(ref))
    if view.textbox_ref is not None and not hist.searched:
        return _act(f"Searching for {intent.category}.", TypeText(view.textbox_ref, intent.category))
    if view.kind != "home" and view.home_ref is not None and hist.steps < budget:
        return _act("Returning to the store front.", Click(view.home_ref))
    return _give_up(profile, hist)
