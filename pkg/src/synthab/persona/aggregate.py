"""Buyer-grain aggregation of clickstream sessions."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from ..errors import EmptyInput
from ..ingest import EventType, Session, extract_features

ProductRef = tuple[str, int | None, str]  # (title, price, category)


@dataclass(slots=True)
class BuyerAggregate:
    session_count: int
    a2c_rate: float
    checkout_rate: float
    purchase_rate: float
    avg_cart_value: float
    avg_order_value: float
    browsed_products: list[ProductRef] = field(default_factory=list)
    purchased_products: list[ProductRef] = field(default_factory=list)
    mean_duration_s: float = 0.0
    mean_searches: float = 0.0
    mean_product_views: float = 0.0
    buyer_id: str | None = None

    def to_json(self) -> dict:
        return {
            "buyer_id": self.buyer_id,
            "session_count": self.session_count,
            "a2c_rate": self.a2c_rate,
            "checkout_rate": self.checkout_rate,
            "purchase_rate": self.purchase_rate,
            "avg_cart_value": self.avg_cart_value,
            "avg_order_value": self.avg_order_value,
            "browsed_products": [list(p) for p in self.browsed_products],
            "purchased_products": [list(p) for p in self.purchased_products],
            "mean_duration_s": self.mean_duration_s,
            "mean_searches": self.mean_searches,
            "mean_product_views": self.mean_product_views,
        }


def _product_ref(ev, catalog: Mapping[str, ProductRef] | None) -> ProductRef:
    known = catalog.get(ev.product_id) if catalog else None
    title = ev.product_title or (known[0] if known else ev.product_id)
    price = ev.product_price if ev.product_price is not None else (known[1] if known else None)
    category = known[2] if known else ""
    return (title, price, category)


def aggregate_buyers(
    sessions: Sequence[Session],
    catalog: Mapping[str, ProductRef] | None = None,
) -> BuyerAggregate:
    """Collapse sessions into one behavioural summary.

    Purchase events carry no product ids, so the products of a purchasing
    session are the ones it added to cart.
    """
    if not sessions:
        raise EmptyInput("no sessions to aggregate")
    n = len(sessions)
    feats = [extract_features(s) for s in sessions]
    browsed: list[ProductRef] = []
    purchased: list[ProductRef] = []
    for s, f in zip(sessions, feats):
        added = []
        for ev in s.events:
            if ev.event_type is EventType.PRODUCT_VIEW:
                browsed.append(_product_ref(ev, catalog))
            elif ev.event_type is EventType.ADD_TO_CART:
                added.append(_product_ref(ev, catalog))
        if f.purchase_flag:
            purchased.extend(added)
    carts = [f.cart_value for f in feats if f.cart_value > 0]
    orders = [f.order_value for f in feats if f.order_value > 0]
    buyers = {s.buyer_id for s in sessions}
    return BuyerAggregate(
        session_count=n,
        a2c_rate=sum(1 for f in feats if f.a2c_count > 0) / n,
        checkout_rate=sum(f.checkout_flag for f in feats) / n,
        purchase_rate=sum(f.purchase_flag for f in feats) / n,
        avg_cart_value=sum(carts) / len(carts) if carts else 0.0,
        avg_order_value=sum(orders) / len(orders) if orders else 0.0,
        browsed_products=browsed,
        purchased_products=purchased,
        mean_duration_s=sum(f.duration_s for f in feats) / n,
        mean_searches=sum(f.search_count for f in feats) / n,
        mean_product_views=sum(f.product_views for f in feats) / n,
        buyer_id=next(iter(buyers)) if len(buyers) == 1 else None,
    )


def group_by_buyer(sessions: Sequence[Session]) -> list[list[Session]]:
    """Sessions grouped per buyer, buyers ordered by their first session's position."""
    groups: dict[str, list[Session]] = {}
    for s in sessions:
        groups.setdefault(s.buyer_id, []).append(s)
    return list(groups.values())
