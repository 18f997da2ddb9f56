"""Clickstream parsing, sessionization and session feature vectors."""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import ConflictingSessionOwner, EmptyInput, MalformedInput


class EventType(str, Enum):
    PAGE_VIEW = "page_view"
    PRODUCT_VIEW = "product_view"
    SEARCH = "search"
    ADD_TO_CART = "add_to_cart"
    BEGIN_CHECKOUT = "begin_checkout"
    PURCHASE = "purchase"


_PRODUCT_EVENTS = {EventType.PRODUCT_VIEW, EventType.ADD_TO_CART}

_STR_FIELDS = ("session_id", "buyer_id", "shop_id")
_OPT_STR_FIELDS = ("product_id", "product_title", "search_query")
_OPT_MONEY_FIELDS = ("product_price", "cart_value", "order_value")


@dataclass(frozen=True, slots=True)
class Event:
    session_id: str
    buyer_id: str
    shop_id: str
    timestamp: int
    event_type: EventType
    product_id: str | None = None
    product_title: str | None = None
    product_price: int | None = None
    search_query: str | None = None
    cart_value: int | None = None
    order_value: int | None = None

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        has_product = self.product_id is not None
        if has_product != (self.event_type in _PRODUCT_EVENTS):
            raise ValueError(f"product_id must be present iff type is product_view/add_to_cart (got {self.event_type.value})")
        has_order = self.order_value is not None
        if has_order != (self.event_type is EventType.PURCHASE):
            raise ValueError("order_value must be present iff type is purchase")
        for name in _OPT_MONEY_FIELDS:
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_json(self) -> dict:
        out = {
            "session_id": self.session_id,
            "buyer_id": self.buyer_id,
            "shop_id": self.shop_id,
            "ts": self.timestamp,
            "type": self.event_type.value,
        }
        for name in _OPT_STR_FIELDS + _OPT_MONEY_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_json(cls, obj: object) -> "Event":
        if not isinstance(obj, dict):
            raise ValueError("event must be a JSON object")
        kwargs = {}
        for name in _STR_FIELDS:
            value = obj.get(name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"{name} must be a non-empty string")
            kwargs[name] = value
        ts = obj.get("ts")
        if not isinstance(ts, int) or isinstance(ts, bool):
            raise ValueError("ts must be an integer")
        try:
            etype = EventType(obj.get("type"))
        except ValueError:
            raise ValueError(f"unknown event type {obj.get('type')!r}") from None
        for name in _OPT_STR_FIELDS:
            value = obj.get(name)
            if value is not None and not isinstance(value, str):
                raise ValueError(f"{name} must be a string")
            kwargs[name] = value
        for name in _OPT_MONEY_FIELDS:
            value = obj.get(name)
            if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
                raise ValueError(f"{name} must be an integer amount in minor units")
            kwargs[name] = value
        return cls(timestamp=ts, event_type=etype, **kwargs)


@dataclass(frozen=True, slots=True)
class MalformedLine:
    lineno: int
    message: str


@dataclass(slots=True)
class ParseResult:
    events: list[Event]
    errors: list[MalformedLine] = field(default_factory=list)


def parse_events(stream: str | Iterable[str]) -> ParseResult:
    """Parse line-delimited JSON events.

    Bad lines are collected with their 1-based line numbers; only a stream in
    which *every* line is bad raises.
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream
    events: list[Event] = []
    errors: list[MalformedLine] = []
    seen = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        seen += 1
        try:
            events.append(Event.from_json(json.loads(line)))
        except (json.JSONDecodeError, ValueError) as exc:
            errors.append(MalformedLine(lineno, str(exc)))
    if seen == 0:
        raise EmptyInput("clickstream contains no events")
    if not events:
        raise MalformedInput(errors)
    return ParseResult(events, errors)


@dataclass(frozen=True, slots=True)
class Session:
    session_id: str
    buyer_id: str
    shop_id: str
    events: tuple[Event, ...]

    @property
    def duration_ms(self) -> int:
        return self.events[-1].timestamp - self.events[0].timestamp

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "buyer_id": self.buyer_id,
            "shop_id": self.shop_id,
            "events": [e.to_json() for e in self.events],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Session":
        events = tuple(Event.from_json(e) for e in obj["events"])
        return cls(obj["session_id"], obj["buyer_id"], obj["shop_id"], events)


def sessionize(events: Sequence[Event]) -> list[Session]:
    groups: dict[str, list[tuple[int, Event]]] = {}
    for idx, ev in enumerate(events):
        group = groups.setdefault(ev.session_id, [])
        if group:
            first = group[0][1]
            if first.buyer_id != ev.buyer_id or first.shop_id != ev.shop_id:
                raise ConflictingSessionOwner(
                    f"session {ev.session_id!r} seen with owners "
                    f"({first.buyer_id}, {first.shop_id}) and ({ev.buyer_id}, {ev.shop_id})"
                )
        group.append((idx, ev))
    sessions = []
    for sid, group in groups.items():
        group.sort(key=lambda pair: (pair[1].timestamp, pair[0]))
        evs = tuple(ev for _, ev in group)
        sessions.append(Session(sid, evs[0].buyer_id, evs[0].shop_id, evs))
    sessions.sort(key=lambda s: (s.events[0].timestamp, s.session_id))
    return sessions


FEATURE_NAMES = (
    "duration_s",
    "event_count",
    "product_views",
    "distinct_products",
    "search_count",
    "a2c_count",
    "checkout_flag",
    "purchase_flag",
    "cart_value",
    "order_value",
)


@dataclass(frozen=True, slots=True)
class SessionFeatures:
    duration_s: float
    event_count: int
    product_views: int
    distinct_products: int
    search_count: int
    a2c_count: int
    checkout_flag: int
    purchase_flag: int
    cart_value: int
    order_value: int

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)

    def to_json(self) -> dict:
        return asdict(self)


def extract_features(session: Session) -> SessionFeatures:
    counts = {t: 0 for t in EventType}
    products = set()
    cart_value = 0
    order_value = 0
    for ev in session.events:
        counts[ev.event_type] += 1
        if ev.event_type is EventType.PRODUCT_VIEW:
            products.add(ev.product_id)
        if ev.cart_value is not None:
            cart_value = max(cart_value, ev.cart_value)
        if ev.event_type is EventType.PURCHASE:
            order_value += ev.order_value
    return SessionFeatures(
        duration_s=session.duration_ms / 1000.0,
        event_count=len(session.events),
        product_views=counts[EventType.PRODUCT_VIEW],
        distinct_products=len(products),
        search_count=counts[EventType.SEARCH],
        a2c_count=counts[EventType.ADD_TO_CART],
        checkout_flag=int(counts[EventType.BEGIN_CHECKOUT] > 0),
        purchase_flag=int(counts[EventType.PURCHASE] > 0),
        cart_value=cart_value,
        order_value=order_value,
    )


@dataclass(slots=True)
class StandardizedMatrix:
    rows: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def transform(self, x) -> np.ndarray:
        """Z-score new vectors with the stored moments."""
        x = np.asarray(x.as_vector() if isinstance(x, SessionFeatures) else x, dtype=float)
        safe = np.where(self.stds > 0, self.stds, 1.0)
        return np.where(self.stds > 0, (x - self.means) / safe, 0.0)


def standardize(vectors) -> StandardizedMatrix:
    """Column-wise z-scoring with population std; constant columns become 0."""
    if len(vectors) == 0:
        raise EmptyInput("cannot standardize zero vectors")
    if isinstance(vectors[0], SessionFeatures):
        X = np.vstack([v.as_vector() for v in vectors])
    else:
        X = np.atleast_2d(np.asarray(vectors, dtype=float))
    means = X.mean(axis=0)
    centered = X - means
    stds = np.sqrt((centered**2).mean(axis=0))
    # relative guard: float noise on a constant column must not be amplified
    scale = np.maximum(np.abs(means), 1.0)
    stds = np.where(stds > 1e-12 * scale, stds, 0.0)
    safe = np.where(stds > 0, stds, 1.0)
    rows = np.where(stds > 0, centered / safe, 0.0)
    return StandardizedMatrix(rows, means, stds)
