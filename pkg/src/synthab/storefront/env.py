"""In-process storefront session: page rendering, observation and action execution.

A session owns a mutable :class:`EnvState`; the :class:`Storefront` it points at
is shared read-only. Rendering is a pure function of the state, so refs are
stable for as long as the state does not change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from urllib.parse import parse_qs, quote_plus, urlsplit

from .axtree import AccessibilityNode, assign_refs
from .model import Product, Storefront, ThemeSpec, format_money, slugify

# ---------------------------------------------------------------- actions


@dataclass(frozen=True, slots=True)
class Click:
    ref: str
    kind = "click"

    def to_json(self) -> dict:
        return {"type": "click", "ref": self.ref}


@dataclass(frozen=True, slots=True)
class TypeText:
    ref: str
    text: str
    kind = "type"

    def to_json(self) -> dict:
        return {"type": "type", "ref": self.ref, "text": self.text}


@dataclass(frozen=True, slots=True)
class Scroll:
    direction: str = "down"
    kind = "scroll"

    def to_json(self) -> dict:
        return {"type": "scroll", "direction": self.direction}


@dataclass(frozen=True, slots=True)
class Navigate:
    url: str
    kind = "navigate"

    def to_json(self) -> dict:
        return {"type": "navigate", "url": self.url}


@dataclass(frozen=True, slots=True)
class Back:
    kind = "back"

    def to_json(self) -> dict:
        return {"type": "back"}


Action = Click | TypeText | Scroll | Navigate | Back

ACTION_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["click", "type", "scroll", "navigate", "back"]},
        "ref": {"type": "string"},
        "text": {"type": "string"},
        "direction": {"enum": ["up", "down"]},
        "url": {"type": "string"},
    },
    "additionalProperties": False,
}


def action_from_json(obj: dict) -> Action:
    kind = obj.get("type")
    try:
        if kind == "click":
            return Click(obj["ref"])
        if kind == "type":
            return TypeText(obj["ref"], obj["text"])
        if kind == "scroll":
            return Scroll(obj.get("direction", "down"))
        if kind == "navigate":
            return Navigate(obj["url"])
        if kind == "back":
            return Back()
    except KeyError as exc:
        raise ValueError(f"action {kind!r} missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown action type {kind!r}")


# ---------------------------------------------------------------- state


@dataclass(frozen=True, slots=True)
class Page:
    kind: str  # home, browse, directory, collection, product, search, cart, checkout, info, external
    key: str | None = None
    page_no: int = 1
    query: str | None = None


HOME = Page("home")


@dataclass(frozen=True, slots=True)
class StepError:
    code: str
    message: str


@dataclass(slots=True)
class StepResult:
    observation: tuple[str, AccessibilityNode]
    error: StepError | None = None
    outcome: str = ""


@dataclass(slots=True)
class EnvState:
    storefront: Storefront
    theme: ThemeSpec
    current: Page = HOME
    cart: list[tuple[str, int]] = field(default_factory=list)
    visited: list[str] = field(default_factory=list)
    back_stack: list[Page] = field(default_factory=list)
    notice: str | None = None
    exited: bool = False
    checkout_started: bool = False
    rng_seed: int = 0

    @property
    def cart_value(self) -> int:
        return sum(price for _, price in self.cart)


def new_session(storefront: Storefront, theme: str | ThemeSpec, seed: int = 0) -> EnvState:
    spec = theme if isinstance(theme, ThemeSpec) else storefront.theme(theme)
    state = EnvState(storefront, spec, rng_seed=seed)
    state.visited.append(page_url(state, HOME))
    return state


# ---------------------------------------------------------------- urls


def page_path(page: Page) -> str:
    if page.kind == "home":
        return "/"
    if page.kind == "browse":
        return f"/browse/{page.key}"
    if page.kind == "directory":
        return "/collections"
    if page.kind in ("collection", "search"):
        base = f"/collections/{page.key}" if page.kind == "collection" else f"/search?q={quote_plus(page.query or '')}"
        if page.page_no > 1:
            base += ("&" if "?" in base else "?") + f"page={page.page_no}"
        return base
    if page.kind == "product":
        return f"/products/{page.key}"
    if page.kind in ("cart", "checkout"):
        return f"/{page.kind}"
    if page.kind == "info":
        return f"/pages/{page.key}"
    raise ValueError(page.kind)


def page_url(state: EnvState, page: Page) -> str:
    if page.kind == "external":
        return page.key or ""
    return f"https://{state.storefront.host}{page_path(page)}"


def resolve_url(state: EnvState, url: str) -> Page | None:
    """Map a URL onto a page of this storefront; external URLs map to ``external``."""
    parts = urlsplit(url)
    if parts.netloc and parts.netloc != state.storefront.host:
        return Page("external", key=url)
    path = parts.path or "/"
    query = parse_qs(parts.query)
    page_no = 1
    if "page" in query:
        try:
            page_no = max(1, int(query["page"][0]))
        except ValueError:
            return None
    segs = [s for s in path.split("/") if s]
    sf, theme = state.storefront, state.theme
    if not segs:
        return HOME
    if segs == ["cart"]:
        return Page("cart")
    if segs == ["checkout"]:
        return Page("checkout")
    if segs == ["collections"]:
        return Page("directory")
    if segs == ["search"] and theme.search_enabled:
        return Page("search", query=query.get("q", [""])[0], page_no=page_no)
    if len(segs) == 2:
        head, key = segs
        if head == "collections" and key in sf.collections:
            return Page("collection", key=key, page_no=page_no)
        if head == "products" and key in sf.catalog:
            return Page("product", key=key)
        if head == "browse" and key.isdigit() and 1 <= int(key) < theme.collection_depth:
            return Page("browse", key=key)
        if head == "pages" and key in {slugify(lbl) for lbl in theme.nav_links}:
            return Page("info", key=key)
    return None


# ---------------------------------------------------------------- rendering

_SHOP_ENTRY_LABELS = {"shop", "shop all", "catalog", "collections", "products", "browse", "store", "all products"}


def _link(name: str, target) -> AccessibilityNode:
    return AccessibilityNode("link", name, target=target)


def _text(name: str) -> AccessibilityNode:
    return AccessibilityNode("text", name)


def _shop_entry(theme: ThemeSpec) -> Page:
    return Page("browse", key="1") if theme.collection_depth > 1 else Page("directory")


def _nav_target(state: EnvState, label: str):
    low = label.strip().lower()
    if low == "home":
        return ("goto", HOME)
    if low in _SHOP_ENTRY_LABELS:
        return ("goto", _shop_entry(state.theme))
    if low == "cart":
        return ("goto", Page("cart"))
    for col in state.storefront.collections.values():
        if col.title.lower() == low:
            return ("goto", Page("collection", key=col.id))
    return ("goto", Page("info", key=slugify(label)))


def _header(state: EnvState) -> AccessibilityNode:
    theme = state.theme
    kids = [_link(state.storefront.name, ("goto", HOME))]
    kids += [_link(label, _nav_target(state, label)) for label in theme.nav_links]
    if theme.search_enabled:
        kids.append(AccessibilityNode("textbox", "Search products", target=("search",)))
    kids.append(_link(f"Cart ({len(state.cart)})", ("goto", Page("cart"))))
    return AccessibilityNode("region", "Header", children=kids)


def _product_card(product: Product, fields: frozenset[str]) -> AccessibilityNode:
    kids = [_link(product.title, ("goto", Page("product", key=product.product_id)))]
    if "price" in fields:
        kids.append(_text(format_money(product.price)))
    if "reviews" in fields and product.rating is not None:
        kids.append(_text(f"Rated {product.rating:.1f} of 5 ({product.review_count} reviews)"))
    if "badge" in fields:
        badge = "Sold out" if not product.in_stock else product.badge
        if badge:
            kids.append(_text(badge))
    return AccessibilityNode("listitem", "", children=kids)


def _listing(state: EnvState, page: Page, heading: str, pids: list[str]) -> list[AccessibilityNode]:
    per = state.theme.products_per_page
    pages = max(1, math.ceil(len(pids) / per))
    page_no = min(page.page_no, pages)
    chunk = pids[(page_no - 1) * per : page_no * per]
    nodes = [AccessibilityNode("heading", heading), _text(f"{len(pids)} products")]
    nodes += [_product_card(state.storefront.catalog[pid], state.theme.product_card_fields) for pid in chunk]
    if page_no > 1:
        nodes.append(_link("Previous page", ("goto", Page(page.kind, page.key, page_no - 1, page.query))))
    if page_no < pages:
        nodes.append(_link("Next page", ("goto", Page(page.kind, page.key, page_no + 1, page.query))))
    if pages > 1:
        nodes.append(_text(f"Page {page_no} of {pages}"))
    return nodes


def search_products(storefront: Storefront, query: str) -> list[str]:
    tokens = [t for t in query.lower().split() if t]
    if not tokens:
        return []
    hits = []
    for pid, p in storefront.catalog.items():
        hay = " ".join((p.title, p.category, " ".join(p.tags))).lower()
        if all(t in hay for t in tokens):
            hits.append(pid)
    return hits


def _collection_links(state: EnvState, cids) -> list[AccessibilityNode]:
    cols = state.storefront.collections
    return [
        AccessibilityNode("listitem", "", children=[_link(cols[cid].title, ("goto", Page("collection", key=cid)))])
        for cid in cids
    ]


def _main(state: EnvState) -> tuple[str, list[AccessibilityNode]]:
    page, sf, theme = state.current, state.storefront, state.theme
    kind = page.kind
    if kind == "home":
        nodes = [AccessibilityNode("heading", f"Welcome to {sf.name}")]
        if theme.collection_depth == 1:
            nodes.append(AccessibilityNode("heading", "Featured collections"))
            nodes += _collection_links(state, theme.home_collections)
        else:
            nodes.append(_link("Start shopping", ("goto", Page("browse", key="1"))))
        return "Home", nodes
    if kind == "browse":
        level = int(page.key)
        if level < theme.collection_depth - 1:
            nodes = [
                AccessibilityNode("heading", "Departments"),
                _link("See all departments", ("goto", Page("browse", key=str(level + 1)))),
            ]
        else:
            nodes = [AccessibilityNode("heading", "All collections")]
            nodes += _collection_links(state, theme.home_collections)
        return "Browse", nodes
    if kind == "directory":
        nodes = [AccessibilityNode("heading", "All collections")]
        nodes += _collection_links(state, sf.collections)
        return "Collections", nodes
    if kind == "collection":
        col = sf.collections[page.key]
        return col.title, _listing(state, page, col.title, list(col.product_ids))
    if kind == "search":
        return "Search", _listing(state, page, f'Search results for "{page.query}"', search_products(sf, page.query or ""))
    if kind == "product":
        p = sf.catalog[page.key]
        nodes = [
            AccessibilityNode("heading", p.title),
            _text(f"Price: {format_money(p.price)}"),
            _text(f"Category: {p.category}"),
        ]
        if p.tags:
            nodes.append(_text("Tags: " + ", ".join(p.tags)))
        if p.description:
            nodes.append(_text(p.description))
        if p.rating is not None:
            nodes.append(_text(f"Rated {p.rating:.1f} of 5 ({p.review_count} reviews)"))
        nodes.append(_text("In stock" if p.in_stock else "Sold out"))
        nodes.append(AccessibilityNode("button", "Add to cart", target=("add", p.product_id)))
        return p.title, nodes
    if kind == "cart":
        nodes = [AccessibilityNode("heading", "Your cart")]
        for pid, price in state.cart:
            nodes.append(AccessibilityNode("listitem", "", children=[_text(f"{sf.catalog[pid].title} {format_money(price)}")]))
        nodes.append(_text(f"Subtotal: {format_money(state.cart_value)}"))
        if state.cart:
            nodes.append(AccessibilityNode("button", "Checkout", target=("goto", Page("checkout"))))
        nodes.append(_link("Continue shopping", ("goto", HOME)))
        return "Cart", nodes
    if kind == "checkout":
        return "Checkout", [
            AccessibilityNode("heading", "Checkout"),
            _text(f"Order total: {format_money(state.cart_value)}"),
            _text("Payment is disabled in this simulation."),
        ]
    if kind == "info":
        label = next((lbl for lbl in theme.nav_links if slugify(lbl) == page.key), page.key)
        return label, [AccessibilityNode("heading", label), _text(f"About {sf.name}: {label}.")]
    if kind == "external":
        return "External", [AccessibilityNode("heading", "You have left the store"), _text(page.key or "")]
    raise ValueError(kind)


def render(state: EnvState) -> tuple[str, AccessibilityNode, dict[str, AccessibilityNode]]:
    title, main = _main(state)
    children = []
    if state.current.kind != "external":
        children.append(_header(state))
    if state.notice:
        children.append(
            AccessibilityNode(
                "region",
                "Cart notification",
                children=[
                    _text(state.notice),
                    _link("View cart", ("goto", Page("cart"))),
                    AccessibilityNode("button", "Checkout", target=("goto", Page("checkout"))),
                ],
            )
        )
    children.append(AccessibilityNode("region", "Main", children=main))
    if state.current.kind != "external" and state.theme.external_links:
        children.append(
            AccessibilityNode(
                "region",
                "Footer",
                children=[_link(label, ("goto", Page("external", key=url))) for label, url in state.theme.external_links],
            )
        )
    root = AccessibilityNode("region", f"{title} | {state.storefront.name}", children=children)
    refs = assign_refs(root)
    return page_url(state, state.current), root, refs


def observe(state: EnvState) -> tuple[str, AccessibilityNode]:
    url, root, _ = render(state)
    return url, root


# ---------------------------------------------------------------- actions


def _goto(state: EnvState, page: Page) -> str:
    state.back_stack.append(state.current)
    state.current = page
    state.notice = None
    if page.kind == "checkout":
        state.checkout_started = True
    if page.kind == "external":
        state.exited = True
    url = page_url(state, page)
    state.visited.append(url)
    return f"navigated to {url}"


def _result(state: EnvState, outcome: str, code: str | None = None, message: str = "") -> StepResult:
    url, root, _ = render(state)
    err = StepError(code, message or code) if code else None
    return StepResult((url, root), err, outcome if not code else f"error {code}: {message or code}")


def apply(state: EnvState, action: Action) -> StepResult:
    """Execute one action. Failures come back in the result; state is left as it was."""
    _, _, refs = render(state)
    if isinstance(action, (Click, TypeText)):
        node = refs.get(action.ref)
        if node is None:
            return _result(state, "", "no_such_ref", f"no element with ref {action.ref!r} on this page")
        target = node.target
        if isinstance(action, TypeText):
            if target != ("search",):
                return _result(state, "", "not_editable", f"element {action.ref} ({node.role}) does not accept text")
            return _result(state, _goto(state, Page("search", query=action.text.strip())))
        if target == ("search",):
            return _result(state, "focused search box")
        op, arg = target
        if op == "goto":
            return _result(state, _goto(state, arg))
        if op == "add":
            product = state.storefront.catalog[arg]
            if not product.in_stock:
                return _result(state, "", "out_of_stock", f"{product.title} is sold out")
            state.cart.append((product.product_id, product.price))
            state.notice = f"Added to cart: {product.title} ({format_money(product.price)})"
            return _result(state, f"added {product.title} to cart; cart value {format_money(state.cart_value)}")
        raise AssertionError(op)
    if isinstance(action, Scroll):
        return _result(state, f"scrolled {action.direction}")
    if isinstance(action, Navigate):
        page = resolve_url(state, action.url)
        if page is None:
            return _result(state, "", "nav_blocked", f"cannot navigate to {action.url}")
        return _result(state, _goto(state, page))
    if isinstance(action, Back):
        if not state.back_stack:
            return _result(state, "", "nav_blocked", "no previous page")
        state.current = state.back_stack.pop()
        state.notice = None
        url = page_url(state, state.current)
        state.visited.append(url)
        return _result(state, f"went back to {url}")
    raise TypeError(f"not an action: {action!r}")
