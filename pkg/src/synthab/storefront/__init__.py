from .axtree import AccessibilityNode, UnparseableDocument, parse_html_to_axtree, serialize
from .env import (
    Action,
    Back,
    Click,
    EnvState,
    Navigate,
    Page,
    Scroll,
    StepError,
    StepResult,
    TypeText,
    action_from_json,
    apply,
    new_session,
    observe,
)
from .model import Collection, Product, Storefront, ThemeSpec, format_money, load_storefront, parse_money

__all__ = [
    "AccessibilityNode",
    "Action",
    "Back",
    "Click",
    "Collection",
    "EnvState",
    "Navigate",
    "Page",
    "Product",
    "Scroll",
    "StepError",
    "StepResult",
    "Storefront",
    "ThemeSpec",
    "TypeText",
    "UnparseableDocument",
    "action_from_json",
    "apply",
    "format_money",
    "load_storefront",
    "new_session",
    "observe",
    "parse_html_to_axtree",
    "parse_money",
    "serialize",
]
