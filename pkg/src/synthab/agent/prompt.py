"""Per-step prompt assembly. Rendering is deterministic: same inputs, same text."""

from __future__ import annotations

import json
from collections.abc import Sequence

from ..storefront.axtree import AccessibilityNode, serialize
from .records import MemoryEntry

AGENT_SYSTEM = (
    "You are a shopper using an online store through its accessibility tree. "
    "Each turn, explain your thinking, decide whether to stop, and otherwise pick "
    "one action that refers to elements by their ref. Answer with JSON only."
)

DEFAULT_CONSTRAINTS = (
    "Adding items to the cart is allowed.",
    "Opening the checkout page is allowed.",
    "Never enter payment details or complete a purchase.",
    "Stop with GoalReached once a suitable product is in the cart.",
    "Stop with a reason when nothing in the store fits your goal.",
)


def format_memory(memory: Sequence[MemoryEntry]) -> str:
    if not memory:
        return "(no prior steps)"
    lines = []
    for e in memory:
        action = json.dumps(e.action.to_json(), sort_keys=True) if e.action is not None else "none"
        line = f"Step {e.step}: {e.reasoning} | action: {action} | outcome: {e.outcome}"
        if e.error:
            line += f" | error: {e.error}"
        lines.append(line)
    return "\n".join(lines)


def build_step_prompt(
    profile,
    memory: Sequence[MemoryEntry],
    observation: tuple[str, AccessibilityNode],
    constraints: Sequence[str] = DEFAULT_CONSTRAINTS,
) -> str:
    from ..persona.profiles import render_persona

    url, root = observation
    sections = [
        ("Goal", profile.intent.text),
        ("Persona", render_persona(profile)),
        ("Session memory", format_memory(memory)),
        ("Current page", f"URL: {url}\n{serialize(root)}"),
        ("Behavioral constraints", "\n".join(f"- {c}" for c in constraints)),
    ]
    return "\n\n".join(f"## {title}\n{body}" for title, body in sections)
