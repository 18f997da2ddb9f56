"""In-process backend that answers every task deterministically.

Requests are routed on ``request.task``; the structured inputs travel in
``request.context`` so no prompt parsing is needed. The backend holds no
mutable state, so one instance can be shared across workers.
"""

from __future__ import annotations

import json
from collections import Counter

from .base import BackendRequest
from .policy import ScriptedPolicyConfig, scripted_decide


class ScriptedBackend:
    def __init__(self, config: ScriptedPolicyConfig | None = None):
        self.config = config or ScriptedPolicyConfig()

    def complete(self, request: BackendRequest) -> str:
        handler = getattr(self, f"_task_{request.task}", None)
        if handler is None:
            raise ValueError(f"scripted backend cannot answer task {request.task!r}")
        return json.dumps(handler(request.context), sort_keys=True)

    def _task_decision(self, ctx: dict) -> dict:
        decision = scripted_decide(ctx["profile"], ctx["observation"], ctx["memory"], self.config, ctx.get("seed", 0))
        return decision.to_json()

    def _task_preferences(self, ctx: dict) -> dict:
        summary = ctx["summary"]
        weight: Counter = Counter()
        for _, _, category in summary.browsed:
            weight[category.lower()] += 1
        for _, _, category in summary.purchased:
            weight[category.lower()] += 3
        titles: Counter = Counter()
        for title, _, _ in summary.browsed:
            titles[title] += 1
        for title, _, _ in summary.purchased:
            titles[title] += 3
        cats = [c for c, _ in sorted(weight.items(), key=lambda kv: (-kv[1], kv[0]))][:10]
        prods = [t for t, _ in sorted(titles.items(), key=lambda kv: (-kv[1], kv[0]))][:10]
        return {
            "categories": cats,
            "products": prods,
            "reasoning": f"Ranked by purchases (x3) plus views across {len(summary.browsed)} product views.",
        }

    def _task_persona(self, ctx: dict) -> dict:
        persona = ctx["persona"]
        return {"reasoning": persona.reasoning, "confidence": dict(persona.confidence)}
