"""The perceive / decide / act loop with guardrails."""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence

import numpy as np

from ..errors import BackendError, EmptyInput
from ..llm.base import BackendRequest, complete_with_retries
from ..storefront.env import apply, new_session, observe
from ..storefront.model import Storefront, ThemeSpec
from .prompt import AGENT_SYSTEM, build_step_prompt
from .records import (
    DECISION_SCHEMA,
    AgentDecision,
    Limits,
    MemoryEntry,
    SessionLog,
    TerminationKind,
    check_decision,
)

log = logging.getLogger(__name__)


def decide(
    backend,
    prompt: str,
    schema: dict = DECISION_SCHEMA,
    retries: int = 3,
    context: dict | None = None,
    seed: int | None = None,
    temperature: float = 0.7,
) -> AgentDecision:
    """Ask the backend for one decision; raises SchemaFailure once retries run out."""
    request = BackendRequest(
        system_text=AGENT_SYSTEM,
        user_text=prompt,
        schema=schema,
        temperature=temperature,
        seed=seed,
        task="decision",
        context=dict(context or {}),
    )
    value, failed = complete_with_retries(backend, request, retries=retries, check=check_decision)
    return AgentDecision.from_json(value, retries=failed)


def detect_loop(memory: Sequence[MemoryEntry], threshold: int) -> bool:
    """True when the last ``threshold`` entries repeat one action.

    Refs are numbered per page, so ``e5`` on two different pages is not the
    same action; the page the action landed on is part of its identity.
    """
    if threshold < 2:
        raise ValueError("loop threshold must be >= 2")
    if len(memory) < threshold:
        return False
    tail = [(e.action, e.url) for e in memory[-threshold:]]
    return tail[0][0] is not None and all(a == tail[0] for a in tail[1:])


def run_session(
    profile,
    storefront: Storefront,
    theme: str | ThemeSpec,
    backend,
    limits: Limits = Limits(),
    seed: int = 0,
    memory_enabled: bool = True,
    clock: Callable[[], float] = time.monotonic,
) -> SessionLog:
    state = new_session(storefront, theme, seed)
    entries: list[MemoryEntry] = []
    session = SessionLog(
        shop_id=getattr(profile, "shop_id", ""),
        theme_id=state.theme.theme_id,
        agent_index=getattr(profile, "agent_index", None) or 0,
        cluster_id=getattr(profile, "cluster_id", None),
        seed=seed,
        termination=TerminationKind.FATAL_ERROR,
        entries=entries,
    )
    started = clock()
    while True:
        observation = observe(state)
        visible = entries if memory_enabled else []
        prompt = build_step_prompt(profile, visible, observation)
        context = {"profile": profile, "observation": observation, "memory": list(visible), "seed": seed}
        try:
            decision = decide(backend, prompt, retries=limits.llm_retries, context=context, seed=seed)
        except BackendError as exc:
            session.fatal_error = str(exc)
            log.warning("session %s/%s/%s aborted: %s", session.shop_id, session.theme_id, session.agent_index, exc)
            break
        session.llm_retries += decision.retries
        if decision.terminate:
            session.termination = TerminationKind.AGENT_TERMINATED
            session.termination_reason = decision.termination_reason
            session.final_reasoning = decision.reasoning
            break
        result = apply(state, decision.action)
        url, root = result.observation
        entries.append(
            MemoryEntry(
                step=len(entries) + 1,
                reasoning=decision.reasoning,
                action=decision.action,
                outcome=result.outcome,
                error=None if result.error is None else result.error.code,
                url=url,
                page=root.name,
            )
        )
        if detect_loop(entries, max(2, limits.loop_threshold)):
            session.termination = TerminationKind.LOOP_GUARD
            break
        if len(entries) >= limits.max_steps:
            session.termination = TerminationKind.STEP_LIMIT
            break
        if clock() - started >= limits.max_wall_time:
            session.termination = TerminationKind.TIME_LIMIT
            break
    session.final_cart = list(state.cart)
    session.exited = state.exited
    return session


def journey_stats(logs: Sequence[SessionLog]) -> dict[str, float]:
    if not logs:
        raise EmptyInput("journey_stats needs at least one log")
    n = len(logs)
    steps = np.array([lg.steps for lg in logs], dtype=float)
    return {
        "goal_reached_pct": 100.0 * sum(lg.goal_reached for lg in logs) / n,
        "timeout_pct": 100.0 * sum(lg.termination is TerminationKind.STEP_LIMIT for lg in logs) / n,
        "mean_steps": float(steps.mean()),
        "std_steps": float(steps.std()),
    }
