"""Data carried through an agent session: decisions, memory, limits, logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..storefront.env import ACTION_SCHEMA, Action, action_from_json


class TerminationReason(str, Enum):
    GOAL_REACHED = "GoalReached"
    NO_SUITABLE_PRODUCT = "NoSuitableProduct"
    NO_A2C_DECISION = "NoA2CDecision"
    PRICE_TOO_HIGH = "PriceTooHigh"
    LEAVING = "Leaving"


class TerminationKind(str, Enum):
    AGENT_TERMINATED = "AgentTerminated"
    STEP_LIMIT = "StepLimit"
    TIME_LIMIT = "TimeLimit"
    LOOP_GUARD = "LoopGuard"
    FATAL_ERROR = "FatalError"


DECISION_SCHEMA = {
    "type": "object",
    "required": ["reasoning", "terminate"],
    "properties": {
        "reasoning": {"type": "string"},
        "terminate": {"type": "boolean"},
        "termination_reason": {"enum": [r.value for r in TerminationReason] + [None]},
        "action": {"anyOf": [ACTION_SCHEMA, {"type": "null"}]},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True, slots=True)
class AgentDecision:
    reasoning: str
    terminate: bool
    termination_reason: TerminationReason | None = None
    action: Action | None = None
    retries: int = 0

    def __post_init__(self):
        if self.terminate and (self.termination_reason is None or self.action is not None):
            raise ValueError("terminate=true requires termination_reason and no action")
        if not self.terminate and self.action is None:
            raise ValueError("terminate=false requires an action")

    def to_json(self) -> dict:
        return {
            "reasoning": self.reasoning,
            "terminate": self.terminate,
            "termination_reason": None if self.termination_reason is None else self.termination_reason.value,
            "action": None if self.action is None else self.action.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict, retries: int = 0) -> "AgentDecision":
        reason = obj.get("termination_reason")
        action = obj.get("action")
        return cls(
            reasoning=obj["reasoning"],
            terminate=obj["terminate"],
            termination_reason=None if reason is None else TerminationReason(reason),
            action=None if action is None else action_from_json(action),
            retries=retries,
        )


def check_decision(obj: dict) -> str | None:
    """Cross-field rules the JSON schema cannot express; returns an error message."""
    try:
        AgentDecision.from_json(obj)
    except (ValueError, KeyError) as exc:
        return str(exc)
    return None


@dataclass(frozen=True, slots=True)
class MemoryEntry:
    step: int
    reasoning: str
    action: Action | None
    outcome: str
    error: str | None = None
    url: str = ""
    page: str = ""

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "reasoning": self.reasoning,
            "action": None if self.action is None else self.action.to_json(),
            "outcome": self.outcome,
            "error": self.error,
            "url": self.url,
            "page": self.page,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MemoryEntry":
        action = obj.get("action")
        return cls(
            step=obj["step"],
            reasoning=obj["reasoning"],
            action=None if action is None else action_from_json(action),
            outcome=obj["outcome"],
            error=obj.get("error"),
            url=obj.get("url", ""),
            page=obj.get("page", ""),
        )


@dataclass(frozen=True, slots=True)
class Limits:
    max_steps: int = 30
    max_wall_time: float = 300.0
    loop_threshold: int = 3
    llm_retries: int = 3

    def __post_init__(self):
        for name in ("max_steps", "max_wall_time", "loop_threshold", "llm_retries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_json(self) -> dict:
        return {
            "max_steps": self.max_steps,
            "max_wall_time": self.max_wall_time,
            "loop_threshold": self.loop_threshold,
            "llm_retries": self.llm_retries,
        }


@dataclass(slots=True)
class SessionLog:
    shop_id: str
    theme_id: str
    agent_index: int
    cluster_id: int | None
    seed: int
    termination: TerminationKind
    termination_reason: TerminationReason | None = None
    entries: list[MemoryEntry] = field(default_factory=list)
    final_cart: list[tuple[str, int]] = field(default_factory=list)
    exited: bool = False
    fatal_error: str | None = None
    llm_retries: int = 0
    config_hash: str | None = None
    # reasoning of the terminating decision, which has no memory entry
    final_reasoning: str = ""

    @property
    def a2c(self) -> bool:
        return bool(self.final_cart)

    @property
    def steps(self) -> int:
        return len(self.entries)

    @property
    def goal_reached(self) -> bool:
        return (
            self.termination is TerminationKind.AGENT_TERMINATED
            and self.termination_reason is TerminationReason.GOAL_REACHED
        )

    def to_json(self) -> dict:
        return {
            "shop_id": self.shop_id,
            "theme_id": self.theme_id,
            "agent_index": self.agent_index,
            "cluster_id": self.cluster_id,
            "seed": self.seed,
            "termination": self.termination.value,
            "termination_reason": None if self.termination_reason is None else self.termination_reason.value,
            "a2c": self.a2c,
            "steps": self.steps,
            "final_cart": [list(item) for item in self.final_cart],
            "exited": self.exited,
            "fatal_error": self.fatal_error,
            "llm_retries": self.llm_retries,
            "config_hash": self.config_hash,
            "final_reasoning": self.final_reasoning,
            "entries": [e.to_json() for e in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SessionLog":
        reason = obj.get("termination_reason")
        return cls(
            shop_id=obj["shop_id"],
            theme_id=obj["theme_id"],
            agent_index=obj["agent_index"],
            cluster_id=obj.get("cluster_id"),
            seed=obj["seed"],
            termination=TerminationKind(obj["termination"]),
            termination_reason=None if reason is None else TerminationReason(reason),
            entries=[MemoryEntry.from_json(e) for e in obj.get("entries", [])],
            final_cart=[tuple(item) for item in obj.get("final_cart", [])],
            exited=obj.get("exited", False),
            fatal_error=obj.get("fatal_error"),
            llm_retries=obj.get("llm_retries", 0),
            config_hash=obj.get("config_hash"),
            final_reasoning=obj.get("final_reasoning", ""),
        )
