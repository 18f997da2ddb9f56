from .loop import decide, detect_loop, journey_stats, run_session
from .prompt import AGENT_SYSTEM, DEFAULT_CONSTRAINTS, build_step_prompt, format_memory
from .records import (
    DECISION_SCHEMA,
    AgentDecision,
    Limits,
    MemoryEntry,
    SessionLog,
    TerminationKind,
    TerminationReason,
    check_decision,
)

__all__ = [
    "AGENT_SYSTEM",
    "DECISION_SCHEMA",
    "DEFAULT_CONSTRAINTS",
    "AgentDecision",
    "Limits",
    "MemoryEntry",
    "SessionLog",
    "TerminationKind",
    "TerminationReason",
    "build_step_prompt",
    "check_decision",
    "decide",
    "detect_loop",
    "format_memory",
    "journey_stats",
    "run_session",
]
