from .base import Backend, BackendRequest, complete_json, complete_with_retries, parse_json_text
from .http import HttpBackend
from .policy import ScriptedPolicyConfig, scripted_decide
from .scripted import ScriptedBackend


def make_backend(config: dict | None = None):
    """Build a backend from the ``backend`` config block (``{"kind": "scripted"|"http", ...}``)."""
    config = dict(config or {})
    kind = config.pop("kind", "scripted")
    if kind == "scripted":
        policy = config.get("policy")
        return ScriptedBackend(ScriptedPolicyConfig.from_json(policy) if policy else None)
    if kind == "http":
        return HttpBackend.from_config(config.get("http", config))
    raise ValueError(f"unknown backend kind {kind!r}")


__all__ = [
    "Backend",
    "BackendRequest",
    "HttpBackend",
    "ScriptedBackend",
    "ScriptedPolicyConfig",
    "complete_json",
    "complete_with_retries",
    "make_backend",
    "parse_json_text",
    "scripted_decide",
]
