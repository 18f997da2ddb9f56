"""Backend protocol and schema-validated JSON completion with retries."""

from __future__ import annotations

import json
import logging
import re
import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Any, Protocol

import jsonschema

from ..errors import RateLimited, SchemaFailure, TransportError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BackendRequest:
    system_text: str
    user_text: str
    schema: dict
    temperature: float = 0.7
    seed: int | None = None
    # routing hints for in-process backends; HTTP backends ignore them
    task: str = "generic"
    context: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.schema:
            raise ValueError("request schema must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class Backend(Protocol):
    def complete(self, request: BackendRequest) -> str: ...


_validators: dict[int, tuple[dict, jsonschema.protocols.Validator]] = {}


def _validator(schema: dict):
    hit = _validators.get(id(schema))
    if hit is not None and hit[0] is schema:
        return hit[1]
    v = jsonschema.Draft202012Validator(schema)
    _validators[id(schema)] = (schema, v)
    return v


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)
_OBJECT = re.compile(r"\{.*\}", re.DOTALL)


def parse_json_text(text: str) -> Any:
    """Parse model output, tolerating code fences and prose around one object."""
    stripped = _FENCE.sub("", text.strip())
    try:
        return json.loads(stripped)
    except json.JSONDecodeError as exc:
        m = _OBJECT.search(stripped)
        if m:
            try:
                return json.loads(m.group(0))
            except json.JSONDecodeError:
                pass
        raise ValueError(f"response is not valid JSON: {exc.msg}") from None


def validate(value: Any, schema: dict) -> str | None:
    err = jsonschema.exceptions.best_match(_validator(schema).iter_errors(value))
    if err is None:
        return None
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"at {where}: {err.message}"


def with_error_context(request: BackendRequest, error: str) -> BackendRequest:
    note = (
        f"\n\nYour previous response was rejected ({error}). "
        "Reply with a single JSON object that satisfies the schema."
    )
    ctx = dict(request.context)
    ctx["previous_errors"] = ctx.get("previous_errors", []) + [error]
    return replace(request, user_text=request.user_text + note, context=ctx)


def complete_with_retries(
    backend: Backend,
    request: BackendRequest,
    retries: int = 3,
    check: Callable[[Any], str | None] | None = None,
    transport_retries: int = 5,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[Any, int]:
    """Return ``(value, failed_attempts)``.

    ``retries`` bounds schema-level attempts; each failure re-prompts with the
    validation error appended. Transport failures and rate limits are retried
    separately with exponential backoff.
    """
    if retries < 1:
        raise ValueError("retries must be >= 1")
    last_error = None
    transport_failures = 0
    attempt = 0
    while attempt < retries:
        try:
            text = backend.complete(request)
        except TransportError as exc:
            transport_failures += 1
            if transport_failures > transport_retries:
                raise
            delay = exc.retry_after if isinstance(exc, RateLimited) and exc.retry_after is not None else backoff * 2 ** (transport_failures - 1)
            log.warning("backend transport failure (%s); retrying in %.2fs", exc, delay)
            sleep(delay)
            continue
        attempt += 1
        try:
            value = parse_json_text(text)
            error = validate(value, request.schema)
            if error is None and check is not None:
                error = check(value)
        except ValueError as exc:
            error = str(exc)
        if error is None:
            if attempt > 1:
                log.info("backend output valid after %d retries", attempt - 1)
            return value, attempt - 1
        last_error = error
        log.info("backend output rejected (attempt %d/%d): %s", attempt, retries, error)
        request = with_error_context(request, error)
    raise SchemaFailure(f"no schema-valid response after {retries} attempts: {last_error}", retries, last_error)


def complete_json(backend: Backend, request: BackendRequest, retries: int = 3, **kwargs) -> Any:
    value, _ = complete_with_retries(backend, request, retries=retries, **kwargs)
    return value
