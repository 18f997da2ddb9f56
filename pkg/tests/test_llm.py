from __future__ import annotations

import copy
import json
import threading
from concurrent.futures import ProcessPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from conftest import TINY_DOC, make_profile
from synthab.agent import DECISION_SCHEMA, Limits, MemoryEntry, TerminationReason, run_session
from synthab.errors import RateLimited, SchemaFailure, TransportError
from synthab.llm import (
    BackendRequest,
    HttpBackend,
    ScriptedBackend,
    ScriptedPolicyConfig,
    complete_json,
    complete_with_retries,
    make_backend,
    parse_json_text,
    scripted_decide,
)
from synthab.llm.policy import category_matches, read_page
from synthab.storefront import Click, apply, load_storefront, new_session, observe

SCHEMA = {"type": "object", "required": ["ok"], "properties": {"ok": {"type": "boolean"}}}


# ---------------------------------------------------------------- mock server


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        server = self.server
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        server.seen.append((self.path, dict(self.headers), body))
        status, payload = server.script[min(len(server.seen), len(server.script)) - 1]
        raw = json.dumps(payload).encode() if not isinstance(payload, bytes) else payload
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        if status == 429:
            self.send_header("Retry-After", "0")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def mock_server():
    servers = []

    def start(*script):
        srv = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        srv.script, srv.seen = list(script), []
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers.append(srv)
        return srv, f"http://127.0.0.1:{srv.server_address[1]}/v1"

    yield start
    for srv in servers:
        srv.shutdown()
        srv.server_close()


def chat(content):
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def test_http_rate_limit_then_success(mock_server, monkeypatch):
    monkeypatch.setenv("SIMGYM_API_KEY", "test-key")
    srv, url = mock_server((429, {"error": "slow down"}), (200, chat('{"ok": true}')))
    backend = HttpBackend(url, model="m")
    sleeps = []
    value, failed = complete_with_retries(backend, BackendRequest("sys", "user", SCHEMA, seed=3), sleep=sleeps.append)
    assert value == {"ok": True} and failed == 0
    assert len(srv.seen) == 2 and sleeps == [0.0]
    path, headers, body = srv.seen[1]
    assert path == "/v1/chat/completions"
    assert headers["Authorization"] == "Bearer test-key"
    assert body["seed"] == 3 and body["messages"][1] == {"role": "user", "content": "user"}
    assert body["response_format"]["json_schema"]["schema"] == SCHEMA


def test_http_prose_three_times(mock_server):
    srv, url = mock_server((200, chat("I would rather chat about the weather.")))
    with pytest.raises(SchemaFailure):
        complete_json(HttpBackend(url), BackendRequest("s", "u", SCHEMA), retries=3)
    assert len(srv.seen) == 3
    # each retry carries the rejection back to the model
    assert "rejected" in srv.seen[2][2]["messages"][1]["content"]


def test_http_server_error(mock_server):
    _, url = mock_server((500, {"error": "boom"}))
    with pytest.raises(TransportError):
        HttpBackend(url).complete(BackendRequest("s", "u", SCHEMA))


def test_http_429_raises_rate_limited(mock_server):
    _, url = mock_server((429, {}))
    with pytest.raises(RateLimited) as info:
        HttpBackend(url).complete(BackendRequest("s", "u", SCHEMA))
    assert info.value.retry_after == 0.0


def test_transport_retries_bounded():
    class Broken:
        calls = 0

        def complete(self, request):
            Broken.calls += 1
            raise TransportError("down")

    with pytest.raises(TransportError):
        complete_with_retries(Broken(), BackendRequest("s", "u", SCHEMA), transport_retries=2, sleep=lambda s: None)
    assert Broken.calls == 3


def test_parse_json_text_tolerates_fences():
    assert parse_json_text('```json\n{"ok": false}\n```') == {"ok": False}
    assert parse_json_text('Sure! {"ok": true} hope that helps') == {"ok": True}
    with pytest.raises(ValueError):
        parse_json_text("no json here")


def test_request_validation():
    with pytest.raises(ValueError):
        BackendRequest("s", "u", {})
    with pytest.raises(ValueError):
        BackendRequest("s", "u", SCHEMA, temperature=-0.1)


def test_make_backend():
    assert isinstance(make_backend(None), ScriptedBackend)
    b = make_backend({"kind": "scripted", "policy": {"price_tolerance": 0.0}})
    assert b.config.price_tolerance == 0.0
    h = make_backend({"kind": "http", "http": {"base_url": "http://x/v1/", "max_inflight": 2, "timeout_s": 5}})
    assert isinstance(h, HttpBackend) and h.base_url == "http://x/v1"
    with pytest.raises(ValueError):
        make_backend({"kind": "carrier-pigeon"})


def test_policy_config_validation():
    with pytest.raises(ValueError):
        ScriptedPolicyConfig(exploration_budget={"Shallow": 0, "Moderate": 1, "Deep": 1})
    with pytest.raises(ValueError):
        ScriptedPolicyConfig(values_match_min=1.5)


# ---------------------------------------------------------------- scripted policy


def _drive(profile, doc, theme="control", max_steps=40, seed=0):
    """Run the policy by hand, returning (decisions, state, memory)."""
    state = new_session(load_storefront(doc), theme)
    memory, decisions = [], []
    for _ in range(max_steps):
        obs = observe(state)
        d = scripted_decide(profile, obs, memory, seed=seed)
        decisions.append(d)
        if d.terminate:
            break
        res = apply(state, d.action)
        memory.append(MemoryEntry(len(memory) + 1, d.reasoning, d.action, res.outcome,
                                  res.error and res.error.code, res.observation[0], res.observation[1].name))
    return decisions, state, memory


def test_scripted_decision_schema_valid(tiny_store):
    backend = ScriptedBackend()
    obs = observe(new_session(tiny_store, "control"))
    req = BackendRequest("s", "u", DECISION_SCHEMA, task="decision",
                         context={"profile": make_profile(), "observation": obs, "memory": [], "seed": 0})
    value = complete_json(backend, req)
    assert value["terminate"] is False and value["action"]["type"] == "click"


def test_budget_agent_overpriced_catalog():
    doc = copy.deepcopy(TINY_DOC)
    for p in doc["catalog"]:
        p["price"] = 7000  # ten times the buyer's reference price
    decisions, state, memory = _drive(make_profile(refs={"figurines": 700.0}), doc)
    last = decisions[-1]
    assert last.terminate and last.termination_reason is TerminationReason.PRICE_TOO_HIGH
    assert state.cart == []
    # hand trace: home -> Figurines (all three cards skipped on price) -> home -> give up
    assert [m.page.split(" | ")[0] for m in memory] == ["Figurines", "Home"]


def test_purchase_agent_first_match():
    decisions, state, memory = _drive(make_profile(), TINY_DOC)
    kinds = [(d.action.to_json()["type"] if d.action else d.termination_reason.value) for d in decisions]
    assert kinds == ["click", "click", "click", "GoalReached"]
    assert [m.page.split(" | ")[0] for m in memory] == ["Figurines", "Pocket Dragon", "Pocket Dragon"]
    assert state.cart == [("d1", 450)]


def test_premium_agent_rejects_cheap_items():
    decisions, state, memory = _drive(make_profile(tier="Premium", regime="Moderate", premium=0.7), TINY_DOC)
    pages = [m.page.split(" | ")[0] for m in memory]
    assert pages == ["Figurines", "Pocket Dragon", "Figurines", "Resin Dragon", "Figurines",
                     "Premium Crystal Wing Dragon", "Premium Crystal Wing Dragon"]
    assert "[reject:premium]" in memory[2].reasoning
    assert state.cart == [("d3", 3318)] and decisions[-1].termination_reason is TerminationReason.GOAL_REACHED


def _ten_products():
    doc = copy.deepcopy(TINY_DOC)
    doc["catalog"] = [
        {"product_id": f"m{i}", "title": f"Dragon No {i}", "price": 500, "category": "figurines", "tags": [], "in_stock": True}
        for i in range(10)
    ]
    doc["collections"][0]["product_ids"] = [f"m{i}" for i in range(10)]
    for theme in doc["themes"].values():
        theme["products_per_page"] = 20
    return doc


def test_shallow_browser_view_budget():
    decisions, state, memory = _drive(make_profile(purchase=False, regime="Shallow"), _ten_products())
    product_pages = {m.page for m in memory if "Dragon No" in m.page}
    assert len(product_pages) <= 3
    assert decisions[-1].termination_reason is TerminationReason.NO_A2C_DECISION and state.cart == []


@pytest.mark.parametrize("regime, budget", [("Moderate", 6), ("Deep", 12)])
def test_browser_budgets(regime, budget):
    _, _, memory = _drive(make_profile(purchase=False, regime=regime), _ten_products())
    assert len({m.page for m in memory if "Dragon No" in m.page}) == min(budget, 10)


def test_out_of_stock_then_recover():
    doc = copy.deepcopy(TINY_DOC)
    doc["catalog"][0]["in_stock"] = False
    decisions, state, memory = _drive(make_profile(regime="Moderate"), doc)
    assert any(m.error == "out_of_stock" for m in memory)
    assert state.cart == [("d2", 700)]


def test_missing_category_gives_up():
    decisions, state, _ = _drive(make_profile(category="lanterns"), TINY_DOC)
    assert decisions[-1].termination_reason is TerminationReason.NO_SUITABLE_PRODUCT and state.cart == []


def test_policy_is_pure(tiny_store):
    state = new_session(tiny_store, "control")
    obs = observe(state)
    profile = make_profile(purchase=False)
    first = scripted_decide(profile, obs, [], seed=9)
    assert all(scripted_decide(profile, obs, [], seed=9) == first for _ in range(5))


def _decide_remote(seed):
    sf = load_storefront(TINY_DOC)
    log = run_session(make_profile(tier="MidRange", regime="Deep", purchase=False), sf, "treatment", ScriptedBackend(), Limits(), seed=seed)
    return json.dumps(log.to_json(), sort_keys=True)


def test_policy_same_across_processes():
    local = [_decide_remote(s) for s in (1, 2)]
    with ProcessPoolExecutor(max_workers=2) as pool:
        remote = list(pool.map(_decide_remote, (1, 2)))
    assert local == remote


def test_read_page_listing(tiny_store):
    state = new_session(tiny_store, "control")
    view = read_page(*observe(state))
    assert view.kind == "home" and view.cart_count == 0 and [n for _, n in view.nav] == ["Shop", "About"]
    apply(state, Click(dict((n, r) for r, n in view.links)["Figurines"]))
    view = read_page(*observe(state))
    assert [(c.title, c.price) for c in view.cards] == [("Pocket Dragon", 450), ("Resin Dragon", 700), ("Premium Crystal Wing Dragon", 3318)]


@pytest.mark.parametrize("cat, label, want", [
    ("figurines", "Figurines", True),
    ("wall art", "Art", True),
    ("table lamps", "Lamps", True),
    ("rugs", "Mugs", False),
])
def test_category_matching(cat, label, want):
    assert category_matches(cat, label) is want
