"""LLM generator backend: response parsing and the HTTP transport.

Transport tests run against a local stub server; no test here judges the
quality of any model output, only that the wire format and the
parse-and-filter layer behave.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from preguss import absint, callgraph
from preguss.errors import GeneratorError
from preguss.frontend import W32, parse, resolve
from preguss.llm import SYSTEM_PROMPT, LlmConfig, LlmGenerator, parse_response
from preguss.synthesis import (GeneratorRequest, OracleGenerator, Phase,
                               process_queue, render_request)

ECHO = ("int f(int x) {\n  return 100 / x;\n}\n"
        "int main() {\n  int a = f(0);\n  int b = f(5);\n  return a + b;\n}\n")

LOOP = ("int main() {\n  int i = 0;\n  while (i < 10) {\n    i = i + 1;\n"
        "  }\n  int r = 100 / (i - 11);\n  return r;\n}\n")


def request_for(src: str, target_id: str, phase=Phase.HOST) -> GeneratorRequest:
    tp = resolve(parse(src))
    analysis = absint.analyze(tp, W32)
    graph = callgraph.build_call_graph(tp)
    asserts = callgraph.collect_assertions(tp, analysis, graph)
    units = callgraph.build_units(tp, graph, analysis, asserts)
    unit = next(u for u in units if u.target.id == target_id)
    return GeneratorRequest(phase=phase, iteration=1, unit=unit, tp=tp,
                            width=W32, analysis=analysis, contracts={},
                            loop_clauses={}, failing=[], feedback=[])


# -- parse_response ------------------------------------------------------------

def test_explicit_function_lines_are_placed():
    req = request_for(ECHO, "rte1")
    resp = parse_response(
        "```\nfunction f: requires x != 0;\n"
        "function main: requires x < 5;\n```", req)
    assert [c.pred for c in resp.host_requires] != []
    assert len(resp.host_requires) == 1          # f is the host
    assert list(resp.callee_requires) == ["main"]
    assert resp.notes == ()


def test_bare_requires_goes_to_the_host():
    req = request_for(ECHO, "rte1")
    resp = parse_response("```\nrequires x != 0;\n```", req)
    assert len(resp.host_requires) == 1
    assert resp.callee_requires == {} and resp.callee_ensures == {}


def test_bare_ensures_needs_a_unique_callee():
    with open("samples/id.mc") as fh:
        src = fh.read()
    req = request_for(src, "rte1")          # host one, sole callee id
    resp = parse_response("```\nensures \\result == x;\n```", req)
    assert list(resp.callee_ensures) == ["id"]

    no_callee = parse_response("```\nensures \\result == x;\n```",
                               request_for(ECHO, "rte1"))
    assert no_callee.callee_ensures == {}
    assert no_callee.notes == (
        "dropped ensures without a unique callee: 'ensures \\\\result == x;'",)


def test_loop_lines_resolve_to_known_nodes():
    req = request_for(LOOP, "rte1")
    resp = parse_response(
        "```\nloop 5: loop invariant 0 <= i;\nloop invariant i <= 10;\n```",
        req)
    assert set(resp.loop_clauses) == {5}     # the bare line found the one loop
    assert len(resp.loop_clauses[5]) == 2

    stray = parse_response("```\nloop 99: loop invariant 0 <= i;\n```", req)
    assert stray.loop_clauses == {}
    assert "without a known loop node" in stray.notes[0]


def test_unknown_function_and_bad_syntax_become_notes():
    req = request_for(ECHO, "rte1")
    resp = parse_response(
        "```\nfunction nosuch: requires x != 0;\n"
        "function f: requires x ==;\n```", req)
    assert resp.is_empty()
    assert resp.notes[0] == "dropped clause for unknown function 'nosuch'"
    assert resp.notes[1].startswith("dropped unparseable clause")


def test_prose_without_clauses_is_ignored():
    req = request_for(ECHO, "rte1")
    resp = parse_response("The guard looks fine to me.\nNo clause needed.",
                          req)
    assert resp.is_empty() and resp.notes == ()


def test_text_outside_the_fence_is_ignored():
    req = request_for(ECHO, "rte1")
    resp = parse_response(
        "requires x < 0;\n```\nrequires x != 0;\n```\nrequires x > 0;", req)
    assert [str(c.kind) for c in resp.host_requires] == ["ClauseKind.REQUIRES"]
    assert len(resp.host_requires) == 1


def test_backtick_wrapped_lines_are_unwrapped():
    req = request_for(ECHO, "rte1")
    resp = parse_response("`requires x != 0;`", req)
    assert len(resp.host_requires) == 1


def test_request_text_marks_loops_for_the_model():
    req = request_for(LOOP, "rte1")
    assert "(loop at node 5)" in render_request(req)


def test_callee_phase_request_states_the_prohibition():
    with open("samples/id.mc") as fh:
        src = fh.read()
    req = request_for(src, "rte1", phase=Phase.CALLEES)
    text = render_request(req)
    assert "requires clauses on callees are prohibited" in text


# -- the HTTP transport ----------------------------------------------------------

def completion(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]})

OK_CONTENT = "```\nrequires x != 0;\n```"


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(n)
        self.server.seen.append({
            "path": self.path,
            "auth": self.headers.get("Authorization"),
            "json": json.loads(body),
        })
        script = self.server.script
        status, payload = script.pop(0) if script else (200,
                                                        completion(OK_CONTENT))
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload.encode())

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub(monkeypatch):
    monkeypatch.setenv("NO_PROXY", "*")
    monkeypatch.setenv("no_proxy", "*")
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    server.seen = []
    server.script = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        thread.join(timeout=5)


def make_generator(server, **overrides) -> LlmGenerator:
    cfg = LlmConfig(base_url=f"http://127.0.0.1:{server.server_address[1]}",
                    model="m1", api_key="k", backoff=0.01, max_retries=3)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return LlmGenerator(cfg)


def test_request_schema(stub):
    gen = make_generator(stub)
    req = request_for(ECHO, "rte1")
    resp = gen(req)
    assert len(resp.host_requires) == 1 and resp.raw == OK_CONTENT

    assert len(stub.seen) == 1
    sent = stub.seen[0]
    assert sent["path"] == "/chat/completions"
    assert sent["auth"] == "Bearer k"
    assert sent["json"]["model"] == "m1"
    assert sent["json"]["temperature"] == 0.0
    system, user = sent["json"]["messages"]
    assert system == {"role": "system", "content": SYSTEM_PROMPT}
    assert user == {"role": "user", "content": render_request(req)}


def test_server_errors_are_retried(stub):
    stub.script = [(500, "oops"), (200, completion(OK_CONTENT))]
    gen = make_generator(stub)
    resp = gen(request_for(ECHO, "rte1"))
    assert len(resp.host_requires) == 1
    assert len(stub.seen) == 2


def test_client_errors_are_fatal(stub):
    stub.script = [(404, "no such route")]
    gen = make_generator(stub)
    with pytest.raises(GeneratorError, match="404"):
        gen(request_for(ECHO, "rte1"))
    assert len(stub.seen) == 1


def test_malformed_payload_is_fatal(stub):
    stub.script = [(200, "{}")]
    gen = make_generator(stub)
    with pytest.raises(GeneratorError, match="malformed completion payload"):
        gen(request_for(ECHO, "rte1"))


def test_unreachable_endpoint_exhausts_retries(monkeypatch):
    monkeypatch.setenv("NO_PROXY", "*")
    monkeypatch.setenv("no_proxy", "*")
    cfg = LlmConfig(base_url="http://127.0.0.1:9", model="m1",
                    backoff=0.01, max_retries=2, timeout=2.0)
    gen = LlmGenerator(cfg)
    with pytest.raises(GeneratorError, match="unreachable after 2 attempts"):
        gen(request_for(ECHO, "rte1"))


def test_endpoint_must_be_configured(monkeypatch):
    monkeypatch.delenv("PREGUSS_LLM_URL", raising=False)
    with pytest.raises(GeneratorError, match="no LLM endpoint"):
        LlmGenerator()


def test_config_from_env(monkeypatch):
    monkeypatch.setenv("PREGUSS_LLM_URL", "http://example.invalid/v1")
    monkeypatch.setenv("PREGUSS_LLM_MODEL", "m2")
    monkeypatch.setenv("PREGUSS_LLM_API_KEY", "sk")
    cfg = LlmConfig.from_env(model="override", timeout=None)
    assert cfg.base_url == "http://example.invalid/v1"
    assert cfg.model == "override"          # explicit beats environment
    assert cfg.api_key == "sk"
    assert cfg.timeout == 60.0              # None override is ignored


# -- end to end against the stub ---------------------------------------------------

def test_stub_backend_matches_the_oracle_on_the_id_sample(stub):
    with open("samples/id.mc") as fh:
        src = fh.read()
    tp = resolve(parse(src))
    analysis = absint.analyze(tp, W32)
    graph = callgraph.build_call_graph(tp)
    asserts = callgraph.collect_assertions(tp, analysis, graph)

    content = "Sure.\n```\nfunction id: ensures \\result == x;\n```"
    stub.script = [(200, completion(content))] * 32

    units = callgraph.build_units(tp, graph, analysis, asserts)
    gen = make_generator(stub)
    got = process_queue(tp, W32, analysis, units, gen)

    units2 = callgraph.build_units(tp, graph, analysis, asserts)
    want = process_queue(tp, W32, analysis, units2, OracleGenerator())

    assert [(u.target.id, u.verdict) for u in got.units] == \
        [(u.target.id, u.verdict) for u in want.units]
    assert [(e.kind, e.where, e.clause) for e in got.store.events] == \
        [(e.kind, e.where, e.clause) for e in want.store.events]
