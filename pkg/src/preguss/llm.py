"""LLM-backed specification generator speaking an OpenAI-style chat API.

The transport is deliberately thin: one JSON request per generator call, a
bounded retry loop with exponential backoff, and a line-oriented parser over
fenced code blocks.  Clauses the parser cannot place or parse are dropped
with a note that flows back into the next iteration's feedback, so a
misbehaving model degrades into ordinary refinement pressure instead of an
error.

Endpoint configuration comes from the environment unless given explicitly:
``PREGUSS_LLM_URL``, ``PREGUSS_LLM_MODEL``, ``PREGUSS_LLM_API_KEY``.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field

import requests

from .errors import GeneratorError, SpecSyntaxError
from .frontend import syntax as ast
from .specs import Clause, ClauseKind, parse_clause
from .synthesis import GeneratorRequest, GeneratorResponse, render_request

SYSTEM_PROMPT = """\
You write ACSL-style specification clauses for a small C dialect so that a
weakest-precondition verifier can prove a target runtime-error guard.

Respond with a single fenced code block.  Each line of the block proposes one
clause, in one of these forms:

    function NAME: requires PRED;
    function NAME: ensures PRED;
    loop NODE: loop invariant PRED;
    loop NODE: loop assigns VAR, VAR;

NODE is the integer printed as "(loop at node NODE)" in the request.  In
ensures clauses, \\result names the return value and parameter names refer to
their values at entry.  Keep predicates linear where possible; use only
variables in scope.  Never propose requires clauses for callee functions:
they would constrain every caller and will be rejected.
"""

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_FUNCTION_LINE = re.compile(r"^function\s+(\w+)\s*:\s*(.+)$")
_LOOP_LINE = re.compile(r"^loop\s+(\d+)\s*:\s*(.+)$")
_BARE_LINE = re.compile(
    r"^(requires|ensures|loop\s+invariant|loop\s+assigns)\b.*$")


@dataclass
class LlmConfig:
    base_url: str = ""
    model: str = ""
    api_key: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 0.5
    temperature: float = 0.0
    extra_headers: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        cfg = cls(
            base_url=os.environ.get("PREGUSS_LLM_URL", ""),
            model=os.environ.get("PREGUSS_LLM_MODEL", ""),
            api_key=os.environ.get("PREGUSS_LLM_API_KEY", ""),
        )
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
        return cfg


class LlmGenerator:
    """Generator backend over an OpenAI-compatible /chat/completions route."""

    name = "llm"
    deterministic = False

    def __init__(self, config: LlmConfig | None = None):
        self.config = config or LlmConfig.from_env()
        if not self.config.base_url:
            raise GeneratorError(
                "no LLM endpoint configured (set PREGUSS_LLM_URL)")
        self.session = requests.Session()

    def __call__(self, req: GeneratorRequest) -> GeneratorResponse:
        text = self._complete(render_request(req))
        resp = parse_response(text, req)
        resp.raw = text
        return resp

    def _complete(self, user_text: str) -> str:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json", **cfg.extra_headers}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        payload = {
            "model": cfg.model,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": user_text},
            ],
        }

        last_error: Exception | None = None
        for attempt in range(cfg.max_retries):
            if attempt:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                r = self.session.post(url, headers=headers, json=payload,
                                      timeout=cfg.timeout)
            except requests.RequestException as e:
                last_error = e
                continue
            if r.status_code >= 500:
                last_error = GeneratorError(
                    f"endpoint returned {r.status_code}")
                continue
            if r.status_code != 200:
                raise GeneratorError(
                    f"endpoint returned {r.status_code}: {r.text[:200]}")
            try:
                body = r.json()
                return body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise GeneratorError(f"malformed completion payload: {e}")
        raise GeneratorError(f"endpoint unreachable after "
                             f"{cfg.max_retries} attempts: {last_error}")


def parse_response(text: str, req: GeneratorRequest) -> GeneratorResponse:
    """Sort the response's clause lines into the response buckets.

    Lines may carry an explicit placement prefix (``function f:`` or
    ``loop 7:``); bare clauses are placed by context when that is
    unambiguous.  Anything else is dropped with a note.
    """

    blocks = _FENCE_RE.findall(text)
    body = "\n".join(blocks) if blocks else text

    host = req.unit.host
    known = {f.name for f in req.tp.program.functions}
    host_loops = [n.node_id for n in ast.walk(req.tp.function(host))
                  if isinstance(n, ast.While)]
    slice_loops = set(host_loops)
    for callee in req.unit.callees:
        slice_loops |= {n.node_id for n in ast.walk(req.tp.function(callee))
                        if isinstance(n, ast.While)}

    host_requires: list[Clause] = []
    loop_clauses: dict[int, list[Clause]] = {}
    callee_ensures: dict[str, list[Clause]] = {}
    callee_requires: dict[str, list[Clause]] = {}
    notes: list[str] = []

    def place(owner: str | None, node: int | None, text_: str) -> None:
        if owner is not None and owner not in known:
            notes.append(f"dropped clause for unknown function {owner!r}")
            return
        try:
            clause = parse_clause(text_)
        except SpecSyntaxError as e:
            notes.append(f"dropped unparseable clause {text_!r}: {e}")
            return
        match clause.kind:
            case ClauseKind.LOOP_INVARIANT | ClauseKind.LOOP_ASSIGNS:
                target = node
                if target is None and len(host_loops) == 1:
                    target = host_loops[0]
                if target is None or target not in slice_loops:
                    notes.append(
                        f"dropped loop clause without a known loop node: "
                        f"{text_!r}")
                    return
                loop_clauses.setdefault(target, []).append(clause)
            case ClauseKind.REQUIRES:
                fn = owner or host
                if fn == host:
                    host_requires.append(clause)
                else:
                    callee_requires.setdefault(fn, []).append(clause)
            case ClauseKind.ENSURES:
                fn = owner
                if fn is None and len(req.unit.callees) == 1:
                    fn = req.unit.callees[0]
                if fn is None or fn == host:
                    notes.append(
                        f"dropped ensures without a unique callee: {text_!r}")
                    return
                callee_ensures.setdefault(fn, []).append(clause)
            case _:
                notes.append(f"dropped unsupported clause kind: {text_!r}")

    for raw_line in body.splitlines():
        line = raw_line.strip().strip("`")
        if not line:
            continue
        if m := _FUNCTION_LINE.match(line):
            place(m.group(1), None, m.group(2))
        elif m := _LOOP_LINE.match(line):
            place(None, int(m.group(1)), m.group(2))
        elif _BARE_LINE.match(line):
            place(None, None, line)

    return GeneratorResponse(
        host_requires=tuple(host_requires),
        loop_clauses={k: tuple(v) for k, v in loop_clauses.items()},
        callee_ensures={k: tuple(v) for k, v in callee_ensures.items()},
        callee_requires={k: tuple(v) for k, v in callee_requires.items()},
        notes=tuple(notes),
        raw=text)
