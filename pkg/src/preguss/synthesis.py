"""The two-phase specification synthesis loop.

Each verification unit runs through the same protocol.  A pre-check first:
when the target condition already discharges under the contracts inherited
from earlier units, the unit certifies with zero generator calls.  Otherwise
phase one asks the generator for host-side clauses (requires, loop
invariants); when the failing conditions mention call results, phase two asks
for callee ensures, which must themselves be established before they may be
assumed.  Requires clauses are forbidden in phase two: a callee precondition
invented to rescue one caller would silently constrain every other caller, so
such candidates are stripped and logged.

A unit that verifies commits only the clauses its final derivation actually
used; the rest are dropped and logged.  A unit that fails becomes a
DefinitiveRTE when it is a call site check refuted with a concrete witness,
and a HighRiskAlert otherwise.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from . import absint
from .absint import AnalysisResult, RteAssertion, RteKind, full_range
from .callgraph import VUnit
from .errors import (AnalysisBudgetError, GeneratorError, MissingLoopInvariant,
                     PregussError, ProhibitedRequiresError)
from .frontend import syntax as ast
from .frontend.render import render_function
from .frontend.resolve import TypedProgram
from .frontend.syntax import IntWidth
from .specs import (Clause, ClauseKind, Contract, PAnd, PBool, PCmp, PImplies,
                    PNot, POr, Predicate, TBin, TInt, TVar, Term, TRUE, conj,
                    eval_pred, free_vars, pand, pimplies, render_clause, tneg)
from .verifier import (VC, DischargeConfig, GenConfig, InvalidLoopAssigns,
                       UnitCheck, VcOrigin, VcOutcome, VcResult, check_unit)


class Phase(enum.Enum):
    HOST = "host"
    CALLEES = "callees"


class Verdict(enum.Enum):
    CERTIFIED = "Certified"
    DEFINITIVE_RTE = "DefinitiveRTE"
    HIGH_RISK_ALERT = "HighRiskAlert"


# --------------------------------------------------------------------------
# Contract store


@dataclass(frozen=True)
class StoreEvent:
    kind: str          # added / dropped / prohibited / replaced
    where: str         # function name or "loop <node>"
    clause: str        # rendered clause text
    note: str = ""


class ContractStore:
    """The monotone pool of accepted clauses, shared by all units.

    Mutations go through phase-aware methods; adding a requires clause during
    the callee phase raises.  Every change lands in the event log.
    """

    def __init__(self):
        self.contracts: dict[str, Contract] = {}
        self.loop_clauses: dict[int, tuple[Clause, ...]] = {}
        self.events: list[StoreEvent] = []

    def contract(self, fn: str) -> Contract:
        return self.contracts.get(fn, Contract())

    def snapshot(self) -> tuple[dict[str, Contract], dict[int, tuple[Clause, ...]]]:
        return dict(self.contracts), dict(self.loop_clauses)

    def add_requires(self, fn: str, pred: Predicate, phase: Phase,
                     note: str = "") -> None:
        if phase == Phase.CALLEES:
            raise ProhibitedRequiresError(
                f"requires on {fn} proposed during the callee phase")
        self.contracts[fn] = self.contract(fn).with_requires(pred)
        self.events.append(StoreEvent(
            "added", fn, render_clause(Clause(ClauseKind.REQUIRES, pred)), note))

    def add_ensures(self, fn: str, pred: Predicate, note: str = "") -> None:
        self.contracts[fn] = self.contract(fn).with_ensures(pred)
        self.events.append(StoreEvent(
            "added", fn, render_clause(Clause(ClauseKind.ENSURES, pred)), note))

    def add_loop_clause(self, node_id: int, clause: Clause,
                        note: str = "") -> None:
        self.loop_clauses[node_id] = \
            self.loop_clauses.get(node_id, ()) + (clause,)
        self.events.append(StoreEvent(
            "added", f"loop {node_id}", render_clause(clause), note))

    def log_dropped(self, where: str, clause: Clause, note: str) -> None:
        self.events.append(StoreEvent("dropped", where,
                                      render_clause(clause), note))

    def log_prohibited(self, fn: str, clause: Clause, note: str) -> None:
        self.events.append(StoreEvent("prohibited", fn,
                                      render_clause(clause), note))


# --------------------------------------------------------------------------
# Generator protocol


@dataclass
class GeneratorRequest:
    phase: Phase
    iteration: int
    unit: VUnit
    tp: TypedProgram
    width: IntWidth
    analysis: AnalysisResult
    contracts: dict[str, Contract]
    loop_clauses: dict[int, tuple[Clause, ...]]
    failing: list[tuple[VC, VcResult]]
    feedback: list[str]


@dataclass
class GeneratorResponse:
    host_requires: tuple[Clause, ...] = ()
    loop_clauses: dict[int, tuple[Clause, ...]] = field(default_factory=dict)
    callee_ensures: dict[str, tuple[Clause, ...]] = field(default_factory=dict)
    callee_requires: dict[str, tuple[Clause, ...]] = field(default_factory=dict)
    notes: tuple[str, ...] = ()
    raw: str = ""

    def is_empty(self) -> bool:
        return not (self.host_requires or self.loop_clauses
                    or self.callee_ensures or self.callee_requires)


# --------------------------------------------------------------------------
# Request rendering (shared by the LLM prompt and saved transcripts)


def render_request(req: GeneratorRequest) -> str:
    unit = req.unit
    fn = req.tp.function(unit.host)
    lines = [
        f"phase: {req.phase.value}",
        f"iteration: {req.iteration}",
        f"target: {unit.target.id} {unit.target.kind.value} "
        f"at {unit.target.pos}",
        f"width: {req.width}",
        "",
        "host function:",
        _render_function(fn, req),
        "",
    ]
    for callee in unit.callees:
        cfn = req.tp.function(callee)
        sig = f"{cfn.return_type} {callee}(" + \
            ", ".join(f"int {p.name}" for p in cfn.params) + ")"
        lines.append(f"callee {sig}")
        contract = req.contracts.get(callee, Contract())
        for c in contract.clauses():
            lines.append(f"  {render_clause(c)}")
        if req.phase == Phase.CALLEES:
            lines.append("  body:")
            lines.append(_render_function(cfn, req, indent="    "))
        lines.append("")
    if req.phase == Phase.CALLEES:
        names = ", ".join(unit.callees) or "(none)"
        lines.append(f"rules: propose ensures or loop clauses for the callees "
                     f"({names}) only; requires clauses on callees are "
                     "prohibited and will be stripped")
        lines.append("")
    if req.failing:
        lines.append("failing conditions:")
        for vc, r in req.failing:
            w = f" witness {r.witness}" if r.witness else ""
            lines.append(f"  {vc.id} [{vc.origin.value}] {vc.render()} "
                         f"-> {r.outcome.value}{w}")
        lines.append("")
    if req.feedback:
        lines.append("feedback:")
        for f in req.feedback:
            lines.append(f"  - {f}")
        lines.append("")
    return "\n".join(lines)


def _render_function(fn: ast.FunctionDef, req: GeneratorRequest,
                     indent: str = "") -> str:
    annotations = []
    for node in ast.walk(fn):
        if isinstance(node, ast.While):
            for c in req.loop_clauses.get(node.node_id, ()):
                annotations.append((node.node_id, c))
    text = render_function(fn, req.contracts.get(fn.name), annotations)
    loops = [n.node_id for n in ast.walk(fn) if isinstance(n, ast.While)]
    if loops:
        text += "\n" + "\n".join(f"(loop at node {n})" for n in loops)
    if indent:
        text = "\n".join(indent + line for line in text.splitlines())
    return text


# --------------------------------------------------------------------------
# The deterministic oracle generator


def _term_of(e: ast.Expr, store: dict[str, Term]) -> Term | None:
    """Pure term of an expression under a store; None when a call appears."""

    match e:
        case ast.IntLit(value=v):
            return TInt(v)
        case ast.WidthConst():
            return absint.expr_to_term(e)
        case ast.VarRef(name=n):
            return store.get(n, TVar(n))
        case ast.Unary(op="-", operand=o):
            t = _term_of(o, store)
            return None if t is None else tneg(t)
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.ARITH_OPS:
            a = _term_of(l, store)
            b = _term_of(r, store)
            if a is None or b is None:
                return None
            return TBin(op, a, b)
    return None


def _cond_of(e: ast.Expr, store: dict[str, Term]) -> Predicate | None:
    match e:
        case ast.Unary(op="!", operand=o):
            p = _cond_of(o, store)
            return None if p is None else PNot(p)
        case ast.Binary(op="&&", lhs=l, rhs=r):
            a, b = _cond_of(l, store), _cond_of(r, store)
            return None if a is None or b is None else PAnd(a, b)
        case ast.Binary(op="||", lhs=l, rhs=r):
            a, b = _cond_of(l, store), _cond_of(r, store)
            return None if a is None or b is None else POr(a, b)
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.CMP_OPS:
            a, b = _term_of(l, store), _term_of(r, store)
            return None if a is None or b is None else PCmp(op, a, b)
    return None


def _return_summaries(fn: ast.FunctionDef):
    """Path-sensitive (condition, return term) pairs over entry parameters.

    Bails out (None) on loops, calls, or anything else beyond plain
    branching; the caller falls back to interval bounds.
    """

    out: list[tuple[Predicate, Term]] = []

    def go(stmts, store: dict[str, Term], path: Predicate) -> bool:
        for i, s in enumerate(stmts):
            match s:
                case ast.Block(stmts=inner):
                    sub = go(list(inner) + list(stmts[i + 1:]), dict(store), path)
                    return sub
                case ast.Decl(name=n, init=e) | ast.Assign(name=n, value=e):
                    t = _term_of(e, store)
                    if t is None:
                        return False
                    store = dict(store)
                    store[n] = t
                case ast.If(cond=c, then=thn, els=els):
                    p = _cond_of(c, store)
                    if p is None:
                        return False
                    rest = list(stmts[i + 1:])
                    ok = go(list(thn.stmts) + rest, dict(store), pand(path, p))
                    if not ok:
                        return False
                    tail = list(els.stmts) if els is not None else []
                    return go(tail + rest, dict(store), pand(path, PNot(p)))
                case ast.Return(value=v):
                    if v is None:
                        return True
                    t = _term_of(v, store)
                    if t is None:
                        return False
                    out.append((path, t))
                    return True
                case _:
                    return False
        return True

    ok = go(list(fn.body.stmts), {}, TRUE)
    return out if ok and out else None


def simplify_single_var(pred: Predicate, var: str,
                        width: IntWidth) -> Predicate | None:
    """Canonical interval form of a one-variable predicate.

    The atoms are linear in ``var``, so truth only changes at finitely many
    breakpoints; sampling each region decides the satisfied set exactly.
    Returns None when the set is not one contiguous interval.
    """

    from .verifier import _linear_form

    points = {width.min, width.max}
    for c in _atoms(pred):
        try:
            k, coeffs, _ = _linear_form(TBin("-", c.lhs, c.rhs), {}, width)
        except PregussError:
            return None
        if any(key.startswith("\x00") for key in coeffs):
            return None
        if set(coeffs) - {var}:
            return None
        a = coeffs.get(var, 0)
        if a == 0:
            continue  # constant atom, no breakpoint
        root = -k / a
        for p in (int(root) - 1, int(root), int(root) + 1):
            if width.min <= p <= width.max:
                points.add(p)

    samples = sorted(points)
    regions: list[tuple[int, int, bool]] = []
    for i, p in enumerate(samples):
        truth = eval_pred(pred, {var: p}, width)
        if truth is None:
            return None
        regions.append((p, p, bool(truth)))
        if i + 1 < len(samples) and samples[i + 1] > p + 1:
            mid = (p + samples[i + 1]) // 2
            t2 = eval_pred(pred, {var: mid}, width)
            if t2 is None:
                return None
            regions.append((p + 1, samples[i + 1] - 1, bool(t2)))

    merged: list[tuple[int, int]] = []
    for lo, hi, truth in regions:
        if not truth:
            continue
        if merged and merged[-1][1] + 1 >= lo:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))

    if len(merged) != 1:
        return None
    lo, hi = merged[0]
    parts = []
    if lo == hi:
        return PCmp("==", TVar(var), TInt(lo))
    if lo > width.min:
        parts.append(PCmp("<=", TInt(lo), TVar(var)))
    if hi < width.max:
        parts.append(PCmp("<=", TVar(var), TInt(hi)))
    return conj(parts) if parts else TRUE


def _atoms(p: Predicate):
    match p:
        case PCmp():
            yield p
        case PNot(operand=o):
            yield from _atoms(o)
        case PAnd(lhs=l, rhs=r) | POr(lhs=l, rhs=r) | PImplies(lhs=l, rhs=r):
            yield from _atoms(l)
            yield from _atoms(r)
        case PBool():
            return


class OracleGenerator:
    """Deterministic generator: projects failing conditions into requires
    clauses, reads loop invariants off the analysis loop head states, and
    derives callee ensures from return-path summaries.

    Stateless across calls, so every proposal is reproducible.
    """

    name = "oracle"
    deterministic = True

    def __call__(self, req: GeneratorRequest) -> GeneratorResponse:
        if req.phase == Phase.HOST:
            resp = self._host(req)
        else:
            resp = self._callees(req)
        resp.raw = self._render_response(resp)
        return resp

    # -- phase one -----------------------------------------------------------

    def _host(self, req: GeneratorRequest) -> GeneratorResponse:
        fn = req.tp.function(req.unit.host)
        params = {p.name for p in fn.params}
        requires: list[Clause] = []
        loop_props: dict[int, list[Clause]] = {}

        missing_loops = _loops_from_feedback(req)
        for node_id in missing_loops:
            for cl in self._loop_templates(req, node_id):
                loop_props.setdefault(node_id, []).append(cl)

        for vc, result in req.failing:
            if vc.origin in (VcOrigin.LOOP_ESTABLISH, VcOrigin.LOOP_PRESERVE):
                for cl in self._loop_templates(req, vc.node_id):
                    loop_props.setdefault(vc.node_id, []).append(cl)
                continue
            if vc.origin != VcOrigin.TARGET:
                continue
            cand = self._project_requires(vc, params, req.width)
            if cand is not None:
                requires.append(Clause(ClauseKind.REQUIRES, cand))

        return GeneratorResponse(
            host_requires=tuple(requires),
            loop_clauses={k: tuple(v) for k, v in loop_props.items()})

    def _project_requires(self, vc: VC, params: set[str],
                          width: IntWidth) -> Predicate | None:
        if not free_vars(vc.goal) <= params:
            return None
        kept = [h.pred for h in vc.hyps
                if free_vars(h.pred) <= params
                and not any(t and t[0] == "requires" for t in h.tags)]
        cand = pimplies(conj(kept), vc.goal)
        fv = sorted(free_vars(cand))
        if len(fv) == 1:
            simple = simplify_single_var(cand, fv[0], width)
            if simple is not None and simple != TRUE:
                return simple
            if simple == TRUE:
                return None
        return cand

    def _loop_templates(self, req: GeneratorRequest,
                        node_id: int) -> list[Clause]:
        head = req.analysis.loop_heads.get(node_id)
        out: list[Clause] = []
        if head:
            for var in sorted(head):
                iv = head[var]
                if iv.is_bottom or iv == full_range(req.width):
                    continue
                parts = []
                if iv.lo is not None and iv.lo > req.width.min:
                    parts.append(PCmp("<=", TInt(iv.lo), TVar(var)))
                if iv.hi is not None and iv.hi < req.width.max:
                    parts.append(PCmp("<=", TVar(var), TInt(iv.hi)))
                if parts:
                    out.append(Clause(ClauseKind.LOOP_INVARIANT, conj(parts)))
        loop = _find_loop(req.tp, node_id)
        if loop is not None:
            written = sorted(v.name for v in ast.walk(loop.body)
                             if isinstance(v, ast.Assign))
            if written:
                out.append(Clause(ClauseKind.LOOP_ASSIGNS,
                                  assigns=tuple(dict.fromkeys(written))))
        return out

    # -- phase two -----------------------------------------------------------

    def _callees(self, req: GeneratorRequest) -> GeneratorResponse:
        ensures: dict[str, tuple[Clause, ...]] = {}
        loop_props: dict[int, tuple[Clause, ...]] = {}
        for callee in req.unit.callees:
            fn = req.tp.function(callee)
            clauses = self._callee_ensures(req, fn)
            if clauses:
                ensures[callee] = tuple(clauses)
            for node in ast.walk(fn):
                if isinstance(node, ast.While) and \
                        node.node_id not in req.loop_clauses:
                    tmpl = self._callee_loop_templates(req, fn, node.node_id)
                    if tmpl:
                        loop_props[node.node_id] = tuple(tmpl)
        return GeneratorResponse(callee_ensures=ensures, loop_clauses=loop_props)

    def _callee_ensures(self, req: GeneratorRequest,
                        fn: ast.FunctionDef) -> list[Clause]:
        if fn.return_type != "int":
            return []
        result = TVar("\\result")
        summaries = _return_summaries(fn)
        if summaries is not None:
            out = []
            for path, term in summaries:
                pred = PCmp("==", result, term) if path == TRUE \
                    else pimplies(path, PCmp("==", result, term))
                out.append(Clause(ClauseKind.ENSURES, pred))
            return out
        ret_iv, _ = absint.summarize_function(req.tp, fn.name, req.width)
        if ret_iv.is_bottom or ret_iv == full_range(req.width):
            return []
        parts = []
        if ret_iv.lo is not None and ret_iv.lo > req.width.min:
            parts.append(PCmp("<=", TInt(ret_iv.lo), result))
        if ret_iv.hi is not None and ret_iv.hi < req.width.max:
            parts.append(PCmp("<=", result, TInt(ret_iv.hi)))
        return [Clause(ClauseKind.ENSURES, conj(parts))] if parts else []

    def _callee_loop_templates(self, req: GeneratorRequest,
                               fn: ast.FunctionDef,
                               node_id: int) -> list[Clause]:
        _, loop_heads = absint.summarize_function(req.tp, fn.name, req.width)
        head = loop_heads.get(node_id)
        out: list[Clause] = []
        if head:
            for var in sorted(head):
                iv = head[var]
                if iv.is_bottom or iv == full_range(req.width):
                    continue
                parts = []
                if iv.lo is not None and iv.lo > req.width.min:
                    parts.append(PCmp("<=", TInt(iv.lo), TVar(var)))
                if iv.hi is not None and iv.hi < req.width.max:
                    parts.append(PCmp("<=", TVar(var), TInt(iv.hi)))
                if parts:
                    out.append(Clause(ClauseKind.LOOP_INVARIANT, conj(parts)))
        loop = _find_loop(req.tp, node_id)
        if loop is not None:
            written = sorted({v.name for v in ast.walk(loop.body)
                              if isinstance(v, ast.Assign)})
            if written:
                out.append(Clause(ClauseKind.LOOP_ASSIGNS,
                                  assigns=tuple(written)))
        return out

    # -- transcripts ----------------------------------------------------------

    def _render_response(self, resp: GeneratorResponse) -> str:
        lines = []
        for c in resp.host_requires:
            lines.append(f"host: {render_clause(c)}")
        for node, cls in sorted(resp.loop_clauses.items()):
            for c in cls:
                lines.append(f"loop {node}: {render_clause(c)}")
        for fn, cls in sorted(resp.callee_ensures.items()):
            for c in cls:
                lines.append(f"{fn}: {render_clause(c)}")
        return "\n".join(lines) if lines else "(no candidates)"


def _loops_from_feedback(req: GeneratorRequest) -> list[int]:
    out = []
    for f in req.feedback:
        m = re.search(r"loop invariant needed.*?nodes? ([\d, ]+)", f)
        if m:
            out.extend(int(x) for x in re.findall(r"\d+", m.group(1)))
    return sorted(set(out))


def _find_loop(tp: TypedProgram, node_id: int) -> ast.While | None:
    for fn in tp.program.functions:
        for n in ast.walk(fn):
            if isinstance(n, ast.While) and n.node_id == node_id:
                return n
    return None


# --------------------------------------------------------------------------
# Unit processing


@dataclass
class Transcript:
    phase: str
    iteration: int
    request: str
    response: str


@dataclass
class UnitOutcome:
    unit: VUnit
    verdict: Verdict
    iterations: int
    phase_reached: Phase | None
    vcs: list[VC] = field(default_factory=list)
    results: list[VcResult] = field(default_factory=list)
    witness: dict[str, int] | None = None
    accepted: list[StoreEvent] = field(default_factory=list)
    transcripts: list[Transcript] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def target(self) -> RteAssertion:
        return self.unit.target


@dataclass
class SynthesisConfig:
    max_iters: int = 5
    continue_on_alert: bool = False
    save_transcripts: bool = False
    gen_config: GenConfig = field(default_factory=GenConfig)
    discharge_config: DischargeConfig = field(default_factory=DischargeConfig)


@dataclass
class PipelineOutcome:
    units: list[UnitOutcome]
    store: ContractStore
    stopped_early: bool = False
    skipped: list[VUnit] = field(default_factory=list)

    def verdict_counts(self) -> dict[str, int]:
        out = {v.value: 0 for v in Verdict}
        for u in self.units:
            out[u.verdict.value] += 1
        return out


class _UnitRunner:
    def __init__(self, tp: TypedProgram, width: IntWidth,
                 analysis: AnalysisResult, unit: VUnit, store: ContractStore,
                 generator, cfg: SynthesisConfig, budget: list[int]):
        self.tp = tp
        self.width = width
        self.analysis = analysis
        self.unit = unit
        self.store = store
        self.generator = generator
        self.cfg = cfg
        self.budget = budget
        # trial state: snapshot plus this unit's candidates
        contracts, loops = store.snapshot()
        self.contracts = contracts
        self.loops = loops
        self.candidates: list[tuple[tuple, Clause, Phase]] = []
        self.tried: set[str] = set()
        self.feedback: list[str] = []
        self.transcripts: list[Transcript] = []
        self.establishments: dict[tuple, frozenset] = {}

    # -- checking under the trial store ---------------------------------------

    def check_target(self) -> UnitCheck | None:
        """None signals missing loop invariants (feedback was recorded)."""

        try:
            return check_unit(
                self.tp, self.width, self.unit.host, self.contracts,
                self.loops, target=self.unit.target,
                gen_config=self.cfg.gen_config,
                discharge_config=self.cfg.discharge_config)
        except MissingLoopInvariant as e:
            self.feedback.append(
                "loop invariant needed for nodes "
                + ", ".join(str(n) for n in e.node_ids))
            return None
        except InvalidLoopAssigns as e:
            self.feedback.append(str(e))
            return None

    def run(self) -> UnitOutcome:
        check = self.check_target()
        if check is not None and check.valid:
            return self.finish_success(check, iterations=0, phase=None)

        iterations = 0
        phase = Phase.HOST
        for phase in (Phase.HOST, Phase.CALLEES):
            for _ in range(self.cfg.max_iters):
                if self.budget[0] <= 0:
                    self.feedback.append("generator budget exhausted")
                    return self.finish_failure(check, iterations, phase)
                self.budget[0] -= 1
                iterations += 1

                req = GeneratorRequest(
                    phase=phase, iteration=iterations, unit=self.unit,
                    tp=self.tp, width=self.width, analysis=self.analysis,
                    contracts=self.contracts, loop_clauses=self.loops,
                    failing=check.failing if check is not None else [],
                    feedback=list(self.feedback))
                self.feedback.clear()
                try:
                    resp = self.generator(req)
                except GeneratorError as e:
                    self.feedback.append(f"generator failed: {e}")
                    self.record_transcript(req, phase, iterations,
                                           f"(error: {e})")
                    continue
                self.record_transcript(req, phase, iterations, resp.raw)
                self.feedback.extend(resp.notes)

                added = self.apply_response(resp, phase)
                if not added:
                    # A deterministic backend will only repeat itself; a
                    # sampling one gets the remaining iterations to retry.
                    if getattr(self.generator, "deterministic", True):
                        break
                    self.feedback.append(
                        "the last response added no usable clause")
                    continue

                check = self.check_target()
                if check is not None and check.valid:
                    return self.finish_success(check, iterations, phase)
            if phase == Phase.HOST and not self.needs_callees(check):
                break
        return self.finish_failure(check, iterations, phase)

    def needs_callees(self, check: UnitCheck | None) -> bool:
        if not self.unit.callees:
            return False
        if check is None:
            return False
        return any(vc.call_results & set(vc.variables())
                   for vc, _ in check.failing)

    # -- applying generator output --------------------------------------------

    def apply_response(self, resp: GeneratorResponse, phase: Phase) -> bool:
        added = False
        entry = self.tp.entry

        for fn, clauses in sorted(resp.callee_requires.items()):
            for c in clauses:
                self.store.log_prohibited(
                    fn, c, "requires clauses are not accepted for callees")
                self.feedback.append(
                    f"requires on callee {fn} was dropped: callee "
                    "preconditions may not be strengthened to rescue a caller")

        for c in resp.host_requires:
            if phase == Phase.CALLEES:
                self.store.log_prohibited(
                    self.unit.host, c,
                    "requires clauses are not accepted during the callee phase")
                continue
            if self.unit.host == entry:
                self.store.log_prohibited(
                    self.unit.host, c,
                    "the entry function has no caller to discharge a requires")
                self.feedback.append(
                    "the entry function cannot take a requires clause")
                continue
            host = self.unit.host
            if c.pred in self.contracts.get(host, Contract()).requires:
                continue
            if self.try_add(("requires", host), c, phase):
                self.contracts[host] = \
                    self.contracts.get(host, Contract()).with_requires(c.pred)
                added = True

        for node_id, clauses in sorted(resp.loop_clauses.items()):
            for c in clauses:
                if c in self.loops.get(node_id, ()):
                    continue
                if self.try_add(("loop", node_id), c, phase):
                    self.loops[node_id] = self.loops.get(node_id, ()) + (c,)
                    added = True

        for fn, clauses in sorted(resp.callee_ensures.items()):
            existing = self.contracts.get(fn, Contract()).ensures
            fresh = [c for c in clauses
                     if c.pred not in existing
                     and self.try_add(("ensures", fn), c, phase)]
            if not fresh:
                continue
            if self.establish_ensures(fn, fresh):
                for c in fresh:
                    self.contracts[fn] = self.contracts.get(
                        fn, Contract()).with_ensures(c.pred)
                added = True
        return added

    def try_add(self, key: tuple, clause: Clause, phase: Phase) -> bool:
        text = f"{key}:{render_clause(clause)}"
        if text in self.tried:
            return False
        self.tried.add(text)
        self.candidates.append((key, clause, phase))
        return True

    def establish_ensures(self, fn: str, fresh: list[Clause]) -> bool:
        """Candidate ensures must hold before anyone may assume them."""

        trial = dict(self.contracts)
        base = trial.get(fn, Contract())
        for c in fresh:
            base = base.with_ensures(c.pred)
        trial[fn] = base
        try:
            check = check_unit(self.tp, self.width, fn, trial, self.loops,
                               check_ensures=True,
                               gen_config=self.cfg.gen_config,
                               discharge_config=self.cfg.discharge_config)
        except MissingLoopInvariant as e:
            self.feedback.append(
                "loop invariant needed for nodes "
                + ", ".join(str(n) for n in e.node_ids))
            return False
        except InvalidLoopAssigns as e:
            self.feedback.append(str(e))
            return False
        if not check.valid:
            for vc, r in check.failing:
                self.feedback.append(
                    f"candidate ensures on {fn} not established: "
                    f"{vc.render()} -> {r.outcome.value}")
            return False
        used = frozenset(t for _, r in zip(check.vcs, check.results)
                         for t in r.used_tags)
        n_existing = len(self.contracts.get(fn, Contract()).ensures)
        for i, _ in enumerate(fresh):
            self.establishments[("ensures", fn, n_existing + i)] = used
        return True

    # -- finalization ----------------------------------------------------------

    def finish_success(self, check: UnitCheck, iterations: int,
                       phase: Phase | None) -> UnitOutcome:
        retained = self.retained_tags(check)
        accepted: list[StoreEvent] = []

        for key, clause, cand_phase in self.candidates:
            tag = self.candidate_tag(key, clause)
            if tag is None or tag not in retained:
                self.store.log_dropped(
                    _where_of(key), clause,
                    "candidate did not appear in the final derivation")
                continue
            match key:
                case ("requires", fn):
                    self.store.add_requires(fn, clause.pred, cand_phase,
                                            note=f"unit {self.unit.target.id}")
                case ("loop", node_id):
                    self.store.add_loop_clause(node_id, clause,
                                               note=f"unit {self.unit.target.id}")
                case ("ensures", fn):
                    self.store.add_ensures(fn, clause.pred,
                                           note=f"unit {self.unit.target.id}")
            accepted.append(self.store.events[-1])

        target = self.unit.target
        goals = [vc.goal for vc in check.vcs if vc.origin == VcOrigin.TARGET]
        if target.kind == RteKind.CALL_SITE_PRECONDITION and goals:
            target.pred = conj(goals)
        target.status = absint.Status.PROVEN

        return UnitOutcome(
            unit=self.unit, verdict=Verdict.CERTIFIED, iterations=iterations,
            phase_reached=phase, vcs=check.vcs, results=check.results,
            accepted=accepted, transcripts=self.transcripts,
            notes=[])

    def candidate_tag(self, key: tuple, clause: Clause) -> tuple | None:
        """The hypothesis tag this candidate carries in the trial store, or
        None when it never made it in (a failed ensures establishment)."""

        match key:
            case ("requires", fn):
                reqs = self.contracts.get(fn, Contract()).requires
                if clause.pred not in reqs:
                    return None
                return ("requires", fn, reqs.index(clause.pred))
            case ("ensures", fn):
                ens = self.contracts.get(fn, Contract()).ensures
                if clause.pred not in ens:
                    return None
                return ("ensures", fn, ens.index(clause.pred))
            case ("loop", node_id):
                clauses = self.loops.get(node_id, ())
                if clause not in clauses:
                    return None
                if clause.kind == ClauseKind.LOOP_INVARIANT:
                    invs = [c for c in clauses
                            if c.kind == ClauseKind.LOOP_INVARIANT]
                    return ("invariant", node_id, invs.index(clause))
                return ("assigns", node_id, clauses.index(clause))
        raise PregussError(f"unknown candidate key {key}")

    def retained_tags(self, check: UnitCheck) -> frozenset:
        """Tags that survive in the final derivation, closed over the
        establishment conditions of retained ensures clauses."""

        used: set[tuple] = set()
        for r in check.results:
            used |= set(r.used_tags)
        changed = True
        while changed:
            changed = False
            for key, extra in self.establishments.items():
                if key in used and not extra <= used:
                    used |= extra
                    changed = True
        # loop assigns clauses ride along with their retained invariants
        for node_id, clauses in self.loops.items():
            n_invs = sum(1 for c in clauses
                         if c.kind == ClauseKind.LOOP_INVARIANT)
            if any(("invariant", node_id, i) in used for i in range(n_invs)):
                for idx, c in enumerate(clauses):
                    if c.kind == ClauseKind.LOOP_ASSIGNS:
                        used.add(("assigns", node_id, idx))
        return frozenset(used)

    def finish_failure(self, check: UnitCheck | None, iterations: int,
                       phase: Phase | None) -> UnitOutcome:
        for key, clause, _phase in self.candidates:
            self.store.log_dropped(_where_of(key), clause,
                                   "unit failed; candidate discarded")
        target = self.unit.target
        notes = list(self.feedback)
        vcs = check.vcs if check is not None else []
        results = check.results if check is not None else []

        witness = None
        refuted = False
        if check is not None and \
                target.kind == RteKind.CALL_SITE_PRECONDITION:
            for vc, r in check.target_results():
                if r.outcome == VcOutcome.INVALID:
                    refuted = True
                    witness = r.witness or {}
                    break
        if check is not None:
            goals = [vc.goal for vc in check.vcs
                     if vc.origin == VcOrigin.TARGET]
            if target.kind == RteKind.CALL_SITE_PRECONDITION and goals:
                target.pred = conj(goals)

        if refuted:
            target.status = absint.Status.ALARM
            return UnitOutcome(
                unit=self.unit, verdict=Verdict.DEFINITIVE_RTE,
                iterations=iterations, phase_reached=phase, vcs=vcs,
                results=results, witness=witness,
                transcripts=self.transcripts, notes=notes)
        target.status = absint.Status.ALARM
        return UnitOutcome(
            unit=self.unit, verdict=Verdict.HIGH_RISK_ALERT,
            iterations=iterations, phase_reached=phase, vcs=vcs,
            results=results, transcripts=self.transcripts, notes=notes)

    def record_transcript(self, req: GeneratorRequest, phase: Phase,
                          iteration: int, response_text: str) -> None:
        self.transcripts.append(Transcript(
            phase=phase.value, iteration=iteration,
            request=render_request(req), response=response_text))


def _where_of(key: tuple) -> str:
    match key:
        case ("requires", fn) | ("ensures", fn):
            return fn
        case ("loop", node_id):
            return f"loop {node_id}"
        case ("unit", uid):
            return f"unit {uid}"
    return str(key)


def process_queue(tp: TypedProgram, width: IntWidth,
                  analysis: AnalysisResult, units: list[VUnit],
                  generator, store: ContractStore | None = None,
                  config: SynthesisConfig | None = None) -> PipelineOutcome:
    """Run every unit through the synthesis protocol in queue order.

    The contract snapshot each unit sees is taken when it is dequeued, so
    clauses committed by earlier units are visible.  A HighRiskAlert stops
    the queue unless the configuration says otherwise; a DefinitiveRTE is a
    conclusive answer for its site and never stops the queue.
    """

    store = store if store is not None else ContractStore()
    cfg = config or SynthesisConfig()
    budget = [max(1, len(units) * 2 * cfg.max_iters)]

    outcomes: list[UnitOutcome] = []
    skipped: list[VUnit] = []
    stopped = False
    for i, unit in enumerate(units):
        if stopped:
            skipped.append(unit)
            continue
        unit.contracts = store.snapshot()[0]
        runner = _UnitRunner(tp, width, analysis, unit, store, generator,
                             cfg, budget)
        try:
            outcome = runner.run()
        except AnalysisBudgetError as e:
            outcome = UnitOutcome(
                unit=unit, verdict=Verdict.HIGH_RISK_ALERT, iterations=0,
                phase_reached=None, notes=[f"budget exceeded: {e}"])
        outcomes.append(outcome)
        if outcome.verdict == Verdict.HIGH_RISK_ALERT \
                and not cfg.continue_on_alert:
            stopped = True
    return PipelineOutcome(units=outcomes, store=store,
                           stopped_early=stopped, skipped=skipped)
