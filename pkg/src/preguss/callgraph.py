"""Call graph construction and decomposition into verification units.

A verification unit (V-Unit) pairs one target assertion with a two-layer
slice: the host function's body plus the contracts of the direct callees the
target actually depends on.  Units are queued bottom-up (callees before
callers) so that contracts synthesized early are available when the caller's
units run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .absint import AnalysisResult, RteAssertion, RteKind, Status
from .errors import MutualRecursionError
from .frontend import syntax as ast
from .frontend.resolve import TypedProgram
from .specs import TRUE, Contract, render_pred


@dataclass(frozen=True)
class CallEdge:
    caller: str
    callee: str
    node_id: int  # the Call expression node


@dataclass
class CallGraph:
    functions: list[str]          # source order
    edges: list[CallEdge]         # call sites in source order

    def callees(self, name: str) -> list[str]:
        out: list[str] = []
        for e in self.edges:
            if e.caller == name and e.callee not in out:
                out.append(e.callee)
        return out

    def edges_from(self, name: str) -> list[CallEdge]:
        return [e for e in self.edges if e.caller == name]


def _calls_in(fn: ast.FunctionDef) -> list[ast.Call]:
    return [n for n in ast.walk(fn.body) if isinstance(n, ast.Call)]


def build_call_graph(tp: TypedProgram) -> CallGraph:
    """Build the call site graph; any cycle (including self-recursion) is
    rejected up front."""

    edges = []
    for fn in tp.program.functions:
        for call in _calls_in(fn):
            edges.append(CallEdge(fn.name, call.name, call.node_id))
    graph = CallGraph([f.name for f in tp.program.functions], edges)
    _check_acyclic(graph)
    return graph


def _check_acyclic(graph: CallGraph) -> None:
    state: dict[str, int] = {}  # 0 visiting, 1 done
    stack: list[str] = []

    def visit(name: str) -> None:
        if state.get(name) == 1:
            return
        if state.get(name) == 0:
            cycle = stack[stack.index(name):] + [name]
            raise MutualRecursionError(cycle)
        state[name] = 0
        stack.append(name)
        for callee in graph.callees(name):
            visit(callee)
        stack.pop()
        state[name] = 1

    for name in graph.functions:
        visit(name)


def post_order(graph: CallGraph) -> list[str]:
    """Functions with callees before callers; roots taken in source order."""

    out: list[str] = []
    seen: set[str] = set()

    def visit(name: str) -> None:
        if name in seen:
            return
        seen.add(name)
        for callee in graph.callees(name):
            visit(callee)
        out.append(name)

    for name in graph.functions:
        visit(name)
    return out


def collect_assertions(tp: TypedProgram, analysis: AnalysisResult,
                       graph: CallGraph) -> list[RteAssertion]:
    """The full work list: UB guards from the analysis plus one precondition
    assertion per syntactic call site in a reachable host.

    Call site assertions start at ``true`` (no callee has a contract yet) and
    Pending; the synthesis stage rewrites them as requires clauses appear.
    """

    out = list(analysis.assertions)
    reachable = set(analysis.reachable)
    k = 0
    for fn in tp.program.functions:
        if fn.name not in reachable:
            continue
        for call in _calls_in(fn):
            k += 1
            out.append(RteAssertion(
                id=f"cs{k}",
                kind=RteKind.CALL_SITE_PRECONDITION,
                pred=TRUE,
                status=Status.PENDING,
                node_id=call.node_id,
                host=fn.name,
                pos=call.pos,
                callee=call.name,
            ))
    return out


# --------------------------------------------------------------------------
# Dependency filtering


def _expr_vars(e: ast.Expr) -> set[str]:
    return {n.name for n in ast.walk(e) if isinstance(n, ast.VarRef)}


def _expr_callees(e: ast.Expr) -> set[str]:
    return {n.name for n in ast.walk(e) if isinstance(n, ast.Call)}


def _target_exprs(tp: TypedProgram, target: RteAssertion) -> list[ast.Expr]:
    """The expressions whose values feed the target check."""

    fn = tp.function(target.host)
    node = ast.node_by_id(fn, target.node_id)
    match node:
        case ast.Call(args=args):
            return list(args)
        case ast.Unary(operand=o):
            return [o]
        case ast.Binary(lhs=l, rhs=r):
            return [l, r]
    return []


def _defs_with_conds(fn: ast.FunctionDef):
    """Yield (stmt, enclosing condition exprs) for every statement, and the
    condition stack for every node id (for control dependence)."""

    conds_of: dict[int, list[ast.Expr]] = {}
    defs: list[tuple[ast.Stmt, list[ast.Expr]]] = []

    def walk_block(block: ast.Block, conds: list[ast.Expr]) -> None:
        for s in block.stmts:
            for n in ast.walk(s):
                conds_of[n.node_id] = conds
            defs.append((s, conds))
            match s:
                case ast.Block():
                    walk_block(s, conds)
                case ast.If(cond=c, then=t, els=e):
                    walk_block(t, conds + [c])
                    if e is not None:
                        walk_block(e, conds + [c])
                case ast.While(cond=c, body=b):
                    walk_block(b, conds + [c])
                case _:
                    pass

    walk_block(fn.body, [])
    return defs, conds_of


def dependent_callees(tp: TypedProgram, target: RteAssertion) -> list[str]:
    """Direct callees of the host that the target may depend on.

    Relevance is flow-insensitive: starting from the variables in the target's
    operands and its enclosing branch conditions, definitions of relevant
    variables make their right-hand sides (and the conditions guarding them)
    relevant, to a fixpoint.  A callee is kept when one of its call sites sits
    inside a relevant expression; a bare call statement whose value goes
    nowhere cannot influence the target.
    """

    fn = tp.function(target.host)
    defs, conds_of = _defs_with_conds(fn)

    relevant_exprs: list[ast.Expr] = list(_target_exprs(tp, target))
    relevant_exprs.extend(conds_of.get(target.node_id, []))
    relevant_vars: set[str] = set()
    for e in relevant_exprs:
        relevant_vars |= _expr_vars(e)

    changed = True
    while changed:
        changed = False
        for s, conds in defs:
            match s:
                case ast.Decl(name=n, init=e) | ast.Assign(name=n, value=e):
                    if n not in relevant_vars:
                        continue
                    if any(e is x for x in relevant_exprs):
                        continue
                    relevant_exprs.append(e)
                    new = _expr_vars(e)
                    for c in conds:
                        if not any(c is x for x in relevant_exprs):
                            relevant_exprs.append(c)
                        new |= _expr_vars(c)
                    if not new <= relevant_vars:
                        relevant_vars |= new
                    changed = True
                case _:
                    pass

    kept: set[str] = set()
    for e in relevant_exprs:
        kept |= _expr_callees(e)
    if target.callee is not None:
        kept.add(target.callee)
    order: list[str] = []
    for call in _calls_in(fn):
        if call.name in kept and call.name not in order:
            order.append(call.name)
    return order


# --------------------------------------------------------------------------
# Units and the queue


@dataclass
class VUnit:
    target: RteAssertion
    host: str
    callees: list[str]            # retained direct callees
    priority: int                 # queue index, lower runs first
    contracts: dict[str, Contract] = field(default_factory=dict)

    @property
    def slice_functions(self) -> list[str]:
        return [self.host] + [c for c in self.callees if c != self.host]


def build_units(tp: TypedProgram, graph: CallGraph, analysis: AnalysisResult,
                assertions: list[RteAssertion],
                dependency_filter: bool = True) -> list[VUnit]:
    """Order the work list and attach slices.

    Hosts run in call graph post order; within a host, assertions keep source
    order (node ids are preorder positions), a zero-division check before the
    overflow check on the same operation.
    """

    host_rank = {name: i for i, name in enumerate(post_order(graph))}
    kind_rank = {RteKind.DIV_BY_ZERO: 0, RteKind.SIGNED_OVERFLOW: 1,
                 RteKind.CALL_SITE_PRECONDITION: 2}

    def key(a: RteAssertion):
        return (host_rank[a.host], a.node_id, kind_rank[a.kind])

    units = []
    for i, a in enumerate(sorted(assertions, key=key)):
        if dependency_filter:
            callees = dependent_callees(tp, a)
        else:
            callees = graph.callees(a.host)
        units.append(VUnit(target=a, host=a.host, callees=callees, priority=i))
    return units


def dump_queue(units: list[VUnit]) -> str:
    """Stable, human-readable queue listing for --dump-queue."""

    lines = []
    for u in units:
        a = u.target
        lines.append(
            f"{u.priority + 1}. {a.id} {a.kind.value} host={u.host} "
            f"node={a.node_id} slice=[{', '.join(u.slice_functions)}] "
            f"status={a.status.value} pred={render_pred(a.pred)}")
    return "\n".join(lines) + "\n"
