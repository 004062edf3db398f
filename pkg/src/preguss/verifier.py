"""Verification condition generation and discharge.

``gen_vcs`` runs a forward symbolic execution of one host function against
the current contract snapshot.  Operands are evaluated left to right; every
planted guard is an obligation when it is the unit's target and an assumption
afterwards (a violating execution aborts, so code below a guard may rely on
it).  Calls are opaque: the callee's requires is an obligation at the site,
its ensures is assumed over a fresh result symbol.  Loops demand an invariant
once execution has to cross them.

Discharge is tiered.  Tier 1 is sound and incomplete: hypothesis pruning by
variable clusters, constant substitution, interval propagation and a linear
normal form.  Tier 2 is bounded exhaustive enumeration over the width-clamped
domains, so at small widths it is a decision procedure.  Tier 3 hands the
condition to an external SMT solver when one is configured.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

from . import absint, specs
from .absint import BOTTOM, Interval, RteAssertion, RteKind, full_range
from .errors import (AnalysisBudgetError, MissingLoopInvariant, PregussError,
                     SourcePos)
from .frontend import syntax as ast
from .frontend.resolve import TypedProgram
from .frontend.syntax import IntWidth
from .specs import (Clause, ClauseKind, Contract, PAnd, PBool, PCmp, PImplies,
                    PNot, POr, Predicate, TBin, TInt, TNeg, TOld, TVar,
                    TWidthConst, Term, TRUE, conj, conjuncts, free_vars, pand,
                    pimplies, pnot, render_pred, substitute)

RESULT = specs.RESULT


class InvalidLoopAssigns(PregussError):
    """A declared loop assigns set misses a variable the body writes."""

    def __init__(self, node_id: int, missing: list[str]):
        self.node_id = node_id
        self.missing = missing
        super().__init__(
            f"loop assigns clause misses written variables: {', '.join(missing)}")


# --------------------------------------------------------------------------
# Conditions


class VcOrigin(enum.Enum):
    TARGET = "target"
    LOOP_ESTABLISH = "loop-establish"
    LOOP_PRESERVE = "loop-preserve"
    ENSURES = "ensures"


@dataclass(frozen=True)
class Hyp:
    pred: Predicate
    tags: frozenset = frozenset()


@dataclass
class VC:
    id: str
    origin: VcOrigin
    hyps: list[Hyp]
    goal: Predicate
    width: IntWidth
    node_id: int
    description: str = ""
    call_results: frozenset = frozenset()  # fresh symbols standing for calls

    @property
    def hyp_pred(self) -> Predicate:
        return conj([h.pred for h in self.hyps])

    @property
    def is_nonlinear(self) -> bool:
        return (specs.is_nonlinear(self.goal)
                or any(specs.is_nonlinear(h.pred) for h in self.hyps))

    def variables(self) -> list[str]:
        out: set[str] = set()
        for h in self.hyps:
            out |= free_vars(h.pred)
        out |= free_vars(self.goal)
        return sorted(out)

    def render(self) -> str:
        hyp = render_pred(self.hyp_pred)
        return f"{hyp} ==> {render_pred(self.goal)}"


class VcOutcome(enum.Enum):
    VALID = "Valid"
    INVALID = "Invalid"
    UNKNOWN = "Unknown"


@dataclass
class VcResult:
    outcome: VcOutcome
    method: str
    witness: dict[str, int] | None = None
    used_tags: frozenset = frozenset()
    pruned_hyps: tuple[Predicate, ...] = ()
    pruned_goal: Predicate = TRUE


@dataclass
class DischargeConfig:
    tier2_max_assignments: int = 1_000_000
    solver_cmd: str | None = None
    solver_timeout: float = 20.0


@dataclass
class GenConfig:
    max_paths: int = 512


# --------------------------------------------------------------------------
# Symbolic execution


@dataclass
class _State:
    store: dict[str, Term]
    path: tuple[Hyp, ...]
    target_done: bool = False

    def bind(self, name: str, t: Term) -> "_State":
        store = dict(self.store)
        store[name] = t
        return replace(self, store=store)

    def assume(self, pred: Predicate, tags=frozenset()) -> "_State":
        if pred == TRUE:
            return self
        return replace(self, path=self.path + (Hyp(pred, frozenset(tags)),))


def _assigned_vars(block: ast.Block) -> set[str]:
    return {n.name for n in ast.walk(block) if isinstance(n, ast.Assign)}


class _Exec:
    def __init__(self, tp: TypedProgram, width: IntWidth, host: ast.FunctionDef,
                 contracts: dict[str, Contract],
                 loop_clauses: dict[int, tuple[Clause, ...]],
                 target: RteAssertion | None,
                 check_ensures: bool, cfg: GenConfig):
        self.tp = tp
        self.width = width
        self.host = host
        self.contracts = contracts
        self.loop_clauses = loop_clauses
        self.target = target
        self.check_ensures = check_ensures
        self.cfg = cfg
        self.vcs: list[VC] = []
        self.vc_prefix = target.id if target is not None else host.name
        self.used_names = {n.name for n in ast.walk(tp.program)
                           if isinstance(n, (ast.VarRef, ast.Decl, ast.Param,
                                             ast.Assign))}
        self.used_names |= {p.name for f in tp.program.functions
                            for p in f.params}
        self.fresh_calls = 0
        self.fresh_havocs = 0
        self.paths_seen = 0
        self.result_names: set[str] = set()

    # -- fresh symbols -------------------------------------------------------

    def fresh_result(self) -> str:
        while True:
            self.fresh_calls += 1
            name = f"r{self.fresh_calls}"
            if name not in self.used_names:
                self.used_names.add(name)
                self.result_names.add(name)
                return name

    def fresh_havoc(self, var: str) -> str:
        while True:
            self.fresh_havocs += 1
            name = f"{var}_h{self.fresh_havocs}"
            if name not in self.used_names:
                self.used_names.add(name)
                return name

    def emit(self, origin: VcOrigin, state: _State, goal: Predicate,
             node_id: int, description: str) -> None:
        self.vcs.append(VC(
            id=f"{self.vc_prefix}.vc{len(self.vcs) + 1}",
            origin=origin,
            hyps=list(state.path),
            goal=goal,
            width=self.width,
            node_id=node_id,
            description=description,
            call_results=frozenset(self.result_names),
        ))

    # -- expressions ---------------------------------------------------------

    def eval(self, state: _State, e: ast.Expr) -> tuple[_State, Term]:
        """Evaluate an int expression: returns the value term and the state
        extended with guard assumptions and call effects along the way."""

        match e:
            case ast.IntLit(value=v):
                return state, TInt(v)
            case ast.WidthConst(name=n):
                return state, TInt(self.width.min if n == "INT_MIN"
                                   else self.width.max)
            case ast.VarRef(name=n):
                return state, state.store[n]
            case ast.Call():
                return self.eval_call(state, e)
            case ast.Unary(op="-", operand=o):
                state, t = self.eval(state, o)
                state = self.guard(state, e, RteKind.SIGNED_OVERFLOW,
                                   absint.guard_neg_overflow(t, self.width))
                return state, specs.tneg(t)
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.ARITH_OPS:
                state, ta = self.eval(state, l)
                state, tb = self.eval(state, r)
                if op in ("/", "%"):
                    state = self.guard(state, e, RteKind.DIV_BY_ZERO,
                                       absint.guard_div_by_zero(tb))
                    state = self.guard(
                        state, e, RteKind.SIGNED_OVERFLOW,
                        absint.guard_div_overflow(ta, tb, self.width))
                else:
                    state = self.guard(
                        state, e, RteKind.SIGNED_OVERFLOW,
                        absint.guard_arith_overflow(op, ta, tb, self.width))
                return state, TBin(op, ta, tb)
        raise PregussError(f"cannot evaluate {e!r} symbolically")

    def guard(self, state: _State, e: ast.Expr, kind: RteKind,
              pred: Predicate) -> _State:
        if kind == RteKind.SIGNED_OVERFLOW and \
                not absint.overflow_guard_needed(e, self.width):
            return state
        if (self.target is not None and self.target.node_id == e.node_id
                and self.target.kind == kind):
            self.emit(VcOrigin.TARGET, state, pred, e.node_id,
                      f"{kind.value} guard")
            state = replace(state, target_done=True)
        return state.assume(pred, {("guard", e.node_id, kind.value)})

    def eval_call(self, state: _State, call: ast.Call) -> tuple[_State, Term]:
        arg_terms = []
        for a in call.args:
            state, t = self.eval(state, a)
            arg_terms.append(t)
        fn = self.tp.function(call.name)
        contract = self.contracts.get(call.name, Contract())
        binding = {p.name: t for p, t in zip(fn.params, arg_terms)}

        req = specs.instantiate_requires(contract, binding)
        if (self.target is not None
                and self.target.kind == RteKind.CALL_SITE_PRECONDITION
                and self.target.node_id == call.node_id):
            self.emit(VcOrigin.TARGET, state, req, call.node_id,
                      f"requires of {call.name} at the call site")
            state = replace(state, target_done=True)
        if req != TRUE:
            state = state.assume(req, {("requires", call.name)})

        result: Term = TInt(0)
        if fn.return_type == "int":
            result = TVar(self.fresh_result())
        for i, cl in enumerate(contract.ensures):
            ens = specs.instantiate_ensures(cl, binding, result)
            state = state.assume(ens, {("ensures", call.name, i)})
        return state, result

    # -- conditions (short-circuit aware) -----------------------------------

    def cond_paths(self, state: _State, e: ast.Expr,
                   sense: bool) -> list[_State]:
        """States in which the condition evaluates to ``sense``, with the
        side effects of exactly the evaluated operands applied."""

        match e:
            case ast.Unary(op="!", operand=o):
                return self.cond_paths(state, o, not sense)
            case ast.Binary(op="&&", lhs=l, rhs=r):
                if sense:
                    return [s2 for s1 in self.cond_paths(state, l, True)
                            for s2 in self.cond_paths(s1, r, True)]
                return self.cond_paths(state, l, False) + \
                    [s2 for s1 in self.cond_paths(state, l, True)
                     for s2 in self.cond_paths(s1, r, False)]
            case ast.Binary(op="||", lhs=l, rhs=r):
                if sense:
                    return self.cond_paths(state, l, True) + \
                        [s2 for s1 in self.cond_paths(state, l, False)
                         for s2 in self.cond_paths(s1, r, True)]
                return [s2 for s1 in self.cond_paths(state, l, False)
                        for s2 in self.cond_paths(s1, r, False)]
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.CMP_OPS:
                state, ta = self.eval(state, l)
                state, tb = self.eval(state, r)
                pred = PCmp(op, ta, tb)
                return [state.assume(pred if sense else pnot(pred))]
        raise PregussError(f"not a condition: {e!r}")

    # -- statements ----------------------------------------------------------

    def run(self) -> list[VC]:
        params = [p.name for p in self.host.params]
        store: dict[str, Term] = {p: TVar(p) for p in params}
        state = _State(store=store, path=())
        contract = self.contracts.get(self.host.name, Contract())
        for i, cl in enumerate(contract.requires):
            state = state.assume(cl, {("requires", self.host.name, i)})

        returns: list[tuple[_State, Term | None]] = []
        finals = self.exec_block(state, self.host.body, returns)

        if self.check_ensures and contract.ensures:
            for st, ret in returns:
                self.emit_ensures(st, contract, ret)
            if self.host.return_type == "void":
                for st in finals:
                    self.emit_ensures(st, contract, None)
        if self.target is not None and \
                not any(vc.origin == VcOrigin.TARGET for vc in self.vcs):
            raise PregussError(
                f"target {self.target.id} was never reached symbolically")
        return self.vcs

    def emit_ensures(self, state: _State, contract: Contract,
                     ret: Term | None) -> None:
        entry = {p.name: TVar(p.name) for p in self.host.params}
        for i, cl in enumerate(contract.ensures):
            goal = specs.instantiate_ensures(cl, entry,
                                             ret if ret is not None else TInt(0))
            self.emit(VcOrigin.ENSURES, state, goal, self.host.body.node_id,
                      f"ensures clause {i + 1} of {self.host.name}")

    def bump_paths(self, states: list[_State]) -> list[_State]:
        self.paths_seen += len(states)
        if self.paths_seen > self.cfg.max_paths:
            raise AnalysisBudgetError(
                f"symbolic execution exceeded {self.cfg.max_paths} paths")
        return states

    def exec_block(self, state: _State, block: ast.Block,
                   returns) -> list[_State]:
        states = [state]
        for s in block.stmts:
            nxt: list[_State] = []
            for st in states:
                nxt.extend(self.exec_stmt(st, s, returns))
            states = self.bump_paths(nxt)
        return states

    def exec_stmt(self, state: _State, s: ast.Stmt, returns) -> list[_State]:
        match s:
            case ast.Block():
                return self.exec_block(state, s, returns)
            case ast.Decl(name=n, init=e) | ast.Assign(name=n, value=e):
                state, t = self.eval(state, e)
                return [state.bind(n, t)]
            case ast.If(cond=c, then=t, els=e):
                out = []
                for st in self.cond_paths(state, c, True):
                    out.extend(self.exec_block(st, t, returns))
                for st in self.cond_paths(state, c, False):
                    out.extend(self.exec_block(st, e, returns)
                               if e is not None else [st])
                return out
            case ast.While():
                return self.exec_while(state, s, returns)
            case ast.Return(value=v):
                if v is not None:
                    state, t = self.eval(state, v)
                    returns.append((state, t))
                else:
                    returns.append((state, None))
                return []
            case ast.CallStmt(call=c) | ast.ExprStmt(expr=c):
                state, _ = self.eval(state, c)
                return [state]
        raise PregussError(f"unhandled statement {s!r}")

    def exec_while(self, state: _State, s: ast.While, returns) -> list[_State]:
        clauses = self.loop_clauses.get(s.node_id, ())
        invariants = [c for c in clauses if c.kind == ClauseKind.LOOP_INVARIANT]
        assigns = [c for c in clauses if c.kind == ClauseKind.LOOP_ASSIGNS]
        written = {v for v in _assigned_vars(s.body) if v in state.store}

        if not invariants:
            # Nothing beyond this loop can be proven.  If this path still owes
            # the target obligation, or ensures clauses must hold at returns
            # beyond it, the unit needs an invariant.
            needs_more = ((self.target is not None and not state.target_done)
                          or (self.check_ensures and
                              self.contracts.get(self.host.name,
                                                 Contract()).ensures))
            if needs_more:
                raise MissingLoopInvariant([s.node_id])
            return []

        if assigns:
            declared = {v for c in assigns for v in c.assigns}
            missing = sorted(written - declared)
            if missing:
                raise InvalidLoopAssigns(s.node_id, missing)

        def inv_pred(store: dict[str, Term]) -> Predicate:
            return conj([substitute(c.pred,
                                    {v: store[v] for v in free_vars(c.pred)})
                         for c in invariants])

        for i, c in enumerate(invariants):
            unknown = free_vars(c.pred) - set(state.store)
            if unknown:
                raise PregussError(
                    f"loop invariant mentions unknown variables: "
                    f"{', '.join(sorted(unknown))}")

        self.emit(VcOrigin.LOOP_ESTABLISH, state, inv_pred(state.store),
                  s.node_id, "loop invariant holds on entry")

        havoc = state
        for v in sorted(written):
            havoc = havoc.bind(v, TVar(self.fresh_havoc(v)))
        inv_tags = {("invariant", s.node_id, i) for i in range(len(invariants))}
        havoc = havoc.assume(inv_pred(havoc.store), inv_tags)

        # body pass: preservation at the back edge
        for st in self.cond_paths(havoc, s.cond, True):
            for end in self.exec_block(st, s.body, returns):
                self.emit(VcOrigin.LOOP_PRESERVE, end, inv_pred(end.store),
                          s.node_id, "loop invariant preserved")

        # continue past the loop
        return self.cond_paths(havoc, s.cond, False)


def gen_vcs(tp: TypedProgram, width: IntWidth, host: str,
            contracts: dict[str, Contract],
            loop_clauses: dict[int, tuple[Clause, ...]] | None = None,
            target: RteAssertion | None = None,
            check_ensures: bool = False,
            config: GenConfig | None = None) -> list[VC]:
    """Generate the verification conditions of one unit.

    With a ``target`` the list contains its obligation (one VC per symbolic
    path that reaches it) plus any loop establishment and preservation
    conditions met along the way.  With ``check_ensures`` the host contract's
    ensures clauses become obligations at every return.
    """

    ex = _Exec(tp, width, tp.function(host), contracts, loop_clauses or {},
               target, check_ensures, config or GenConfig())
    return ex.run()


# --------------------------------------------------------------------------
# Weakest preconditions (loop-free fragments)


class _WpCtx:
    def __init__(self, tp: TypedProgram, width: IntWidth,
                 contracts: dict[str, Contract]):
        self.tp = tp
        self.width = width
        self.contracts = contracts
        self.fresh = 0

    def result_name(self) -> str:
        self.fresh += 1
        return f"r{self.fresh}"


def wp(stmts, post: Predicate, tp: TypedProgram, width: IntWidth,
       contracts: dict[str, Contract] | None = None) -> Predicate:
    """Weakest precondition of a loop-free statement sequence.

    Guards become conjuncts, calls go through their contracts (fresh result
    symbol, requires conjoined, ensures as a hypothesis).  Loops are out of
    scope here; ``gen_vcs`` handles them through invariants.
    """

    ctx = _WpCtx(tp, width, contracts or {})
    if isinstance(stmts, ast.Stmt):
        stmts = [stmts]
    return _wp_seq(list(stmts), post, ctx)


def _wp_seq(stmts, post: Predicate, ctx: _WpCtx) -> Predicate:
    for s in reversed(stmts):
        post = _wp_stmt(s, post, ctx)
    return post


def _wp_stmt(s: ast.Stmt, post: Predicate, ctx: _WpCtx) -> Predicate:
    match s:
        case ast.Block(stmts=body):
            return _wp_seq(list(body), post, ctx)
        case ast.Decl(name=n, init=e) | ast.Assign(name=n, value=e):
            return _wp_assign(n, e, post, ctx)
        case ast.If(cond=c, then=t, els=e):
            cp, cond = _wp_cond(c, ctx)
            wt = _wp_stmt(t, post, ctx)
            we = _wp_stmt(e, post, ctx) if e is not None else post
            return pand(cp, pand(pimplies(cond, wt), pimplies(pnot(cond), we)))
        case ast.Return(value=v):
            if v is None:
                return post
            pre, t = _wp_expr(v, ctx)
            return pand(pre, substitute(post, {RESULT: t}))
        case ast.CallStmt(call=c) | ast.ExprStmt(expr=c):
            pre, _, wrap = _wp_expr_full(c, ctx)
            return pand(pre, wrap(post))
        case ast.While():
            raise MissingLoopInvariant([s.node_id])
    raise PregussError(f"wp: unhandled statement {s!r}")


def _wp_assign(name: str, e: ast.Expr, post: Predicate, ctx: _WpCtx) -> Predicate:
    pre, t, wrap = _wp_expr_full(e, ctx)
    return pand(pre, wrap(substitute(post, {name: t})))


def _wp_cond(e: ast.Expr, ctx: _WpCtx) -> tuple[Predicate, Predicate]:
    """(definedness precondition, condition as a predicate)."""

    match e:
        case ast.Unary(op="!", operand=o):
            p, c = _wp_cond(o, ctx)
            return p, pnot(c)
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.LOGIC_OPS:
            pl, cl = _wp_cond(l, ctx)
            pr, cr = _wp_cond(r, ctx)
            combined = PAnd(cl, cr) if op == "&&" else POr(cl, cr)
            guard = pimplies(cl if op == "&&" else pnot(cl), pr)
            return pand(pl, guard), combined
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.CMP_OPS:
            pl, tl = _wp_expr(l, ctx)
            pr, tr = _wp_expr(r, ctx)
            return pand(pl, pr), PCmp(op, tl, tr)
    raise PregussError(f"wp: not a condition: {e!r}")


def _wp_expr(e: ast.Expr, ctx: _WpCtx) -> tuple[Predicate, Term]:
    pre, t, wrap = _wp_expr_full(e, ctx)
    if wrap is not _identity:
        raise PregussError("wp: call result used inside a larger expression "
                           "is only supported at the top of an assignment")
    return pre, t


def _identity(p: Predicate) -> Predicate:
    return p


def _wp_expr_full(e: ast.Expr, ctx: _WpCtx):
    """(definedness precondition, value term, post wrapper).

    The wrapper folds a call's contract around the postcondition:
    ``requires && (ensures ==> post)`` with a fresh result symbol.
    """

    w = ctx.width
    match e:
        case ast.IntLit(value=v):
            return TRUE, TInt(v), _identity
        case ast.WidthConst(name=n):
            return TRUE, TInt(w.min if n == "INT_MIN" else w.max), _identity
        case ast.VarRef(name=n):
            return TRUE, TVar(n), _identity
        case ast.Unary(op="-", operand=o):
            pre, t = _wp_expr(o, ctx)
            if absint.overflow_guard_needed(e, w):
                pre = pand(pre, absint.guard_neg_overflow(t, w))
            return pre, specs.tneg(t), _identity
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.ARITH_OPS:
            pl, tl = _wp_expr(l, ctx)
            pr, tr = _wp_expr(r, ctx)
            pre = pand(pl, pr)
            if op in ("/", "%"):
                pre = pand(pre, absint.guard_div_by_zero(tr))
                if absint.overflow_guard_needed(e, w):
                    pre = pand(pre, absint.guard_div_overflow(tl, tr, w))
            elif absint.overflow_guard_needed(e, w):
                pre = pand(pre, absint.guard_arith_overflow(op, tl, tr, w))
            return pre, TBin(op, tl, tr), _identity
        case ast.Call(name=name, args=args):
            pre = TRUE
            arg_terms = []
            for a in args:
                pa, ta = _wp_expr(a, ctx)
                pre = pand(pre, pa)
                arg_terms.append(ta)
            fn = ctx.tp.function(name)
            contract = ctx.contracts.get(name, Contract())
            binding = {p.name: t for p, t in zip(fn.params, arg_terms)}
            req = specs.instantiate_requires(contract, binding)
            result = TVar(ctx.result_name()) if fn.return_type == "int" \
                else TInt(0)
            ens = conj([specs.instantiate_ensures(c, binding, result)
                        for c in contract.ensures])

            def wrap(post: Predicate, _req=req, _ens=ens) -> Predicate:
                return pand(_req, pimplies(_ens, post))

            return pre, result, wrap
    raise PregussError(f"wp: cannot translate {e!r}")


# --------------------------------------------------------------------------
# Discharge, tier 1: intervals, substitution, linear forms


def term_interval(t: Term, ivs: dict[str, Interval],
                  width: IntWidth) -> Interval:
    """Mathematical interval of a term given variable ranges (no wrapping:
    condition terms denote unbounded integers, only program variables are
    width-bounded)."""

    match t:
        case TInt(value=v):
            return absint.singleton(v)
        case TWidthConst(name=n):
            return absint.singleton(width.min if n == "INT_MIN" else width.max)
        case TVar(name=n):
            return ivs.get(n, full_range(width))
        case TOld():
            raise PregussError("\\old must be instantiated before discharge")
        case TNeg(operand=o):
            return absint.neg_interval(term_interval(o, ivs, width))
        case TBin(op=op, lhs=l, rhs=r):
            a = term_interval(l, ivs, width)
            b = term_interval(r, ivs, width)
            if a.is_bottom or b.is_bottom:
                return BOTTOM
            match op:
                case "+":
                    return absint.add_interval(a, b)
                case "-":
                    return absint.sub_interval(a, b)
                case "*":
                    return absint.mul_interval(a, b)
                case "/":
                    return absint.div_interval(a, b)
                case "%":
                    return absint.mod_interval(a, b)
    raise PregussError(f"no interval for {t!r}")


def _linear_form(t: Term, ivs, width):
    """Decompose into (constant, {key: coeff}, {key: interval}); nonlinear
    subterms stay opaque under a stable key with an interval bound."""

    match t:
        case TInt(value=v):
            return v, {}, {}
        case TWidthConst(name=n):
            return (width.min if n == "INT_MIN" else width.max), {}, {}
        case TVar(name=n):
            return 0, {n: 1}, {n: term_interval(t, ivs, width)}
        case TNeg(operand=o):
            c, coeffs, bounds = _linear_form(o, ivs, width)
            return -c, {k: -v for k, v in coeffs.items()}, bounds
        case TBin(op="+", lhs=l, rhs=r) | TBin(op="-", lhs=l, rhs=r):
            cl, fl, bl = _linear_form(l, ivs, width)
            cr, fr, br = _linear_form(r, ivs, width)
            sign = 1 if t.op == "+" else -1
            coeffs = dict(fl)
            for k, v in fr.items():
                coeffs[k] = coeffs.get(k, 0) + sign * v
            return cl + sign * cr, coeffs, {**bl, **br}
        case TBin(op="*", lhs=l, rhs=r):
            # Scale only by a known constant value: a constant term whose
            # interval is not a single point must stay opaque.
            if specs.is_const_term(l):
                iv = term_interval(l, ivs, width)
                if iv.is_singleton():
                    k = iv.lo
                    c, coeffs, bounds = _linear_form(r, ivs, width)
                    return (k * c, {n: k * v for n, v in coeffs.items()},
                            bounds)
            if specs.is_const_term(r):
                iv = term_interval(r, ivs, width)
                if iv.is_singleton():
                    k = iv.lo
                    c, coeffs, bounds = _linear_form(l, ivs, width)
                    return (k * c, {n: k * v for n, v in coeffs.items()},
                            bounds)
    # opaque: nonlinear or division
    key = f"\x00{specs.render_term(t)}"
    return 0, {key: 1}, {key: term_interval(t, ivs, width)}


def _cmp_truth(op: str, a: Term, b: Term, ivs, width) -> bool | None:
    """Three-valued comparison through the linear normal form."""

    c, coeffs, bounds = _linear_form(TBin("-", a, b), ivs, width)
    lo = hi = c
    for key, coeff in coeffs.items():
        if coeff == 0:
            continue
        iv = bounds[key]
        if iv.is_bottom:
            return None
        span = (coeff * iv.lo, coeff * iv.hi)
        lo += min(span)
        hi += max(span)
    match op:
        case "<":
            return True if hi < 0 else (False if lo >= 0 else None)
        case "<=":
            return True if hi <= 0 else (False if lo > 0 else None)
        case ">":
            return True if lo > 0 else (False if hi <= 0 else None)
        case ">=":
            return True if lo >= 0 else (False if hi < 0 else None)
        case "==":
            if lo == hi == 0:
                return True
            return False if (hi < 0 or lo > 0) else None
        case "!=":
            if hi < 0 or lo > 0:
                return True
            return False if lo == hi == 0 else None
    raise ValueError(op)


def _pred_truth(p: Predicate, ivs, width) -> bool | None:
    match p:
        case PBool(value=v):
            return v
        case PCmp(op=op, lhs=a, rhs=b):
            return _cmp_truth(op, a, b, ivs, width)
        case PNot(operand=o):
            t = _pred_truth(o, ivs, width)
            return None if t is None else not t
        case PAnd(lhs=l, rhs=r):
            a, b = _pred_truth(l, ivs, width), _pred_truth(r, ivs, width)
            if a is False or b is False:
                return False
            if a is True and b is True:
                return True
            return None
        case POr(lhs=l, rhs=r):
            a, b = _pred_truth(l, ivs, width), _pred_truth(r, ivs, width)
            if a is True or b is True:
                return True
            if a is False and b is False:
                return False
            return None
        case PImplies(lhs=l, rhs=r):
            a, b = _pred_truth(l, ivs, width), _pred_truth(r, ivs, width)
            if a is False or b is True:
                return True
            if a is True and b is False:
                return False
            return None
    raise PregussError(f"unhandled predicate {p!r}")


def _derive_intervals(facts: list[Predicate], width: IntWidth,
                      variables) -> dict[str, Interval]:
    ivs = {v: full_range(width) for v in variables}
    for _ in range(3):
        changed = False
        for f in facts:
            match f:
                case PCmp(op=op, lhs=TVar(name=n), rhs=t):
                    other = term_interval(t, ivs, width)
                    if other.is_bottom:
                        continue
                    ref = absint._refine_against(ivs[n], op, other)
                    if ref != ivs[n]:
                        ivs[n] = ref
                        changed = True
                case PCmp(op=op, lhs=t, rhs=TVar(name=n)):
                    other = term_interval(t, ivs, width)
                    if other.is_bottom:
                        continue
                    flipped = absint._FLIP[op]
                    ref = absint._refine_against(ivs[n], flipped, other)
                    if ref != ivs[n]:
                        ivs[n] = ref
                        changed = True
                case _:
                    pass
            if any(iv.is_bottom for iv in ivs.values()):
                return ivs
        if not changed:
            break
    return ivs


def _clusters(vc_hyps: list[Hyp], goal: Predicate):
    """Partition free variables by co-occurrence; return (goal cluster vars,
    kept hyps, side clusters as lists of hyp predicates)."""

    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        parent[find(a)] = find(b)

    groups = []
    for h in vc_hyps:
        vs = sorted(free_vars(h.pred))
        groups.append(vs)
        for a, b in zip(vs, vs[1:]):
            union(a, b)
    goal_vars = sorted(free_vars(goal))
    for a, b in zip(goal_vars, goal_vars[1:]):
        union(a, b)

    goal_roots = {find(v) for v in goal_vars}
    kept: list[Hyp] = []
    side: dict[str, list[Hyp]] = {}
    for h, vs in zip(vc_hyps, groups):
        if not vs:
            kept.append(h)  # ground hypotheses always matter
        elif find(vs[0]) in goal_roots:
            kept.append(h)
        else:
            side.setdefault(find(vs[0]), []).append(h)
    return kept, list(side.values())


def _substitution(facts: list[Predicate]) -> dict[str, Term]:
    subst: dict[str, Term] = {}
    for f in facts:
        match f:
            case PCmp(op="==", lhs=TVar(name=n), rhs=t) if specs.is_const_term(t):
                subst.setdefault(n, t)
            case PCmp(op="==", lhs=t, rhs=TVar(name=n)) if specs.is_const_term(t):
                subst.setdefault(n, t)
            case _:
                pass
    return subst


def _apply_mp(facts: list[Predicate], ivs, width) -> list[Predicate]:
    """One modus ponens round over implication hypotheses."""

    out = list(facts)
    for f in facts:
        match f:
            case PImplies(lhs=a, rhs=c):
                if _pred_truth(a, ivs, width) is True:
                    out.extend(conjuncts(c))
            case _:
                pass
    return out


def _fact_keys(p: Predicate) -> set[str]:
    """Renderings under which a known-true fact can be recognized."""

    keys = {render_pred(p)}
    match p:
        case PCmp(op=op, lhs=a, rhs=b):
            keys.add(render_pred(PCmp(absint._FLIP[op], b, a)))
    return keys


def _entailed(goal: Predicate, known: set[str], ivs, width) -> bool:
    """Conjunct-wise entailment: by interval truth or verbatim hypothesis."""

    for c in conjuncts(goal):
        if _pred_truth(c, ivs, width) is True:
            continue
        if _fact_keys(c) & known:
            continue
        return False
    return True


class _Tier1:
    def __init__(self, hyps: list[Hyp], goal: Predicate, width: IntWidth):
        self.width = width
        self.goal = goal
        self.facts = [c for h in hyps for c in conjuncts(h.pred)]
        self.variables = set()
        for h in hyps:
            self.variables |= free_vars(h.pred)
        self.variables |= free_vars(goal)

    def run(self):
        """Returns (outcome | None, intervals, substitution)."""

        width = self.width
        subst = _substitution(self.facts)
        facts = [substitute(f, subst) for f in self.facts]
        goal = substitute(self.goal, subst)
        ivs = _derive_intervals(facts, width,
                                self.variables - set(subst))

        for f in facts:
            if _pred_truth(f, ivs, width) is False:
                return VcOutcome.VALID, ivs, subst  # hypotheses contradict
        if any(iv.is_bottom for iv in ivs.values()):
            return VcOutcome.VALID, ivs, subst

        facts = _apply_mp(facts, ivs, width)
        ivs = _derive_intervals(facts, width, self.variables - set(subst))

        known = {k for f in facts for k in _fact_keys(f)}
        if _entailed(goal, known, ivs, width):
            return VcOutcome.VALID, ivs, subst
        truth = _pred_truth(goal, ivs, width)
        if truth is False and not free_vars(goal) and \
                all(not free_vars(f) for f in facts):
            return VcOutcome.INVALID, ivs, subst
        return None, ivs, subst


# --------------------------------------------------------------------------
# Discharge, tier 2: bounded enumeration


def _enumerate(hyp_conjs: list[Predicate], goal: Predicate,
               domains: dict[str, Interval], budget: int, width: IntWidth):
    """Exhaustive check of hyps ==> goal over finite domains.

    Returns ("valid", None), ("invalid", witness) or ("over-budget", None).
    A hypothesis conjunct that is false or undefined excludes the assignment;
    an undefined goal counts against validity.
    """

    names = sorted(domains)
    sizes = []
    for n in names:
        iv = domains[n]
        if iv.is_bottom:
            return "valid", None
        sizes.append(iv.hi - iv.lo + 1)
    total = 1
    for s in sizes:
        total *= s
        if total > budget:
            return "over-budget", None

    by_var: dict[str, list[Predicate]] = {n: [] for n in names}
    ready: list[Predicate] = []
    for c in hyp_conjs:
        vs = sorted(free_vars(c))
        if not vs:
            ready.append(c)
        else:
            by_var[max(vs, key=names.index)].append(c)
    for c in ready:
        if specs.eval_pred(c, {}, width) is not True:
            return "valid", None

    env: dict[str, int] = {}

    def rec(i: int):
        if i == len(names):
            if specs.eval_pred(goal, env, width) is not True:
                return dict(env)
            return None
        n = names[i]
        iv = domains[n]
        for v in range(iv.lo, iv.hi + 1):
            env[n] = v
            ok = True
            for c in by_var[n]:
                if specs.eval_pred(c, env, width) is not True:
                    ok = False
                    break
            if ok:
                r = rec(i + 1)
                if r is not None:
                    return r
        del env[n]
        return None

    witness = rec(0)
    if witness is None:
        return "valid", None
    return "invalid", witness


def _check_witness(hyps: list[Hyp], goal: Predicate, env: dict[str, int],
                   width: IntWidth) -> bool:
    """A genuine counterexample satisfies every hypothesis and falsifies the
    goal (an undefined goal counts as falsified)."""

    try:
        for h in hyps:
            for c in conjuncts(h.pred):
                if specs.eval_pred(c, env, width) is not True:
                    return False
        return specs.eval_pred(goal, env, width) is not True
    except KeyError:
        return False


# --------------------------------------------------------------------------
# Discharge driver


def discharge(vc: VC, config: DischargeConfig | None = None) -> VcResult:
    cfg = config or DischargeConfig()
    width = vc.width

    kept, side_clusters = _clusters(vc.hyps, vc.goal)

    # Side clusters: unsatisfiable makes the condition vacuously valid,
    # satisfiable ones can be dropped without changing validity.
    for cluster in side_clusters:
        verdict = _cluster_sat(cluster, width, cfg)
        if verdict == "unsat":
            return VcResult(
                outcome=VcOutcome.VALID, method="tier1-unreachable-context",
                used_tags=frozenset(t for h in cluster for t in h.tags),
                pruned_hyps=tuple(h.pred for h in cluster), pruned_goal=TRUE)
        if verdict == "unknown":
            kept.extend(cluster)

    used_tags = frozenset(t for h in kept for t in h.tags)
    t1 = _Tier1(kept, vc.goal, width)
    outcome, ivs, subst = t1.run()
    pruned_hyps = tuple(substitute(h.pred, subst) for h in kept
                        if substitute(h.pred, subst) != TRUE)
    pruned_goal = substitute(vc.goal, subst)
    base = dict(used_tags=used_tags, pruned_hyps=pruned_hyps,
                pruned_goal=pruned_goal)

    if outcome == VcOutcome.VALID:
        return VcResult(VcOutcome.VALID, "tier1", **base)
    if outcome == VcOutcome.INVALID:
        witness = {n: term_interval(t, {}, width).lo for n, t in subst.items()
                   if n in _vc_vars(vc)}
        if _check_witness(vc.hyps, vc.goal, witness, width):
            return VcResult(VcOutcome.INVALID, "tier1", witness=witness, **base)

    # tier 2: enumeration over the remaining variables
    hyp_conjs = [c for h in kept for c in conjuncts(substitute(h.pred, subst))]
    goal = substitute(vc.goal, subst)
    domains = {n: iv.meet(full_range(width)) for n, iv in ivs.items()
               if n in (free_vars(goal) | {v for c in hyp_conjs
                                           for v in free_vars(c)})}
    verdict, witness = _enumerate(hyp_conjs, goal, domains,
                                  cfg.tier2_max_assignments, width)
    if verdict == "valid":
        return VcResult(VcOutcome.VALID, "tier2", **base)
    if verdict == "invalid":
        full = dict(witness)
        for n, t in subst.items():
            if n in _vc_vars(vc):
                full[n] = term_interval(t, {}, width).lo
        if _check_witness(vc.hyps, vc.goal, full, width):
            return VcResult(VcOutcome.INVALID, "tier2", witness=full, **base)
        return VcResult(VcOutcome.UNKNOWN, "tier2-witness-rejected", **base)

    if cfg.solver_cmd:
        from . import smt
        try:
            out, model = smt.solve(vc, cfg.solver_cmd, cfg.solver_timeout)
        except PregussError:
            return VcResult(VcOutcome.UNKNOWN, "tier3-error", **base)
        if out == VcOutcome.INVALID and model is not None:
            if _check_witness(vc.hyps, vc.goal, model, width):
                return VcResult(VcOutcome.INVALID, "tier3", witness=model, **base)
            return VcResult(VcOutcome.UNKNOWN, "tier3-witness-rejected", **base)
        return VcResult(out, "tier3", **base)

    return VcResult(VcOutcome.UNKNOWN, "over-budget", **base)


def _vc_vars(vc: VC) -> set[str]:
    out = free_vars(vc.goal)
    for h in vc.hyps:
        out |= free_vars(h.pred)
    return out


def _cluster_sat(cluster: list[Hyp], width: IntWidth,
                 cfg: DischargeConfig) -> str:
    """Satisfiability of a variable cluster: 'sat', 'unsat' or 'unknown'."""

    facts = [c for h in cluster for c in conjuncts(h.pred)]
    variables = {v for f in facts for v in free_vars(f)}
    subst = _substitution(facts)
    facts = [substitute(f, subst) for f in facts]
    ivs = _derive_intervals(facts, width, variables - set(subst))
    if any(iv.is_bottom for iv in ivs.values()):
        return "unsat"
    for f in facts:
        t = _pred_truth(f, ivs, width)
        if t is False:
            return "unsat"
    if all(_pred_truth(f, ivs, width) is True for f in facts):
        return "sat"
    domains = {n: iv.meet(full_range(width)) for n, iv in ivs.items()}
    verdict, _ = _enumerate(facts, specs.FALSE, domains,
                            cfg.tier2_max_assignments, width)
    if verdict == "invalid":
        return "sat"     # some assignment satisfies every conjunct
    if verdict == "valid":
        return "unsat"   # no assignment survived the hypotheses
    return "unknown"


# --------------------------------------------------------------------------
# Unit-level convenience


@dataclass
class UnitCheck:
    vcs: list[VC]
    results: list[VcResult]

    @property
    def valid(self) -> bool:
        return all(r.outcome == VcOutcome.VALID for r in self.results)

    @property
    def failing(self) -> list[tuple[VC, VcResult]]:
        return [(vc, r) for vc, r in zip(self.vcs, self.results)
                if r.outcome != VcOutcome.VALID]

    def target_results(self) -> list[tuple[VC, VcResult]]:
        return [(vc, r) for vc, r in zip(self.vcs, self.results)
                if vc.origin == VcOrigin.TARGET]


def check_unit(tp: TypedProgram, width: IntWidth, host: str,
               contracts: dict[str, Contract],
               loop_clauses: dict[int, tuple[Clause, ...]] | None = None,
               target: RteAssertion | None = None,
               check_ensures: bool = False,
               gen_config: GenConfig | None = None,
               discharge_config: DischargeConfig | None = None) -> UnitCheck:
    vcs = gen_vcs(tp, width, host, contracts, loop_clauses, target,
                  check_ensures, gen_config)
    return UnitCheck(vcs, [discharge(vc, discharge_config) for vc in vcs])
