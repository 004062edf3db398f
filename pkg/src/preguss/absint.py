"""Interval-domain abstract interpretation and RTE guard planting.

The analyzer walks the program from the entry function and plants one guard
assertion per RTE-susceptible operation: a DivByZero guard for every ``/`` and
``%``, and a SignedOverflow guard for every ``+``, ``-``, ``*``, unary ``-``
and for ``MIN / -1`` style division overflow, except where constant operands
already decide safety.  A guard is Proven when the abstract state entails its
predicate and Alarm otherwise.

Interprocedural treatment is asymmetric on purpose: argument intervals flow
into callees (each call site is analyzed in its own context, so an
``abs(INT_MIN)`` caller alarms the guard inside ``abs``), but the value
returned to the caller is degraded to the full width range.  Callers must not
trust callee internals that no contract states yet; recovering that precision
is exactly the synthesis loop's job.

Arithmetic inside the domain is mathematical; an operation that may wrap
yields the full-width interval at the point where its guard is planted.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

from .errors import AnalysisBudgetError, MutualRecursionError, PregussError, SourcePos
from .frontend import render_expr, resolve as resolve_mod, syntax as ast
from .frontend.resolve import TypedProgram, check_literal_ranges
from .frontend.syntax import IntWidth
from . import specs
from .specs import Predicate, TBin, TInt, TNeg, TVar, Term, pand, pnot, PCmp


# --------------------------------------------------------------------------
# Intervals


@dataclass(frozen=True)
class Interval:
    """A closed integer interval; ``None`` bounds mean unbounded."""

    lo: int | None
    hi: int | None
    empty: bool = False

    def __post_init__(self):
        if (not self.empty and self.lo is not None and self.hi is not None
                and self.lo > self.hi):
            raise ValueError(f"malformed interval [{self.lo}, {self.hi}]")

    @property
    def is_bottom(self) -> bool:
        return self.empty

    def contains(self, v: int) -> bool:
        if self.empty:
            return False
        return ((self.lo is None or self.lo <= v)
                and (self.hi is None or v <= self.hi))

    def is_singleton(self) -> bool:
        return not self.empty and self.lo is not None and self.lo == self.hi

    def join(self, other: "Interval") -> "Interval":
        if self.empty:
            return other
        if other.empty:
            return self
        lo = None if self.lo is None or other.lo is None else min(self.lo, other.lo)
        hi = None if self.hi is None or other.hi is None else max(self.hi, other.hi)
        return Interval(lo, hi)

    def meet(self, other: "Interval") -> "Interval":
        if self.empty or other.empty:
            return BOTTOM
        lo = self.lo if other.lo is None else (
            other.lo if self.lo is None else max(self.lo, other.lo))
        hi = self.hi if other.hi is None else (
            other.hi if self.hi is None else min(self.hi, other.hi))
        if lo is not None and hi is not None and lo > hi:
            return BOTTOM
        return Interval(lo, hi)

    def leq(self, other: "Interval") -> bool:
        if self.empty:
            return True
        if other.empty:
            return False
        lo_ok = other.lo is None or (self.lo is not None and self.lo >= other.lo)
        hi_ok = other.hi is None or (self.hi is not None and self.hi <= other.hi)
        return lo_ok and hi_ok

    def __str__(self) -> str:
        if self.empty:
            return "[]"
        lo = "-oo" if self.lo is None else str(self.lo)
        hi = "+oo" if self.hi is None else str(self.hi)
        return f"[{lo}, {hi}]"


BOTTOM = Interval(None, None, empty=True)
TOP = Interval(None, None)


def interval(lo: int | None, hi: int | None) -> Interval:
    return Interval(lo, hi)


def singleton(v: int) -> Interval:
    return Interval(v, v)


def full_range(width: IntWidth) -> Interval:
    return Interval(width.min, width.max)


def widen(a: Interval, b: Interval, width: IntWidth) -> Interval:
    """Widen ``a`` by ``b``; unstable bounds jump to the width extremes."""

    if a.empty:
        return b
    if b.empty:
        return a
    lo = a.lo if (a.lo is not None and b.lo is not None and b.lo >= a.lo) \
        else width.min
    hi = a.hi if (a.hi is not None and b.hi is not None and b.hi <= a.hi) \
        else width.max
    return Interval(lo, hi)


# --------------------------------------------------------------------------
# Interval arithmetic (inputs are clamped to the width domain, so bounds are
# finite from here on)


def _corners(vals) -> Interval:
    vs = list(vals)
    return Interval(min(vs), max(vs))


def _clamp_to_width(i: Interval, width: IntWidth) -> Interval:
    return i.meet(full_range(width))


def _may_wrap(i: Interval, width: IntWidth) -> bool:
    return not i.leq(full_range(width))


def _wrap_result(math: Interval, width: IntWidth) -> Interval:
    """The value interval after a guarded operation: math result when it is
    known to stay in width, the full width range when it may wrap."""

    if math.empty:
        return BOTTOM
    return math if not _may_wrap(math, width) else full_range(width)


def add_interval(a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return BOTTOM
    return Interval(a.lo + b.lo, a.hi + b.hi)


def sub_interval(a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return BOTTOM
    return Interval(a.lo - b.hi, a.hi - b.lo)


def neg_interval(a: Interval) -> Interval:
    if a.empty:
        return BOTTOM
    return Interval(-a.hi, -a.lo)


def mul_interval(a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return BOTTOM
    return _corners(x * y for x, y in
                    itertools.product((a.lo, a.hi), (b.lo, b.hi)))


def _split_signs(i: Interval) -> list[Interval]:
    """Split into sign-homogeneous pieces (negative, zero, positive)."""

    out = []
    if i.lo < 0:
        out.append(Interval(i.lo, min(i.hi, -1)))
    if i.contains(0):
        out.append(Interval(0, 0))
    if i.hi > 0:
        out.append(Interval(max(i.lo, 1), i.hi))
    return out


def nonzero(i: Interval) -> Interval:
    """Drop zero where the interval representation allows."""

    if i.empty:
        return BOTTOM
    if i.lo == 0 and i.hi == 0:
        return BOTTOM
    lo = i.lo + 1 if i.lo == 0 else i.lo
    hi = i.hi - 1 if i.hi == 0 else i.hi
    return Interval(lo, hi)


def div_interval(a: Interval, b: Interval) -> Interval:
    """C-truncation division; zero divisors are assumed already excluded."""

    b = nonzero(b)
    if a.empty or b.empty:
        return BOTTOM
    out = BOTTOM
    for pa in _split_signs(a):
        for pb in _split_signs(b):
            if pb.contains(0):
                continue
            piece = _corners(specs.trunc_div(x, y) for x, y in
                             itertools.product((pa.lo, pa.hi), (pb.lo, pb.hi)))
            out = out.join(piece)
    return out


def mod_interval(a: Interval, b: Interval) -> Interval:
    """C semantics: the result takes the dividend's sign, |r| < |divisor|."""

    b = nonzero(b)
    if a.empty or b.empty:
        return BOTTOM
    if a.is_singleton() and b.is_singleton():
        return singleton(specs.trunc_mod(a.lo, b.lo))
    bound = max(abs(b.lo), abs(b.hi)) - 1
    lo = 0 if a.lo >= 0 else max(-bound, a.lo)
    hi = 0 if a.hi <= 0 else min(bound, a.hi)
    return Interval(lo, hi)


# --------------------------------------------------------------------------
# Assertions


class RteKind(enum.Enum):
    DIV_BY_ZERO = "DivByZero"
    SIGNED_OVERFLOW = "SignedOverflow"
    CALL_SITE_PRECONDITION = "CallSitePrecondition"


class Status(enum.Enum):
    PROVEN = "Proven"
    ALARM = "Alarm"
    PENDING = "Pending"


INSTRUMENT_LABELS = {
    RteKind.DIV_BY_ZERO: "division_by_0",
    RteKind.SIGNED_OVERFLOW: "overflow",
    RteKind.CALL_SITE_PRECONDITION: "precondition",
}


@dataclass
class RteAssertion:
    id: str
    kind: RteKind
    pred: Predicate
    status: Status
    node_id: int          # the guarded operation (or call) node
    host: str             # function whose body contains the node
    pos: SourcePos
    callee: str | None = None  # CallSitePrecondition only
    reached: bool = True       # False when the analyzer never saw the op run

    def with_pred(self, pred: Predicate) -> "RteAssertion":
        return replace(self, pred=pred)


@dataclass
class AnalysisConfig:
    widening_threshold: int = 3
    max_inline_depth: int = 64


@dataclass
class AnalysisResult:
    width: IntWidth
    assertions: list[RteAssertion] = field(default_factory=list)
    node_envs: dict[int, dict[str, Interval]] = field(default_factory=dict)
    loop_heads: dict[int, dict[str, Interval]] = field(default_factory=dict)
    reachable: list[str] = field(default_factory=list)

    @property
    def alarms(self) -> list[RteAssertion]:
        return [a for a in self.assertions if a.status == Status.ALARM]

    def by_node(self, node_id: int, kind: RteKind) -> RteAssertion:
        for a in self.assertions:
            if a.node_id == node_id and a.kind == kind:
                return a
        raise KeyError((node_id, kind))


# --------------------------------------------------------------------------
# Guard predicates.  The verifier rebuilds these same formulas over symbolic
# terms, so they live in one place.


def guard_div_by_zero(divisor: Term) -> Predicate:
    return PCmp("!=", divisor, TInt(0))


def guard_neg_overflow(operand: Term, width: IntWidth) -> Predicate:
    return PCmp("<=", TInt(-width.max), operand)


def guard_arith_overflow(op: str, lhs: Term, rhs: Term,
                         width: IntWidth) -> Predicate:
    t = TBin(op, lhs, rhs)
    return pand(PCmp("<=", TInt(width.min), t),
                PCmp("<=", t, TInt(width.max)))


def guard_div_overflow(lhs: Term, rhs: Term, width: IntWidth) -> Predicate:
    return pnot(pand(PCmp("==", lhs, TInt(width.min)),
                     PCmp("==", rhs, TInt(-1))))


def expr_to_term(e: ast.Expr) -> Term:
    """Source-level term for guard predicates.

    Calls have no term form; they are kept opaque under their source text
    (display only — the verifier substitutes real symbols before reasoning).
    """

    match e:
        case ast.IntLit(value=v):
            return TInt(v)
        case ast.WidthConst(name=n):
            return specs.TWidthConst(n)
        case ast.VarRef(name=n):
            return TVar(n)
        case ast.Unary(op="-", operand=o):
            return specs.tneg(expr_to_term(o))
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.ARITH_OPS:
            return TBin(op, expr_to_term(l), expr_to_term(r))
        case ast.Call():
            return TVar(render_expr(e))
    raise PregussError(f"no term form for expression at {e.pos}")


def const_value(e: ast.Expr, width: IntWidth) -> int | None:
    """Fold an all-constant expression; None when not constant."""

    match e:
        case ast.IntLit(value=v):
            return v
        case ast.WidthConst(name=n):
            return width.min if n == "INT_MIN" else width.max
        case ast.Unary(op="-", operand=o):
            v = const_value(o, width)
            return None if v is None else -v
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.ARITH_OPS:
            a = const_value(l, width)
            b = const_value(r, width)
            if a is None or b is None:
                return None
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if b == 0:
                return None
            return specs.trunc_div(a, b) if op == "/" else specs.trunc_mod(a, b)
        case _:
            return None


def overflow_guard_needed(e: ast.Expr, width: IntWidth) -> bool:
    """Whether an arithmetic node needs a SignedOverflow guard.

    Constant operands can settle the question statically: a constant-valued
    operation that stays in width needs no guard, and division overflow is
    off the table when the dividend is known not to be MIN or the divisor
    known not to be -1.
    """

    match e:
        case ast.Unary(op="-", operand=o):
            v = const_value(o, width)
            return v is None or not width.contains(-v)
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ("+", "-", "*"):
            a = const_value(l, width)
            b = const_value(r, width)
            if a is not None and b is not None:
                folded = const_value(e, width)
                return folded is None or not width.contains(folded)
            return True
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ("/", "%"):
            a = const_value(l, width)
            if a is not None and a != width.min:
                return False
            b = const_value(r, width)
            if b is not None and b != -1:
                return False
            return True
    return False


def guarded_ops(e: ast.Expr, width: IntWidth):
    """Yield (node, kind) pairs for an expression tree in evaluation order
    (operands before operators, left to right).  DivByZero precedes the
    overflow guard on the same division."""

    for child in ast.children(e):
        if isinstance(child, ast.Expr):
            yield from guarded_ops(child, width)
    match e:
        case ast.Binary(op=op) if op in ("/", "%"):
            yield e, RteKind.DIV_BY_ZERO
            if overflow_guard_needed(e, width):
                yield e, RteKind.SIGNED_OVERFLOW
        case ast.Binary(op=op) if op in ("+", "-", "*"):
            if overflow_guard_needed(e, width):
                yield e, RteKind.SIGNED_OVERFLOW
        case ast.Unary(op="-"):
            if overflow_guard_needed(e, width):
                yield e, RteKind.SIGNED_OVERFLOW
        case _:
            return


def guard_predicate(e: ast.Expr, kind: RteKind, width: IntWidth) -> Predicate:
    """The source-level guard formula for an RTE-susceptible node."""

    if kind == RteKind.DIV_BY_ZERO:
        return guard_div_by_zero(expr_to_term(e.rhs))
    match e:
        case ast.Unary(op="-", operand=o):
            return guard_neg_overflow(expr_to_term(o), width)
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ("+", "-", "*"):
            return guard_arith_overflow(op, expr_to_term(l), expr_to_term(r), width)
        case ast.Binary(op=op, lhs=l, rhs=r) if op in ("/", "%"):
            return guard_div_overflow(expr_to_term(l), expr_to_term(r), width)
    raise PregussError(f"node at {e.pos} takes no {kind.value} guard")


# --------------------------------------------------------------------------
# Environments: dict[str, Interval], or None for the unreachable state.

Env = dict  # dict[str, Interval]; None stands for bottom


def env_join(a: Env | None, b: Env | None) -> Env | None:
    if a is None:
        return None if b is None else dict(b)
    if b is None:
        return dict(a)
    return {v: a[v].join(b[v]) for v in a.keys() & b.keys()}


def env_leq(a: Env | None, b: Env | None) -> bool:
    if a is None:
        return True
    if b is None:
        return False
    return all(a[v].leq(b[v]) for v in b.keys() if v in a)


# --------------------------------------------------------------------------
# The analyzer


class _Frame:
    def __init__(self, fn: ast.FunctionDef):
        self.fn = fn
        self.return_seen = False
        self.return_values = BOTTOM


class _Analyzer:
    def __init__(self, tp: TypedProgram, width: IntWidth, cfg: AnalysisConfig):
        self.tp = tp
        self.width = width
        self.cfg = cfg
        self.statuses: dict[tuple[int, RteKind], Status] = {}
        self.node_envs: dict[int, Env] = {}
        self.loop_heads: dict[int, Env] = {}
        self.call_stack: list[str] = []

    # -- expression evaluation (records guard statuses when asked) ---------

    def eval(self, env: Env, e: ast.Expr, record: bool) -> Interval:
        w = self.width
        match e:
            case ast.IntLit(value=v):
                return singleton(v)
            case ast.WidthConst(name=n):
                return singleton(w.min if n == "INT_MIN" else w.max)
            case ast.VarRef(name=n):
                return env[n]
            case ast.Call():
                return self.eval_call(env, e, record)
            case ast.Unary(op="-", operand=o):
                iv = self.eval(env, o, record)
                if iv.is_bottom:
                    return BOTTOM
                math = neg_interval(iv)
                if overflow_guard_needed(e, w):
                    ok = not _may_wrap(math, w)
                    self.record_guard(e, RteKind.SIGNED_OVERFLOW, ok, record)
                return _wrap_result(math, w)
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.ARITH_OPS:
                a = self.eval(env, l, record)
                b = self.eval(env, r, record)
                if a.is_bottom or b.is_bottom:
                    return BOTTOM
                return self.eval_arith(e, op, a, b, record)
        raise PregussError(f"cannot evaluate {e!r} as an int")

    def eval_arith(self, e: ast.Expr, op: str, a: Interval, b: Interval,
                   record: bool) -> Interval:
        w = self.width
        if op in ("+", "-", "*"):
            math = {"+": add_interval, "-": sub_interval,
                    "*": mul_interval}[op](a, b)
            if overflow_guard_needed(e, w):
                self.record_guard(e, RteKind.SIGNED_OVERFLOW,
                                  not _may_wrap(math, w), record)
            return _wrap_result(math, w)
        # division / modulo
        self.record_guard(e, RteKind.DIV_BY_ZERO, not b.contains(0), record)
        b_nz = nonzero(b)
        if b_nz.is_bottom:
            return BOTTOM  # definite division by zero aborts the path
        if overflow_guard_needed(e, w):
            may_ovf = a.contains(w.min) and b_nz.contains(-1)
            self.record_guard(e, RteKind.SIGNED_OVERFLOW, not may_ovf, record)
        math = div_interval(a, b_nz) if op == "/" else mod_interval(a, b_nz)
        return _wrap_result(math, w)

    def eval_call(self, env: Env, call: ast.Call, record: bool) -> Interval:
        args = []
        for a in call.args:
            iv = self.eval(env, a, record)
            if iv.is_bottom:
                return BOTTOM
            args.append(iv)
        fn = self.tp.function(call.name)
        exits = self.run_function(fn, args, record)
        if not exits:
            return BOTTOM
        # Returned values are not trusted across the call boundary.
        return full_range(self.width) if fn.return_type == "int" else TOP

    def record_guard(self, e: ast.Expr, kind: RteKind, ok: bool,
                     record: bool) -> None:
        if not record:
            return
        key = (e.node_id, kind)
        if not ok:
            self.statuses[key] = Status.ALARM
        elif key not in self.statuses:
            self.statuses[key] = Status.PROVEN

    # -- conditions ---------------------------------------------------------

    def eval_cond_guards(self, env: Env, e: ast.Expr, record: bool) -> None:
        """Record guards in the arithmetic parts of a condition."""

        match e:
            case ast.Unary(op="!", operand=o):
                self.eval_cond_guards(env, o, record)
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.LOGIC_OPS:
                self.eval_cond_guards(env, l, record)
                self.eval_cond_guards(env, r, record)
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.CMP_OPS:
                self.eval(env, l, record)
                self.eval(env, r, record)
            case _:
                raise PregussError(f"not a condition: {e!r}")

    def refine(self, env: Env | None, cond: ast.Expr, sense: bool) -> Env | None:
        """Restrict ``env`` to states where ``cond`` evaluates to ``sense``."""

        if env is None:
            return None
        match cond:
            case ast.Unary(op="!", operand=o):
                return self.refine(env, o, not sense)
            case ast.Binary(op="&&", lhs=l, rhs=r):
                if sense:
                    return self.refine(self.refine(env, l, True), r, True)
                return env_join(self.refine(env, l, False),
                                self.refine(self.refine(env, l, True), r, False))
            case ast.Binary(op="||", lhs=l, rhs=r):
                if not sense:
                    return self.refine(self.refine(env, l, False), r, False)
                return env_join(self.refine(env, l, True),
                                self.refine(self.refine(env, l, False), r, True))
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ast.CMP_OPS:
                return self.refine_cmp(env, op if sense else _NEGATE[op], l, r)
        raise PregussError(f"not a condition: {cond!r}")

    def refine_cmp(self, env: Env, op: str, l: ast.Expr,
                   r: ast.Expr) -> Env | None:
        ia = self.eval(env, l, record=False)
        ib = self.eval(env, r, record=False)
        if ia.is_bottom or ib.is_bottom or not _cmp_may_hold(op, ia, ib):
            return None
        out = dict(env)
        if isinstance(l, ast.VarRef):
            ref = _refine_against(out[l.name], op, ib)
            if ref.is_bottom:
                return None
            out[l.name] = ref
        if isinstance(r, ast.VarRef):
            ref = _refine_against(out[r.name], _FLIP[op], ia)
            if ref.is_bottom:
                return None
            out[r.name] = ref
        return out

    # -- statements ----------------------------------------------------------

    def run_function(self, fn: ast.FunctionDef, args: list[Interval],
                     record: bool) -> bool:
        """Analyze a call to ``fn``; returns whether the call can return."""

        if fn.name in self.call_stack:
            start = self.call_stack.index(fn.name)
            raise MutualRecursionError(self.call_stack[start:] + [fn.name])
        if len(self.call_stack) >= self.cfg.max_inline_depth:
            raise AnalysisBudgetError(f"call depth over {self.cfg.max_inline_depth}")
        self.call_stack.append(fn.name)
        frame = _Frame(fn)
        env: Env = {p.name: iv for p, iv in zip(fn.params, args)}
        out = self.run_block(env, fn.body, frame, record)
        self.call_stack.pop()
        if fn.return_type == "int":
            return frame.return_seen
        return out is not None or frame.return_seen

    def run_block(self, env: Env | None, block: ast.Block, frame: _Frame,
                  record: bool) -> Env | None:
        local_names = []
        for s in block.stmts:
            if env is None:
                break
            env = self.run_stmt(env, s, frame, record, local_names)
        if env is not None:
            for name in local_names:
                env.pop(name, None)
        return env

    def run_stmt(self, env: Env, s: ast.Stmt, frame: _Frame, record: bool,
                 local_names: list[str]) -> Env | None:
        if record:
            prev = self.node_envs.get(s.node_id)
            self.node_envs[s.node_id] = env_join(prev, env) if prev else dict(env)
        match s:
            case ast.Block():
                return self.run_block(env, s, frame, record)
            case ast.Decl(name=n, init=e):
                iv = self.eval(env, e, record)
                if iv.is_bottom:
                    return None
                env = dict(env)
                env[n] = _clamp_to_width(iv, self.width)
                local_names.append(n)
                return env
            case ast.Assign(name=n, value=e):
                iv = self.eval(env, e, record)
                if iv.is_bottom:
                    return None
                env = dict(env)
                env[n] = _clamp_to_width(iv, self.width)
                return env
            case ast.If(cond=c, then=t, els=e):
                self.eval_cond_guards(env, c, record)
                then_env = self.run_block(self.refine(env, c, True), t,
                                          frame, record)
                else_in = self.refine(env, c, False)
                else_env = self.run_block(else_in, e, frame, record) \
                    if e is not None else else_in
                return env_join(then_env, else_env)
            case ast.While():
                return self.run_while(env, s, frame, record)
            case ast.Return(value=v):
                if v is not None:
                    iv = self.eval(env, v, record)
                    if iv.is_bottom:
                        return None
                    frame.return_values = frame.return_values.join(
                        _clamp_to_width(iv, self.width))
                frame.return_seen = True
                return None
            case ast.CallStmt(call=c):
                iv = self.eval(env, c, record)
                return None if iv.is_bottom else env
            case ast.ExprStmt(expr=e):
                iv = self.eval(env, e, record)
                return None if iv.is_bottom else env
        raise PregussError(f"unhandled statement {s!r}")

    def run_while(self, env: Env, s: ast.While, frame: _Frame,
                  record: bool) -> Env | None:
        entry = env
        head: Env | None = dict(env)
        iters = 0
        budget = self.cfg.widening_threshold + 2 * (len(env) + 2) + 8
        while True:
            if iters > budget:
                raise AnalysisBudgetError(
                    f"loop at {s.pos} did not stabilize in {budget} iterations")
            body_out = self.run_block(self.refine(head, s.cond, True),
                                      s.body, frame, record=False)
            new_head = env_join(entry, body_out)
            if env_leq(new_head, head):
                break
            if iters >= self.cfg.widening_threshold:
                head = {v: widen(head[v], new_head[v], self.width)
                        for v in head}
            else:
                head = new_head
            iters += 1
        # one narrowing pass
        body_out = self.run_block(self.refine(head, s.cond, True),
                                  s.body, frame, record=False)
        cand = env_join(entry, body_out)
        if env_leq(cand, head):
            head = cand
        if record:
            prev = self.loop_heads.get(s.node_id)
            self.loop_heads[s.node_id] = env_join(prev, head) if prev \
                else dict(head)
            self.eval_cond_guards(head, s.cond, record)
            self.run_block(self.refine(head, s.cond, True), s.body, frame,
                           record=True)
        return self.refine(head, s.cond, False)


_NEGATE = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
_FLIP = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def _cmp_may_hold(op: str, a: Interval, b: Interval) -> bool:
    match op:
        case "==":
            return not a.meet(b).is_bottom
        case "!=":
            return not (a.is_singleton() and a == b)
        case "<":
            return a.lo < b.hi
        case "<=":
            return a.lo <= b.hi
        case ">":
            return a.hi > b.lo
        case ">=":
            return a.hi >= b.lo
    raise ValueError(op)


def _refine_against(cur: Interval, op: str, other: Interval) -> Interval:
    """Restrict ``cur`` to values that can satisfy ``cur op other``."""

    match op:
        case "==":
            return cur.meet(other)
        case "!=":
            if other.is_singleton():
                c = other.lo
                if cur.is_singleton() and cur.lo == c:
                    return BOTTOM
                lo = cur.lo + 1 if cur.lo == c else cur.lo
                hi = cur.hi - 1 if cur.hi == c else cur.hi
                return Interval(lo, hi)
            return cur
        case "<":
            return cur.meet(Interval(None, other.hi - 1))
        case "<=":
            return cur.meet(Interval(None, other.hi))
        case ">":
            return cur.meet(Interval(other.lo + 1, None))
        case ">=":
            return cur.meet(Interval(other.lo, None))
    raise ValueError(op)


# --------------------------------------------------------------------------
# Public entry points


def eval_expr(env: Env, e: ast.Expr, width: IntWidth,
              tp: TypedProgram | None = None,
              config: AnalysisConfig | None = None) -> Interval:
    """Evaluate one expression in an abstract environment.

    Input intervals are clamped to the width's range (machine states cannot
    lie outside it).  Calls require ``tp`` and degrade to the full range.
    """

    clamped = {v: _clamp_to_width(iv, width) for v, iv in env.items()}
    tp = tp or TypedProgram(ast.Program(pos=SourcePos("<none>", 1, 1)))
    a = _Analyzer(tp, width, config or AnalysisConfig())
    return a.eval(clamped, e, record=False)


def reachable_functions(tp: TypedProgram, entry: str) -> list[str]:
    """Functions reachable from the entry, in source order."""

    seen = {entry}
    work = [entry]
    while work:
        fn = tp.function(work.pop())
        for node in ast.walk(fn.body):
            if isinstance(node, ast.Call) and node.name not in seen:
                seen.add(node.name)
                work.append(node.name)
    return [f.name for f in tp.program.functions if f.name in seen]


def plant_assertions(tp: TypedProgram, width: IntWidth,
                     reachable: list[str]) -> list[RteAssertion]:
    """Create the UB guard assertions, in source and evaluation order."""

    out: list[RteAssertion] = []
    order = {name: i for i, name in
             enumerate(f.name for f in tp.program.functions)}
    for name in sorted(reachable, key=order.__getitem__):
        fn = tp.function(name)
        for s in _stmts_in_order(fn.body):
            for e in _stmt_exprs(s):
                for node, kind in guarded_ops(e, width):
                    out.append(RteAssertion(
                        id=f"rte{len(out) + 1}",
                        kind=kind,
                        pred=guard_predicate(node, kind, width),
                        status=Status.PROVEN,
                        node_id=node.node_id,
                        host=name,
                        pos=node.pos,
                    ))
    return out


def _stmts_in_order(block: ast.Block):
    for s in block.stmts:
        yield s
        match s:
            case ast.Block():
                yield from _stmts_in_order(s)
            case ast.If(then=t, els=e):
                yield from _stmts_in_order(t)
                if e is not None:
                    yield from _stmts_in_order(e)
            case ast.While(body=b):
                yield from _stmts_in_order(b)
            case _:
                pass


def _stmt_exprs(s: ast.Stmt):
    match s:
        case ast.Decl(init=e) | ast.Assign(value=e) | ast.ExprStmt(expr=e):
            yield e
        case ast.Return(value=e):
            if e is not None:
                yield e
        case ast.If(cond=c) | ast.While(cond=c):
            yield c
        case ast.CallStmt(call=c):
            yield c
        case _:
            return


def analyze(tp: TypedProgram, width: IntWidth,
            config: AnalysisConfig | None = None) -> AnalysisResult:
    """Run the analysis from the entry function and classify every guard."""

    if tp.entry is None:
        raise PregussError("program has no entry function (main)")
    check_literal_ranges(tp.program, width)
    cfg = config or AnalysisConfig()

    reach = reachable_functions(tp, tp.entry)
    assertions = plant_assertions(tp, width, reach)

    a = _Analyzer(tp, width, cfg)
    entry_fn = tp.function(tp.entry)
    a.run_function(entry_fn, [full_range(width)] * len(entry_fn.params),
                   record=True)

    for rte in assertions:
        status = a.statuses.get((rte.node_id, rte.kind))
        if status is None:
            rte.reached = False
            rte.status = Status.PROVEN
        else:
            rte.status = status

    return AnalysisResult(
        width=width,
        assertions=assertions,
        node_envs=a.node_envs,
        loop_heads=a.loop_heads,
        reachable=reach,
    )


def summarize_function(tp: TypedProgram, name: str, width: IntWidth,
                       config: AnalysisConfig | None = None
                       ) -> tuple[Interval, dict[int, Env]]:
    """Context-free summary of one function: return-value interval and loop
    head environments under unconstrained arguments.  Used for contract and
    invariant templates."""

    check_literal_ranges(tp.program, width)
    a = _Analyzer(tp, width, config or AnalysisConfig())
    fn = tp.function(name)
    env: Env = {p.name: full_range(width) for p in fn.params}
    frame = _Frame(fn)
    a.run_block(env, fn.body, frame, record=True)
    return frame.return_values, a.loop_heads
