"""Independent concrete MiniC interpreter used as a testing oracle.

This module deliberately re-derives the language semantics from scratch:
direct AST evaluation over Python integers, aborting at the first runtime
error, recording every RTE-susceptible operation it executes.  It shares no
evaluation code with the package under test; only the AST types and width
constants come from the frontend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from preguss.frontend import syntax as ast
from preguss.frontend.resolve import TypedProgram


class OracleError(Exception):
    """The oracle refused to run the program (fuel, missing entry)."""


@dataclass(frozen=True)
class Check:
    """One executed RTE-susceptible operation."""

    node_id: int
    kind: str      # "DivByZero" or "SignedOverflow"
    ok: bool


@dataclass
class Trace:
    checks: list[Check] = field(default_factory=list)
    aborted: bool = False
    returned: int | None = None

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]


class _Abort(Exception):
    pass


class _Return(Exception):
    def __init__(self, value: int | None):
        self.value = value


def c_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def c_mod(a: int, b: int) -> int:
    return a - c_div(a, b) * b


class _Interp:
    def __init__(self, tp: TypedProgram, bits: int, fuel: int):
        self.tp = tp
        self.lo = -(1 << (bits - 1))
        self.hi = (1 << (bits - 1)) - 1
        self.fuel = fuel
        self.trace = Trace()

    def burn(self) -> None:
        self.fuel -= 1
        if self.fuel <= 0:
            raise OracleError("fuel exhausted")

    def check(self, node_id: int, kind: str, ok: bool) -> None:
        self.trace.checks.append(Check(node_id, kind, ok))
        if not ok:
            raise _Abort()

    def in_range(self, v: int) -> bool:
        return self.lo <= v <= self.hi

    # -- expressions -------------------------------------------------------

    def eval(self, e: ast.Expr, env: dict[str, int]) -> int:
        match e:
            case ast.IntLit(value=v):
                return v
            case ast.WidthConst(name=n):
                return self.lo if n == "INT_MIN" else self.hi
            case ast.VarRef(name=n):
                return env[n]
            case ast.Unary(op="-", operand=o):
                v = self.eval(o, env)
                r = -v
                self.check(e.node_id, "SignedOverflow", self.in_range(r))
                return r
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ("+", "-", "*"):
                a = self.eval(l, env)
                b = self.eval(r, env)
                res = {"+": a + b, "-": a - b, "*": a * b}[op]
                self.check(e.node_id, "SignedOverflow", self.in_range(res))
                return res
            case ast.Binary(op=op, lhs=l, rhs=r) if op in ("/", "%"):
                a = self.eval(l, env)
                b = self.eval(r, env)
                self.check(e.node_id, "DivByZero", b != 0)
                res = c_div(a, b) if op == "/" else c_mod(a, b)
                self.check(e.node_id, "SignedOverflow", self.in_range(res))
                return res
            case ast.Call(name=n, args=args):
                values = [self.eval(a, env) for a in args]
                return self.call(n, values)
        raise OracleError(f"not an arithmetic expression: {e!r}")

    def eval_bool(self, e: ast.Expr, env: dict[str, int]) -> bool:
        match e:
            case ast.Unary(op="!", operand=o):
                return not self.eval_bool(o, env)
            case ast.Binary(op="&&", lhs=l, rhs=r):
                return self.eval_bool(l, env) and self.eval_bool(r, env)
            case ast.Binary(op="||", lhs=l, rhs=r):
                return self.eval_bool(l, env) or self.eval_bool(r, env)
            case ast.Binary(op=op, lhs=l, rhs=r):
                a = self.eval(l, env)
                b = self.eval(r, env)
                match op:
                    case "==": return a == b
                    case "!=": return a != b
                    case "<": return a < b
                    case "<=": return a <= b
                    case ">": return a > b
                    case ">=": return a >= b
        raise OracleError(f"not a boolean expression: {e!r}")

    # -- statements --------------------------------------------------------

    def call(self, name: str, args: list[int]) -> int | None:
        self.burn()
        fn = self.tp.function(name)
        env = {p.name: v for p, v in zip(fn.params, args)}
        try:
            self.block(fn.body, env)
        except _Return as r:
            return r.value
        return None

    def block(self, b: ast.Block, env: dict[str, int]) -> None:
        for s in b.stmts:
            self.stmt(s, env)

    def stmt(self, s: ast.Stmt, env: dict[str, int]) -> None:
        match s:
            case ast.Block():
                self.block(s, env)
            case ast.Decl(name=n, init=e) | ast.Assign(name=n, value=e):
                env[n] = self.eval(e, env)
            case ast.If(cond=c, then=t, els=e):
                if self.eval_bool(c, env):
                    self.block(t, env)
                elif e is not None:
                    self.block(e, env)
            case ast.While(cond=c, body=b):
                while self.eval_bool(c, env):
                    self.burn()
                    self.block(b, env)
            case ast.Return(value=v):
                raise _Return(None if v is None else self.eval(v, env))
            case ast.CallStmt(call=c) | ast.ExprStmt(expr=c):
                self.eval(c, env)
            case _:
                raise OracleError(f"unknown statement: {s!r}")


def run_program(tp: TypedProgram, bits: int, entry_args: list[int],
                fuel: int = 100_000) -> Trace:
    """Execute from the entry function; abort at the first failed check."""

    if tp.entry is None:
        raise OracleError("program has no entry function")
    interp = _Interp(tp, bits, fuel)
    try:
        result = interp.call(tp.entry, entry_args)
        interp.trace.returned = result
    except _Abort:
        interp.trace.aborted = True
    return interp.trace


def entry_inputs(tp: TypedProgram, bits: int) -> list[list[int]]:
    """Every input vector for the entry function (exhaustive at small
    widths; entry functions in the corpus take at most one parameter)."""

    fn = tp.function(tp.entry)
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not fn.params:
        return [[]]
    if len(fn.params) == 1:
        return [[v] for v in range(lo, hi + 1)]
    raise OracleError("exhaustive inputs need at most one entry parameter")


# ---------------------------------------------------------------------------
# Independent predicate evaluation (for verification condition checks)


def eval_term(t, env: dict[str, int], bits: int) -> int | None:
    """Mathematical integers with C-truncating division; None = undefined."""

    from preguss import specs

    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    match t:
        case specs.TInt(value=v):
            return v
        case specs.TWidthConst(name=n):
            return lo if n == "INT_MIN" else hi
        case specs.TVar(name=n):
            return env[n]
        case specs.TNeg(operand=o):
            v = eval_term(o, env, bits)
            return None if v is None else -v
        case specs.TBin(op=op, lhs=l, rhs=r):
            a = eval_term(l, env, bits)
            b = eval_term(r, env, bits)
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
            return c_div(a, b) if op == "/" else c_mod(a, b)
    raise OracleError(f"unknown term: {t!r}")


def eval_pred(p, env: dict[str, int], bits: int) -> bool | None:
    from preguss import specs

    match p:
        case specs.PBool(value=v):
            return v
        case specs.PCmp(op=op, lhs=l, rhs=r):
            a = eval_term(l, env, bits)
            b = eval_term(r, env, bits)
            if a is None or b is None:
                return None
            return {"==": a == b, "!=": a != b, "<": a < b,
                    "<=": a <= b, ">": a > b, ">=": a >= b}[op]
        case specs.PNot(operand=o):
            v = eval_pred(o, env, bits)
            return None if v is None else (not v)
        case specs.PAnd(lhs=l, rhs=r):
            a = eval_pred(l, env, bits)
            b = eval_pred(r, env, bits)
            if a is False or b is False:
                return False
            return True if (a is True and b is True) else None
        case specs.POr(lhs=l, rhs=r):
            a = eval_pred(l, env, bits)
            b = eval_pred(r, env, bits)
            if a is True or b is True:
                return True
            return False if (a is False and b is False) else None
        case specs.PImplies(lhs=l, rhs=r):
            a = eval_pred(l, env, bits)
            b = eval_pred(r, env, bits)
            if a is False or b is True:
                return True
            return False if (a is True and b is False) else None
    raise OracleError(f"unknown predicate: {p!r}")
