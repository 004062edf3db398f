"""Name and type resolution.

MiniC keeps a hard line between arithmetic and boolean expressions:
comparisons and logical connectives produce booleans which may only appear in
``if``/``while`` conditions (and under further connectives), never stored in
an ``int``.  This discipline is what keeps guard predicates and weakest
preconditions inside the decidable fragment the verifier works on.

``int`` functions must return on every path; falling off the end would
produce an unspecified value and everything downstream assumes values are
well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ResolveError
from . import syntax as ast


@dataclass(frozen=True)
class Signature:
    name: str
    params: tuple[str, ...]
    return_type: str


@dataclass
class TypedProgram:
    program: ast.Program
    signatures: dict[str, Signature] = field(default_factory=dict)
    entry: str | None = None

    def function(self, name: str) -> ast.FunctionDef:
        return self.program.function(name)


class _Scope:
    def __init__(self, parent: "_Scope | None" = None):
        self.parent = parent
        self.names: set[str] = set()

    def declare(self, name: str, pos) -> None:
        if self.lookup(name):
            raise ResolveError(f"duplicate definition of {name!r}", pos)
        self.names.add(name)

    def lookup(self, name: str) -> bool:
        s: _Scope | None = self
        while s is not None:
            if name in s.names:
                return True
            s = s.parent
        return False


def resolve(program: ast.Program) -> TypedProgram:
    """Type-check the program and return it with every expression typed."""

    signatures: dict[str, Signature] = {}
    for f in program.functions:
        if f.name in signatures:
            raise ResolveError(f"duplicate definition of function {f.name!r}", f.pos)
        seen = set()
        for p in f.params:
            if p.name in seen:
                raise ResolveError(f"duplicate parameter {p.name!r}", p.pos)
            seen.add(p.name)
        signatures[f.name] = Signature(f.name, tuple(p.name for p in f.params),
                                       f.return_type)

    for f in program.functions:
        scope = _Scope()
        for p in f.params:
            scope.declare(p.name, p.pos)
        _check_block(f.body, scope, f, signatures)
        if f.return_type == "int" and not _returns_on_all_paths(f.body):
            raise ResolveError(
                f"function {f.name!r} returns int but not on every path", f.pos)

    entry = "main" if "main" in signatures else None
    return TypedProgram(program=program, signatures=signatures, entry=entry)


def _check_block(block: ast.Block, scope: _Scope, fn: ast.FunctionDef,
                 sigs: dict[str, Signature]) -> None:
    inner = _Scope(scope)
    for s in block.stmts:
        _check_stmt(s, inner, fn, sigs)


def _check_stmt(s: ast.Stmt, scope: _Scope, fn: ast.FunctionDef,
                sigs: dict[str, Signature]) -> None:
    match s:
        case ast.Block():
            _check_block(s, scope, fn, sigs)
        case ast.Decl(name=name, init=init):
            _check_expr(init, scope, sigs, want="int")
            scope.declare(name, s.pos)
        case ast.Assign(name=name, value=value):
            if not scope.lookup(name):
                raise ResolveError(f"unknown identifier {name!r}", s.pos)
            _check_expr(value, scope, sigs, want="int")
        case ast.If(cond=cond, then=then, els=els):
            _check_expr(cond, scope, sigs, want="bool")
            _check_block(then, scope, fn, sigs)
            if els is not None:
                _check_block(els, scope, fn, sigs)
        case ast.While(cond=cond, body=body):
            _check_expr(cond, scope, sigs, want="bool")
            _check_block(body, scope, fn, sigs)
        case ast.Return(value=value):
            if fn.return_type == "void":
                if value is not None:
                    raise ResolveError(
                        f"void function {fn.name!r} cannot return a value", s.pos)
            else:
                if value is None:
                    raise ResolveError(
                        f"function {fn.name!r} must return an int", s.pos)
                _check_expr(value, scope, sigs, want="int")
        case ast.CallStmt(call=call):
            _check_expr(call, scope, sigs, want="any")
        case ast.ExprStmt(expr=expr):
            _check_expr(expr, scope, sigs, want="int")
        case _:
            raise TypeError(f"unhandled statement {s!r}")


def _check_expr(e: ast.Expr, scope: _Scope, sigs: dict[str, Signature],
                want: str) -> str:
    match e:
        case ast.IntLit():
            e.ty = "int"
        case ast.WidthConst():
            e.ty = "int"
        case ast.VarRef(name=name):
            if not scope.lookup(name):
                raise ResolveError(f"unknown identifier {name!r}", e.pos)
            e.ty = "int"
        case ast.Unary(op="-", operand=o):
            _check_expr(o, scope, sigs, want="int")
            e.ty = "int"
        case ast.Unary(op="!", operand=o):
            _check_expr(o, scope, sigs, want="bool")
            e.ty = "bool"
        case ast.Binary(op=op, lhs=lhs, rhs=rhs) if op in ast.ARITH_OPS:
            _check_expr(lhs, scope, sigs, want="int")
            _check_expr(rhs, scope, sigs, want="int")
            e.ty = "int"
        case ast.Binary(op=op, lhs=lhs, rhs=rhs) if op in ast.CMP_OPS:
            _check_expr(lhs, scope, sigs, want="int")
            _check_expr(rhs, scope, sigs, want="int")
            e.ty = "bool"
        case ast.Binary(op=op, lhs=lhs, rhs=rhs) if op in ast.LOGIC_OPS:
            _check_expr(lhs, scope, sigs, want="bool")
            _check_expr(rhs, scope, sigs, want="bool")
            e.ty = "bool"
        case ast.Call(name=name, args=args):
            sig = sigs.get(name)
            if sig is None:
                raise ResolveError(f"unknown identifier {name!r}", e.pos)
            if len(args) != len(sig.params):
                raise ResolveError(
                    f"{name} takes {len(sig.params)} argument(s), got {len(args)}",
                    e.pos)
            for a in args:
                _check_expr(a, scope, sigs, want="int")
            e.ty = sig.return_type  # "int" or "void"
        case _:
            raise TypeError(f"unhandled expression {e!r}")

    if want == "int" and e.ty != "int":
        raise ResolveError(f"type mismatch: expected int, got {e.ty}", e.pos)
    if want == "bool" and e.ty != "bool":
        raise ResolveError(f"type mismatch: expected a condition, got {e.ty}", e.pos)
    return e.ty


def _returns_on_all_paths(block: ast.Block) -> bool:
    for s in block.stmts:
        match s:
            case ast.Return():
                return True
            case ast.Block():
                if _returns_on_all_paths(s):
                    return True
            case ast.If(then=then, els=els) if els is not None:
                if _returns_on_all_paths(then) and _returns_on_all_paths(els):
                    return True
    return False


def check_literal_ranges(program: ast.Program, width: ast.IntWidth) -> None:
    """Reject literals that do not fit the configured width.

    Like C itself, the most negative value has no literal spelling; use
    ``INT_MIN``.
    """

    for node in ast.walk(program):
        if isinstance(node, ast.IntLit) and node.value > width.max:
            raise ResolveError(
                f"literal {node.value} does not fit {width}", node.pos)
