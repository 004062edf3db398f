"""Pretty-printer for MiniC, with optional annotation comments.

Annotations are :class:`~preguss.specs.Clause` values anchored to node ids.
Each clause is emitted as a ``/*@ ... */`` comment line directly above the
statement (or function) that owns the anchor node.  Since the parser skips
comments, rendered output re-parses to a structurally identical program.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from ..errors import PregussError
from ..specs import Clause, render_clause
from . import syntax as ast

_INDENT = "    "

_PREC = {"||": 1, "&&": 2,
         "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5, "%": 5}


def render_expr(e: ast.Expr, parent_prec: int = 0) -> str:
    match e:
        case ast.IntLit(value=v):
            return str(v)
        case ast.WidthConst(name=n):
            return n
        case ast.VarRef(name=n):
            return n
        case ast.Call(name=n, args=args):
            return f"{n}({', '.join(render_expr(a) for a in args)})"
        case ast.Unary(op=op, operand=o):
            inner = render_expr(o, 6)
            if isinstance(o, ast.Binary):
                inner = f"({inner})"
            return f"{op}{inner}"
        case ast.Binary(op=op, lhs=l, rhs=r):
            prec = _PREC[op]
            s = f"{render_expr(l, prec)} {op} {render_expr(r, prec + 1)}"
            return f"({s})" if prec < parent_prec else s
    raise TypeError(f"not an expression: {e!r}")


class _Renderer:
    def __init__(self, annotations: Mapping[int, list[Clause]]):
        self.ann = annotations
        self.lines: list[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append(_INDENT * depth + text)

    def clauses_for_stmt(self, s: ast.Stmt) -> list[Clause]:
        """Clauses anchored at the statement itself or at any expression it
        directly contains (guard assertions anchor at operator nodes)."""

        ids = [s.node_id]
        for e in _direct_exprs(s):
            ids.extend(n.node_id for n in ast.walk(e))
        out: list[Clause] = []
        for i in ids:
            out.extend(self.ann.get(i, ()))
        return out

    def stmt(self, s: ast.Stmt, depth: int) -> None:
        for c in self.clauses_for_stmt(s):
            self.emit(depth, f"/*@ {render_clause(c)} */")
        match s:
            case ast.Block(stmts=ss):
                self.emit(depth, "{")
                for sub in ss:
                    self.stmt(sub, depth + 1)
                self.emit(depth, "}")
            case ast.Decl(name=n, init=e):
                self.emit(depth, f"int {n} = {render_expr(e)};")
            case ast.Assign(name=n, value=e):
                self.emit(depth, f"{n} = {render_expr(e)};")
            case ast.If(cond=c, then=t, els=e):
                self.emit(depth, f"if ({render_expr(c)}) {{")
                for sub in t.stmts:
                    self.stmt(sub, depth + 1)
                if e is not None:
                    self.emit(depth, "} else {")
                    for sub in e.stmts:
                        self.stmt(sub, depth + 1)
                self.emit(depth, "}")
            case ast.While(cond=c, body=b):
                self.emit(depth, f"while ({render_expr(c)}) {{")
                for sub in b.stmts:
                    self.stmt(sub, depth + 1)
                self.emit(depth, "}")
            case ast.Return(value=v):
                self.emit(depth, "return;" if v is None
                          else f"return {render_expr(v)};")
            case ast.CallStmt(call=c):
                self.emit(depth, f"{render_expr(c)};")
            case ast.ExprStmt(expr=e):
                self.emit(depth, f"{render_expr(e)};")
            case _:
                raise TypeError(f"not a statement: {s!r}")

    def function(self, f: ast.FunctionDef) -> None:
        for c in self.ann.get(f.node_id, ()):
            self.emit(0, f"/*@ {render_clause(c)} */")
        params = ", ".join(f"int {p.name}" for p in f.params)
        self.emit(0, f"{f.return_type} {f.name}({params}) {{")
        for s in f.body.stmts:
            self.stmt(s, 1)
        self.emit(0, "}")


def _direct_exprs(s: ast.Stmt) -> Iterable[ast.Expr]:
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


def render_function(fn: ast.FunctionDef, contract=None,
                    annotations: Sequence[tuple[int, Clause]] = ()) -> str:
    """Render one function with an optional contract above its signature."""

    by_node: dict[int, list[Clause]] = {}
    if contract is not None:
        by_node[fn.node_id] = list(contract.clauses())
    for node_id, clause in annotations:
        by_node.setdefault(node_id, []).append(clause)
    r = _Renderer(by_node)
    r.function(fn)
    return "\n".join(r.lines) + "\n"


def render(program: ast.Program,
           annotations: Sequence[tuple[int, Clause]] = ()) -> str:
    """Render the program; ``annotations`` maps node ids to clauses."""

    known = {n.node_id for n in ast.walk(program)}
    by_node: dict[int, list[Clause]] = {}
    for node_id, clause in annotations:
        if node_id not in known:
            raise PregussError(f"unknown node id {node_id} in annotations")
        by_node.setdefault(node_id, []).append(clause)

    r = _Renderer(by_node)
    for i, f in enumerate(program.functions):
        if i:
            r.lines.append("")
        r.function(f)
    return "\n".join(r.lines) + ("\n" if r.lines else "")
