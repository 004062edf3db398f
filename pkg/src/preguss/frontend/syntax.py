"""AST for the MiniC input language.

The language is a small C subset: top-level functions over ``int``, with
declarations, assignments, ``if``/``while``/``return``, and side-effect-free
expressions except for calls.  The grammar is documented in
``docs/minic-grammar.md``.

Nodes carry a :class:`~preguss.errors.SourcePos` and a ``node_id``.  Node ids
are assigned by the parser as pre-order indices over the whole program, so two
parses of the same text agree on every id.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterator, Union

from ..errors import SourcePos

ARITH_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&&", "||")


@dataclass(frozen=True)
class IntWidth:
    """Width of the machine ``int`` type.  Only 8, 16 and 32 are supported."""

    bits: int

    def __post_init__(self) -> None:
        if self.bits not in (8, 16, 32):
            raise ValueError(f"unsupported int width: {self.bits}")

    @property
    def min(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def max(self) -> int:
        return (1 << (self.bits - 1)) - 1

    def contains(self, value: int) -> bool:
        return self.min <= value <= self.max

    def __str__(self) -> str:
        return f"int{self.bits}"


W8 = IntWidth(8)
W16 = IntWidth(16)
W32 = IntWidth(32)


def width_from_bits(bits: int) -> IntWidth:
    return IntWidth(bits)


@dataclass
class Node:
    """Common bookkeeping for every AST node."""

    pos: SourcePos
    node_id: int = field(default=-1, init=False, compare=False)


# --------------------------------------------------------------------------
# Expressions


@dataclass
class Expr(Node):
    # "int" or "bool", filled in by resolve().  Conditions are boolean;
    # everything that can be stored, passed or returned is int.
    ty: str = field(default="", init=False, compare=False)


@dataclass
class IntLit(Expr):
    value: int = 0


@dataclass
class WidthConst(Expr):
    """``INT_MIN`` or ``INT_MAX``; resolved against the configured width."""

    name: str = ""


@dataclass
class VarRef(Expr):
    name: str = ""


@dataclass
class Unary(Expr):
    op: str = ""  # "-" or "!"
    operand: Expr | None = None


@dataclass
class Binary(Expr):
    op: str = ""
    lhs: Expr | None = None
    rhs: Expr | None = None


@dataclass
class Call(Expr):
    name: str = ""
    args: list[Expr] = field(default_factory=list)


# --------------------------------------------------------------------------
# Statements


@dataclass
class Stmt(Node):
    pass


@dataclass
class Decl(Stmt):
    """``int x = e;`` — the only declaration form, so reads are always defined."""

    name: str = ""
    init: Expr | None = None


@dataclass
class Assign(Stmt):
    name: str = ""
    value: Expr | None = None


@dataclass
class If(Stmt):
    cond: Expr | None = None
    then: "Block | None" = None
    els: "Block | None" = None


@dataclass
class While(Stmt):
    cond: Expr | None = None
    body: "Block | None" = None


@dataclass
class Return(Stmt):
    value: Expr | None = None


@dataclass
class CallStmt(Stmt):
    """A call in statement position whose value (if any) is discarded."""

    call: Call | None = None


@dataclass
class ExprStmt(Stmt):
    """Any other expression in statement position, e.g. ``1/x;``."""

    expr: Expr | None = None


@dataclass
class Block(Stmt):
    stmts: list[Stmt] = field(default_factory=list)


# --------------------------------------------------------------------------
# Top level


@dataclass
class Param(Node):
    name: str = ""


@dataclass
class FunctionDef(Node):
    name: str = ""
    params: list[Param] = field(default_factory=list)
    return_type: str = "int"  # "int" or "void"
    body: Block | None = None


@dataclass
class Program(Node):
    functions: list[FunctionDef] = field(default_factory=list)
    file: str = "<input>"

    def function(self, name: str) -> FunctionDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)


AnyNode = Union[Program, FunctionDef, Param, Stmt, Expr]


def children(node: AnyNode) -> Iterator[AnyNode]:
    """Yield the direct children of a node in source order."""

    match node:
        case Program(functions=fns):
            yield from fns
        case FunctionDef(params=ps, body=b):
            yield from ps
            if b is not None:
                yield b
        case Block(stmts=ss):
            yield from ss
        case Decl(init=e) | Assign(value=e) | ExprStmt(expr=e):
            if e is not None:
                yield e
        case Return(value=e):
            if e is not None:
                yield e
        case If(cond=c, then=t, els=e):
            if c is not None:
                yield c
            if t is not None:
                yield t
            if e is not None:
                yield e
        case While(cond=c, body=b):
            if c is not None:
                yield c
            if b is not None:
                yield b
        case CallStmt(call=c):
            if c is not None:
                yield c
        case Unary(operand=o):
            if o is not None:
                yield o
        case Binary(lhs=l, rhs=r):
            if l is not None:
                yield l
            if r is not None:
                yield r
        case Call(args=args):
            yield from args
        case IntLit() | WidthConst() | VarRef() | Param():
            return
        case _:
            raise TypeError(f"not an AST node: {node!r}")


def walk(node: AnyNode) -> Iterator[AnyNode]:
    """Pre-order traversal."""

    yield node
    for child in children(node):
        yield from walk(child)


def assign_node_ids(program: Program) -> None:
    """Number all nodes with pre-order indices, starting from 0 at the root."""

    for i, node in enumerate(walk(program)):
        node.node_id = i


def node_by_id(program: Program, node_id: int) -> AnyNode:
    for node in walk(program):
        if node.node_id == node_id:
            return node
    raise KeyError(f"no node with id {node_id}")


_IGNORED_FIELDS = {"pos", "node_id", "ty", "file"}


def structurally_equal(a: AnyNode, b: AnyNode) -> bool:
    """Shape equality, ignoring positions, node ids and inferred types."""

    if type(a) is not type(b):
        return False
    for f in fields(a):
        if f.name in _IGNORED_FIELDS:
            continue
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, list):
            if len(va) != len(vb):
                return False
            for xa, xb in zip(va, vb):
                if isinstance(xa, Node):
                    if not structurally_equal(xa, xb):
                        return False
                elif xa != xb:
                    return False
        elif isinstance(va, Node):
            if vb is None or not structurally_equal(va, vb):
                return False
        elif va != vb:
            return False
    return True
