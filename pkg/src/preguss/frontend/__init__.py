"""MiniC frontend: parsing, resolution, rendering."""

from .parser import parse, tokenize
from .render import render, render_expr
from .resolve import Signature, TypedProgram, check_literal_ranges, resolve
from .syntax import (
    IntWidth, W8, W16, W32, width_from_bits,
    Program, FunctionDef, Param, Block,
    Stmt, Decl, Assign, If, While, Return, CallStmt, ExprStmt,
    Expr, IntLit, WidthConst, VarRef, Unary, Binary, Call,
    children, walk, node_by_id, structurally_equal,
)

__all__ = [
    "parse", "tokenize", "render", "render_expr",
    "resolve", "TypedProgram", "Signature", "check_literal_ranges",
    "IntWidth", "W8", "W16", "W32", "width_from_bits",
    "Program", "FunctionDef", "Param", "Block",
    "Stmt", "Decl", "Assign", "If", "While", "Return", "CallStmt", "ExprStmt",
    "Expr", "IntLit", "WidthConst", "VarRef", "Unary", "Binary", "Call",
    "children", "walk", "node_by_id", "structurally_equal",
]
