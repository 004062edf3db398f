"""Hand-rolled lexer and recursive-descent parser for MiniC.

Preprocessor lines (anything whose first non-blank character is ``#``) are
skipped so that the usual ``#include <limits.h>`` header of constrained C
sources parses without a separate preprocessing step.  ``//`` and ``/* */``
comments are skipped as well, which means annotation comments in rendered
output round-trip cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import MiniCSyntaxError, SourcePos
from . import syntax as ast

KEYWORDS = {"int", "void", "if", "else", "while", "return"}
WIDTH_CONSTS = {"INT_MIN", "INT_MAX"}

# Longest first so that "<=" wins over "<".
PUNCT = (
    "==", "!=", "<=", ">=", "&&", "||",
    "(", ")", "{", "}", ",", ";", "=", "<", ">", "+", "-", "*", "/", "%", "!",
)


@dataclass
class Token:
    kind: str  # "ident", "int", "kw", "punct", "eof"
    text: str
    pos: SourcePos


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    at_line_start = True

    def pos() -> SourcePos:
        return SourcePos(file, line, col)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = text[i]
        if c == "\n":
            advance(1)
            at_line_start = True
            continue
        if c in " \t\r":
            advance(1)
            continue
        if c == "#" and at_line_start:
            while i < n and text[i] != "\n":
                advance(1)
            continue
        at_line_start = False
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                advance(1)
            continue
        if text.startswith("/*", i):
            start = pos()
            advance(2)
            while i < n and not text.startswith("*/", i):
                advance(1)
            if i >= n:
                raise MiniCSyntaxError("unterminated comment", start)
            advance(2)
            continue
        if c.isdigit():
            p = pos()
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], p))
            advance(j - i)
            continue
        if c.isalpha() or c == "_":
            p = pos()
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, p))
            advance(j - i)
            continue
        for p_text in PUNCT:
            if text.startswith(p_text, i):
                tokens.append(Token("punct", p_text, pos()))
                advance(len(p_text))
                break
        else:
            raise MiniCSyntaxError(f"unexpected character {c!r}", pos())
    tokens.append(Token("eof", "", pos()))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token], file: str):
        self.tokens = tokens
        self.file = file
        self.i = 0

    # -- token plumbing ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("kw", "punct")

    def eat(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str, *alternatives: str) -> Token:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        self.fail((text, *alternatives))

    def fail(self, expected: tuple[str, ...]):
        got = self.tok.text or "end of input"
        raise MiniCSyntaxError(f"unexpected {got!r}", self.tok.pos, expected=expected)

    def ident(self) -> Token:
        if self.tok.kind == "ident":
            t = self.tok
            self.i += 1
            return t
        self.fail(("identifier",))

    # -- grammar -----------------------------------------------------------

    def program(self) -> ast.Program:
        start = self.tok.pos
        functions = []
        while self.tok.kind != "eof":
            functions.append(self.function())
        return ast.Program(pos=start, functions=functions, file=self.file)

    def function(self) -> ast.FunctionDef:
        pos = self.tok.pos
        if self.eat("int"):
            rt = "int"
        elif self.eat("void"):
            rt = "void"
        else:
            self.fail(("int", "void"))
        name = self.ident()
        self.expect("(")
        params: list[ast.Param] = []
        if not self.at(")"):
            while True:
                self.expect("int", ")")
                p = self.ident()
                params.append(ast.Param(pos=p.pos, name=p.text))
                if not self.eat(","):
                    break
        self.expect(")")
        body = self.block()
        return ast.FunctionDef(pos=pos, name=name.text, params=params,
                               return_type=rt, body=body)

    def block(self) -> ast.Block:
        pos = self.expect("{").pos
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail(("}",))
            stmts.append(self.statement())
        self.expect("}")
        return ast.Block(pos=pos, stmts=stmts)

    def as_block(self, s: ast.Stmt) -> ast.Block:
        """Branch and loop bodies are normalized to blocks."""
        if isinstance(s, ast.Block):
            return s
        return ast.Block(pos=s.pos, stmts=[s])

    def statement(self) -> ast.Stmt:
        pos = self.tok.pos
        if self.at("{"):
            return self.block()
        if self.eat("if"):
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            then = self.as_block(self.statement())
            els = None
            if self.eat("else"):
                els = self.as_block(self.statement())
            return ast.If(pos=pos, cond=cond, then=then, els=els)
        if self.eat("while"):
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            body = self.as_block(self.statement())
            return ast.While(pos=pos, cond=cond, body=body)
        if self.eat("return"):
            value = None
            if not self.at(";"):
                value = self.expression()
            self.expect(";")
            return ast.Return(pos=pos, value=value)
        if self.eat("int"):
            name = self.ident()
            self.expect("=")
            init = self.expression()
            self.expect(";")
            return ast.Decl(pos=pos, name=name.text, init=init)
        if self.tok.kind == "ident" and self.tokens[self.i + 1].text == "=" \
                and self.tokens[self.i + 1].kind == "punct":
            name = self.ident()
            self.expect("=")
            value = self.expression()
            self.expect(";")
            return ast.Assign(pos=pos, name=name.text, value=value)
        expr = self.expression()
        self.expect(";")
        if isinstance(expr, ast.Call):
            return ast.CallStmt(pos=pos, call=expr)
        return ast.ExprStmt(pos=pos, expr=expr)

    # Expressions, lowest precedence first.

    def expression(self) -> ast.Expr:
        return self.or_expr()

    def or_expr(self) -> ast.Expr:
        e = self.and_expr()
        while self.at("||"):
            pos = self.tok.pos
            self.i += 1
            e = ast.Binary(pos=pos, op="||", lhs=e, rhs=self.and_expr())
        return e

    def and_expr(self) -> ast.Expr:
        e = self.cmp_expr()
        while self.at("&&"):
            pos = self.tok.pos
            self.i += 1
            e = ast.Binary(pos=pos, op="&&", lhs=e, rhs=self.cmp_expr())
        return e

    def cmp_expr(self) -> ast.Expr:
        e = self.add_expr()
        while self.tok.kind == "punct" and self.tok.text in ast.CMP_OPS:
            op = self.tok.text
            pos = self.tok.pos
            self.i += 1
            e = ast.Binary(pos=pos, op=op, lhs=e, rhs=self.add_expr())
        return e

    def add_expr(self) -> ast.Expr:
        e = self.mul_expr()
        while self.tok.kind == "punct" and self.tok.text in ("+", "-"):
            op = self.tok.text
            pos = self.tok.pos
            self.i += 1
            e = ast.Binary(pos=pos, op=op, lhs=e, rhs=self.mul_expr())
        return e

    def mul_expr(self) -> ast.Expr:
        e = self.unary_expr()
        while self.tok.kind == "punct" and self.tok.text in ("*", "/", "%"):
            op = self.tok.text
            pos = self.tok.pos
            self.i += 1
            e = ast.Binary(pos=pos, op=op, lhs=e, rhs=self.unary_expr())
        return e

    def unary_expr(self) -> ast.Expr:
        if self.tok.text in ("-", "!") and self.tok.kind == "punct":
            op = self.tok.text
            pos = self.tok.pos
            self.i += 1
            return ast.Unary(pos=pos, op=op, operand=self.unary_expr())
        return self.primary()

    def primary(self) -> ast.Expr:
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return ast.IntLit(pos=tok.pos, value=int(tok.text))
        if self.eat("("):
            e = self.expression()
            self.expect(")")
            return e
        if tok.kind == "ident":
            self.i += 1
            if tok.text in WIDTH_CONSTS:
                return ast.WidthConst(pos=tok.pos, name=tok.text)
            if self.eat("("):
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.expression())
                        if not self.eat(","):
                            break
                self.expect(")")
                return ast.Call(pos=tok.pos, name=tok.text, args=args)
            return ast.VarRef(pos=tok.pos, name=tok.text)
        self.fail(("integer literal", "identifier", "("))


def parse(text: str, file: str = "<input>") -> ast.Program:
    """Parse MiniC source text into a numbered AST."""

    program = _Parser(tokenize(text, file), file).program()
    ast.assign_node_ids(program)
    return program
