"""ACSL-subset annotation language: predicates, clauses, contracts.

The predicate language is quantifier-free first-order arithmetic over program
variables: integer terms (with ``INT_MIN``/``INT_MAX`` resolved against the
configured width), comparisons, and the connectives ``&&``, ``||``, ``!``,
``==>``.  ``\\result`` and ``\\old(x)`` are permitted in ``ensures`` clauses
only.  Multiplication of two non-constant terms is representable but flagged
as nonlinear so the verifier can route such predicates to bounded checking.

Terms follow mathematical integer semantics; ``/`` and ``%`` truncate toward
zero like C.  Division by zero makes the enclosing atom undefined, and the
three-valued evaluation rules below treat undefined atoms pessimistically.
The full grammar lives in ``docs/spec-grammar.md``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

from .errors import SourcePos, SpecSyntaxError, UnknownConstructError
from .frontend.syntax import IntWidth

RESULT = "\\result"


# --------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class TInt(Term):
    value: int


@dataclass(frozen=True)
class TWidthConst(Term):
    name: str  # "INT_MIN" or "INT_MAX"


@dataclass(frozen=True)
class TVar(Term):
    name: str  # program variable, fresh symbol, or the reserved "\\result"


@dataclass(frozen=True)
class TOld(Term):
    name: str  # \old(name); ensures clauses only


@dataclass(frozen=True)
class TNeg(Term):
    operand: Term


@dataclass(frozen=True)
class TBin(Term):
    op: str  # + - * / %
    lhs: Term
    rhs: Term


# --------------------------------------------------------------------------
# Predicates


@dataclass(frozen=True)
class Predicate:
    pass


@dataclass(frozen=True)
class PBool(Predicate):
    value: bool


@dataclass(frozen=True)
class PCmp(Predicate):
    op: str  # == != < <= > >=
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class PNot(Predicate):
    operand: Predicate


@dataclass(frozen=True)
class PAnd(Predicate):
    lhs: Predicate
    rhs: Predicate


@dataclass(frozen=True)
class POr(Predicate):
    lhs: Predicate
    rhs: Predicate


@dataclass(frozen=True)
class PImplies(Predicate):
    lhs: Predicate
    rhs: Predicate


TRUE = PBool(True)
FALSE = PBool(False)


# Smart constructors; they fold boolean units so machine-built predicates do
# not accumulate noise.  Rendering never simplifies.

def tint(v: int) -> Term:
    return TInt(v)


def tneg(t: Term) -> Term:
    if isinstance(t, TInt):
        return TInt(-t.value)
    return TNeg(t)


def tbin(op: str, lhs: Term, rhs: Term) -> Term:
    return TBin(op, lhs, rhs)


def pcmp(op: str, lhs: Term, rhs: Term) -> Predicate:
    return PCmp(op, lhs, rhs)


def pnot(p: Predicate) -> Predicate:
    if isinstance(p, PBool):
        return PBool(not p.value)
    if isinstance(p, PNot):
        return p.operand
    return PNot(p)


def pand(a: Predicate, b: Predicate) -> Predicate:
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    if a == FALSE or b == FALSE:
        return FALSE
    return PAnd(a, b)


def por(a: Predicate, b: Predicate) -> Predicate:
    if a == FALSE:
        return b
    if b == FALSE:
        return a
    if a == TRUE or b == TRUE:
        return TRUE
    return POr(a, b)


def pimplies(a: Predicate, b: Predicate) -> Predicate:
    if a == TRUE:
        return b
    if a == FALSE or b == TRUE:
        return TRUE
    return PImplies(a, b)


def conj(ps) -> Predicate:
    out: Predicate = TRUE
    for p in ps:
        out = pand(out, p)
    return out


def conjuncts(p: Predicate) -> Iterator[Predicate]:
    """Flatten nested conjunctions."""
    if isinstance(p, PAnd):
        yield from conjuncts(p.lhs)
        yield from conjuncts(p.rhs)
    elif p != TRUE:
        yield p


# --------------------------------------------------------------------------
# Traversal, substitution, classification


def subterms(x: Union[Term, Predicate]) -> Iterator[Term]:
    match x:
        case TNeg(operand=o):
            yield x
            yield from subterms(o)
        case TBin(lhs=l, rhs=r):
            yield x
            yield from subterms(l)
            yield from subterms(r)
        case Term():
            yield x
        case PCmp(lhs=l, rhs=r):
            yield from subterms(l)
            yield from subterms(r)
        case PNot(operand=o):
            yield from subterms(o)
        case PAnd(lhs=l, rhs=r) | POr(lhs=l, rhs=r) | PImplies(lhs=l, rhs=r):
            yield from subterms(l)
            yield from subterms(r)
        case PBool():
            return


def free_vars(x: Union[Term, Predicate]) -> set[str]:
    return {t.name for t in subterms(x) if isinstance(t, TVar)}


def has_old(x: Union[Term, Predicate]) -> bool:
    return any(isinstance(t, TOld) for t in subterms(x))


def substitute(p: Predicate, binding: Mapping[str, Term]) -> Predicate:
    """Simultaneous substitution of variables by terms.

    The language has no binders, so this is trivially capture-avoiding.
    ``\\result`` can be bound via the reserved :data:`RESULT` key;
    ``\\old(x)`` is left untouched (see :func:`replace_old`).
    """

    def sub_t(t: Term) -> Term:
        match t:
            case TVar(name=n):
                return binding.get(n, t)
            case TNeg(operand=o):
                return tneg(sub_t(o))
            case TBin(op=op, lhs=l, rhs=r):
                return TBin(op, sub_t(l), sub_t(r))
            case _:
                return t

    return _map_terms(p, sub_t)


def replace_old(p: Predicate, binding: Mapping[str, Term]) -> Predicate:
    """Replace ``\\old(x)`` occurrences; unbound names become plain vars."""

    def sub_t(t: Term) -> Term:
        match t:
            case TOld(name=n):
                return binding.get(n, TVar(n))
            case TNeg(operand=o):
                return tneg(sub_t(o))
            case TBin(op=op, lhs=l, rhs=r):
                return TBin(op, sub_t(l), sub_t(r))
            case _:
                return t

    return _map_terms(p, sub_t)


def _map_terms(p: Predicate, fn) -> Predicate:
    match p:
        case PBool():
            return p
        case PCmp(op=op, lhs=l, rhs=r):
            return PCmp(op, fn(l), fn(r))
        case PNot(operand=o):
            return PNot(_map_terms(o, fn))
        case PAnd(lhs=l, rhs=r):
            return PAnd(_map_terms(l, fn), _map_terms(r, fn))
        case POr(lhs=l, rhs=r):
            return POr(_map_terms(l, fn), _map_terms(r, fn))
        case PImplies(lhs=l, rhs=r):
            return PImplies(_map_terms(l, fn), _map_terms(r, fn))
        case _:
            raise TypeError(f"not a predicate: {p!r}")


def is_const_term(t: Term) -> bool:
    match t:
        case TInt() | TWidthConst():
            return True
        case TNeg(operand=o):
            return is_const_term(o)
        case TBin(lhs=l, rhs=r):
            return is_const_term(l) and is_const_term(r)
        case _:
            return False


def is_nonlinear(x: Union[Term, Predicate]) -> bool:
    """True when the verifier should route this to bounded checking.

    Conservative rule: multiplication of two non-constant terms, or any
    division/modulo operator at all.
    """

    for t in subterms(x):
        if isinstance(t, TBin):
            if t.op == "*" and not (is_const_term(t.lhs) or is_const_term(t.rhs)):
                return True
            if t.op in ("/", "%"):
                return True
    return False


# --------------------------------------------------------------------------
# Evaluation (three-valued; None means undefined)


def trunc_div(a: int, b: int) -> int:
    """C-style division: truncates toward zero."""
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def trunc_mod(a: int, b: int) -> int:
    return a - trunc_div(a, b) * b


def eval_term(t: Term, env: Mapping[str, int], width: IntWidth) -> int | None:
    match t:
        case TInt(value=v):
            return v
        case TWidthConst(name=n):
            return width.min if n == "INT_MIN" else width.max
        case TVar(name=n):
            if n not in env:
                raise KeyError(f"unbound variable in predicate: {n}")
            return env[n]
        case TOld(name=n):
            raise ValueError(f"\\old({n}) must be instantiated before evaluation")
        case TNeg(operand=o):
            v = eval_term(o, env, width)
            return None if v is None else -v
        case TBin(op=op, lhs=l, rhs=r):
            a = eval_term(l, env, width)
            b = eval_term(r, env, width)
            if a is None or b is None:
                return None
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
                case "/":
                    return None if b == 0 else trunc_div(a, b)
                case "%":
                    return None if b == 0 else trunc_mod(a, b)
    raise TypeError(f"not a term: {t!r}")


_CMP = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def eval_pred(p: Predicate, env: Mapping[str, int],
              width: IntWidth) -> bool | None:
    """Strong-Kleene evaluation; an atom over an undefined term is None."""

    match p:
        case PBool(value=v):
            return v
        case PCmp(op=op, lhs=l, rhs=r):
            a = eval_term(l, env, width)
            b = eval_term(r, env, width)
            if a is None or b is None:
                return None
            return _CMP[op](a, b)
        case PNot(operand=o):
            v = eval_pred(o, env, width)
            return None if v is None else (not v)
        case PAnd(lhs=l, rhs=r):
            a = eval_pred(l, env, width)
            if a is False:
                return False
            b = eval_pred(r, env, width)
            if b is False:
                return False
            return None if (a is None or b is None) else True
        case POr(lhs=l, rhs=r):
            a = eval_pred(l, env, width)
            if a is True:
                return True
            b = eval_pred(r, env, width)
            if b is True:
                return True
            return None if (a is None or b is None) else False
        case PImplies(lhs=l, rhs=r):
            return eval_pred(POr(PNot(l), r), env, width)
    raise TypeError(f"not a predicate: {p!r}")


# --------------------------------------------------------------------------
# Clauses and contracts


class ClauseKind(enum.Enum):
    REQUIRES = "requires"
    ENSURES = "ensures"
    ASSERT = "assert"
    LOOP_INVARIANT = "loop invariant"
    LOOP_ASSIGNS = "loop assigns"


@dataclass(frozen=True)
class Clause:
    kind: ClauseKind
    pred: Predicate | None = None
    assigns: tuple[str, ...] = ()
    label: str | None = None  # optional name on assert clauses


@dataclass(frozen=True)
class Contract:
    """Requires/ensures lists; an absent list means the single clause \\true."""

    requires: tuple[Predicate, ...] = ()
    ensures: tuple[Predicate, ...] = ()

    def requires_pred(self) -> Predicate:
        return conj(self.requires)

    def ensures_pred(self) -> Predicate:
        return conj(self.ensures)

    def with_requires(self, p: Predicate) -> "Contract":
        return Contract(self.requires + (p,), self.ensures)

    def with_ensures(self, p: Predicate) -> "Contract":
        return Contract(self.requires, self.ensures + (p,))

    def is_trivial(self) -> bool:
        return not self.requires and not self.ensures

    def clauses(self) -> list[Clause]:
        out = [Clause(ClauseKind.REQUIRES, p) for p in self.requires]
        out += [Clause(ClauseKind.ENSURES, p) for p in self.ensures]
        return out


def instantiate_requires(contract: Contract,
                         binding: Mapping[str, Term]) -> Predicate:
    """A callee's requires at a call site: parameters become argument terms."""

    return substitute(conj(contract.requires), binding)


def instantiate_ensures(p: Predicate, binding: Mapping[str, Term],
                        result: Term) -> Predicate:
    """An ensures clause seen from a call site.

    Parameters in ensures denote entry values, so both a bare parameter and
    ``\\old(parameter)`` map to the argument term; ``\\result`` becomes the
    result term.
    """

    out = substitute(p, {**binding, RESULT: result})
    return replace_old(out, binding)


# --------------------------------------------------------------------------
# Clause parsing


_BACKSLASH_WORDS = {"\\result", "\\old", "\\true", "\\false"}


def _lex_clause(text: str) -> list[tuple[str, str, int]]:
    """Tokens are (kind, text, column); kind in ident/int/punct/bword."""

    out = []
    i, n = 0, len(text)
    puncts = ("==>", "==", "!=", "<=", ">=", "&&", "||",
              "(", ")", ",", ";", ":", "<", ">", "+", "-", "*", "/", "%", "!")
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c == "\\":
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            word = text[i:j]
            if word not in _BACKSLASH_WORDS:
                raise UnknownConstructError(
                    f"unsupported construct {word!r}",
                    SourcePos("<clause>", 1, i + 1))
            out.append(("bword", word, i))
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            out.append(("int", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("ident", text[i:j], i))
            i = j
            continue
        for p in puncts:
            if text.startswith(p, i):
                out.append(("punct", p, i))
                i += len(p)
                break
        else:
            raise SpecSyntaxError(f"unexpected character {c!r} in clause",
                                  SourcePos("<clause>", 1, i + 1))
    out.append(("eof", "", n))
    return out


class _ClauseParser:
    """Parses the clause body as a C-precedence expression, then sorts the
    result into predicate vs. term during conversion."""

    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def err(self, msg: str):
        _, _, col = self.peek()
        raise SpecSyntaxError(msg, SourcePos("<clause>", 1, col + 1))

    def eat(self, text: str) -> bool:
        if self.peek()[1] == text and self.peek()[0] in ("punct", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.eat(text):
            self.err(f"expected {text!r}, got {self.peek()[1]!r}")

    # Precedence: ==> (right) < || < && < cmp < +- < */% < unary < primary.
    # `!` and unary `-` share the unary level, as in C.

    def parse_pred(self) -> Predicate:
        return self._to_pred(self.impl())

    def impl(self):
        lhs = self.disj()
        if self.eat("==>"):
            return ("==>", lhs, self.impl())
        return lhs

    def disj(self):
        e = self.conj()
        while self.eat("||"):
            e = ("||", e, self.conj())
        return e

    def conj(self):
        e = self.cmp()
        while self.eat("&&"):
            e = ("&&", e, self.cmp())
        return e

    def cmp(self):
        e = self.add()
        while self.peek()[1] in ("==", "!=", "<", "<=", ">", ">=") \
                and self.peek()[0] == "punct":
            op = self.next()[1]
            e = (op, e, self.add())
        return e

    def add(self):
        e = self.mul()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "punct":
            op = self.next()[1]
            e = (op, e, self.mul())
        return e

    def mul(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/", "%") and self.peek()[0] == "punct":
            op = self.next()[1]
            e = (op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[0] == "punct" and self.peek()[1] in ("-", "!"):
            op = self.next()[1]
            return (f"u{op}", self.unary(), None)
        return self.primary()

    def primary(self):
        kind, text, _ = self.peek()
        if kind == "int":
            self.next()
            return ("int", int(text), None)
        if kind == "bword":
            self.next()
            if text == "\\true":
                return ("true", None, None)
            if text == "\\false":
                return ("false", None, None)
            if text == "\\result":
                return ("result", None, None)
            # \old(x)
            self.expect("(")
            name = self.peek()
            if name[0] != "ident":
                self.err("\\old takes a variable name")
            self.next()
            self.expect(")")
            return ("old", name[1], None)
        if kind == "ident":
            self.next()
            if text in ("INT_MIN", "INT_MAX"):
                return ("wconst", text, None)
            return ("var", text, None)
        if self.eat("("):
            e = self.impl()
            self.expect(")")
            return e
        self.err(f"unexpected {text!r} in clause")

    # -- conversion --------------------------------------------------------

    def _to_pred(self, e) -> Predicate:
        tag = e[0]
        match tag:
            case "true":
                return TRUE
            case "false":
                return FALSE
            case "==>":
                return PImplies(self._to_pred(e[1]), self._to_pred(e[2]))
            case "||":
                return POr(self._to_pred(e[1]), self._to_pred(e[2]))
            case "&&":
                return PAnd(self._to_pred(e[1]), self._to_pred(e[2]))
            case "u!":
                return PNot(self._to_pred(e[1]))
            case "==" | "!=" | "<" | "<=" | ">" | ">=":
                return PCmp(tag, self._to_term(e[1]), self._to_term(e[2]))
            case _:
                raise SpecSyntaxError(
                    f"expected a predicate, found an arithmetic term ({tag})")

    def _to_term(self, e) -> Term:
        tag = e[0]
        match tag:
            case "int":
                return TInt(e[1])
            case "wconst":
                return TWidthConst(e[1])
            case "var":
                return TVar(e[1])
            case "result":
                return TVar(RESULT)
            case "old":
                return TOld(e[1])
            case "u-":
                return tneg(self._to_term(e[1]))
            case "+" | "-" | "*" | "/" | "%":
                return TBin(tag, self._to_term(e[1]), self._to_term(e[2]))
            case _:
                raise SpecSyntaxError(
                    f"expected an arithmetic term, found {tag!r}")


def parse_clause(text: str) -> Clause:
    """Parse one annotation clause, e.g. ``"requires INT_MIN < x;"``."""

    toks = _lex_clause(text.strip())
    p = _ClauseParser(toks)
    kind_tok = p.next()
    if kind_tok[0] != "ident":
        raise SpecSyntaxError(f"expected a clause keyword, got {kind_tok[1]!r}")
    keyword = kind_tok[1]

    label = None
    if keyword == "loop":
        sub = p.next()
        if sub[1] == "invariant":
            kind = ClauseKind.LOOP_INVARIANT
        elif sub[1] == "assigns":
            names = []
            while True:
                t = p.next()
                if t[0] != "ident":
                    raise SpecSyntaxError("loop assigns takes variable names")
                names.append(t[1])
                if not p.eat(","):
                    break
            p.expect(";")
            return Clause(ClauseKind.LOOP_ASSIGNS, assigns=tuple(names))
        else:
            raise UnknownConstructError(f"unsupported loop clause {sub[1]!r}")
    elif keyword == "requires":
        kind = ClauseKind.REQUIRES
    elif keyword == "ensures":
        kind = ClauseKind.ENSURES
    elif keyword == "assert":
        kind = ClauseKind.ASSERT
        if p.peek()[0] == "ident" and p.toks[p.i + 1][1] == ":":
            label = p.next()[1]
            p.next()
    else:
        raise UnknownConstructError(f"unsupported clause keyword {keyword!r}")

    pred = p.parse_pred()
    p.expect(";")
    if p.peek()[0] != "eof":
        raise SpecSyntaxError(f"trailing input after clause: {p.peek()[1]!r}")

    if kind != ClauseKind.ENSURES:
        if RESULT in free_vars(pred):
            raise SpecSyntaxError("\\result is only allowed in ensures clauses")
        if has_old(pred):
            raise SpecSyntaxError("\\old is only allowed in ensures clauses")
    return Clause(kind, pred=pred, label=label)


# --------------------------------------------------------------------------
# Rendering

_PREC = {"==>": 1, "||": 2, "&&": 3, "cmp": 5, "+": 6, "-": 6,
         "*": 7, "/": 7, "%": 7}


def render_term(t: Term, parent_prec: int = 0) -> str:
    match t:
        case TInt(value=v):
            return str(v)
        case TWidthConst(name=n):
            return n
        case TVar(name=n):
            return n
        case TOld(name=n):
            return f"\\old({n})"
        case TNeg(operand=o):
            inner = render_term(o, 8)
            if isinstance(o, TBin):
                inner = f"({inner})"
            return f"-{inner}"
        case TBin(op=op, lhs=l, rhs=r):
            prec = _PREC[op]
            s = f"{render_term(l, prec)} {op} {render_term(r, prec + 1)}"
            return f"({s})" if prec < parent_prec else s
    raise TypeError(f"not a term: {t!r}")


def render_pred(p: Predicate, parent_prec: int = 0) -> str:
    match p:
        case PBool(value=v):
            return "\\true" if v else "\\false"
        case PCmp(op=op, lhs=l, rhs=r):
            s = f"{render_term(l, 6)} {op} {render_term(r, 6)}"
            return f"({s})" if _PREC["cmp"] < parent_prec else s
        case PNot(operand=o):
            return f"!({render_pred(o, 0)})"
        case PAnd(lhs=l, rhs=r):
            s = f"{render_pred(l, 3)} && {render_pred(r, 4)}"
            return f"({s})" if 3 < parent_prec else s
        case POr(lhs=l, rhs=r):
            s = f"{render_pred(l, 2)} || {render_pred(r, 3)}"
            return f"({s})" if 2 < parent_prec else s
        case PImplies(lhs=l, rhs=r):
            s = f"{render_pred(l, 2)} ==> {render_pred(r, 1)}"
            return f"({s})" if 1 < parent_prec else s
    raise TypeError(f"not a predicate: {p!r}")


def render_clause(c: Clause) -> str:
    match c.kind:
        case ClauseKind.REQUIRES:
            return f"requires {render_pred(c.pred)};"
        case ClauseKind.ENSURES:
            return f"ensures {render_pred(c.pred)};"
        case ClauseKind.ASSERT:
            if c.label:
                return f"assert {c.label}: {render_pred(c.pred)};"
            return f"assert {render_pred(c.pred)};"
        case ClauseKind.LOOP_INVARIANT:
            return f"loop invariant {render_pred(c.pred)};"
        case ClauseKind.LOOP_ASSIGNS:
            return f"loop assigns {', '.join(c.assigns)};"
    raise TypeError(f"not a clause: {c!r}")
