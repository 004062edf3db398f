"""Seeded MiniC program generators for the property suites.

Programs are built as source text and re-parsed, so they exercise the real
frontend.  Every generated program satisfies the static rules (unique names,
initialized declarations, returns on all paths, callees defined first) and
terminates: loops are counted, the call graph is acyclic by construction.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field


@dataclass
class _FnInfo:
    name: str
    arity: int


@dataclass
class _Ctx:
    """Per-function generation state."""

    vars: list[str] = field(default_factory=list)
    counters: list[str] = field(default_factory=list)  # live loop counters
    fresh: int = 0

    def new_name(self, prefix: str) -> str:
        name = f"{prefix}{self.fresh}"
        self.fresh += 1
        return name

    def assignable(self) -> list[str]:
        return [v for v in self.vars if v not in self.counters]


class ProgramGen:
    """Draws one program per `program()` call from a seeded RNG."""

    def __init__(self, seed: int, max_literal: int = 20):
        self.rng = random.Random(seed)
        self.max_literal = max_literal

    # -- expressions -------------------------------------------------------

    def literal(self) -> str:
        r = self.rng
        if r.random() < 0.06:
            return r.choice(["INT_MIN", "INT_MAX"])
        if r.random() < 0.1:
            return str(r.randint(0, 127))
        return str(r.randint(0, self.max_literal))

    def expr(self, ctx: _Ctx, fns: list[_FnInfo], depth: int) -> str:
        r = self.rng
        if depth <= 0 or r.random() < 0.35:
            if ctx.vars and r.random() < 0.6:
                return r.choice(ctx.vars)
            return self.literal()
        roll = r.random()
        if roll < 0.12 and fns:
            fn = r.choice(fns)
            args = ", ".join(self.expr(ctx, [], depth - 1)
                             for _ in range(fn.arity))
            return f"{fn.name}({args})"
        if roll < 0.22:
            return f"(-{self.expr(ctx, fns, depth - 1)})"
        op = r.choice(["+", "+", "-", "-", "*", "/", "/", "%"])
        lhs = self.expr(ctx, fns, depth - 1)
        rhs = self.expr(ctx, fns, depth - 1)
        return f"({lhs} {op} {rhs})"

    def cond(self, ctx: _Ctx, fns: list[_FnInfo], depth: int) -> str:
        r = self.rng
        cmp_op = r.choice(["==", "!=", "<", "<=", ">", ">="])
        base = (f"{self.expr(ctx, fns, depth)} {cmp_op} "
                f"{self.expr(ctx, fns, depth)}")
        roll = r.random()
        if depth > 0 and roll < 0.15:
            return f"({base}) && ({self.cond(ctx, fns, depth - 1)})"
        if depth > 0 and roll < 0.25:
            return f"({base}) || ({self.cond(ctx, fns, depth - 1)})"
        if roll < 0.3:
            return f"!({base})"
        return base

    # -- statements --------------------------------------------------------

    def stmts(self, ctx: _Ctx, fns: list[_FnInfo], budget: int,
              depth: int, indent: str) -> list[str]:
        out: list[str] = []
        r = self.rng
        n = r.randint(1, max(1, budget))
        for _ in range(n):
            roll = r.random()
            if roll < 0.4 or not ctx.vars:
                name = ctx.new_name("x")
                out.append(f"{indent}int {name} = "
                           f"{self.expr(ctx, fns, 2)};")
                ctx.vars.append(name)
            elif roll < 0.6 and ctx.assignable():
                name = r.choice(ctx.assignable())
                out.append(f"{indent}{name} = {self.expr(ctx, fns, 2)};")
            elif roll < 0.8 and depth > 0:
                scope = len(ctx.vars)
                out.append(f"{indent}if ({self.cond(ctx, fns, 1)}) {{")
                out.extend(self.stmts(ctx, fns, budget - 1, depth - 1,
                                      indent + "  "))
                del ctx.vars[scope:]
                if r.random() < 0.5:
                    out.append(f"{indent}}} else {{")
                    out.extend(self.stmts(ctx, fns, budget - 1, depth - 1,
                                          indent + "  "))
                    del ctx.vars[scope:]
                out.append(f"{indent}}}")
            elif roll < 0.93 and depth > 0:
                counter = ctx.new_name("i")
                bound = r.randint(0, 4)
                out.append(f"{indent}int {counter} = 0;")
                out.append(f"{indent}while ({counter} < {bound}) {{")
                ctx.vars.append(counter)
                ctx.counters.append(counter)
                scope = len(ctx.vars)
                out.extend(self.stmts(ctx, fns, budget - 1, depth - 1,
                                      indent + "  "))
                del ctx.vars[scope:]
                out.append(f"{indent}  {counter} = {counter} + 1;")
                out.append(f"{indent}}}")
                ctx.counters.remove(counter)
            elif fns:
                fn = r.choice(fns)
                args = ", ".join(self.expr(ctx, [], 1)
                                 for _ in range(fn.arity))
                out.append(f"{indent}{fn.name}({args});")
            else:
                name = ctx.new_name("x")
                out.append(f"{indent}int {name} = "
                           f"{self.expr(ctx, fns, 1)};")
                ctx.vars.append(name)
        return out

    def function(self, info: _FnInfo, earlier: list[_FnInfo],
                 params: list[str]) -> str:
        ctx = _Ctx(vars=list(params))
        sig = ", ".join(f"int {p}" for p in params)
        lines = [f"int {info.name}({sig}) {{"]
        lines.extend(self.stmts(ctx, earlier, 3, 2, "  "))
        lines.append(f"  return {self.expr(ctx, earlier, 2)};")
        lines.append("}")
        return "\n".join(lines)

    # -- whole programs ----------------------------------------------------

    def program(self) -> str:
        r = self.rng
        parts: list[str] = []
        fns: list[_FnInfo] = []
        for k in range(r.randint(0, 3)):
            arity = r.randint(0, 2)
            info = _FnInfo(f"f{k}", arity)
            params = [f"a{k}_{j}" for j in range(arity)]
            parts.append(self.function(info, list(fns), params))
            fns.append(info)
        main_arity = r.randint(0, 1)
        params = ["a"] if main_arity else []
        parts.append(self.function(_FnInfo("main", main_arity), fns, params))
        return "\n\n".join(parts) + "\n"


def corpus(count: int, seed: int = 2024_08, max_literal: int = 20) -> list[str]:
    gen = ProgramGen(seed, max_literal)
    return [gen.program() for _ in range(count)]


def star_program(dependent: int = 3, shift: int = 5,
                 trivialize_others: bool = False) -> str:
    """One caller, ten callees, one of which feeds the caller's division.

    Callee bodies never fault (divisor and sums stay far from the 8-bit
    bounds), so every entry input reaches the division in main.  With
    ``trivialize_others`` the nine irrelevant callees are replaced by
    constant bodies, which must not change the division's behavior.
    """

    parts = []
    for k in range(10):
        if trivialize_others and k != dependent:
            body = "  return 1;"
        else:
            body = f"  return a / 8 + {k};"
        parts.append(f"int g{k}(int a) {{\n{body}\n}}")
    calls = "\n".join(f"  int x{k} = g{k}(a);" for k in range(10))
    parts.append(
        "int main(int a) {\n"
        f"{calls}\n"
        f"  int r = 100 / (x{dependent} - {shift});\n"
        "  return r;\n"
        "}"
    )
    return "\n\n".join(parts) + "\n"
