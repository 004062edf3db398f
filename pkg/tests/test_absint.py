"""Interval domain and the guard-planting analysis."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preguss.absint import (BOTTOM, TOP, Interval, RteKind, Status,
                            add_interval, analyze, div_interval, full_range,
                            mod_interval, mul_interval, neg_interval, nonzero,
                            singleton, sub_interval, widen)
from preguss.frontend import W8, W32, parse, resolve
from preguss.specs import render_pred, trunc_div, trunc_mod

I = Interval


def run(src: str, width=W32):
    return analyze(resolve(parse(src)), width)


# -- interval algebra --------------------------------------------------------

def test_interval_lattice_basics():
    assert BOTTOM.is_bottom and not TOP.is_bottom
    assert I(1, 3).join(I(5, 6)) == I(1, 6)
    assert I(1, 5).meet(I(3, 9)) == I(3, 5)
    assert I(1, 2).meet(I(4, 5)).is_bottom
    assert singleton(4) == I(4, 4) and I(4, 4).is_singleton()
    assert full_range(W8) == I(-128, 127)
    assert TOP.contains(10**12)


def test_arith_transfer_frozen_cases():
    assert add_interval(I(1, 2), I(10, 20)) == I(11, 22)
    assert sub_interval(I(0, 5), I(1, 2)) == I(-2, 4)
    assert mul_interval(I(-2, 3), I(4, 5)) == I(-10, 15)
    assert neg_interval(I(-3, 7)) == I(-7, 3)
    assert div_interval(I(-10, 10), I(2, 2)) == I(-5, 5)
    assert div_interval(singleton(7), singleton(-2)) == singleton(-3)
    assert mod_interval(I(0, 100), singleton(12)) == I(0, 11)
    assert mod_interval(I(-7, -7), I(2, 3)) == I(-2, 0)


def test_mod_is_exact_on_constants():
    # a sloppy bound here once leaked into the verifier's linear arithmetic
    assert mod_interval(singleton(16), singleton(12)) == singleton(4)
    assert mod_interval(singleton(16), singleton(11)) == singleton(5)
    assert mod_interval(singleton(-7), singleton(2)) == singleton(-1)


def test_nonzero_cannot_split_but_drops_zero_endpoints():
    assert nonzero(I(0, 5)) == I(1, 5)
    assert nonzero(I(-5, 0)) == I(-5, -1)
    assert nonzero(I(0, 0)).is_bottom
    assert nonzero(I(-3, 5)) == I(-3, 5)  # the hole is not representable


def test_widen_jumps_to_width_bounds():
    assert widen(I(0, 1), I(0, 5), W8) == I(0, 127)
    assert widen(I(0, 1), I(-2, 1), W8) == I(-128, 1)
    assert widen(I(0, 5), I(0, 5), W8) == I(0, 5)


_iv = st.tuples(st.integers(-60, 60), st.integers(0, 40)).map(
    lambda t: I(t[0], t[0] + t[1]))


@settings(max_examples=200, deadline=None)
@given(_iv, _iv, st.data())
def test_transfer_functions_are_sound(a, b, data):
    """Concrete results always land inside the abstract result."""

    x = data.draw(st.integers(a.lo, a.hi))
    y = data.draw(st.integers(b.lo, b.hi))
    assert add_interval(a, b).contains(x + y)
    assert sub_interval(a, b).contains(x - y)
    assert mul_interval(a, b).contains(x * y)
    assert neg_interval(a).contains(-x)
    if y != 0:
        assert div_interval(a, b).contains(trunc_div(x, y))
        assert mod_interval(a, b).contains(trunc_mod(x, y))


@settings(max_examples=100, deadline=None)
@given(_iv, _iv)
def test_widen_covers_both_sides_and_stabilizes(a, b):
    w = widen(a, b, W8)
    for side in (a, b):
        assert side.lo >= (w.lo if w.lo is not None else -10**9)
        assert side.hi <= (w.hi if w.hi is not None else 10**9)
    assert widen(w, w.join(b), W8) == w  # one step suffices at fixed width


# -- analysis results --------------------------------------------------------

def test_abs_has_exactly_one_overflow_alarm():
    res = run(open("samples/abs.mc").read())
    assert [(a.id, a.kind, a.status) for a in res.assertions] == \
        [("rte1", RteKind.SIGNED_OVERFLOW, Status.ALARM)]
    a = res.assertions[0]
    assert render_pred(a.pred) == "-2147483647 <= x"
    assert a.host == "abs" and a.pos.line == 4
    assert res.reachable == ["abs", "main"]


def test_division_guards_are_always_planted():
    res = run("int main() {\n  int a = 8 / 2;\n  int b = a / 100;\n"
              "  return b;\n}\n")
    assert [(a.kind, a.status, render_pred(a.pred)) for a in res.assertions] \
        == [(RteKind.DIV_BY_ZERO, Status.PROVEN, "2 != 0"),
            (RteKind.DIV_BY_ZERO, Status.PROVEN, "100 != 0")]


def test_constant_arithmetic_needs_no_overflow_guard():
    res = run("int main() {\n  int a = 100 + 27;\n  return a;\n}\n", W32)
    assert res.assertions == []


def test_negation_guard_excludes_only_int_min():
    res = run("int main(int z) {\n  return -z;\n}\n", W8)
    (a,) = res.assertions
    assert a.kind == RteKind.SIGNED_OVERFLOW and a.status == Status.ALARM
    assert render_pred(a.pred) == "-127 <= z"


def test_dead_branch_guard_is_proven_and_unreached():
    res = run("int main() {\n  int x = 1;\n  if (x < 0) {\n"
              "    int y = 1 / 0;\n  }\n  return 0;\n}\n")
    (a,) = res.assertions
    assert a.kind == RteKind.DIV_BY_ZERO
    assert a.status == Status.PROVEN and a.reached is False


def test_loop_head_intervals_after_widening():
    res = run("int main() {\n  int i = 0;\n  while (i < 10) {\n"
              "    i = i + 1;\n  }\n  int r = 100 / (i - 11);\n"
              "  return r;\n}\n")
    assert res.loop_heads == {5: {"i": I(0, 10)}}
    assert [(a.id, a.kind, a.status) for a in res.assertions] == [
        ("rte1", RteKind.SIGNED_OVERFLOW, Status.PROVEN),
        ("rte2", RteKind.SIGNED_OVERFLOW, Status.PROVEN),
        ("rte3", RteKind.DIV_BY_ZERO, Status.PROVEN),
    ]


def test_call_results_are_havocked_to_full_width():
    res = run("int f(int x) {\n  return x;\n}\n"
              "int main() {\n  int a = f(3);\n  int b = 10 / a;\n"
              "  return b;\n}\n")
    (a,) = res.assertions
    assert (a.kind, a.status) == (RteKind.DIV_BY_ZERO, Status.ALARM)
    assert render_pred(a.pred) == "a != 0"


def test_unreachable_function_gets_no_assertions():
    res = run("int dead(int x) {\n  return 1 / x;\n}\n"
              "int main() {\n  return 0;\n}\n")
    assert res.assertions == []
    assert res.reachable == ["main"]


def test_interval_refinement_through_conditions():
    # the guard under `x != 0` must be discharged by the branch refinement
    res = run("int main(int x) {\n  if (x != 0) {\n    int y = 10 / x;\n"
              "    return y;\n  }\n  return 0;\n}\n")
    div = [a for a in res.assertions if a.kind == RteKind.DIV_BY_ZERO]
    # the hole at zero is not representable, so this stays an alarm;
    # refinement does show through one-sided bounds
    assert div[0].status == Status.ALARM
    res2 = run("int main(int x) {\n  if (x > 0) {\n    int y = 10 / x;\n"
               "    return y;\n  }\n  return 0;\n}\n")
    div2 = [a for a in res2.assertions if a.kind == RteKind.DIV_BY_ZERO]
    assert div2[0].status == Status.PROVEN
