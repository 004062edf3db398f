"""Weakest-precondition generation and the tiered discharge engine."""

from __future__ import annotations

import pytest

from preguss import absint, callgraph
from preguss.errors import MissingLoopInvariant
from preguss.frontend import W8, W32, parse, resolve
from preguss.specs import (Contract, PCmp, TBin, TInt, TVar, pand,
                           parse_clause, render_pred)
from preguss.verifier import (VC, DischargeConfig, Hyp, InvalidLoopAssigns,
                              VcOrigin, VcOutcome, check_unit, discharge)

ECHO = ("int f(int x) {\n  return 100 / x;\n}\n"
        "int main() {\n  f(0);\n  f(5);\n  return 0;\n}\n")

LOOP = ("int main() {\n  int i = 0;\n  while (i < 10) {\n    i = i + 1;\n"
        "  }\n  int r = 100 / (i - 11);\n  return r;\n}\n")


def setup_program(src: str, width=W32):
    tp = resolve(parse(src))
    analysis = absint.analyze(tp, width)
    graph = callgraph.build_call_graph(tp)
    asserts = callgraph.collect_assertions(tp, analysis, graph)
    return tp, analysis, asserts


def mkvc(goal, hyps=(), width=W8, call_results=frozenset()):
    return VC("t.vc1", VcOrigin.TARGET,
              [h if isinstance(h, Hyp) else Hyp(h) for h in hyps],
              goal, width, 0, call_results=call_results)


# -- VC generation -----------------------------------------------------------

def test_guard_target_vc_uses_contract_requires():
    tp, analysis, _ = setup_program(ECHO)
    target = analysis.assertions[0]
    contracts = {"f": Contract(requires=(
        parse_clause("requires x != 0;").pred,))}
    chk = check_unit(tp, W32, "f", contracts, target=target)
    (vc,), (res,) = chk.vcs, chk.results
    assert vc.id == "rte1.vc1" and vc.origin == VcOrigin.TARGET
    assert render_pred(vc.goal) == "x != 0"
    assert [(render_pred(h.pred), sorted(h.tags)) for h in vc.hyps] == \
        [("x != 0", [("requires", "f", 0)])]
    assert res.outcome == VcOutcome.VALID and res.method == "tier1"
    assert sorted(res.used_tags) == [("requires", "f", 0)]
    assert chk.valid


def test_callsite_precondition_targets():
    tp, analysis, asserts = setup_program(ECHO)
    contracts = {"f": Contract(requires=(
        parse_clause("requires x != 0;").pred,))}
    out = {}
    for aid in ("cs1", "cs2"):
        target = next(a for a in asserts if a.id == aid)
        chk = check_unit(tp, W32, "main", contracts, target=target)
        (vc,), (res,) = chk.vcs, chk.results
        out[aid] = (render_pred(vc.goal), res.outcome, res.witness)
    assert out["cs1"] == ("0 != 0", VcOutcome.INVALID, {})
    assert out["cs2"] == ("5 != 0", VcOutcome.VALID, None)


def test_loop_requires_an_invariant():
    tp, analysis, _ = setup_program(LOOP)
    target = next(a for a in analysis.assertions
                  if a.kind == absint.RteKind.DIV_BY_ZERO)
    with pytest.raises(MissingLoopInvariant, match=r"loop node\(s\): 5"):
        check_unit(tp, W32, "main", {}, target=target)


def test_loop_invariant_yields_establish_preserve_target():
    tp, analysis, _ = setup_program(LOOP)
    target = next(a for a in analysis.assertions
                  if a.kind == absint.RteKind.DIV_BY_ZERO)
    loops = {5: (parse_clause("loop invariant 0 <= i && i <= 10;"),
                 parse_clause("loop assigns i;"))}
    chk = check_unit(tp, W32, "main", {}, loop_clauses=loops, target=target)
    rows = [(vc.id, vc.origin, res.outcome) for vc, res in
            zip(chk.vcs, chk.results)]
    assert rows == [
        ("rte3.vc1", VcOrigin.LOOP_ESTABLISH, VcOutcome.VALID),
        ("rte3.vc2", VcOrigin.LOOP_PRESERVE, VcOutcome.VALID),
        ("rte3.vc3", VcOrigin.TARGET, VcOutcome.VALID),
    ]
    # modified variables are replaced by fresh symbols after the loop
    assert render_pred(chk.vcs[2].goal) == "i_h1 - 11 != 0"
    assert ("invariant", 5, 0) in chk.results[2].used_tags


def test_assigns_clause_must_cover_written_variables():
    tp, analysis, _ = setup_program(LOOP)
    target = next(a for a in analysis.assertions
                  if a.kind == absint.RteKind.DIV_BY_ZERO)
    bad = {5: (parse_clause("loop invariant 0 <= i && i <= 10;"),
               parse_clause("loop assigns r;"))}
    with pytest.raises(InvalidLoopAssigns, match="misses written variables: i"):
        check_unit(tp, W32, "main", {}, loop_clauses=bad, target=target)


def test_assigns_clause_may_over_approximate():
    tp, analysis, _ = setup_program(LOOP)
    target = next(a for a in analysis.assertions
                  if a.kind == absint.RteKind.DIV_BY_ZERO)
    loose = {5: (parse_clause("loop invariant 0 <= i && i <= 10;"),
                 parse_clause("loop assigns i, r;"))}
    chk = check_unit(tp, W32, "main", {}, loop_clauses=loose, target=target)
    assert chk.valid


def test_ensures_establishment_vc():
    src = "int id(int x) {\n  return x;\n}\nint main() {\n  return id(3);\n}\n"
    tp = resolve(parse(src))
    cts = {"id": Contract(ensures=(parse_clause("ensures \\result == x;").pred,))}
    chk = check_unit(tp, W32, "id", cts, check_ensures=True)
    (vc,), (res,) = chk.vcs, chk.results
    assert vc.origin == VcOrigin.ENSURES
    assert render_pred(vc.goal) == "x == x"
    assert res.outcome == VcOutcome.VALID


def test_calls_havoc_result_and_assume_instantiated_contract():
    src = ("int f(int x) {\n  return 100 / x;\n}\n"
           "int main(int a) {\n  int v = f(a);\n  return 7 / v;\n}\n")
    tp, analysis, _ = setup_program(src)
    target = next(x for x in analysis.assertions
                  if x.host == "main" and x.kind == absint.RteKind.DIV_BY_ZERO)
    cts = {"f": Contract(requires=(parse_clause("requires x != 0;").pred,),
                         ensures=(parse_clause("ensures \\result == x;").pred,))}
    chk = check_unit(tp, W32, "main", cts, target=target)
    (vc,), (res,) = chk.vcs, chk.results
    assert sorted(vc.call_results) == ["r1"]
    assert render_pred(vc.goal) == "r1 != 0"
    assert [render_pred(h.pred) for h in vc.hyps] == ["a != 0", "r1 == a"]
    # tier 1 lacks equality chaining and tier 2 cannot enumerate 32-bit
    # ranges, so this honest gap surfaces as Unknown
    assert res.outcome == VcOutcome.UNKNOWN and res.method == "over-budget"
    chk8 = check_unit(resolve(parse(src)), W8, "main", cts, target=next(
        x for x in absint.analyze(resolve(parse(src)), W8).assertions
        if x.host == "main" and x.kind == absint.RteKind.DIV_BY_ZERO))
    assert chk8.results[0].outcome == VcOutcome.VALID
    assert chk8.results[0].method == "tier2"


# -- discharge tiers ---------------------------------------------------------

X = TVar("x")
NZ = PCmp("!=", X, TInt(0))


def test_tier1_verbatim_subsumption():
    # the interval domain cannot represent "everything but zero", so this
    # must go through syntactic matching
    res = discharge(mkvc(NZ, [NZ], width=W32))
    assert res.outcome == VcOutcome.VALID and res.method == "tier1"


def test_tier1_flipped_comparison_subsumption():
    res = discharge(mkvc(PCmp(">", X, TInt(0)),
                         [PCmp("<", TInt(0), X)], width=W32))
    assert res.outcome == VcOutcome.VALID and res.method == "tier1"


def test_tier1_contradictory_hypotheses_validate_anything():
    res = discharge(mkvc(PCmp("==", TInt(0), TInt(1)),
                         [PCmp("<", X, TInt(0)), PCmp(">", X, TInt(0))],
                         width=W32))
    assert res.outcome == VcOutcome.VALID


def test_tier1_constant_false_goal_is_invalid_with_empty_witness():
    res = discharge(mkvc(PCmp("!=", TInt(0), TInt(0)), width=W32))
    assert res.outcome == VcOutcome.INVALID and res.witness == {}


def test_nonsingleton_constant_factors_are_not_linearized():
    # regression: multiplying a havocked symbol by `16 % 11 % 19 * 11`
    # (whose interval is not a point) was once judged valid via a zero
    # multiplier picked off the interval's low bound
    prod = TBin("*", TVar("r1"),
                TBin("*", TBin("%", TBin("%", TInt(16), TInt(11)),
                               TInt(19)), TInt(11)))
    goal = pand(PCmp("<=", TInt(-128), prod), PCmp("<=", prod, TInt(127)))
    res = discharge(mkvc(goal, call_results=frozenset({"r1"})))
    assert res.outcome == VcOutcome.INVALID
    assert res.witness is not None
    v = res.witness["r1"] * 55
    assert not (-128 <= v <= 127)


def test_tier1_bounds_opaque_nonlinear_terms():
    goal = PCmp("<", TBin("*", X, X), TInt(100))
    ok = discharge(mkvc(goal, [PCmp("<=", TInt(0), X),
                               PCmp("<=", X, TInt(9))]))
    assert ok.outcome == VcOutcome.VALID and ok.method == "tier1"


def test_tier2_enumerates_and_witnesses():
    bounds = [PCmp("<=", TInt(0), X), PCmp("<=", X, TInt(20))]
    res = discharge(mkvc(PCmp("<", TBin("*", X, X), TInt(100)), bounds))
    assert res.outcome == VcOutcome.INVALID
    assert res.method == "tier2"
    assert res.witness["x"] * res.witness["x"] >= 100
    # 50 is not a square, which only the enumeration can see
    ok = discharge(mkvc(PCmp("!=", TBin("*", X, X), TInt(50)), bounds))
    assert ok.outcome == VcOutcome.VALID and ok.method == "tier2"


def test_tier2_budget_exhaustion_is_unknown():
    # x * y never hits a prime above the 8-bit square bound's factors
    goal = PCmp("!=", TBin("*", X, TVar("y")), TInt(7919))
    res = discharge(mkvc(goal), DischargeConfig(tier2_max_assignments=10))
    assert res.outcome == VcOutcome.UNKNOWN and res.method == "over-budget"
    full = discharge(mkvc(goal))
    assert full.outcome == VcOutcome.VALID and full.method == "tier2"


def test_unit_check_aggregates():
    tp, analysis, _ = setup_program(ECHO)
    contracts = {"f": Contract(requires=(
        parse_clause("requires x != 0;").pred,))}
    chk = check_unit(tp, W32, "f", contracts, target=analysis.assertions[0])
    assert chk.valid and chk.failing == []
