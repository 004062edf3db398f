"""SMT-LIB export and the optional external solver bridge.

Every condition is closed over width-bounded integer variables, so the
encoding is plain integer arithmetic: QF_LIA, or QF_NIA as soon as a
multiplication of variables or a division appears.  C division truncates
toward zero while SMT-LIB division is Euclidean, so both operators go through
shim functions over non-negative operands, where the two styles agree.
"""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
from pathlib import Path

from .errors import SmtError
from .frontend.syntax import IntWidth
from .specs import (PAnd, PBool, PCmp, PImplies, PNot, POr, Predicate, TBin,
                    TInt, TNeg, TOld, TVar, TWidthConst, Term, subterms)
from .verifier import VC, VcOutcome

_TDIV = """(define-fun tdiv ((a Int) (b Int)) Int
  (ite (>= a 0)
    (ite (>= b 0) (div a b) (- (div a (- b))))
    (ite (>= b 0) (- (div (- a) b)) (div (- a) (- b)))))"""

_TMOD = "(define-fun tmod ((a Int) (b Int)) Int (- a (* b (tdiv a b))))"


def _smt_int(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


def _smt_term(t: Term, width: IntWidth) -> str:
    match t:
        case TInt(value=v):
            return _smt_int(v)
        case TWidthConst(name=n):
            return _smt_int(width.min if n == "INT_MIN" else width.max)
        case TVar(name=n):
            return n
        case TOld(name=n):
            raise SmtError(f"\\old({n}) must be instantiated before export")
        case TNeg(operand=o):
            return f"(- {_smt_term(o, width)})"
        case TBin(op=op, lhs=l, rhs=r):
            a, b = _smt_term(l, width), _smt_term(r, width)
            match op:
                case "+" | "-" | "*":
                    return f"({op} {a} {b})"
                case "/":
                    return f"(tdiv {a} {b})"
                case "%":
                    return f"(tmod {a} {b})"
    raise SmtError(f"cannot export term {t!r}")


def _smt_pred(p: Predicate, width: IntWidth) -> str:
    match p:
        case PBool(value=v):
            return "true" if v else "false"
        case PCmp(op=op, lhs=l, rhs=r):
            a, b = _smt_term(l, width), _smt_term(r, width)
            sop = {"==": "=", "!=": "distinct"}.get(op, op)
            return f"({sop} {a} {b})"
        case PNot(operand=o):
            return f"(not {_smt_pred(o, width)})"
        case PAnd(lhs=l, rhs=r):
            return f"(and {_smt_pred(l, width)} {_smt_pred(r, width)})"
        case POr(lhs=l, rhs=r):
            return f"(or {_smt_pred(l, width)} {_smt_pred(r, width)})"
        case PImplies(lhs=l, rhs=r):
            return f"(=> {_smt_pred(l, width)} {_smt_pred(r, width)})"
    raise SmtError(f"cannot export predicate {p!r}")


def export_vc(vc: VC) -> str:
    """Render one condition as an SMT-LIB v2 script.

    The script asserts the hypotheses together with the negated goal: unsat
    means the condition is valid, a model is a counterexample.
    """

    width = vc.width
    lines = [
        f"; {vc.id}: {vc.description}".rstrip().rstrip(":"),
        "(set-option :produce-models true)",
        f"(set-logic {'QF_NIA' if vc.is_nonlinear else 'QF_LIA'})",
    ]
    preds = [h.pred for h in vc.hyps] + [vc.goal]
    needs_div = any(isinstance(t, TBin) and t.op in ("/", "%")
                    for p in preds for t in subterms(p))
    if needs_div:
        lines.append(_TDIV)
        lines.append(_TMOD)
    for v in vc.variables():
        lines.append(f"(declare-const {v} Int)")
        lines.append(f"(assert (and (<= {_smt_int(width.min)} {v}) "
                     f"(<= {v} {_smt_int(width.max)})))")
    for h in vc.hyps:
        lines.append(f"(assert {_smt_pred(h.pred, width)})")
    lines.append(f"(assert (not {_smt_pred(vc.goal, width)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


_MODEL_RE = re.compile(
    r"define-fun\s+(\S+)\s*\(\s*\)\s+Int\s+(\(-\s*\d+\)|-?\d+)")


def _parse_model(text: str) -> dict[str, int]:
    model = {}
    for name, raw in _MODEL_RE.findall(text):
        raw = raw.strip()
        if raw.startswith("("):
            model[name] = -int(raw.strip("()- \t"))
        else:
            model[name] = int(raw)
    return model


def solve(vc: VC, solver_cmd: str,
          timeout: float = 20.0) -> tuple[VcOutcome, dict[str, int] | None]:
    """Run an external solver over the exported condition.

    ``solver_cmd`` is a shell-split command; the script path is appended.
    """

    script = export_vc(vc)
    with tempfile.NamedTemporaryFile("w", suffix=".smt2", delete=False) as f:
        f.write(script)
        path = f.name
    try:
        proc = subprocess.run(
            shlex.split(solver_cmd) + [path],
            capture_output=True, text=True, timeout=timeout)
    except (subprocess.TimeoutExpired, OSError) as exc:
        raise SmtError(f"solver failed: {exc}") from exc
    finally:
        Path(path).unlink(missing_ok=True)

    out = proc.stdout.strip().splitlines()
    verdict = out[0].strip() if out else ""
    if verdict == "unsat":
        return VcOutcome.VALID, None
    if verdict == "sat":
        return VcOutcome.INVALID, _parse_model(proc.stdout)
    if verdict == "unknown":
        return VcOutcome.UNKNOWN, None
    raise SmtError(
        f"solver produced no verdict (stdout: {proc.stdout[:200]!r}, "
        f"stderr: {proc.stderr[:200]!r})")
