"""Report construction, validation, and serialization.

The JSON report is the machine-readable truth of a run; the annotated source
and the CSV are projections of it.  Reports are built as plain dictionaries,
validated against the shipped schema, and dumped with sorted keys so that two
identical runs produce byte-identical files apart from the timing block.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .absint import INSTRUMENT_LABELS, AnalysisResult, RteAssertion
from .callgraph import VUnit
from .errors import ReportError
from .frontend.render import render as render_program
from .frontend.resolve import TypedProgram
from .specs import Clause, ClauseKind, render_clause, render_pred
from .synthesis import ContractStore, PipelineOutcome

REPORT_VERSION = 1


@dataclass
class RunConfig:
    """Echo of the effective configuration, embedded in every report."""

    width_bits: int = 32
    generator: str | None = None
    max_iters: int = 5
    continue_on_alert: bool = False
    dependency_filter: bool = True
    save_transcripts: bool = False

    def as_json(self) -> dict:
        return {
            "width": self.width_bits,
            "generator": self.generator,
            "max_iters": self.max_iters,
            "continue_on_alert": self.continue_on_alert,
            "dependency_filter": self.dependency_filter,
        }


def _schema() -> dict:
    text = resources.files("preguss").joinpath("report_schema.json").read_text()
    return json.loads(text)


def validate_report(doc: dict) -> None:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as e:
        raise ReportError(f"report does not match schema: {e.message}")


def _assertion_row(a: RteAssertion) -> dict:
    return {
        "id": a.id,
        "kind": a.kind.value,
        "host": a.host,
        "callee": a.callee,
        "node": a.node_id,
        "line": a.pos.line,
        "col": a.pos.col,
        "pred": render_pred(a.pred),
        "status": a.status.value,
        "reached": a.reached,
    }


def analysis_snapshot(assertions: list[RteAssertion]) -> dict:
    """The analysis section of a report.  Taken before queue processing,
    since verdicts overwrite assertion statuses in place."""

    by_kind: dict[str, int] = {}
    by_status: dict[str, int] = {}
    for a in assertions:
        by_kind[a.kind.value] = by_kind.get(a.kind.value, 0) + 1
        by_status[a.status.value] = by_status.get(a.status.value, 0) + 1
    return {
        "by_kind": by_kind,
        "by_status": by_status,
        "assertions": [_assertion_row(a) for a in assertions],
    }


def _program_section(path: str, source: str, tp: TypedProgram) -> dict:
    return {
        "path": path,
        "sha256": hashlib.sha256(source.encode()).hexdigest(),
        "entry": tp.entry,
        "functions": [f.name for f in tp.program.functions],
    }


def _queue_section(units: list[VUnit]) -> list[dict]:
    return [
        {
            "position": i + 1,
            "id": u.target.id,
            "kind": u.target.kind.value,
            "host": u.host,
            "node": u.target.node_id,
            "slice": list(u.slice_functions),
        }
        for i, u in enumerate(units)
    ]


def _contracts_section(store: ContractStore) -> tuple[dict, dict]:
    contracts = {
        fn: [render_clause(c) for c in contract.clauses()]
        for fn, contract in sorted(store.contracts.items())
        if not contract.is_trivial()
    }
    loops = {
        str(node): [render_clause(c) for c in clauses]
        for node, clauses in sorted(store.loop_clauses.items())
    }
    return contracts, loops


def instrumented_source(tp: TypedProgram,
                        assertions: list[RteAssertion]) -> str:
    """The input program with every guard assertion written back as an
    ACSL-style assert comment above its statement."""

    ann = [
        (a.node_id, Clause(ClauseKind.ASSERT, a.pred,
                           label=INSTRUMENT_LABELS[a.kind]))
        for a in assertions
    ]
    return render_program(tp.program, ann)


def annotated_source(tp: TypedProgram, store: ContractStore) -> str:
    """The input program annotated with the accepted contracts only."""

    ann: list[tuple[int, Clause]] = []
    for fn_name, contract in store.contracts.items():
        fn = tp.function(fn_name)
        ann.extend((fn.node_id, c) for c in contract.clauses())
    for node_id, clauses in store.loop_clauses.items():
        ann.extend((node_id, c) for c in clauses)
    return render_program(tp.program, ann)


def build_analyze_report(path: str, source: str, tp: TypedProgram,
                         config: RunConfig, analysis: AnalysisResult,
                         elapsed_s: float) -> dict:
    doc = {
        "version": REPORT_VERSION,
        "mode": "analyze",
        "program": _program_section(path, source, tp),
        "config": config.as_json(),
        "analysis": analysis_snapshot(list(analysis.assertions)),
        "queue": [],
        "verdicts": [],
        "skipped": [],
        "contracts": {},
        "loop_contracts": {},
        "events": [],
        "annotated_source": instrumented_source(tp,
                                                list(analysis.assertions)),
        "timing": {"elapsed_s": round(elapsed_s, 6)},
    }
    validate_report(doc)
    return doc


def build_run_report(path: str, source: str, tp: TypedProgram,
                     config: RunConfig, analysis_section: dict,
                     units: list[VUnit], outcome: PipelineOutcome,
                     elapsed_s: float) -> dict:
    verdicts = []
    for u in outcome.units:
        a = u.unit.target
        digests = [
            {
                "sha256": hashlib.sha256(
                    (t.request + "\n" + t.response).encode()).hexdigest(),
                "chars": len(t.request) + len(t.response),
            }
            for t in u.transcripts
        ]
        verdicts.append({
            "id": a.id,
            "kind": a.kind.value,
            "host": a.host,
            "line": a.pos.line,
            "col": a.pos.col,
            "pred": render_pred(a.pred),
            "verdict": u.verdict.value,
            "iterations": u.iterations,
            "phase": u.phase_reached.value if u.phase_reached else None,
            "witness": u.witness,
            "notes": list(u.notes),
            "vcs": [
                {
                    "id": vc.id,
                    "origin": vc.origin.value,
                    "outcome": r.outcome.value,
                    "method": r.method,
                    "condition": vc.render(),
                }
                for vc, r in zip(u.vcs, u.results)
            ],
            "accepted": [f"{e.where}: {e.clause}" for e in u.accepted],
            "transcript_digests": digests,
        })

    contracts, loops = _contracts_section(outcome.store)
    doc = {
        "version": REPORT_VERSION,
        "mode": "run",
        "program": _program_section(path, source, tp),
        "config": config.as_json(),
        "analysis": analysis_section,
        "queue": _queue_section(units),
        "verdicts": verdicts,
        "skipped": [u.target.id for u in outcome.skipped],
        "contracts": contracts,
        "loop_contracts": loops,
        "events": [
            {"kind": e.kind, "where": e.where, "clause": e.clause,
             "note": e.note}
            for e in outcome.store.events
        ],
        "annotated_source": annotated_source(tp, outcome.store),
        "timing": {"elapsed_s": round(elapsed_s, 6)},
    }
    if config.save_transcripts:
        doc["transcripts"] = [
            {
                "unit": u.unit.target.id,
                "phase": t.phase,
                "iteration": t.iteration,
                "request": t.request,
                "response": t.response,
            }
            for u in outcome.units
            for t in u.transcripts
        ]
    validate_report(doc)
    return doc


def report_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


CSV_COLUMNS = ["id", "kind", "host", "line", "col", "pred", "status",
               "verdict", "iterations", "witness"]


def report_csv(doc: dict) -> str:
    """One delimited row per assertion, joining analysis status with the
    verdict when the pipeline ran."""

    verdicts = {v["id"]: v for v in doc["verdicts"]}
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for a in doc["analysis"]["assertions"]:
        v = verdicts.get(a["id"])
        w.writerow({
            "id": a["id"],
            "kind": a["kind"],
            "host": a["host"],
            "line": a["line"],
            "col": a["col"],
            "pred": v["pred"] if v else a["pred"],
            "status": a["status"],
            "verdict": v["verdict"] if v else "",
            "iterations": v["iterations"] if v else "",
            "witness": json.dumps(v["witness"], sort_keys=True)
            if v and v["witness"] is not None else "",
        })
    return buf.getvalue()


def write_report(doc: dict, path: str | Path) -> list[Path]:
    """Write the JSON report and its CSV sibling; returns written paths."""

    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_json(doc))
    csv_path = out.with_suffix(".csv")
    csv_path.write_text(report_csv(doc))
    return [out, csv_path]


def write_figures(doc: dict, report_path: str | Path) -> list[Path]:
    """Render summary charts next to the report (opt-in; pulls matplotlib)."""

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out: list[Path] = []
    base = Path(report_path)

    def bar_chart(counts: dict[str, int], title: str, suffix: str) -> None:
        if not counts:
            return
        fig, ax = plt.subplots(figsize=(5, 3.2))
        names = sorted(counts)
        ax.bar(names, [counts[n] for n in names], color="#4878a8")
        ax.set_title(title)
        ax.set_ylabel("assertions")
        fig.tight_layout()
        path = base.with_name(base.stem + suffix + ".png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        out.append(path)

    bar_chart(doc["analysis"]["by_status"], "guard assertions by status",
              "_status")
    verdict_counts: dict[str, int] = {}
    for v in doc["verdicts"]:
        verdict_counts[v["verdict"]] = verdict_counts.get(v["verdict"], 0) + 1
    bar_chart(verdict_counts, "verdicts", "_verdicts")
    return out
