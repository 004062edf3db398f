"""Report documents: schema validity, determinism, CSV and figure output."""

from __future__ import annotations

import json

import pytest

from preguss import absint, callgraph, report
from preguss.errors import ReportError
from preguss.frontend import W32, parse, resolve
from preguss.synthesis import OracleGenerator, SynthesisConfig, process_queue


def analyze_doc(path="samples/abs.mc", width=W32):
    src = open(path).read()
    tp = resolve(parse(src))
    analysis = absint.analyze(tp, width)
    cfg = report.RunConfig(width_bits=width.bits, generator=None)
    return report.build_analyze_report(path, src, tp, cfg, analysis, 0.01)


def run_doc(path="samples/abs.mc", width=W32, save_transcripts=False):
    src = open(path).read()
    tp = resolve(parse(src))
    analysis = absint.analyze(tp, width)
    graph = callgraph.build_call_graph(tp)
    asserts = callgraph.collect_assertions(tp, analysis, graph)
    units = callgraph.build_units(tp, graph, analysis, asserts)
    snap = report.analysis_snapshot(asserts)
    out = process_queue(
        tp, width, analysis, units, OracleGenerator(),
        config=SynthesisConfig(save_transcripts=save_transcripts))
    cfg = report.RunConfig(width_bits=width.bits, generator="oracle",
                           save_transcripts=save_transcripts)
    return report.build_run_report(path, src, tp, cfg, snap, units, out, 0.02)


def test_analyze_report_sections():
    doc = analyze_doc()
    assert doc["mode"] == "analyze" and doc["version"] == 1
    assert doc["queue"] == [] and doc["verdicts"] == []
    assert doc["contracts"] == {} and doc["events"] == []
    assert doc["analysis"]["by_kind"] == {"SignedOverflow": 1}
    assert doc["analysis"]["by_status"] == {"Alarm": 1}
    (row,) = doc["analysis"]["assertions"]
    assert row == {
        "id": "rte1", "kind": "SignedOverflow", "host": "abs", "callee": None,
        "node": 10, "line": 4, "col": 16, "pred": "-2147483647 <= x",
        "status": "Alarm", "reached": True,
    }
    assert doc["program"]["entry"] == "main"
    assert doc["program"]["functions"] == ["abs", "main"]
    assert len(doc["program"]["sha256"]) == 64


def test_instrumented_source_carries_guard_asserts():
    doc = analyze_doc()
    assert "/*@ assert overflow: -2147483647 <= x; */" in \
        doc["annotated_source"]
    # the guard sits on its own line directly above the guarded statement
    lines = doc["annotated_source"].splitlines()
    i = lines.index("        /*@ assert overflow: -2147483647 <= x; */")
    assert lines[i + 1] == "        return -x;"


def test_run_report_sections():
    doc = run_doc()
    assert doc["mode"] == "run"
    assert [(q["position"], q["id"], q["host"], q["slice"])
            for q in doc["queue"]] == [
        (1, "rte1", "abs", ["abs"]),
        (2, "cs1", "main", ["main", "abs"]),
        (3, "cs2", "main", ["main", "abs"]),
    ]
    assert [(v["id"], v["verdict"], v["iterations"], v["phase"], v["witness"])
            for v in doc["verdicts"]] == [
        ("rte1", "Certified", 1, "host", None),
        ("cs1", "Certified", 0, None, None),
        ("cs2", "DefinitiveRTE", 1, "host", {}),
    ]
    assert doc["contracts"] == {"abs": ["requires -2147483647 <= x;"]}
    assert doc["loop_contracts"] == {} and doc["skipped"] == []
    assert [e["kind"] for e in doc["events"]] == ["added", "prohibited"]
    assert doc["annotated_source"].startswith(
        "/*@ requires -2147483647 <= x; */\nint abs(int x) {")


def test_run_report_keeps_the_pre_run_analysis_snapshot():
    doc = run_doc()
    statuses = {a["id"]: a["status"] for a in doc["analysis"]["assertions"]}
    # call-site rows were Pending when the snapshot was taken, and the
    # verdicts section carries the final word
    assert statuses == {"rte1": "Alarm", "cs1": "Pending", "cs2": "Pending"}


CSV_GOLDEN = """\
id,kind,host,line,col,pred,status,verdict,iterations,witness
rte1,SignedOverflow,abs,4,16,-2147483647 <= x,Alarm,Certified,1,
cs1,CallSitePrecondition,main,9,13,-2147483647 <= 42,Pending,Certified,0,
cs2,CallSitePrecondition,main,10,13,-2147483647 <= -2147483648,Pending,DefinitiveRTE,1,{}
"""


def test_csv_golden():
    assert report.report_csv(run_doc()) == CSV_GOLDEN


def test_csv_for_analyze_mode_has_empty_verdict_columns():
    text = report.report_csv(analyze_doc())
    rows = text.splitlines()
    assert rows[0] == ",".join(report.CSV_COLUMNS)
    assert rows[1].endswith(",Alarm,,,")


def test_reports_are_deterministic_modulo_timing():
    a, b = run_doc(), run_doc()
    assert "elapsed_s" in a.pop("timing")
    b.pop("timing")
    assert report.report_json(a) == report.report_json(b)


def test_validate_rejects_malformed_documents():
    doc = run_doc()
    doc["verdicts"] = "nope"
    with pytest.raises(ReportError, match="does not match schema"):
        report.validate_report(doc)


def test_missing_section_fails_validation():
    doc = analyze_doc()
    del doc["analysis"]
    with pytest.raises(ReportError):
        report.validate_report(doc)


def test_write_report_places_csv_next_to_json(tmp_path):
    doc = run_doc()
    target = tmp_path / "out" / "abs.json"
    written = report.write_report(doc, target)
    assert written == [target, tmp_path / "out" / "abs.csv"]
    assert json.loads(target.read_text())["mode"] == "run"
    assert (tmp_path / "out" / "abs.csv").read_text() == CSV_GOLDEN


def test_figures_are_rendered_alongside_the_report(tmp_path):
    doc = run_doc()
    target = tmp_path / "abs.json"
    report.write_report(doc, target)
    figures = report.write_figures(doc, target)
    assert [p.name for p in figures] == ["abs_status.png", "abs_verdicts.png"]
    assert all(p.stat().st_size > 0 for p in figures)


def test_analyze_figures_skip_the_verdict_chart(tmp_path):
    doc = analyze_doc()
    figures = report.write_figures(doc, tmp_path / "abs.json")
    assert [p.name for p in figures] == ["abs_status.png"]


def test_transcripts_included_only_when_requested():
    doc = run_doc("samples/id.mc", save_transcripts=True)
    assert [t["unit"] for t in doc["transcripts"]] == ["rte1", "rte1"]
    assert [t["phase"] for t in doc["transcripts"]] == ["host", "callees"]
    assert doc["transcripts"][1]["response"] == "id: ensures \\result == x;"

    plain = run_doc("samples/id.mc")
    assert "transcripts" not in plain
    # digests always summarize the exchange without embedding it
    rte1 = next(v for v in plain["verdicts"] if v["id"] == "rte1")
    assert len(rte1["transcript_digests"]) == 2
    assert all(d["chars"] > 0 and len(d["sha256"]) == 64
               for d in rte1["transcript_digests"])
