"""Command line entry points.

Three commands share one pipeline:

* ``preguss analyze FILE`` runs the abstract interpreter only and reports
  guard assertions (exit 1 when alarms remain).
* ``preguss run FILE`` runs the full synthesis loop (exit 1 when any
  assertion ends as DefinitiveRTE or HighRiskAlert).
* ``preguss export-smt FILE`` writes the verification conditions of one or
  all assertions as SMT-LIB v2 files.

Pipeline errors (syntax, resolution, recursion, budget, transport) exit 2
with a diagnostic on stderr.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click

from . import absint, callgraph, report, smt, synthesis
from .errors import PregussError
from .frontend import parse, resolve, width_from_bits
from .frontend.resolve import TypedProgram
from .frontend.syntax import IntWidth


@dataclass
class _Loaded:
    path: str
    source: str
    tp: TypedProgram
    width: IntWidth
    analysis: absint.AnalysisResult
    graph: callgraph.CallGraph
    assertions: list[absint.RteAssertion]
    units: list[callgraph.VUnit]


def _load(path: str, width_bits: int, dependency_filter: bool) -> _Loaded:
    source = Path(path).read_text()
    tp = resolve(parse(source, file=path))
    width = width_from_bits(width_bits)
    analysis = absint.analyze(tp, width)
    graph = callgraph.build_call_graph(tp)
    assertions = callgraph.collect_assertions(tp, analysis, graph)
    units = callgraph.build_units(tp, graph, analysis, assertions,
                                  dependency_filter=dependency_filter)
    return _Loaded(path, source, tp, width, analysis, graph, assertions,
                   units)


def _make_generator(name: str, llm_url: str | None, llm_model: str | None):
    if name == "oracle":
        return synthesis.OracleGenerator()
    from .llm import LlmConfig, LlmGenerator

    return LlmGenerator(LlmConfig.from_env(base_url=llm_url, model=llm_model))


def _emit_report(doc: dict, report_path: str | None, figures: bool) -> None:
    if report_path:
        written = report.write_report(doc, report_path)
        if figures:
            written += report.write_figures(doc, report_path)
        for p in written:
            click.echo(f"wrote {p}", err=True)
    else:
        click.echo(report.report_json(doc), nl=False)


def _write_annotated(doc: dict, annotated: str | None) -> None:
    if annotated:
        Path(annotated).write_text(doc["annotated_source"])
        click.echo(f"wrote {annotated}", err=True)


_WIDTH = click.option("--width", type=click.Choice(["8", "16", "32"]),
                      default="32", show_default=True,
                      help="Bit width of the int type.")
_REPORT = click.option("--report", "report_path", type=click.Path(),
                       default=None,
                       help="Report file path (JSON; a CSV sibling is "
                            "written next to it). Defaults to stdout.")
_ANNOTATED = click.option("--annotated", type=click.Path(), default=None,
                          help="Also write the annotated source to a file.")
_FIGURES = click.option("--figures", is_flag=True,
                        help="Render summary charts next to the report.")
_NO_DEP = click.option("--no-dependency-filter", is_flag=True,
                       help="Keep all direct callees in every slice.")


@click.group()
@click.version_option(package_name="preguss")
def main() -> None:
    """Static RTE analysis with specification synthesis for MiniC."""


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@_WIDTH
@_REPORT
@_ANNOTATED
@_FIGURES
def analyze(file: str, width: str, report_path: str | None,
            annotated: str | None, figures: bool) -> None:
    """Run the abstract interpreter and report guard assertions."""

    started = time.monotonic()
    try:
        loaded = _load(file, int(width), dependency_filter=True)
        cfg = report.RunConfig(width_bits=int(width))
        doc = report.build_analyze_report(
            file, loaded.source, loaded.tp, cfg, loaded.analysis,
            elapsed_s=time.monotonic() - started)
    except PregussError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    _emit_report(doc, report_path, figures)
    _write_annotated(doc, annotated)
    alarms = doc["analysis"]["by_status"].get("Alarm", 0)
    sys.exit(1 if alarms else 0)


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@_WIDTH
@_REPORT
@_ANNOTATED
@_FIGURES
@_NO_DEP
@click.option("--generator", type=click.Choice(["oracle", "llm"]),
              default="oracle", show_default=True,
              help="Specification generator backend.")
@click.option("--max-iters", type=click.IntRange(min=1), default=5,
              show_default=True, help="Refinement iterations per phase.")
@click.option("--continue-on-alert", is_flag=True,
              help="Keep processing the queue after a HighRiskAlert.")
@click.option("--save-transcripts", is_flag=True,
              help="Embed full generator transcripts in the report.")
@click.option("--dump-queue", is_flag=True,
              help="Print the verification unit queue before processing.")
@click.option("--llm-url", default=None,
              help="LLM endpoint base URL (overrides PREGUSS_LLM_URL).")
@click.option("--llm-model", default=None,
              help="LLM model name (overrides PREGUSS_LLM_MODEL).")
def run(file: str, width: str, report_path: str | None,
        annotated: str | None, figures: bool, no_dependency_filter: bool,
        generator: str, max_iters: int, continue_on_alert: bool,
        save_transcripts: bool, dump_queue: bool, llm_url: str | None,
        llm_model: str | None) -> None:
    """Run the full analysis + synthesis + verification pipeline."""

    started = time.monotonic()
    try:
        loaded = _load(file, int(width),
                       dependency_filter=not no_dependency_filter)
        if dump_queue:
            click.echo(callgraph.dump_queue(loaded.units))
        analysis_section = report.analysis_snapshot(loaded.assertions)
        gen = _make_generator(generator, llm_url, llm_model)
        syn_cfg = synthesis.SynthesisConfig(
            max_iters=max_iters, continue_on_alert=continue_on_alert,
            save_transcripts=save_transcripts)
        outcome = synthesis.process_queue(
            loaded.tp, loaded.width, loaded.analysis, loaded.units, gen,
            config=syn_cfg)
        cfg = report.RunConfig(
            width_bits=int(width), generator=generator, max_iters=max_iters,
            continue_on_alert=continue_on_alert,
            dependency_filter=not no_dependency_filter,
            save_transcripts=save_transcripts)
        doc = report.build_run_report(
            file, loaded.source, loaded.tp, cfg, analysis_section,
            loaded.units, outcome, elapsed_s=time.monotonic() - started)
    except PregussError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    _emit_report(doc, report_path, figures)
    _write_annotated(doc, annotated)
    bad = any(v["verdict"] != "Certified" for v in doc["verdicts"])
    sys.exit(1 if bad or doc["skipped"] else 0)


@main.command("export-smt")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@_WIDTH
@_NO_DEP
@click.option("--assertion", "assertion_id", default=None,
              help="Export only this assertion's unit (default: all).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="smt-out", show_default=True,
              help="Output directory for .smt2 files.")
def export_smt(file: str, width: str, no_dependency_filter: bool,
               assertion_id: str | None, out_dir: str) -> None:
    """Write each verification condition as an SMT-LIB v2 file."""

    try:
        loaded = _load(file, int(width),
                       dependency_filter=not no_dependency_filter)
        units = loaded.units
        if assertion_id is not None:
            units = [u for u in units if u.target.id == assertion_id]
            if not units:
                raise PregussError(f"no assertion with id {assertion_id!r}")
        written = export_units(loaded, units, Path(out_dir))
    except PregussError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    for p in written:
        click.echo(f"wrote {p}", err=True)
    sys.exit(0)


def export_units(loaded: _Loaded, units: list[callgraph.VUnit],
                 out_dir: Path) -> list[Path]:
    """VC export used by the export-smt command; contracts are synthesized
    with the oracle first so the exported conditions match a real run."""

    outcome = synthesis.process_queue(
        loaded.tp, loaded.width, loaded.analysis, loaded.units,
        synthesis.OracleGenerator(),
        config=synthesis.SynthesisConfig(continue_on_alert=True))
    by_id = {u.unit.target.id: u for u in outcome.units}

    written: list[Path] = []
    if not units:
        return written
    out_dir.mkdir(parents=True, exist_ok=True)
    for unit in units:
        result = by_id.get(unit.target.id)
        if result is None:
            continue
        for vc in result.vcs:
            path = out_dir / f"{vc.id.replace('.', '_')}.smt2"
            path.write_text(smt.export_vc(vc))
            written.append(path)
    return written


if __name__ == "__main__":
    main()
