"""preguss: RTE guard analysis and interprocedural specification synthesis
for a small C subset.

The pipeline has three stages: an interval-domain analyzer that plants
runtime-error guard assertions, a scheduler that turns them into prioritized
verification units over two-layer program slices, and a synthesis loop that
asks a generator backend for contracts until a weakest-precondition verifier
certifies each assertion, refutes it with a witness, or gives up with an
alert.

The usual embedding looks like::

    from preguss import analyze_source, run_pipeline

    outcome = run_pipeline(source_text)
    for unit in outcome.units:
        print(unit.target.id, unit.verdict.value)
"""

from __future__ import annotations

__version__ = "0.1.0"

from .absint import AnalysisResult, Interval, RteAssertion, RteKind, Status
from .callgraph import (CallGraph, VUnit, build_call_graph, build_units,
                        collect_assertions, dump_queue, post_order)
from .errors import (AnalysisBudgetError, GeneratorError, MiniCSyntaxError,
                     MissingLoopInvariant, MutualRecursionError, PregussError,
                     ProhibitedRequiresError, ReportError, ResolveError,
                     SmtError, SpecSyntaxError)
from .frontend import W8, W16, W32, IntWidth, parse, resolve, width_from_bits
from .frontend.resolve import TypedProgram
from .specs import Clause, ClauseKind, Contract, Predicate, Term, parse_clause
from .synthesis import (ContractStore, GeneratorRequest, GeneratorResponse,
                        OracleGenerator, Phase, PipelineOutcome,
                        SynthesisConfig, UnitOutcome, Verdict, process_queue)
from .verifier import (VC, DischargeConfig, GenConfig, UnitCheck, VcOutcome,
                       VcResult, check_unit, discharge, gen_vcs, wp)

from . import absint, callgraph, report, smt, specs, synthesis, verifier


def analyze_source(source: str, width: IntWidth = W32,
                   file: str = "<input>") -> tuple[TypedProgram, AnalysisResult]:
    """Parse, resolve, and abstractly interpret a program."""

    tp = resolve(parse(source, file=file))
    return tp, absint.analyze(tp, width)


def run_pipeline(source: str, width: IntWidth = W32, generator=None,
                 config: SynthesisConfig | None = None,
                 dependency_filter: bool = True,
                 file: str = "<input>") -> PipelineOutcome:
    """Full pipeline over source text with the oracle backend by default."""

    tp, analysis = analyze_source(source, width, file)
    graph = build_call_graph(tp)
    assertions = collect_assertions(tp, analysis, graph)
    units = build_units(tp, graph, analysis, assertions,
                        dependency_filter=dependency_filter)
    gen = generator if generator is not None else OracleGenerator()
    return process_queue(tp, width, analysis, units, gen, config=config)
