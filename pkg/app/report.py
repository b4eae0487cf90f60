"""
Report assembly from a pipeline result.

Expressions are printed in canonical form and constraints keep their
discovery order, so two runs on the same model render identically.
"""
from app.conjecture import conjecture_summary, render_report
from app.expr import to_text
from app.linalg import Matrix
from app.models import AnalysisReport, BracketTables, ClassBlock, OutputFormat
from app.stages import PipelineResult


def _table(table: Matrix) -> list[list[str]]:
    return [[to_text(entry) for entry in row] for row in table]


def build_report(result: PipelineResult) -> AnalysisReport:
    """Collect the serializable report of one pipeline run."""
    state = result.state
    report = AnalysisReport(model=state.model.name, notes=list(state.notes))
    la = state.lagrangian
    if la is not None:
        report.rank = la.rank
        report.null_count = la.null_count
        report.lagrangian_constraints = [
            (level, to_text(c)) for level, cs in enumerate(la.constraints, start=1) for c in cs
        ]
    can = state.canonical
    if can is not None:
        report.primaries = [to_text(p) for p in can.primaries]
        report.hamiltonian = to_text(can.hamiltonian)
        report.secondaries = [
            (level, to_text(c)) for level, cs in enumerate(can.secondaries, start=1) for c in cs
        ]
        report.class_ = ClassBlock(
            first=[can.name_of(c) for c in can.class_split.first],
            second=[can.name_of(c) for c in can.class_split.second],
        )
    if state.poisson_table is not None and state.m_table is not None:
        report.class_ia = state.class_ia
        report.brackets = BracketTables(
            poisson=_table(state.poisson_table), m=_table(state.m_table)
        )
    if state.conjecture is not None:
        report.conjecture = conjecture_summary(state.conjecture)
    return report


def render_text(result: PipelineResult) -> str:
    """Human-readable report of one pipeline run."""
    state = result.state
    m = state.model
    lines = [f"model: {m.name}", f"lagrangian: {to_text(m.lagrangian)}"]
    la = state.lagrangian
    if la is not None:
        lines.append(f"rank: {la.rank}, null directions: {la.null_count}")
        for k, row in enumerate(la.z, start=1):
            lines.append(f"  z{k}: [{', '.join(to_text(a) for a in row)}]")
        for level, cs in enumerate(la.constraints, start=1):
            lines.append(f"LC level {level}: {', '.join(to_text(c) for c in cs) or '-'}")
    can = state.canonical
    if can is not None:
        lines.append("velocity solution:")
        lines += [f"  {u} = {to_text(e)}" for u, e in zip(m.velocities, can.uhat)]
        lines.append(f"hamiltonian: {to_text(can.hamiltonian)}")
        for c in can.constraints:
            lines.append(f"  {c.name} (level {c.level}): {to_text(c.expr)}")
        lines.append(
            f"first class: {', '.join(can.name_of(c) for c in can.class_split.first) or '-'}"
        )
        lines.append(
            f"second class: {', '.join(can.name_of(c) for c in can.class_split.second) or '-'}"
        )
    if state.m_table is not None and can is not None:
        names = [c.name for c in can.constraints]
        lines.append("M-brackets:")
        for i, row in enumerate(state.m_table):
            for j in range(i, len(row)):
                if row[j] != 0:
                    lines.append(f"  {{{names[i]}, {names[j]}}}_M = {to_text(row[j])}")
        lines.append(f"class IA: {state.class_ia}")
    if state.conjecture is not None:
        if state.dtr is not None:
            lines.append(f"Q = {to_text(state.dtr.q)}")
        lines.append(render_report(state.conjecture, OutputFormat.TEXT))
    for output in result.outputs:
        lines.append(f"[{output.stage.value}] {output.execution_time_ms:.0f} ms")
    lines += [f"note: {n}" for n in state.notes]
    return "\n".join(lines)
