"""
Dirac transformations and the physical-equivalence (PETR) test.

A DTR is generated by Q, a combination of first-class constraints with one
tau-dependent parameter each. Q is extended by xi^m z^(m) . pi along the
unphysical directions; the DTR is a PETR when some xi makes both families
of conditions vanish modulo all constraints:

- cond1, per secondary chi: {chi, Q-hat} + {chi, Q-hat~}_M
- cond2, per momentum pi_A: {pi_A, Q-hat~} + ({pi_A, Q-hat~}_M)~ - {pi_A~, Q-hat~}_EM

Residuals must vanish identically in the physical phase-space variables, so
each residual is split into one equation per monomial in them. What no xi
can remove is retried with the unphysical coordinates replaced by free
auxiliaries Xi^m; what still survives decides the verdict.
"""
import json
import logging
from typing import Optional, Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from app.brackets import BracketContext, em_bracket, is_class_IA, m_bracket, poisson
from app.canonical import CanAnalysis, tilde_mod_primaries
from app.core.exceptions import DecompositionFailed, Inconclusive, SecondClassPresent, VerificationFailed
from app.expr import (
    Auxiliary,
    Coordinate,
    Expr,
    Momentum,
    Parameter,
    Placeholder,
    Unknown,
    constraint_form,
    divide_by_ideal,
    free_function_terms,
    in_ideal,
    is_zero,
    normalize,
    parameters_of,
    reduce_mod_ideal,
    split_by_monomials,
    substitute,
    symbol_sort_key,
    time_derivative,
    to_text,
)
from app.lagrangian import LagAnalysis
from app.linalg import solve_linear
from app.models import OutputFormat, Verdict
from app.parser import Model

logger = logging.getLogger(__name__)

NOTES = [
    "parameters and xi are functions of tau; xi may also depend on the unphysical "
    "coordinates and on theta",
    "secondary constraints of order k+1 are reduced modulo every lower order, primaries included",
    "Q-hat~ enters the conditions reduced modulo the primary constraints",
]


class DtrGenerator(BaseModel):
    """
    Generator Q of a Dirac transformation.

    Attributes:
        q: Q, linear and homogeneous in the constraints
        parameters: Parameters introduced, in constraint order
        primary_parameters: Parameters multiplying primary constraints
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: Expr
    parameters: list[Parameter]
    primary_parameters: list[Parameter] = Field(default_factory=list)


class QTildeTerm(BaseModel):
    """Coefficient of one constraint (or radical) in Q~ modulo phi."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    constraint: Expr
    coefficient: Expr


class CgtrRelation(BaseModel):
    """One relation among parameters making Q a canonical gauge transformation."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    equation: Expr
    parameter: Optional[Parameter] = None
    value: Optional[Expr] = None

    def text(self) -> str:
        if self.parameter is None or self.value is None:
            return f"{to_text(self.equation)} = 0"
        return f"{to_text(self.parameter)} = {to_text(self.value)}"


class ConjectureReport(BaseModel):
    """Everything petr_check learned about one DTR."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    class_ia: bool
    qtilde_decomposition: list[QTildeTerm] = Field(default_factory=list)
    cond1_residuals: dict[str, Expr] = Field(default_factory=dict)
    cond2_residuals: dict[str, Expr] = Field(default_factory=dict)
    xi_solution: dict[str, Expr] = Field(default_factory=dict)
    Xi_equations: list[Expr] = Field(default_factory=list)
    verdict: Verdict
    witness: Optional[Expr] = None
    locus: list[Expr] = Field(default_factory=list)
    reason: Optional[str] = None
    cgtr_family: list[CgtrRelation] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)


# ============================================================================
# Generators
# ============================================================================

def _numbered(prefix: str, count: int) -> list[str]:
    return [prefix] if count == 1 else [f"{prefix}{i}" for i in range(1, count + 1)]


def build_dtr(can: CanAnalysis, m: Model) -> DtrGenerator:
    """
    Build a DTR generator.

    A model's ``dtr`` directive is used when present and must lie in the
    constraint ideal. Otherwise each primary gets ``eta``/``eta<i>`` and each
    secondary ``eps``/``eps<i>``.

    Raises:
        SecondClassPresent: If any constraint is second class
        VerificationFailed: If the model's dtr is not a combination of constraints
    """
    if can.second_class:
        raise SecondClassPresent(
            f"{len(can.class_split.second)} second-class constraint(s); conjecture analysis refused"
        )
    if m.dtr is not None:
        if reduce_mod_ideal(m.dtr, can.all_constraints) != 0:
            raise VerificationFailed(f"dtr {to_text(m.dtr)} does not vanish on the constraints")
        parameters = parameters_of(m.dtr)
        primary = [p for p in parameters if in_ideal(sp.diff(m.dtr, p), can.primaries)]
        return DtrGenerator(q=m.dtr, parameters=parameters, primary_parameters=primary)

    etas = [Parameter(n) for n in _numbered("eta", len(can.primaries))]
    epss = [Parameter(n) for n in _numbered("eps", len(can.flat_secondaries))]
    q = sp.Add(*[e * c for e, c in zip(etas, can.primaries)])
    q += sp.Add(*[e * c for e, c in zip(epss, can.flat_secondaries)])
    return DtrGenerator(q=normalize(q), parameters=[*epss, *etas], primary_parameters=etas)


def _develop(F: Expr, can: CanAnalysis, m: Model) -> Expr:
    return tilde_mod_primaries(F, can.hamiltonian, can.split, m)


def q_tilde_decompose(dtr: DtrGenerator, can: CanAnalysis, m: Model) -> list[QTildeTerm]:
    """
    Write Q~ modulo phi over the secondary constraints.

    Coefficients may themselves contain constraints, which captures terms
    quadratic in them. Radicals of constraints appear as extra terms.

    Raises:
        DecompositionFailed: If a remainder survives the division
    """
    reduced = reduce_mod_ideal(_develop(dtr.q, can, m), can.primaries)
    secondaries = can.flat_secondaries
    quotients, radicals, remainder = divide_by_ideal(reduced, secondaries)
    if not is_zero(remainder):
        raise DecompositionFailed(to_text(remainder))
    terms = [
        QTildeTerm(name=can.name_of(c), constraint=c, coefficient=q)
        for c, q in zip(secondaries, quotients)
    ]
    terms += [
        QTildeTerm(name=to_text(r), constraint=r, coefficient=q) for r, q in radicals.items()
    ]
    return terms


def is_cgtr(dtr: DtrGenerator, can: CanAnalysis, m: Model) -> bool:
    """True iff Q~ vanishes modulo the primary constraints."""
    return reduce_mod_ideal(_develop(dtr.q, can, m), can.primaries) == 0


def cgtr_family(
    dtr: DtrGenerator, can: CanAnalysis, m: Model, terms: Optional[Sequence[QTildeTerm]] = None
) -> list[CgtrRelation]:
    """
    Relations among the parameters that make Q a CGTR.

    Each Q~ coefficient, reduced modulo all constraints, must vanish. It is
    solved for a primary parameter when one occurs, otherwise for the
    parameter of highest tilde-order.

    Example:
        >>> [r.text() for r in cgtr_family(dtr, particle_can, particle)]
        ['eta = eps~']
    """
    terms = terms if terms is not None else q_tilde_decompose(dtr, can, m)
    relations: list[CgtrRelation] = []
    for term in terms:
        equation = reduce_mod_ideal(term.coefficient, can.all_constraints)
        if equation == 0:
            continue
        present = parameters_of(equation)
        primary = [p for p in present if p.base_name in {q.name for q in dtr.primary_parameters}]
        if primary:
            target = primary[0]
        elif present:
            target = max(present, key=lambda p: (p.tilde_order, symbol_sort_key(p)))
        else:
            relations.append(CgtrRelation(name=term.name, equation=equation))
            continue
        try:
            value = solve_linear([equation], [target]).values.get(target)
        except Inconclusive:
            value = None
        relations.append(
            CgtrRelation(name=term.name, equation=equation, parameter=target, value=value)
        )
    return relations


# ============================================================================
# PETR conditions
# ============================================================================

class _Conditions(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cond1: dict[str, Expr]
    cond2: dict[str, Expr]
    # non-tilde part of cond2 and the M-bracket whose tilde enters cond2
    direct: dict[str, Expr]
    mpart: dict[str, Expr]


def freeze_thetas(can: CanAnalysis, ctx: BracketContext) -> tuple[CanAnalysis, BracketContext]:
    """
    Replace every free function theta(q, pi) by a parameter of the same name.

    Multipliers are arbitrary functions of tau, so theta~ is a new coefficient
    rather than {theta, H}. The terms this drops carry a constraint factor.
    """
    masks = {t: Parameter(t.func.__name__) for t in can.thetas}
    if not masks:
        return can, ctx
    update = {"hamiltonian": sp.sympify(can.hamiltonian).xreplace(masks)}
    if can.split is not None:
        update["split"] = can.split.model_copy(
            update={"thetas": [sp.sympify(t).xreplace(masks) for t in can.split.thetas]}
        )
    frozen = can.model_copy(update=update)
    context = ctx.model_copy(update={
        "uhat": [sp.sympify(u).xreplace(masks) for u in ctx.uhat],
        "mhat": [[sp.sympify(v).xreplace(masks) for v in row] for row in ctx.mhat],
    })
    return frozen, context


def _conditions(
    qhat: Expr, can: CanAnalysis, ctx: BracketContext, m: Model
) -> _Conditions:
    can, ctx = freeze_thetas(can, ctx)
    constraints = can.all_constraints
    g = reduce_mod_ideal(_develop(qhat, can, m), can.primaries)
    cond1 = {}
    for c in can.constraints:
        if c.level == 0:
            continue
        value = poisson(c.expr, qhat, m) + m_bracket(ctx, c.expr, g)
        cond1[c.name] = reduce_mod_ideal(value, constraints)
    cond2, direct, mpart = {}, {}, {}
    for p in m.momenta:
        t = m_bracket(ctx, p, g)
        d = poisson(p, g, m) - em_bracket(ctx, _develop(p, can, m), g)
        direct[p.name] = reduce_mod_ideal(d, constraints)
        mpart[p.name] = reduce_mod_ideal(t, constraints)
        cond2[p.name] = reduce_mod_ideal(d + _develop(t, can, m), constraints)
    return _Conditions(cond1=cond1, cond2=cond2, direct=direct, mpart=mpart)


def _equations(residuals: Sequence[Expr], variables: Sequence[sp.Symbol]) -> list[Expr]:
    equations: list[Expr] = []
    for r in residuals:
        if r != 0:
            equations.extend(c for c in split_by_monomials(r, variables) if c != 0)
    return equations


def _unknowns_in(exprs: Sequence[Expr]) -> list[Unknown]:
    found = set()
    for e in exprs:
        found |= {s for s in sp.sympify(e).free_symbols if isinstance(s, Unknown)}
    return sorted(found, key=lambda s: (s.base_name, s.tilde_order))


def _advance_bindings(values: dict, symbols: Sequence[Unknown]) -> dict:
    bindings = {}
    by_name = {k.name: v for k, v in values.items()}
    for s in symbols:
        if s.base_name not in by_name:
            continue
        value = by_name[s.base_name]
        for _ in range(s.tilde_order):
            value = time_derivative(value)
        bindings[s] = value
    return bindings


def _mask_functions(e: Expr) -> tuple[Expr, dict]:
    terms = sorted(free_function_terms(e), key=sp.default_sort_key)
    forward = {t: Placeholder(f"_g{i}") for i, t in enumerate(terms)}
    return sp.sympify(e).xreplace(forward), {v: k for k, v in forward.items()}


class _Outcome(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    verdict: Verdict
    witness: Optional[Expr] = None
    locus: list[Expr] = Field(default_factory=list)
    xi_equations: list[Expr] = Field(default_factory=list)
    reason: Optional[str] = None


def _phase_dependent(e: Expr) -> bool:
    return bool(free_function_terms(e)) or any(
        isinstance(s, (Coordinate, Momentum, Placeholder)) for s in e.free_symbols
    )


def _extend(obstructions: Sequence[Expr], null_coords: Sequence[Coordinate]) -> _Outcome:
    """
    Retry obstructions with the unphysical coordinates replaced by free Xi^m.

    An obstruction that involves no Xi and no phase-space quantity is a
    witness against PETR. Otherwise each irreducible factor containing Xi is
    solvable unless all its non-constant Xi-coefficients vanish; that common
    zero set is the exceptional locus.
    """
    # Xi stands in for a coordinate and keeps its nonzero assumption
    auxiliaries = [
        Auxiliary(name, nonzero=True) if c.is_zero is False else Auxiliary(name)
        for name, c in zip(_numbered("Xi", len(null_coords)), null_coords)
    ]
    equations: list[Expr] = []
    loci: list[Expr] = []
    for obstruction in obstructions:
        masked, backward = _mask_functions(obstruction)
        extended = normalize(masked.xreplace(dict(zip(null_coords, auxiliaries))).xreplace(backward))
        present = [a for a in auxiliaries if extended.has(a)]
        if not present:
            if _phase_dependent(extended):
                return _Outcome(
                    verdict=Verdict.INCONCLUSIVE,
                    reason=f"phase-space dependent obstruction {to_text(extended)}",
                )
            return _Outcome(verdict=Verdict.NOT_PETR, witness=constraint_form(extended))
        equations.append(constraint_form(extended))
        numerator = sp.fraction(extended)[0]
        _, factors = sp.factor_list(numerator)
        factor_loci: list[list[Expr]] = []
        for factor, _ in factors:
            if not factor.has(*auxiliaries) or factor.is_zero is False:
                continue
            poly = sp.Poly(factor, *present)
            coefficients = [
                constraint_form(c) for monomial, c in poly.terms() if any(monomial)
            ]
            if any(c == 1 for c in coefficients):
                factor_loci = []
                break
            common = sp.gcd_list(coefficients) if len(coefficients) > 1 else coefficients[0]
            if not sp.sympify(common).is_number:
                factor_loci.append([constraint_form(common)])
            else:
                factor_loci.append(list(dict.fromkeys(coefficients)))
        for locus in factor_loci:
            if any(_phase_dependent(e) for e in locus):
                return _Outcome(
                    verdict=Verdict.INCONCLUSIVE,
                    reason=f"phase-space dependent locus {', '.join(to_text(e) for e in locus)}",
                    xi_equations=equations,
                )
            loci.extend(e for e in locus if e not in loci)
    verdict = Verdict.PETR_EXCEPT if loci else Verdict.PETR_ALL
    return _Outcome(verdict=verdict, locus=loci, xi_equations=equations)


def petr_check(
    dtr: DtrGenerator,
    can: CanAnalysis,
    ctx: BracketContext,
    la: LagAnalysis,
    m: Model,
    class_ia: Optional[bool] = None,
) -> ConjectureReport:
    """
    Decide whether the DTR generated by Q is physically equivalent.

    1. Q-hat = xi^m z^(m) . pi + Q; if every residual vanishes, PETR for any xi.
    2. Solve all equations with xi and its tau-derivatives as independent
       unknowns; whatever survives cannot be removed by any xi and goes to the
       Xi extension.
    3. Otherwise solve the xi-determining part (cond1, the non-tilde part of
       cond2 and the M-bracket inside cond2) for xi and verify the full
       conditions with xi~ = (xi)~. An inconsistency there goes to the Xi
       extension.

    ``class_ia`` is recomputed when not supplied.

    Raises:
        Inconclusive: Propagated from the reductions
    """
    constraints = can.all_constraints
    if class_ia is None:
        class_ia, _ = is_class_IA(ctx, constraints)
    try:
        terms = q_tilde_decompose(dtr, can, m)
        family = cgtr_family(dtr, can, m, terms)
    except DecompositionFailed as exc:
        logger.warning(f"Q~ decomposition failed: {exc}")
        terms, family = [], []

    count = len(la.z)
    xis = [Unknown(n) for n in _numbered("xi", count)] if count else []
    q_xi = sp.Add(*[
        xi * sp.Add(*[a * p for a, p in zip(row, m.momenta)]) for xi, row in zip(xis, la.z)
    ])
    qhat = normalize(q_xi + dtr.q)
    null_coords = [m.coords[i] for i in la.null_directions]
    null_set = set(null_coords)
    variables = [q for q in m.coords if q not in null_set] + list(m.momenta)

    conditions = _conditions(qhat, can, ctx, m)
    full = [*conditions.cond1.values(), *conditions.cond2.values()]

    def report(outcome: _Outcome, xi: Optional[dict] = None) -> ConjectureReport:
        logger.info(f"Verdict {outcome.verdict.value} for '{m.name}'")
        return ConjectureReport(
            class_ia=class_ia,
            qtilde_decomposition=terms,
            cond1_residuals=conditions.cond1,
            cond2_residuals=conditions.cond2,
            xi_solution={k.name: v for k, v in (xi or {}).items()},
            Xi_equations=outcome.xi_equations,
            verdict=outcome.verdict,
            witness=outcome.witness,
            locus=outcome.locus,
            reason=outcome.reason,
            cgtr_family=family,
            notes=NOTES,
        )

    if all(r == 0 for r in full):
        return report(_Outcome(verdict=Verdict.PETR_ALL))
    leaked = next((r for r in full if free_function_terms(r)), None)
    if leaked is not None:
        return report(_Outcome(
            verdict=Verdict.INCONCLUSIVE,
            reason=f"free function left in the xi system: {to_text(leaked)}",
        ))

    unknowns = _unknowns_in(full)
    system = solve_linear(_equations(full, variables), unknowns)
    if not system.consistent:
        logger.info(f"{len(system.obstructions)} obstruction(s) no xi can remove")
        return report(_extend(system.obstructions, null_coords), system.values)

    sufficient = _equations(
        [*conditions.cond1.values(), *conditions.direct.values(), *conditions.mpart.values()],
        variables,
    )
    solution = solve_linear(sufficient, xis)
    zero = {u: sp.Integer(0) for u in solution.free}
    values = {k: normalize(v.xreplace(zero)) for k, v in solution.values.items()}
    values.update(zero)
    if not solution.consistent:
        return report(_extend(solution.obstructions, null_coords), values)

    bindings = _advance_bindings(values, unknowns)
    leftover = [reduce_mod_ideal(substitute(r, bindings), constraints) for r in full]
    if all(r == 0 for r in leftover):
        return report(_Outcome(verdict=Verdict.PETR_ALL), values)
    residual = next(r for r in leftover if r != 0)
    return report(
        _Outcome(
            verdict=Verdict.INCONCLUSIVE,
            reason=f"xi from the sufficient conditions leaves {to_text(residual)}",
        ),
        values,
    )


# ============================================================================
# Rendering
# ============================================================================

def conjecture_summary(r: ConjectureReport) -> dict:
    """Compact JSON-ready view; absent entries are omitted."""
    summary = {
        "verdict": r.verdict.value,
        "witness": to_text(r.witness) if r.witness is not None else None,
        "xi": {k: to_text(v) for k, v in r.xi_solution.items()} or None,
        "locus": ", ".join(to_text(e) for e in r.locus) or None,
        "Xi": [to_text(e) for e in r.Xi_equations] or None,
        "reason": r.reason,
    }
    return {k: v for k, v in summary.items() if v is not None}


def render_report(r: ConjectureReport, fmt: OutputFormat = OutputFormat.TEXT) -> str:
    """
    Deterministic rendering of a conjecture report.

    Constraints keep discovery order; expressions print in canonical form.
    """
    if fmt == OutputFormat.JSON:
        return json.dumps(conjecture_summary(r))
    lines = [f"verdict: {r.verdict.value}"]
    if r.witness is not None:
        lines.append(f"witness: {to_text(r.witness)}")
    if r.locus:
        lines.append(f"exceptional locus: {', '.join(to_text(e) + ' = 0' for e in r.locus)}")
    if r.reason:
        lines.append(f"reason: {r.reason}")
    lines.append(f"class IA: {r.class_ia}")
    if r.qtilde_decomposition:
        lines.append("Q~ mod phi:")
        lines += [f"  {t.name}: {to_text(t.coefficient)}" for t in r.qtilde_decomposition]
    if r.cgtr_family:
        lines.append("CGTR relations:")
        lines += [f"  {rel.text()}" for rel in r.cgtr_family]
    if r.xi_solution:
        lines.append("xi:")
        lines += [f"  {k} = {to_text(v)}" for k, v in r.xi_solution.items()]
    if r.Xi_equations:
        lines.append("extended conditions:")
        lines += [f"  {to_text(e)} = 0" for e in r.Xi_equations]
    for name, residual in [*r.cond1_residuals.items(), *r.cond2_residuals.items()]:
        if residual != 0:
            lines.append(f"  residual {name}: {to_text(residual)}")
    lines += [f"note: {n}" for n in r.notes]
    return "\n".join(lines)
