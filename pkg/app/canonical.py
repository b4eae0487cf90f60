"""
Canonical stage: velocity solution, primary constraints, Hamiltonian,
secondary chain, class split, pull-backs and the Dirac bracket.
"""
import logging
from typing import Optional, Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from app.brackets import poisson
from app.core.exceptions import NonlinearNoUserSolution, UserSolutionInvalid
from app.expr import (
    Expr,
    Placeholder,
    constraint_form,
    diff,
    divide_by_ideal,
    free_function_terms,
    in_ideal,
    in_radical,
    is_zero,
    normalize,
    reduce_mod_ideal,
    substitute,
    time_derivative,
    to_text,
)
from app.lagrangian import ChainEntry, LagAnalysis, independence_filter
from app.linalg import Matrix, inverse, sweep
from app.models import ConstraintStatus
from app.parser import Model

logger = logging.getLogger(__name__)


class HamiltonianSplit(BaseModel):
    """H = H0 + theta^m c_m with every c_m in the primary ideal."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    h0: Expr
    thetas: list[Expr]
    coefficients: list[Expr]


class ClassSplit(BaseModel):
    """
    First/second-class partition.

    Attributes:
        xmat: Poisson brackets of all constraints, reduced modulo them
        rank: Rank of xmat
        first: First-class combinations
        second: Second-class constraints
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    xmat: Matrix
    rank: int
    first: list[Expr]
    second: list[Expr]


class NamedConstraint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    expr: Expr
    level: int = Field(..., description="0 for primaries, k for k-th order secondaries")


class CanAnalysis(BaseModel):
    """
    Result of the canonical stage.

    Attributes:
        uhat: U-hat(q, pi, theta), one entry per velocity
        thetas: Free functions introduced along the null directions
        primaries: Primary constraints phi
        hamiltonian: H = pi U-hat - L(q, U-hat)
        split: H0 and multiplier coefficients, when H is linear in theta
        secondary_chain: Levels of chain entries, level 1 first
        terminated: False when max_chain_order was reached
        constraints: Every constraint with its name and level
        class_split: First/second-class partition
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    uhat: list[Expr]
    thetas: list[Expr]
    primaries: list[Expr]
    hamiltonian: Expr
    split: Optional[HamiltonianSplit] = None
    secondary_chain: list[list[ChainEntry]]
    terminated: bool = True
    constraints: list[NamedConstraint]
    class_split: ClassSplit

    @property
    def secondaries(self) -> list[list[Expr]]:
        return [
            [e.expr for e in level if e.status == ConstraintStatus.NEW_CONSTRAINT]
            for level in self.secondary_chain
        ]

    @property
    def flat_secondaries(self) -> list[Expr]:
        return [c for level in self.secondaries for c in level]

    @property
    def all_constraints(self) -> list[Expr]:
        return [*self.primaries, *self.flat_secondaries]

    @property
    def multiplier_conditions(self) -> list[Expr]:
        return [
            e.expr for level in self.secondary_chain for e in level
            if e.status == ConstraintStatus.MULTIPLIER_CONDITION
        ]

    @property
    def second_class(self) -> bool:
        return bool(self.class_split.second)

    def name_of(self, e: Expr) -> str:
        for c in self.constraints:
            if c.expr == e:
                return c.name
        return to_text(e)


# ============================================================================
# Velocity solution and Hamiltonian
# ============================================================================

def theta_name(velocity: sp.Symbol) -> str:
    return "theta" + velocity.name[1:]


def _is_affine(la: LagAnalysis, m: Model) -> bool:
    velocities = set(m.velocities)
    return not any(entry.free_symbols & velocities for row in la.M for entry in row)


def primary_constraints(m: Model, la: LagAnalysis, uhat: Sequence[Expr]) -> list[Expr]:
    """
    Primary constraints z^(n) . (pi - W(q, U-hat)), independent and in constraint form.
    """
    bindings = dict(zip(m.velocities, uhat))
    gaps = [normalize(p - substitute(w, bindings)) for p, w in zip(m.momenta, la.W)]
    cands = [
        constraint_form(sp.Add(*[a * g for a, g in zip(row, gaps)])) for row in la.z
    ]
    phi = independence_filter(cands, [])
    logger.info(f"Primary constraints: {[to_text(p) for p in phi]}")
    return phi


def solve_velocity(m: Model, la: LagAnalysis) -> list[Expr]:
    """
    Solve pi = W(q, u) for the velocities.

    An affine W is solved through the sweep-out, with a fresh theta along
    each null direction. Otherwise the model must supply a usolution, which
    is verified modulo the primary constraints.

    Raises:
        NonlinearNoUserSolution: W is nonlinear in u and no usolution is given
        UserSolutionInvalid: pi_A - W_A(q, U-hat) does not vanish modulo phi
    """
    if m.provided_usolution is not None:
        uhat = list(m.provided_usolution)
        phi = primary_constraints(m, la, uhat)
        bindings = dict(zip(m.velocities, uhat))
        for index, (p, w) in enumerate(zip(m.momenta, la.W)):
            residual = reduce_mod_ideal(p - substitute(w, bindings), phi)
            if residual != 0:
                raise UserSolutionInvalid(index, to_text(residual))
        logger.info("Supplied velocity solution verified")
        return uhat

    if not _is_affine(la, m):
        raise NonlinearNoUserSolution(
            f"W is nonlinear in the velocities of '{m.name}'; add a usolution directive"
        )

    n, r = len(m.coords), la.rank
    zero = {u: 0 for u in m.velocities}
    rhs = [normalize(p - substitute(w, zero)) for p, w in zip(m.momenta, la.W)]
    thetas = [m.theta(theta_name(m.velocities[la.perm[k]])) for k in range(r, n)]
    y: list[Expr] = []
    for a in range(r):
        value = sp.Add(*[la.qmat[a][k] * rhs[k] for k in range(n)])
        value -= sp.Add(*[la.reduced[a][r + j] * t for j, t in enumerate(thetas)])
        y.append(normalize(value))
    y.extend(thetas)
    uhat: list[Expr] = [sp.Integer(0)] * n
    for k in range(n):
        uhat[la.perm[k]] = y[k]
    return uhat


def hamiltonian(m: Model, uhat: Sequence[Expr]) -> Expr:
    """H = pi_A U-hat^A - L(q, U-hat); nothing is added."""
    bindings = dict(zip(m.velocities, uhat))
    return normalize(
        sp.Add(*[p * u for p, u in zip(m.momenta, uhat)]) - substitute(m.lagrangian, bindings)
    )


def split_hamiltonian(H: Expr, primaries: Sequence[Expr]) -> Optional[HamiltonianSplit]:
    """
    Write H = H0 + theta^m c_m.

    Returns None unless H is linear in the free functions and every c_m lies
    in the primary ideal.
    """
    thetas = sorted(
        (t for t in free_function_terms(H) if not isinstance(t, (sp.Derivative, sp.Subs))),
        key=sp.default_sort_key,
    )
    if not thetas:
        return HamiltonianSplit(h0=H, thetas=[], coefficients=[])
    marks = [Placeholder(f"_m{i}") for i in range(len(thetas))]
    marked = sp.expand(sp.sympify(H).xreplace(dict(zip(thetas, marks))))
    coefficients = [normalize(sp.diff(marked, mark)) for mark in marks]
    if any(c.has(*marks) for c in coefficients):
        return None
    if any(not in_ideal(c, primaries) for c in coefficients):
        return None
    h0 = normalize(marked.xreplace({mark: 0 for mark in marks}))
    if h0.has(*thetas) or free_function_terms(h0):
        return None
    return HamiltonianSplit(h0=h0, thetas=thetas, coefficients=coefficients)


def hamiltonian_decomposition(H: Expr, can: "CanAnalysis") -> str:
    """
    Display H as a combination of the constraints plus a remainder.

    Example:
        >>> hamiltonian_decomposition(H, cawley_can)
        'theta3*phi + q2*q3/2*chi1 + pq2*chi2'
    """
    quotients, radicals, remainder = divide_by_ideal(H, can.all_constraints)
    parts = []
    for constraint, coefficient in zip(can.all_constraints, quotients):
        if coefficient != 0:
            parts.append(f"({to_text(coefficient)})*{can.name_of(constraint)}")
    for radical, coefficient in radicals.items():
        parts.append(f"({to_text(coefficient)})*{to_text(radical)}")
    if remainder != 0:
        parts.append(to_text(remainder))
    return " + ".join(parts) if parts else "0"


# ============================================================================
# Time development
# ============================================================================

def tilde(F: Expr, H: Expr, m: Model) -> Expr:
    """F~ = dF/dtau + {F, H}."""
    return normalize(time_derivative(F) + poisson(F, H, m))


def tilde_mod_primaries(F: Expr, H: Expr, split: Optional[HamiltonianSplit], m: Model) -> Expr:
    """
    F~ modulo the primary constraints.

    With H = H0 + theta^m c_m this is dF/dtau + {F, H0} + theta^m {F, c_m};
    the dropped terms c_m {F, theta^m} vanish modulo phi.
    """
    if split is None:
        return tilde(F, H, m)
    value = time_derivative(F) + poisson(F, split.h0, m)
    for theta, c in zip(split.thetas, split.coefficients):
        value += theta * poisson(F, c, m)
    return normalize(value)


def _match_hint(form: Expr, earlier: Sequence[Expr], hints: dict[str, Expr]) -> Expr:
    for hint in hints.values():
        if in_ideal(hint, [*earlier, form]) and in_ideal(form, [*earlier, hint]):
            return hint
    return form


def secondary_chain(
    primaries: Sequence[Expr],
    develop,
    max_order: int,
    hints: Optional[dict[str, Expr]] = None,
) -> tuple[list[list[ChainEntry]], bool]:
    """
    Build the secondary chain from the primary constraints.

    Level k+1 is the time development of level k reduced modulo every
    earlier level, primaries included. A candidate that still involves a
    free function theta is a condition on the multipliers, not a constraint.

    Args:
        primaries: Primary constraints
        develop: Callable F -> F~ (modulo phi)
        max_order: Bound on the number of levels
        hints: Named constraint presentations from the model

    Returns:
        tuple: (levels of chain entries, whether the chain terminated)
    """
    hints = hints or {}
    earlier = list(primaries)
    current = list(primaries)
    levels: list[list[ChainEntry]] = []
    while current:
        if len(levels) >= max_order:
            logger.warning(f"Secondary chain did not terminate by order {max_order}")
            return levels, False
        level: list[ChainEntry] = []
        accepted: list[Expr] = []
        for constraint in current:
            developed = develop(constraint)
            reduced = reduce_mod_ideal(developed, earlier + accepted)
            if reduced == 0:
                level.append(ChainEntry(expr=developed, status=ConstraintStatus.IDENTITY))
                continue
            if free_function_terms(reduced):
                logger.info(f"Multiplier condition {to_text(reduced)}")
                level.append(ChainEntry(expr=reduced, status=ConstraintStatus.MULTIPLIER_CONDITION))
                continue
            form = _match_hint(constraint_form(reduced), earlier + accepted, hints)
            if independence_filter([form], earlier + accepted):
                accepted.append(form)
                level.append(ChainEntry(expr=form, status=ConstraintStatus.NEW_CONSTRAINT))
            else:
                level.append(ChainEntry(expr=form, status=ConstraintStatus.IDENTITY))
        levels.append(level)
        earlier.extend(accepted)
        current = accepted
        logger.info(f"Secondary level {len(levels)}: {[to_text(c) for c in accepted]}")
    return levels, True


# ============================================================================
# Classification and brackets
# ============================================================================

def classify(constraints: Sequence[Expr], m: Model) -> ClassSplit:
    """
    Split constraints into first and second class.

    X_ij = {c_i, c_j} reduced modulo all constraints. Left null vectors of X
    give the first-class combinations; the constraints at pivot columns are
    second class.

    Raises:
        PivotUndecidable: In strict mode
    """
    n = len(constraints)
    xmat: Matrix = [[sp.Integer(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            value = reduce_mod_ideal(poisson(constraints[i], constraints[j], m), constraints)
            xmat[i][j] = value
            xmat[j][i] = normalize(-value)
    if n == 0:
        return ClassSplit(xmat=xmat, rank=0, first=[], second=[])
    result = sweep(xmat)
    if result.rank == 0:
        return ClassSplit(xmat=xmat, rank=0, first=list(constraints), second=[])
    second = [constraints[result.perm[k]] for k in range(result.rank)]
    first = [
        constraint_form(sp.Add(*[a * c for a, c in zip(row, constraints)]))
        for row in result.null_rows()
    ]
    logger.info(f"{len(second)} second-class constraint(s)")
    return ClassSplit(xmat=xmat, rank=result.rank, first=first, second=second)


def dirac_bracket(F: Expr, G: Expr, second_class: Sequence[Expr], m: Model) -> Expr:
    """
    {F, G}_D = {F, G} - {F, phi_i} (X^-1)_ij {phi_j, G}.

    Raises:
        XNotInvertible: If the second-class bracket matrix is singular
    """
    if not second_class:
        return poisson(F, G, m)
    xmat = [[poisson(a, b, m) for b in second_class] for a in second_class]
    xinv = inverse(xmat)
    left = [poisson(F, c, m) for c in second_class]
    right = [poisson(c, G, m) for c in second_class]
    correction = sp.Add(*[
        left[i] * xinv[i][j] * right[j]
        for i in range(len(second_class))
        for j in range(len(second_class))
    ])
    return normalize(poisson(F, G, m) - correction)


def canonical_eom(can: CanAnalysis, m: Model) -> tuple[list[Expr], list[Expr]]:
    """Canonical equations q-dot = dH/dpi, pi-dot = -dH/dq, modulo phi."""
    H = can.hamiltonian
    qdot = [reduce_mod_ideal(sp.diff(H, p), can.primaries) for p in m.momenta]
    pdot = [reduce_mod_ideal(-sp.diff(H, q), can.primaries) for q in m.coords]
    return qdot, pdot


# ============================================================================
# Pull-backs and structural identities
# ============================================================================

def pullback(F: Expr, m: Model, la: LagAnalysis) -> Expr:
    """Substitute pi_A -> W_A(q, u)."""
    return substitute(F, dict(zip(m.momenta, la.W)))


def verify_secondary_equals_lc(can: CanAnalysis, la: LagAnalysis, m: Model) -> bool:
    """
    Level-wise equivalence of pulled-back secondaries and Lagrangian constraints.

    Each member of one side must vanish on the other side's constraints up to
    the same level (radical membership).

    Raises:
        Inconclusive: If a membership test exceeds the degree cap
    """
    pulled = [[pullback(c, m, la) for c in level] for level in can.secondaries]
    lcs = la.constraints
    depth = max(len(pulled), len(lcs))
    pulled += [[] for _ in range(depth - len(pulled))]
    lcs = lcs + [[] for _ in range(depth - len(lcs))]
    for k in range(depth):
        lower_lc = [c for level in lcs[: k + 1] for c in level]
        lower_pb = [c for level in pulled[: k + 1] for c in level]
        if not all(in_radical(p, lower_lc) for p in pulled[k]):
            logger.warning(f"Pulled-back secondaries at level {k + 1} are not LCs")
            return False
        if not all(in_radical(c, lower_pb) for c in lcs[k]):
            logger.warning(f"LCs at level {k + 1} are not pulled-back secondaries")
            return False
    return True


def verify_canonical_identities(can: CanAnalysis, la: LagAnalysis, m: Model) -> dict[str, list[Expr]]:
    """
    Residuals of the structural identities, each reduced modulo phi.

    - ``momenta``: pi_A - W_A(q, U-hat)
    - ``velocities``: dH/dpi_A - U-hat^A
    - ``forces``: dH/dq^A + (dL/dq^A) at u = U-hat

    All residuals are zero for a consistent analysis.
    """
    phi = can.primaries
    bindings = dict(zip(m.velocities, can.uhat))
    H = can.hamiltonian
    return {
        "momenta": [
            reduce_mod_ideal(p - substitute(w, bindings), phi) for p, w in zip(m.momenta, la.W)
        ],
        "velocities": [
            reduce_mod_ideal(sp.diff(H, p) - u, phi) for p, u in zip(m.momenta, can.uhat)
        ],
        "forces": [
            reduce_mod_ideal(sp.diff(H, q) + substitute(diff(m.lagrangian, q), bindings), phi)
            for q in m.coords
        ],
    }


def verify_ele_from_canonical(can: CanAnalysis, la: LagAnalysis, m: Model) -> bool:
    """
    Check that the pulled-back canonical equations are the Euler-Lagrange equations.

    On pi = W(q, u) the momentum equations read dW_A/dtau = -dH/dq^A, so they
    agree with the Euler-Lagrange equations iff the pulled-back -dH/dq^A equals
    dL/dq^A. The velocity equations agree iff W(q, dH/dpi) pulls back to W(q, u).
    """
    for q in m.coords:
        force = pullback(sp.diff(can.hamiltonian, q), m, la) + diff(m.lagrangian, q)
        if not is_zero(force):
            logger.warning(f"Momentum equation for {q} does not pull back: {to_text(force)}")
            return False
    qdot = [pullback(sp.diff(can.hamiltonian, p), m, la) for p in m.momenta]
    bindings = dict(zip(m.velocities, qdot))
    for w in la.W:
        if not is_zero(substitute(w, bindings) - w):
            logger.warning(f"Velocity equations fail for W component {to_text(w)}")
            return False
    return True


def verify_appendix_identity(Q: Expr, m: Model, la: LagAnalysis, can: CanAnalysis) -> Expr:
    """
    Residual of delta_Q H + Delta L(u = U-hat) modulo phi.

    delta_Q H = {H, Q}; Delta L comes from the pull-back of the transformation
    generated by Q, with parameters frozen. A zero residual verifies the identity.
    """
    from app.transform import delta_l, pullback_htr

    transform = pullback_htr(Q, m, la)
    change = delta_l(transform.eps, transform.E, m, la, time_dependent=False)
    bindings = dict(zip(m.velocities, can.uhat))
    residual = poisson(can.hamiltonian, Q, m) + substitute(change, bindings)
    return reduce_mod_ideal(residual, can.primaries)


# ============================================================================
# Stage entry point
# ============================================================================

def _name_constraints(
    primaries: Sequence[Expr], levels: Sequence[Sequence[Expr]], hints: dict[str, Expr]
) -> list[NamedConstraint]:
    by_value = {normalize(v): k for k, v in hints.items()}
    flat = [c for level in levels for c in level]
    named: list[NamedConstraint] = []

    def name(e: Expr, prefix: str, index: int, count: int) -> str:
        if normalize(e) in by_value:
            return by_value[normalize(e)]
        return prefix if count == 1 else f"{prefix}{index}"

    for i, p in enumerate(primaries, start=1):
        named.append(NamedConstraint(name=name(p, "phi", i, len(primaries)), expr=p, level=0))
    index = 0
    for k, level in enumerate(levels, start=1):
        for c in level:
            index += 1
            named.append(NamedConstraint(name=name(c, "chi", index, len(flat)), expr=c, level=k))
    return named


def analyze_canonical(m: Model, la: LagAnalysis) -> CanAnalysis:
    """
    Run the full canonical stage on a model.

    Raises:
        NonlinearNoUserSolution: See solve_velocity
        UserSolutionInvalid: See solve_velocity
    """
    logger.info(f"Canonical analysis of '{m.name}'")
    uhat = solve_velocity(m, la)
    phi = primary_constraints(m, la, uhat)
    phi = [_match_hint(p, [], m.constraint_hints) for p in phi]
    H = hamiltonian(m, uhat)
    split = split_hamiltonian(H, phi)
    if split is None:
        logger.warning("Hamiltonian is not linear in theta modulo phi; using the full bracket")

    chain, terminated = secondary_chain(
        phi,
        lambda F: tilde_mod_primaries(F, H, split, m),
        m.max_chain_order,
        m.constraint_hints,
    )
    levels = [
        [e.expr for e in level if e.status == ConstraintStatus.NEW_CONSTRAINT] for level in chain
    ]
    constraints = [*phi, *[c for level in levels for c in level]]
    thetas = sorted(
        (t for u in uhat for t in free_function_terms(u) if not isinstance(t, (sp.Derivative, sp.Subs))),
        key=sp.default_sort_key,
    )
    return CanAnalysis(
        uhat=uhat,
        thetas=list(dict.fromkeys(thetas)),
        primaries=phi,
        hamiltonian=H,
        split=split,
        secondary_chain=chain,
        terminated=terminated,
        constraints=_name_constraints(phi, levels, m.constraint_hints),
        class_split=classify(constraints, m),
    )
