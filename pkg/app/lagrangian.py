"""
Lagrangian stage: Euler-Lagrange decomposition, Hessian sweep-out and the
chain of Lagrangian constraints.

The Euler-Lagrange equations are written as M(q,u) u-dot + omega(q,u) = 0.
A sweep-out Q M C = [[I, N], [0, 0]] gives the null vectors z (rows of Q
below the rank), the first-order constraints z . omega = 0 and the general
velocity solution with arbitrary functions v^m along the null directions.
"""
import logging
from typing import Optional, Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict

from app.expr import Arbitrary, Expr, constraint_form, diff, normalize, reduce_mod_ideal, to_text
from app.linalg import Matrix, SweepResult, sweep
from app.models import ConstraintStatus
from app.parser import Model

logger = logging.getLogger(__name__)


class ChainEntry(BaseModel):
    """One candidate of a constraint chain with its classification."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    expr: Expr
    status: ConstraintStatus


class LagAnalysis(BaseModel):
    """
    Result of the Lagrangian stage.

    Attributes:
        W: W_A = dL/du^A
        M: Hessian M_AB = dW_A/du^B
        omega: omega_A = (dW_A/dq^B) u^B - dL/dq^A
        rank: Rank R of M
        qmat: Regular row operations of the sweep-out
        perm: Column permutation of the sweep-out
        reduced: Q M C in block form
        z: Null vectors z^(m), one per null direction
        v: Arbitrary functions v^m of the general velocity solution
        udot: General solution u-dot^A(q, u, v)
        lc_chain: Levels of chain entries, level 1 first
        terminated: False when max_chain_order was reached
        generic_pivots: Pivots accepted without an assumption
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    W: list[Expr]
    M: Matrix
    omega: list[Expr]
    rank: int
    qmat: Matrix
    perm: list[int]
    reduced: Matrix
    z: list[list[Expr]]
    v: list[Arbitrary]
    udot: list[Expr]
    lc_chain: list[list[ChainEntry]]
    terminated: bool = True
    generic_pivots: list[Expr] = []

    @property
    def null_count(self) -> int:
        return len(self.z)

    @property
    def constraints(self) -> list[list[Expr]]:
        """Accepted constraints per level."""
        return [
            [e.expr for e in level if e.status == ConstraintStatus.NEW_CONSTRAINT]
            for level in self.lc_chain
        ]

    @property
    def all_constraints(self) -> list[Expr]:
        return [c for level in self.constraints for c in level]

    @property
    def second_class_signature(self) -> bool:
        return any(
            e.status == ConstraintStatus.SECOND_CLASS_SIGNATURE
            for level in self.lc_chain for e in level
        )

    @property
    def null_directions(self) -> list[int]:
        """Coordinate indices along which the velocity is undetermined."""
        return list(self.perm[self.rank:])


# ============================================================================
# Decomposition and sweep-out
# ============================================================================

def ele_decompose(m: Model) -> tuple[list[Expr], Matrix, list[Expr]]:
    """
    Split the Euler-Lagrange equations into W, M and omega.

    Example:
        >>> W, M, omega = ele_decompose(cawley)
        >>> W
        [u2, u1, 0]
    """
    W = [diff(m.lagrangian, u) for u in m.velocities]
    M = [[diff(w, u) for u in m.velocities] for w in W]
    omega = [
        normalize(
            sp.Add(*[diff(w, q) * u for q, u in zip(m.coords, m.velocities)])
            - diff(m.lagrangian, q_a)
        )
        for w, q_a in zip(W, m.coords)
    ]
    return W, M, omega


def sweep_out(M: Sequence[Sequence[Expr]], strict: Optional[bool] = None) -> tuple[SweepResult, list[list[Expr]]]:
    """
    Sweep the Hessian and extract its null vectors.

    Returns:
        tuple: (sweep result, null vectors z^(m) as rows of Q below the rank)

    Raises:
        PivotUndecidable: In strict mode, for a pivot not known to be nonzero
    """
    result = sweep(M, strict=strict)
    z = result.null_rows()
    logger.info(f"Hessian rank {result.rank}, {len(z)} null vector(s)")
    return result, z


def arbitrary_name(velocity: sp.Symbol) -> str:
    """v-function name paired with a velocity: u3 -> v3, ue -> ve."""
    return "v" + velocity.name[1:]


def general_velocity_solution(
    m: Model, s: SweepResult, omega: Sequence[Expr]
) -> tuple[list[Expr], list[Arbitrary]]:
    """
    General solution of M u-dot + omega = 0 off the constraint surface.

    With u-dot = C y the regular components are
    y_a = -(Q omega)_a - N_an v^n and the null components are y_n = v^n.

    Returns:
        tuple: (u-dot per velocity in model order, v symbols)
    """
    n = len(m.coords)
    r = s.rank
    q_omega = [
        normalize(sp.Add(*[s.qmat[i][k] * omega[k] for k in range(n)])) for i in range(n)
    ]
    v = [Arbitrary(arbitrary_name(m.velocities[s.perm[k]])) for k in range(r, n)]
    y: list[Expr] = []
    for a in range(r):
        coupling = sp.Add(*[s.reduced[a][r + j] * v[j] for j in range(n - r)])
        y.append(normalize(-q_omega[a] - coupling))
    y.extend(v)
    udot: list[Expr] = [sp.Integer(0)] * n
    for k in range(n):
        udot[s.perm[k]] = y[k]
    return udot, v


def d_operator(f: Expr, m: Model, udot: Sequence[Expr]) -> Expr:
    """Chain operator D f = u^A df/dq^A + u-dot^A df/du^A."""
    terms = [u * diff(f, q) for q, u in zip(m.coords, m.velocities)]
    terms += [a * diff(f, u) for u, a in zip(m.velocities, udot)]
    return normalize(sp.Add(*terms))


# ============================================================================
# Constraint chain
# ============================================================================

def independence_filter(cands: Sequence[Expr], earlier: Sequence[Expr]) -> list[Expr]:
    """
    Keep candidates not already in the ideal of earlier plus accepted ones.

    Candidates are tested in input order.

    Example:
        >>> independence_filter([q2, 3*q2], [])
        [q2]
    """
    accepted: list[Expr] = []
    for cand in cands:
        if normalize(cand) == 0:
            continue
        if reduce_mod_ideal(cand, [*earlier, *accepted]) == 0:
            continue
        accepted.append(cand)
    return accepted


def _classify_candidates(
    cands: Sequence[Expr], earlier: list[Expr], v: Sequence[Arbitrary]
) -> list[ChainEntry]:
    entries: list[ChainEntry] = []
    accepted: list[Expr] = []
    for cand in cands:
        reduced = reduce_mod_ideal(cand, [*earlier, *accepted])
        if reduced == 0:
            entries.append(ChainEntry(expr=normalize(cand), status=ConstraintStatus.IDENTITY))
            continue
        if v and reduced.has(*v):
            logger.info(f"Candidate {to_text(reduced)} depends on arbitrary functions")
            entries.append(
                ChainEntry(expr=reduced, status=ConstraintStatus.SECOND_CLASS_SIGNATURE)
            )
            continue
        form = constraint_form(reduced)
        if independence_filter([form], [*earlier, *accepted]):
            accepted.append(form)
            entries.append(ChainEntry(expr=form, status=ConstraintStatus.NEW_CONSTRAINT))
        else:
            entries.append(ChainEntry(expr=form, status=ConstraintStatus.IDENTITY))
    return entries


def lc_chain(
    m: Model,
    z: Sequence[Sequence[Expr]],
    omega: Sequence[Expr],
    udot: Sequence[Expr],
    v: Sequence[Arbitrary],
) -> tuple[list[list[ChainEntry]], bool]:
    """
    Build the chain of Lagrangian constraints.

    Level 1 holds the independent members of z^(m) . omega; level k+1 holds
    D applied to level k, reduced modulo every earlier level. Candidates
    that still depend on some v^m after reduction are second-class
    signatures and are not constraints.

    Returns:
        tuple: (levels of chain entries, whether the chain terminated)
    """
    first = [normalize(sp.Add(*[a * w for a, w in zip(row, omega)])) for row in z]
    levels = [_classify_candidates(first, [], v)]
    earlier = [e.expr for e in levels[0] if e.status == ConstraintStatus.NEW_CONSTRAINT]
    logger.info(f"LC level 1: {[to_text(c) for c in earlier]}")

    current = earlier
    while current:
        if len(levels) >= m.max_chain_order:
            logger.warning(f"LC chain did not terminate by order {m.max_chain_order}")
            return levels, False
        cands = [d_operator(c, m, udot) for c in current]
        level = _classify_candidates(cands, list(earlier), v)
        levels.append(level)
        current = [e.expr for e in level if e.status == ConstraintStatus.NEW_CONSTRAINT]
        earlier.extend(current)
        logger.info(f"LC level {len(levels)}: {[to_text(c) for c in current]}")
    return levels, True


def analyze_lagrangian(m: Model, strict: Optional[bool] = None) -> LagAnalysis:
    """
    Run the full Lagrangian stage on a model.

    Args:
        m: Parsed model
        strict: Strict pivot mode; defaults to Settings.strict_pivots

    Returns:
        LagAnalysis: Decomposition, sweep-out and constraint chain
    """
    logger.info(f"Lagrangian analysis of '{m.name}'")
    W, M, omega = ele_decompose(m)
    s, z = sweep_out(M, strict=strict)
    udot, v = general_velocity_solution(m, s, omega)
    chain, terminated = lc_chain(m, z, omega, udot, v)
    return LagAnalysis(
        W=W,
        M=M,
        omega=omega,
        rank=s.rank,
        qmat=s.qmat,
        perm=s.perm,
        reduced=s.reduced,
        z=z,
        v=v,
        udot=udot,
        lc_chain=chain,
        terminated=terminated,
        generic_pivots=s.generic_pivots,
    )
