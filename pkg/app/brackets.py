"""
Poisson, M- and EM-brackets.

Parameters, unknowns and auxiliaries are constants on phase space, so they
pass through every bracket untouched.
"""
import logging
from enum import Enum
from typing import Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict

from app.expr import Expr, normalize, reduce_mod_ideal, substitute
from app.linalg import Matrix
from app.parser import Model

logger = logging.getLogger(__name__)


class BracketKind(str, Enum):
    POISSON = "poisson"
    M = "m"


def _partials(F: Expr, symbols: Sequence[sp.Symbol]) -> list[Expr]:
    return [sp.diff(F, s) if F.has(s) else sp.Integer(0) for s in symbols]


def poisson(F: Expr, G: Expr, m: Model) -> Expr:
    """
    Poisson bracket {F, G} = dF/dq dG/dpi - dF/dpi dG/dq.

    Example:
        >>> poisson(q1, pq1, model)
        1
    """
    F, G = sp.sympify(F), sp.sympify(G)
    dF_q, dF_p = _partials(F, m.coords), _partials(F, m.momenta)
    dG_q, dG_p = _partials(G, m.coords), _partials(G, m.momenta)
    terms = [
        fq * gp - fp * gq
        for fq, fp, gq, gp in zip(dF_q, dF_p, dG_q, dG_p)
        if (fq != 0 and gp != 0) or (fp != 0 and gq != 0)
    ]
    return normalize(sp.Add(*terms))


class BracketContext(BaseModel):
    """
    Data shared by the Hessian-weighted brackets.

    Attributes:
        model: The model
        uhat: Velocity solution U-hat(q, pi, theta)
        mhat: Hessian evaluated at u = U-hat
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model: Model
    uhat: list[Expr]
    mhat: Matrix

    @classmethod
    def build(cls, m: Model, M: Matrix, uhat: Sequence[Expr]) -> "BracketContext":
        bindings = dict(zip(m.velocities, uhat))
        mhat = [[substitute(entry, bindings) for entry in row] for row in M]
        return cls(model=m, uhat=list(uhat), mhat=mhat)

    def entries(self) -> list[tuple[int, int, Expr]]:
        """Nonzero entries of M(q, U-hat)."""
        return [
            (a, b, value)
            for a, row in enumerate(self.mhat)
            for b, value in enumerate(row)
            if value != 0
        ]


def m_bracket(ctx: BracketContext, F: Expr, G: Expr) -> Expr:
    """{F, G}_M = M_AB(q, U-hat) dF/dpi_A dG/dpi_B."""
    momenta = ctx.model.momenta
    dF = _partials(sp.sympify(F), momenta)
    dG = _partials(sp.sympify(G), momenta)
    terms = [value * dF[a] * dG[b] for a, b, value in ctx.entries() if dF[a] != 0 and dG[b] != 0]
    return normalize(sp.Add(*terms))


def em_bracket(ctx: BracketContext, F: Expr, G: Expr) -> Expr:
    """
    {F, G}_EM = M_AB(q, U-hat) dF/dpi_A {U-hat^B, G}_M.

    Vanishing entries of M(q, U-hat) are skipped, so U-hat along a null
    direction is never differentiated.
    """
    dF = _partials(sp.sympify(F), ctx.model.momenta)
    inner: dict[int, Expr] = {}
    terms = []
    for a, b, value in ctx.entries():
        if dF[a] == 0:
            continue
        if b not in inner:
            inner[b] = m_bracket(ctx, ctx.uhat[b], G)
        terms.append(value * dF[a] * inner[b])
    return normalize(sp.Add(*terms))


def bracket_table(
    constraints: Sequence[Expr], ctx: BracketContext, kind: BracketKind
) -> Matrix:
    """Pairwise brackets of the constraints, reduced modulo the constraints."""
    n = len(constraints)
    table: Matrix = [[sp.Integer(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            if kind == BracketKind.POISSON:
                value = poisson(constraints[i], constraints[j], ctx.model)
            else:
                value = m_bracket(ctx, constraints[i], constraints[j])
            value = reduce_mod_ideal(value, constraints)
            table[i][j] = value
            table[j][i] = -value if kind == BracketKind.POISSON else value
    return table


def is_class_IA(ctx: BracketContext, constraints: Sequence[Expr]) -> tuple[bool, Matrix]:
    """
    Check closure of the constraints under the M-bracket.

    Returns:
        tuple: (True iff every reduced M-bracket vanishes, the reduced table)
    """
    table = bracket_table(constraints, ctx, BracketKind.M)
    closed = all(entry == 0 for row in table for entry in row)
    logger.info(f"Class IA: {closed}")
    return closed, table
