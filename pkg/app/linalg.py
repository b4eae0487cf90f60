"""
Symbolic Gauss-Jordan elimination over the rational-function field.

Shared by the Hessian sweep-out, the constraint classification, the Dirac
bracket inverse and the conjecture solver.
"""
import logging
from typing import Optional, Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict

from app.core.config import get_settings
from app.core.exceptions import Inconclusive, PivotUndecidable, XNotInvertible
from app.expr import Expr, constraint_form, normalize, to_text

logger = logging.getLogger(__name__)

Matrix = list[list[Expr]]

# Pivot classes, most preferred first
NUMERIC = 0
NONZERO_BY_ASSUMPTION = 1
GENERIC = 2


class SweepResult(BaseModel):
    """
    Outcome of a sweep-out: qmat * M * C = [[I, N], [0, 0]].

    Attributes:
        rank: Number of pivots R
        qmat: Accumulated regular row operations
        perm: Column permutation; column k of M*C is column perm[k] of M
        reduced: The product qmat * M * C
        generic_pivots: Pivots accepted as generically nonzero
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rank: int
    qmat: Matrix
    perm: list[int]
    reduced: Matrix
    generic_pivots: list[Expr]

    def null_rows(self) -> Matrix:
        """Rows of qmat annihilating M from the left."""
        return [list(row) for row in self.qmat[self.rank:]]


class LinearSolution(BaseModel):
    """Solved unknowns, unknowns left free, and unknown-free obstructions."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: dict[sp.Symbol, Expr]
    free: list[sp.Symbol]
    obstructions: list[Expr]

    @property
    def consistent(self) -> bool:
        return not self.obstructions


def _degree(entry: Expr) -> int:
    num = sp.fraction(entry)[0]
    symbols = sorted(num.free_symbols, key=sp.default_sort_key)
    if not symbols:
        return 0
    return sp.Poly(num, *symbols).total_degree()


def _pivot_class(entry: Expr) -> int:
    if entry.is_number:
        return NUMERIC
    if entry.is_zero is False:
        return NONZERO_BY_ASSUMPTION
    return GENERIC


def _choose_pivot(a: Matrix, start: int) -> Optional[tuple[int, int, int]]:
    best = None
    for i in range(start, len(a)):
        for j in range(start, len(a[i])):
            entry = a[i][j]
            if entry == 0:
                continue
            key = (_pivot_class(entry), _degree(entry), i, j)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    return best[2], best[3], best[0]


def identity(n: int) -> Matrix:
    return [[sp.Integer(1 if i == j else 0) for j in range(n)] for i in range(n)]


def sweep(matrix: Sequence[Sequence[Expr]], strict: Optional[bool] = None) -> SweepResult:
    """
    Gauss-Jordan sweep-out with full pivoting.

    Pivots are chosen by class (numeric, nonzero by assumption, generic),
    then lowest total degree, then row-major position.

    Args:
        matrix: Square or rectangular matrix of expressions
        strict: Reject generic pivots; defaults to Settings.strict_pivots

    Returns:
        SweepResult: Rank, row operations, column permutation

    Raises:
        PivotUndecidable: In strict mode, when only generic pivots remain
    """
    strict = get_settings().strict_pivots if strict is None else strict
    a = [[normalize(x) for x in row] for row in matrix]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    q = identity(rows)
    perm = list(range(cols))
    generic: list[Expr] = []
    rank = 0

    while rank < min(rows, cols):
        choice = _choose_pivot(a, rank)
        if choice is None:
            break
        i, j, pivot_class = choice
        a[rank], a[i] = a[i], a[rank]
        q[rank], q[i] = q[i], q[rank]
        for row in a:
            row[rank], row[j] = row[j], row[rank]
        perm[rank], perm[j] = perm[j], perm[rank]

        pivot = a[rank][rank]
        if pivot_class == GENERIC:
            if strict:
                raise PivotUndecidable(to_text(pivot))
            logger.warning(f"Accepting generic pivot {to_text(pivot)}")
            generic.append(pivot)
        else:
            logger.debug(f"Pivot {to_text(pivot)} at ({i}, {j})")

        a[rank] = [normalize(x / pivot) for x in a[rank]]
        q[rank] = [normalize(x / pivot) for x in q[rank]]
        for r in range(rows):
            factor = a[r][rank]
            if r == rank or factor == 0:
                continue
            a[r] = [normalize(x - factor * y) for x, y in zip(a[r], a[rank])]
            q[r] = [normalize(x - factor * y) for x, y in zip(q[r], q[rank])]
        rank += 1

    return SweepResult(rank=rank, qmat=q, perm=perm, reduced=a, generic_pivots=generic)


def inverse(matrix: Sequence[Sequence[Expr]]) -> Matrix:
    """
    Inverse of a square matrix as C * Q from a full-rank sweep.

    Raises:
        XNotInvertible: If the sweep finds rank below the size
    """
    n = len(matrix)
    result = sweep(matrix, strict=False)
    if result.rank < n:
        raise XNotInvertible(f"matrix of size {n} has rank {result.rank}")
    inv: Matrix = [[sp.Integer(0)] * n for _ in range(n)]
    for k in range(n):
        inv[result.perm[k]] = list(result.qmat[k])
    return inv


def mat_mul(a: Sequence[Sequence[Expr]], b: Sequence[Sequence[Expr]]) -> Matrix:
    return [
        [normalize(sp.Add(*[a[i][k] * b[k][j] for k in range(len(b))])) for j in range(len(b[0]))]
        for i in range(len(a))
    ]


def permutation_matrix(perm: Sequence[int]) -> Matrix:
    n = len(perm)
    c: Matrix = [[sp.Integer(0)] * n for _ in range(n)]
    for k, source in enumerate(perm):
        c[source][k] = sp.Integer(1)
    return c


def solve_linear(equations: Sequence[Expr], unknowns: Sequence[sp.Symbol]) -> LinearSolution:
    """
    Solve equations (each meaning expr = 0) linear in the unknowns.

    Equations are eliminated in order; each one is solved for its first
    unknown in the given order. Equations left without unknowns are
    obstructions, kept in constraint form and deduplicated.

    Raises:
        Inconclusive: If an equation is not linear in the unknowns
    """
    values: dict = {}
    obstructions: list[Expr] = []
    for equation in equations:
        eq = normalize(sp.sympify(equation).xreplace(values))
        if eq == 0:
            continue
        present = [u for u in unknowns if eq.has(u)]
        if not present:
            form = constraint_form(eq)
            if form != 0 and form not in obstructions:
                obstructions.append(form)
            continue
        target = present[0]
        coefficient = normalize(sp.diff(eq, target))
        if coefficient.has(*unknowns):
            raise Inconclusive(f"equation {to_text(eq)} is not linear in the unknowns")
        value = normalize(target - eq / coefficient)
        values = {k: normalize(v.xreplace({target: value})) for k, v in values.items()}
        values[target] = value
    free = [u for u in unknowns if u not in values]
    return LinearSolution(values=values, free=free, obstructions=obstructions)
