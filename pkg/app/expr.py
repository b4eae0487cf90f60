"""
Exact symbolic expression core.

Expressions are plain sympy trees. Symbol kinds are carried by ``Symbol``
subclasses, so the term order and the coefficient domain of an ideal
reduction can be read off the expression itself:

- ``Coordinate`` / ``Velocity`` / ``Momentum`` / ``Arbitrary`` are ring variables
- ``Coefficient`` (constants), ``Auxiliary`` (Xi), ``Parameter`` and ``Unknown``
  (tau-dependent, tilde-ordered) live in the coefficient field

Free functions theta are undefined sympy functions applied to all phase-space
variables; their partials are opaque ``Derivative`` nodes.

Radicals b**(k/q) are rationalized on demand by adjoining a placeholder s with
s**q = b. A radical joins an ideal whenever its base does.
"""
import logging
import re
from enum import Enum
from functools import lru_cache
from typing import ClassVar, Iterable, Mapping, Optional, Sequence

import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.printing.str import StrPrinter

from app.core.config import get_settings
from app.core.exceptions import DegreeCapExceeded, DivisionByZero, DuplicateSymbol, ExpressionError

logger = logging.getLogger(__name__)

Expr = sp.Expr


# ============================================================================
# Symbols
# ============================================================================

class SymbolKind(str, Enum):
    """Kinds of symbols appearing in a model scope."""
    COORDINATE = "coordinate"
    VELOCITY = "velocity"
    MOMENTUM = "momentum"
    TIME = "time"
    CONSTANT = "constant"
    PARAMETER = "parameter"
    FREE_FUNCTION = "free_function"
    AUXILIARY = "auxiliary"
    UNKNOWN = "unknown"
    FREE_FUNCTION_PARTIAL = "free_function_partial"
    ARBITRARY = "arbitrary"


class ScopedSymbol(sp.Symbol):
    """Symbol tagged with its kind and its rank in the reduction term order."""
    kind: ClassVar[SymbolKind] = SymbolKind.COORDINATE
    rank: ClassVar[int] = 0


class Coordinate(ScopedSymbol):
    kind = SymbolKind.COORDINATE
    rank = 0


class Velocity(ScopedSymbol):
    kind = SymbolKind.VELOCITY
    rank = 1


class Momentum(ScopedSymbol):
    kind = SymbolKind.MOMENTUM
    rank = 2


class Arbitrary(ScopedSymbol):
    """Arbitrary function v^m of the general velocity solution."""
    kind = SymbolKind.ARBITRARY
    rank = 3


class Placeholder(ScopedSymbol):
    """Polynomial stand-in for a radical or a free-function term."""
    kind = SymbolKind.FREE_FUNCTION_PARTIAL
    rank = 4


class Coefficient(ScopedSymbol):
    """Symbol of the coefficient field: a constant of the model."""
    kind = SymbolKind.CONSTANT
    rank = 10


class Auxiliary(Coefficient):
    """Auxiliary Xi^m standing in for an unphysical coordinate."""
    kind = SymbolKind.AUXILIARY
    rank = 11


class Parameter(Coefficient):
    """
    Function of tau only, written with its tilde-order as trailing '~'.

    Example:
        >>> Parameter("eps").advance()
        eps~
    """
    kind = SymbolKind.PARAMETER
    rank = 12

    @property
    def tilde_order(self) -> int:
        return len(self.name) - len(self.name.rstrip("~"))

    @property
    def base_name(self) -> str:
        return self.name.rstrip("~")

    def advance(self) -> "Parameter":
        """The tau-derivative of this parameter."""
        return type(self)(self.name + "~", **self.assumptions0)


class Unknown(Parameter):
    """Unknown xi^m of the conjecture conditions."""
    kind = SymbolKind.UNKNOWN
    rank = 13


def _natural_key(name: str) -> tuple:
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name))


def symbol_sort_key(symbol: sp.Symbol) -> tuple:
    """Term-order key: q before u before pi before auxiliaries, then by name."""
    rank = symbol.rank if isinstance(symbol, ScopedSymbol) else 5
    return (rank, _natural_key(symbol.name))


def is_coefficient(symbol: sp.Symbol) -> bool:
    return isinstance(symbol, Coefficient)


def free_function(name: str, arguments: Sequence[sp.Symbol]) -> Expr:
    """Opaque function theta(q, pi) applied to the phase-space variables."""
    return sp.Function(name)(*arguments)


def free_function_terms(e: Expr) -> set:
    """Applied free functions and their partials occurring in e."""
    return set(e.atoms(sp.Derivative)) | set(e.atoms(AppliedUndef)) | set(e.atoms(sp.Subs))


def parameters_of(e: Expr) -> list:
    return sorted((s for s in sp.sympify(e).free_symbols if isinstance(s, Parameter)), key=symbol_sort_key)


class Scope:
    """
    Name table of a model. Names are unique across every kind.

    Values are symbols, vector families (lists of symbols) or named
    expressions such as constraint macros.
    """

    def __init__(self):
        self._entries: dict[str, object] = {}

    def declare(self, name: str, value: object) -> None:
        if name in self._entries:
            raise DuplicateSymbol(name)
        self._entries[name] = value

    def copy(self) -> "Scope":
        scope = Scope()
        scope._entries = dict(self._entries)
        return scope

    def lookup(self, name: str) -> Optional[object]:
        return self._entries.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)


# ============================================================================
# Printing
# ============================================================================

class ExprPrinter(StrPrinter):
    """Prints theta by its bare name and partials as d(theta)/d(x)."""

    def _print_Function(self, expr):
        if isinstance(expr, AppliedUndef):
            return expr.func.__name__
        return super()._print_Function(expr)

    def _print_Derivative(self, expr):
        target = self._print(expr.expr)
        parts = []
        for variable, count in expr.variable_count:
            name = self._print(variable)
            parts.append(f"d({name})" if count == 1 else f"d({name})^{count}")
        return f"d({target})/" + "".join(parts)


_printer = ExprPrinter()


def to_text(e: Expr) -> str:
    """Deterministic text form of an expression."""
    return _printer.doprint(sp.sympify(e))


# ============================================================================
# Normalization and calculus
# ============================================================================

def normalize(e) -> Expr:
    """
    Canonical cancelled rational form.

    Raises:
        DivisionByZero: If a denominator is provably zero
        ExpressionError: If a floating-point number is present
    """
    e = sp.sympify(e)
    if e.has(sp.Float):
        raise ExpressionError(f"floating-point value in {e}")
    if e.has(sp.zoo, sp.nan, sp.oo):
        raise DivisionByZero(f"division by zero in {to_text(e)}")
    result = sp.cancel(e)
    if result.has(sp.zoo, sp.nan):
        raise DivisionByZero(f"division by zero in {to_text(e)}")
    return result


def diff(e: Expr, s: sp.Symbol) -> Expr:
    """Partial derivative; parameters are constant on phase space."""
    return normalize(sp.diff(e, s))


def time_derivative(e: Expr) -> Expr:
    """Explicit tau-derivative: every parameter advances its tilde-order."""
    return normalize(sp.Add(*[sp.diff(e, p) * p.advance() for p in parameters_of(e)]))


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution followed by normalization."""
    e = sp.sympify(e)
    if not bindings:
        return normalize(e)
    if e.has(sp.Derivative):
        return normalize(e.subs(dict(bindings), simultaneous=True))
    return normalize(e.xreplace(dict(bindings)))


# ============================================================================
# Rationalization
# ============================================================================

class _Atomizer:
    """
    Rewrites a family of expressions as polynomials.

    Free-function terms become placeholders. Each radical base b with root
    index L becomes a placeholder s with the relation s**L - b.
    """

    def __init__(self, exprs: Iterable[Expr]):
        exprs = [sp.sympify(e) for e in exprs]
        functions = set()
        radicals: dict[Expr, int] = {}
        for e in exprs:
            functions |= free_function_terms(e)
            for power in e.atoms(sp.Pow):
                if power.exp.is_Rational and not power.exp.is_Integer:
                    radicals[power.base] = sp.ilcm(radicals.get(power.base, 1), power.exp.q)

        self.forward: dict = {}
        self.backward: dict = {}
        for index, term in enumerate(sorted(functions, key=sp.default_sort_key)):
            placeholder = Placeholder(f"_f{index}")
            self.forward[term] = placeholder
            self.backward[placeholder] = term

        self.radicals: list[tuple[Placeholder, Expr, int]] = []
        self._roots: dict[Expr, tuple[Placeholder, int]] = {}
        for index, base in enumerate(sorted(radicals, key=sp.default_sort_key)):
            root = int(radicals[base])
            placeholder = Placeholder(f"_r{index}")
            self._roots[base] = (placeholder, root)
            self.radicals.append((placeholder, base.xreplace(self.forward), root))
            self.backward[placeholder] = base ** sp.Rational(1, root)

    def apply(self, e: Expr) -> Expr:
        e = sp.sympify(e).xreplace(self.forward)
        if self._roots:
            e = e.replace(
                lambda x: x.is_Pow and x.exp.is_Rational and not x.exp.is_Integer
                and x.base.xreplace(self.backward) in self._roots,
                self._rewrite_power,
            )
        return e

    def _rewrite_power(self, power: sp.Pow) -> Expr:
        placeholder, root = self._roots[power.base.xreplace(self.backward)]
        return placeholder ** int(power.exp * root)

    def polynomial(self, e: Expr) -> tuple[Expr, Expr]:
        """Numerator and denominator of the atomized expression."""
        num, den = sp.fraction(sp.together(self.apply(e)))
        return sp.expand(num), den

    def relations(self) -> list[Expr]:
        return [s ** root - base for s, base, root in self.radicals]

    def restore(self, e: Expr) -> Expr:
        return sp.sympify(e).xreplace(self.backward)


def _ring_symbols(polys: Iterable[Expr]) -> list:
    found = set()
    for p in polys:
        found |= {s for s in p.free_symbols if not is_coefficient(s)}
    return sorted(found, key=symbol_sort_key)


def _coefficient_symbols(polys: Iterable[Expr]) -> list:
    found = set()
    for p in polys:
        found |= {s for s in p.free_symbols if is_coefficient(s)}
    return sorted(found, key=symbol_sort_key)


def _domain(coefficients: Sequence[sp.Symbol]):
    return sp.QQ.frac_field(*coefficients) if coefficients else sp.QQ


def _check_degree(polys: Iterable[Expr], ring: Sequence[sp.Symbol], cap: int) -> None:
    if not ring:
        return
    for p in polys:
        degree = sp.Poly(p, *ring).total_degree()
        if degree > cap:
            raise DegreeCapExceeded(degree, cap)


@lru_cache(maxsize=512)
def _ideal_basis(
    gens: tuple,
    radicals: tuple,
    coefficients: tuple,
    cap: int,
) -> tuple:
    """Reduced Groebner basis of gens plus radical relations, closed under the real-root rule."""
    polys = list(gens) + [s ** root - base for s, base, root in radicals]
    adjoined: set = set()
    while True:
        ring = _ring_symbols(polys)
        basis = sp.groebner(polys, *ring, order="grlex", domain=_domain(coefficients))
        _check_degree(basis.exprs, ring, cap)
        fresh = [
            s for s, base, _ in radicals
            if s not in adjoined and basis.reduce(base)[1] == 0
        ]
        if not fresh:
            logger.debug(f"Groebner basis with {len(basis.exprs)} elements over {len(ring)} variables")
            return tuple(basis.exprs)
        adjoined.update(fresh)
        polys.extend(fresh)


def _is_unit(p: Expr) -> bool:
    return p != 0 and not _ring_symbols([p])


def reduce_mod_ideal(e: Expr, gens: Sequence[Expr], cap: Optional[int] = None) -> Expr:
    """
    Normal form of e modulo the ideal generated by gens.

    Plain graded-lex division is tried first; when it leaves a remainder the
    reduction is repeated against a cached Groebner basis. A result of 0
    certifies membership.

    Args:
        e: Expression to reduce
        gens: Ideal generators (rational functions; numerators are used)
        cap: Total-degree cap, defaults to Settings.degree_cap

    Returns:
        Expr: Normal form r with e - r in the ideal

    Raises:
        DegreeCapExceeded: If an input or basis element exceeds the cap

    Example:
        >>> reduce_mod_ideal(pq3 * q1, [pq3])
        0
    """
    cap = cap if cap is not None else get_settings().degree_cap
    e = normalize(e)
    if e == 0:
        return e
    generators = [g for g in (normalize(g) for g in gens) if g != 0]
    num, den = sp.fraction(e)
    atomizer = _Atomizer([num, *generators])
    if not generators and not atomizer.radicals:
        return e

    f, f_den = atomizer.polynomial(num)
    ideal = [atomizer.polynomial(g)[0] for g in generators]
    if any(_is_unit(g) for g in ideal):
        return sp.Integer(0)
    relations = atomizer.relations()
    polys = [f, *ideal, *relations]
    ring = _ring_symbols(polys)
    if not ring:
        return e
    _check_degree(polys, ring, cap)
    remainder = _normal_form(f, ideal, relations, tuple(atomizer.radicals), ring, cap)
    if remainder is None:
        return sp.Integer(0)
    return normalize(atomizer.restore(remainder) / (atomizer.restore(f_den) * den))


def _normal_form(
    f: Expr, ideal: list, relations: list, radicals: tuple, ring: list, cap: int
) -> Optional[Expr]:
    """
    Remainder of f, reduced one coefficient monomial at a time.

    Coefficients that occur only in f split it into parts reduced over the
    smaller field of the generators; the remainder is linear over it. Returns
    None when the basis is the unit ideal.
    """
    generators = ideal + relations
    field = _coefficient_symbols(generators)
    known = set(field)
    extra = [s for s in _coefficient_symbols([f]) if s not in known]
    parts = sp.Poly(f, *extra).terms() if extra else [((), f)]
    domain = _domain(field)
    basis: Optional[tuple] = None
    total = sp.Integer(0)
    for monomial, part in parts:
        _, remainder = sp.reduced(part, generators, *ring, order="grlex", domain=domain)
        if remainder != 0:
            if basis is None:
                basis = _ideal_basis(tuple(ideal), radicals, tuple(field), cap)
                if any(_is_unit(b) for b in basis):
                    return None
                logger.debug(f"Plain division stalled; reducing against basis of {len(basis)}")
            _, remainder = sp.reduced(part, list(basis), *ring, order="grlex", domain=domain)
        total += sp.Mul(*[s ** k for s, k in zip(extra, monomial)]) * remainder
    return total


def is_zero(e: Expr) -> bool:
    """
    True iff e is zero, rationalizing radicals when present.

    Raises:
        Inconclusive: If rationalization exceeds the degree cap
    """
    e = normalize(e)
    if e == 0:
        return True
    return reduce_mod_ideal(e, []) == 0


def in_ideal(e: Expr, gens: Sequence[Expr]) -> bool:
    return reduce_mod_ideal(e, gens) == 0


def in_radical(e: Expr, gens: Sequence[Expr]) -> bool:
    """Radical membership: e vanishes wherever gens do (Rabinowitsch trick)."""
    if in_ideal(e, gens):
        return True
    auxiliary = Placeholder("_t")
    numerator = sp.fraction(normalize(e))[0]
    return reduce_mod_ideal(sp.Integer(1), [*gens, 1 - auxiliary * numerator]) == 0


def divide_by_ideal(e: Expr, gens: Sequence[Expr]) -> tuple[list[Expr], dict, Expr]:
    """
    Multivariate division of e by gens in the given order.

    Radicals whose base lies in the ideal are appended as extra divisors and
    reported separately, keyed by the radical.

    Returns:
        tuple: (quotients aligned with gens, {radical: quotient}, remainder)
    """
    e = normalize(e)
    num, den = sp.fraction(e)
    generators = [normalize(g) for g in gens]
    atomizer = _Atomizer([num, *generators])
    f, f_den = atomizer.polynomial(num)
    divisors = [atomizer.polynomial(g)[0] for g in generators]
    radical_divisors = [
        s for s, base, _ in atomizer.radicals
        if in_ideal(atomizer.restore(base), generators)
    ]
    relations = atomizer.relations()
    polys = [f, *divisors, *radical_divisors, *relations]
    ring = _ring_symbols(polys)
    unit = normalize(1 / (atomizer.restore(f_den) * den))
    if not ring or not (divisors or radical_divisors):
        return [sp.Integer(0)] * len(gens), {}, e
    quotients, remainder = sp.reduced(
        f,
        divisors + radical_divisors + relations,
        *ring,
        order="grlex",
        domain=_domain(_coefficient_symbols(polys)),
    )
    restored = [normalize(atomizer.restore(q) * unit) for q in quotients]
    radical_part = {
        atomizer.restore(s): restored[len(divisors) + i]
        for i, s in enumerate(radical_divisors)
        if restored[len(divisors) + i] != 0
    }
    return restored[: len(divisors)], radical_part, normalize(atomizer.restore(remainder) * unit)


def split_by_monomials(e: Expr, variables: Sequence[sp.Symbol]) -> list[Expr]:
    """
    Coefficients of e as a polynomial in the given variables.

    Only the numerator is split. Radicals over the variables count as
    variables themselves; everything else is coefficient.
    """
    num = sp.fraction(normalize(e))[0]
    if num == 0:
        return []
    atomizer = _Atomizer([num])
    split = set(variables)
    gens = list(variables) + [
        s for s, base, _ in atomizer.radicals if base.free_symbols & split
    ]
    poly_num, _ = atomizer.polynomial(num)
    gens = [g for g in gens if poly_num.has(g)]
    if not gens:
        return [normalize(num)]
    poly = sp.Poly(poly_num, *gens)
    return [normalize(atomizer.restore(coeff)) for _, coeff in poly.terms()]


# ============================================================================
# Constraint presentation
# ============================================================================

_SIGN_RANK = {
    SymbolKind.VELOCITY: 0,
    SymbolKind.MOMENTUM: 1,
    SymbolKind.COORDINATE: 2,
    SymbolKind.ARBITRARY: 3,
}


def _term_key(term: Expr) -> tuple:
    keys = [
        (_SIGN_RANK.get(getattr(s, "kind", None), 4), _natural_key(s.name))
        for s in term.free_symbols
    ]
    return (min(keys) if keys else (9, ()), sp.default_sort_key(term))


def fix_sign(f: Expr) -> Expr:
    """Make most terms positive; on a tie the leading term is positive."""
    f = sp.expand(f)
    terms = sp.Add.make_args(f)
    negatives = sum(1 for t in terms if t.as_coeff_Mul()[0].is_negative)
    if 2 * negatives > len(terms):
        return sp.expand(-f)
    if 2 * negatives == len(terms):
        lead = min(terms, key=_term_key)
        if lead.as_coeff_Mul()[0].is_negative:
            return sp.expand(-f)
    return f


def constraint_form(e: Expr) -> Expr:
    """
    Presentation of a constraint equation e = 0.

    Takes the numerator, drops factors that are nonzero under the symbol
    assumptions, keeps each remaining factor once, replaces radicals by their
    base and fixes the sign.

    Example:
        >>> constraint_form(-q2**2 / 2)
        q2
    """
    e = normalize(e)
    num = sp.fraction(e)[0]
    if num == 0:
        return sp.Integer(0)
    _, factors = sp.factor_list(num)
    kept: list[Expr] = []
    for factor, _ in factors:
        if factor.is_Pow and factor.exp.is_Rational and not factor.exp.is_Integer:
            factor = factor.base
        if factor.is_number or factor.is_zero is False:
            continue
        if factor not in kept:
            kept.append(factor)
    if not kept:
        return sp.Integer(1)
    return fix_sign(sp.Mul(*kept))
