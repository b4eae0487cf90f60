"""
Tests for the expression core.

Test coverage:
- Normalization, exact arithmetic and division by zero
- Parameters and tau-derivatives
- Ideal reduction, radicals and the degree cap
- Constraint presentation
- Randomized ring and derivation laws
"""
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.exceptions import DegreeCapExceeded, DivisionByZero, ExpressionError
from app.expr import (
    Coefficient,
    Coordinate,
    Momentum,
    Parameter,
    Unknown,
    constraint_form,
    diff,
    divide_by_ideal,
    fix_sign,
    free_function,
    in_ideal,
    in_radical,
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

q1, q2, q3 = Coordinate("q1"), Coordinate("q2"), Coordinate("q3")
pq1, pq3 = Momentum("pq1"), Momentum("pq3")
eps, eta = Parameter("eps"), Parameter("eta")


class TestNormalize:
    """Test canonical forms."""

    def test_equal_polynomials_share_a_form(self):
        """Structurally different but equal expressions normalize identically."""
        assert normalize((q1 + 1) ** 2) == normalize(q1 ** 2 + 2 * q1 + 1)

    def test_cancellation_to_zero(self):
        """(q1+1)^2 - q1^2 - 2 q1 - 1 is zero."""
        assert normalize((q1 + 1) ** 2 - q1 ** 2 - 2 * q1 - 1) == 0

    def test_rational_functions_cancel(self):
        """Common factors cancel."""
        assert normalize((q1 ** 2 - q2 ** 2) / (q1 - q2)) == q1 + q2

    def test_idempotent(self):
        """normalize(normalize(x)) = normalize(x)."""
        e = (q1 + q2) ** 3 / (q1 * q2)
        assert normalize(normalize(e)) == normalize(e)

    def test_division_by_zero(self):
        """A provably zero denominator raises DivisionByZero."""
        with pytest.raises(DivisionByZero):
            normalize(sp.Integer(1) / (q1 - q1))

    def test_floats_rejected(self):
        """Floating point never enters an expression."""
        with pytest.raises(ExpressionError):
            normalize(sp.Float(0.5) * q1)

    def test_exact_rationals(self):
        """Coefficients stay exact."""
        assert normalize(sp.Rational(1, 3) * q1 + sp.Rational(2, 3) * q1) == q1


class TestParameters:
    """Test tau-dependent symbols."""

    def test_advance_appends_tilde(self):
        """The tau-derivative of eps is eps~."""
        assert eps.advance().name == "eps~"
        assert eps.advance().advance().tilde_order == 2
        assert eps.advance().base_name == "eps"

    def test_advance_keeps_class(self):
        """Unknowns advance to unknowns."""
        assert isinstance(Unknown("xi").advance(), Unknown)

    def test_parameters_are_constant_on_phase_space(self):
        """d(eps q1)/dq1 = eps and d(eps)/dq1 = 0."""
        assert diff(eps * q1, q1) == eps
        assert diff(eps, q1) == 0

    def test_time_derivative(self):
        """(eps q1 + eta^2)~ = eps~ q1 + 2 eta eta~."""
        e = time_derivative(eps * q1 + eta ** 2)
        assert e == normalize(Parameter("eps~") * q1 + 2 * eta * Parameter("eta~"))

    def test_time_derivative_of_phase_space_function(self):
        """Phase-space functions have no explicit tau-dependence."""
        assert time_derivative(q1 * pq1) == 0

    def test_parameters_of_sorted(self):
        """parameters_of lists parameters by name."""
        assert parameters_of(eta * q1 + eps) == [eps, eta]

    def test_sort_key_orders_kinds(self):
        """Coordinates sort before momenta, momenta before parameters."""
        ordered = sorted([eps, pq1, q2, q1], key=symbol_sort_key)
        assert ordered == [q1, q2, pq1, eps]


class TestIdealReduction:
    """Test reduction modulo an ideal."""

    def test_member_reduces_to_zero(self):
        """pq3 q1 lies in <pq3>."""
        assert reduce_mod_ideal(pq3 * q1, [pq3]) == 0

    def test_remainder(self):
        """q2^2 + q1 reduces to q1 modulo <q2>."""
        assert reduce_mod_ideal(q2 ** 2 + q1, [q2]) == q1

    def test_parameters_are_coefficients(self):
        """eps q2 lies in <q2> whatever eps is."""
        assert in_ideal(eps * q2 + eta * q2 * pq1, [q2])

    def test_groebner_fallback(self):
        """q1 is in <q1 + q2, q1 - q2> although plain division stalls."""
        assert in_ideal(q1, [q1 + q2, q1 - q2])

    def test_radical_membership(self):
        """q2 vanishes on q2^2 = 0 but is not in the ideal."""
        assert not in_ideal(q2, [q2 ** 2])
        assert in_radical(q2, [q2 ** 2])

    def test_square_root_joins_ideal(self):
        """sqrt(pq1) vanishes where pq1 does."""
        assert reduce_mod_ideal(sp.sqrt(pq1), [pq1]) == 0

    def test_radical_rationalized_in_zero_test(self):
        """sqrt(pq1)^2 - pq1 is zero."""
        assert is_zero(sp.sqrt(pq1) ** 2 - pq1)

    def test_degree_cap(self):
        """Inputs above the cap raise DegreeCapExceeded."""
        with pytest.raises(DegreeCapExceeded):
            reduce_mod_ideal(q1 ** 5 + q2, [q2], cap=3)

    def test_unit_generator(self):
        """A constant generator makes everything vanish."""
        assert reduce_mod_ideal(q1 + pq1, [sp.Integer(3)]) == 0

    def test_free_functions_are_opaque(self):
        """theta(q, pi) times a generator reduces to zero."""
        theta = free_function("theta3", [q1, q2, q3, pq1, pq3])
        assert reduce_mod_ideal(theta * pq3 + q2, [pq3, q2]) == 0

    def test_linear_over_free_coefficients(self):
        """Coefficients absent from the generators factor out of the remainder."""
        gens = [q1 + q2, q1 - q2 ** 2]
        a, b = q1 ** 3 + pq1 * q2, q2 ** 2 * pq1 + q1
        combined = reduce_mod_ideal(eps * a + eta * b + a * b, gens)
        parts = eps * reduce_mod_ideal(a, gens) + eta * reduce_mod_ideal(b, gens)
        assert combined == normalize(parts + reduce_mod_ideal(a * b, gens))

    @settings(max_examples=25, deadline=None)
    @given(st.fractions(max_denominator=7), st.fractions(max_denominator=7))
    def test_remainder_agrees_on_the_variety(self, t, s):
        """On q2 = q1^2 an expression and its remainder take the same value."""
        e = q1 ** 3 * q2 + q2 ** 2 * pq1 - q1 + eps * q2
        remainder = reduce_mod_ideal(e, [q2 - q1 ** 2])
        point = {q1: sp.Rational(t), q2: sp.Rational(t) ** 2, pq1: sp.Rational(s)}
        assert normalize(e.xreplace(point) - remainder.xreplace(point)) == 0


class TestDivision:
    """Test multivariate division."""

    def test_quotients(self):
        """3 q2 + q1 pq1 = 3 (q2) + q1 (pq1)."""
        quotients, radicals, remainder = divide_by_ideal(3 * q2 + q1 * pq1, [q2, pq1])
        assert quotients == [3, q1]
        assert radicals == {}
        assert remainder == 0

    def test_remainder_kept(self):
        """Terms outside the ideal stay in the remainder."""
        _, _, remainder = divide_by_ideal(q2 + q3, [q2])
        assert remainder == q3

    def test_radicals_reported(self):
        """sqrt(pq1) is a divisor when pq1 is in the ideal."""
        quotients, radicals, remainder = divide_by_ideal(eps * sp.sqrt(pq1), [q2, pq1])
        assert remainder == 0
        assert radicals == {sp.sqrt(pq1): eps}


class TestPresentation:
    """Test constraint forms, splitting and printing."""

    def test_constraint_form_strips_constants_and_powers(self):
        """-q2^2/2 = 0 is presented as q2."""
        assert constraint_form(-q2 ** 2 / 2) == q2

    def test_constraint_form_strips_nonzero_symbols(self):
        """A constant assumed nonzero is dropped."""
        kappa = Coefficient("kappa", nonzero=True)
        assert constraint_form(kappa * (q1 - q2)) == q1 - q2

    def test_fix_sign(self):
        """Most terms positive."""
        assert fix_sign(-q1 - q2) == q1 + q2

    def test_split_by_monomials(self):
        """eps q1 + eta q1 + eps~ splits into (eps + eta) and eps~."""
        parts = split_by_monomials(eps * q1 + eta * q1 + eps.advance(), [q1])
        assert set(parts) == {eps + eta, eps.advance()}

    def test_substitute_simultaneous(self):
        """q1 -> q2, q2 -> q1 swaps."""
        assert substitute(q1 - 2 * q2, {q1: q2, q2: q1}) == q2 - 2 * q1

    def test_to_text_prints_free_functions_by_name(self):
        """theta3(q, pi) prints as theta3."""
        theta = free_function("theta3", [q1, pq1])
        assert to_text(theta * pq1) == "pq1*theta3"

    def test_to_text_of_tilde_parameters(self):
        """Tilde-order shows as trailing '~'."""
        assert to_text(Parameter("eps2~~")) == "eps2~~"


# ============================================================================
# Randomized algebra laws
# ============================================================================

SYMBOLS = [q1, q2, pq1]

monomials = st.tuples(
    st.integers(min_value=-5, max_value=5),
    st.tuples(*[st.integers(min_value=0, max_value=2) for _ in SYMBOLS]),
)


def _build(terms) -> sp.Expr:
    return sp.Add(*[
        c * sp.Mul(*[s ** k for s, k in zip(SYMBOLS, powers)]) for c, powers in terms
    ])


polynomials = st.lists(monomials, max_size=4).map(_build)


class TestAlgebraLaws:
    """Ring axioms under normalize and the derivation law for diff."""

    @settings(max_examples=200, deadline=None)
    @given(polynomials, polynomials, polynomials)
    def test_ring_axioms(self, a, b, c):
        """Commutativity, associativity and distributivity."""
        assert normalize(a + b) == normalize(b + a)
        assert normalize(a * b) == normalize(b * a)
        assert normalize((a + b) + c) == normalize(a + (b + c))
        assert normalize((a * b) * c) == normalize(a * (b * c))
        assert normalize(a * (b + c)) == normalize(a * b + a * c)
        assert normalize(a - a) == 0

    @settings(max_examples=200, deadline=None)
    @given(polynomials, polynomials)
    def test_derivation_law(self, a, b):
        """d(ab) = (da) b + a (db)."""
        assert diff(a * b, q1) == normalize(diff(a, q1) * b + a * diff(b, q1))

    @settings(max_examples=100, deadline=None)
    @given(polynomials)
    def test_normalize_idempotent(self, a):
        """normalize is idempotent on random polynomials."""
        assert normalize(normalize(a)) == normalize(a)
