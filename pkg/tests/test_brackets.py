"""
Tests for the Poisson, M- and EM-brackets.

Test coverage:
- Canonical pairs and randomized bracket laws
- M-bracket tables of the corpus models
- Class IA closure
"""
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from app.brackets import (
    BracketContext,
    BracketKind,
    bracket_table,
    em_bracket,
    is_class_IA,
    m_bracket,
    poisson,
)
from app.canonical import analyze_canonical
from app.expr import Parameter, normalize
from app.lagrangian import analyze_lagrangian
from tests.conftest import _analysis, _model

CAWLEY = _model("cawley")
CAWLEY_STATE = _analysis("cawley").state
CAWLEY_CTX = CAWLEY_STATE.context
PHASE = [*CAWLEY.coords[:2], *CAWLEY.momenta[:2]]


def _build(terms) -> sp.Expr:
    return sp.Add(*[
        c * sp.Mul(*[s ** k for s, k in zip(PHASE, powers)]) for c, powers in terms
    ])


monomials = st.tuples(
    st.integers(min_value=-3, max_value=3),
    st.tuples(*[st.integers(min_value=0, max_value=2) for _ in PHASE]),
)
functions = st.lists(monomials, min_size=1, max_size=3).map(_build)


class TestPoisson:
    """Test the canonical Poisson bracket."""

    def test_canonical_pairs(self):
        """{q^A, pi_B} = delta^A_B."""
        q1, q2, _ = CAWLEY.coords
        pq1, pq2, _ = CAWLEY.momenta
        assert poisson(q1, pq1, CAWLEY) == 1
        assert poisson(q1, pq2, CAWLEY) == 0
        assert poisson(pq2, q2, CAWLEY) == -1
        assert poisson(q1, q2, CAWLEY) == 0

    def test_parameters_pass_through(self):
        """Parameters are constant on phase space."""
        eps = Parameter("eps")
        q1, pq1 = CAWLEY.coords[0], CAWLEY.momenta[0]
        assert poisson(eps * q1, pq1, CAWLEY) == eps

    @settings(max_examples=50, deadline=None)
    @given(functions, functions)
    def test_antisymmetry(self, f, g):
        """{F, G} = -{G, F}."""
        assert poisson(f, g, CAWLEY) == normalize(-poisson(g, f, CAWLEY))

    @settings(max_examples=50, deadline=None)
    @given(functions, functions, functions)
    def test_leibniz(self, f, g, h):
        """{F, GH} = {F, G} H + G {F, H}."""
        left = poisson(f, g * h, CAWLEY)
        right = normalize(poisson(f, g, CAWLEY) * h + g * poisson(f, h, CAWLEY))
        assert left == right

    @settings(max_examples=200, deadline=None)
    @given(functions, functions, functions)
    def test_jacobi(self, f, g, h):
        """{F, {G, H}} + {G, {H, F}} + {H, {F, G}} = 0."""
        total = (
            poisson(f, poisson(g, h, CAWLEY), CAWLEY)
            + poisson(g, poisson(h, f, CAWLEY), CAWLEY)
            + poisson(h, poisson(f, g, CAWLEY), CAWLEY)
        )
        assert normalize(total) == 0


class TestMBracket:
    """Test the Hessian-weighted brackets."""

    def test_cawley_entries(self):
        """M(q, U-hat) couples pq1 with pq2 only."""
        pq1, pq2, pq3 = CAWLEY.momenta
        assert m_bracket(CAWLEY_CTX, pq1, pq2) == 1
        assert m_bracket(CAWLEY_CTX, pq1, pq1) == 0
        assert m_bracket(CAWLEY_CTX, pq3, pq3) == 0

    @settings(max_examples=50, deadline=None)
    @given(functions, functions)
    def test_symmetry(self, f, g):
        """{F, G}_M = {G, F}_M."""
        assert m_bracket(CAWLEY_CTX, f, g) == m_bracket(CAWLEY_CTX, g, f)

    @settings(max_examples=50, deadline=None)
    @given(functions, functions, functions)
    def test_leibniz(self, f, g, h):
        """{F, GH}_M = {F, G}_M H + G {F, H}_M."""
        left = m_bracket(CAWLEY_CTX, f, g * h)
        right = normalize(m_bracket(CAWLEY_CTX, f, g) * h + g * m_bracket(CAWLEY_CTX, f, h))
        assert left == right

    @pytest.mark.parametrize("n, k", [(1, -1), (-1, 1), (0, 1), (1, 0), (0, -1), (-1, 0)])
    def test_bilocal_sl2(self, n, k):
        """Rescaled bilocal constraints satisfy {chi'_n, chi'_k} = (n - k) chi'_(n+k)."""
        m = _model("bilocal")
        kappa = m.scope.lookup("kappa")
        hints = m.constraint_hints
        scaled = {
            1: hints["chi1"] / (2 * kappa),
            -1: hints["chi2"] / (2 * kappa),
            0: -hints["chi0"] / (4 * kappa),
        }
        bracket = poisson(scaled[n], scaled[k], m)
        assert normalize(bracket - (n - k) * scaled[n + k]) == 0

    def test_em_bracket(self):
        """{pq1, pq2}_EM = M_12 {U-hat^2, pq2}_M = 1."""
        pq1, pq2, _ = CAWLEY.momenta
        assert em_bracket(CAWLEY_CTX, pq1, pq2) == 1
        assert em_bracket(CAWLEY_CTX, CAWLEY.coords[0], pq2) == 0

    def test_bilocal_brackets(self, analyzed):
        """M-brackets of the bilocal constraints close on the constraints."""
        state = analyzed("bilocal").state
        m, ctx = state.model, state.context
        chi0, chi1, chi2 = (m.constraint_hints[k] for k in ("chi0", "chi1", "chi2"))
        e1, e2 = m.scope.lookup("e1"), m.scope.lookup("e2")
        assert m_bracket(ctx, chi1, chi1) == normalize(2 * chi1 / e1)
        assert m_bracket(ctx, chi2, chi2) == normalize(2 * chi2 / e2)
        assert m_bracket(ctx, chi0, chi0) == normalize(2 * chi2 / e1 + 2 * chi1 / e2)
        assert m_bracket(ctx, chi0, chi1) == normalize(chi0 / e1)
        assert m_bracket(ctx, chi0, chi2) == normalize(chi0 / e2)


class TestTables:
    """Test bracket tables and the class IA test."""

    def test_poisson_table_antisymmetric(self, analyzed):
        """The reduced Poisson table of the second-class model is antisymmetric."""
        state = analyzed("second_class").state
        table = bracket_table(state.canonical.all_constraints, state.context, BracketKind.POISSON)
        assert table[0][1] == -table[1][0]
        assert table[0][1] != 0

    @pytest.mark.parametrize("name", ["cawley", "bilocal", "frenkel"])
    def test_class_ia(self, analyzed, name):
        """These models close under the M-bracket."""
        assert analyzed(name).state.class_ia is True

    def test_massive_particle_is_not_class_ia(self, analyzed):
        """{chi, chi}_M = -m^2 / e on the mass shell."""
        state = analyzed("relativistic_particle").state
        m = state.model
        e, mass = m.scope.lookup("e"), m.scope.lookup("m")
        closed, table = is_class_IA(state.context, state.canonical.all_constraints)
        assert not closed
        assert table[1][1] == normalize(-mass ** 2 / e)

    def test_massless_particle_is_class_ia(self, load):
        """With m = 0 the mass shell closes on itself."""
        m = load("massless_particle")
        la = analyze_lagrangian(m)
        can = analyze_canonical(m, la)
        ctx = BracketContext.build(m, la.M, can.uhat)
        closed, _ = is_class_IA(ctx, can.all_constraints)
        assert closed
