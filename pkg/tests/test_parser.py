"""
Tests for the model-file parser.
"""
import pytest
import sympy as sp

from app.core.exceptions import (
    ArityMismatch,
    DuplicateSymbol,
    ModelError,
    ModelSyntaxError,
    UndeclaredSymbol,
)
from app.expr import Scope, normalize, to_text
from app.parser import metric, parse_expr, parse_model, velocity_name


def _source(*lines: str) -> str:
    return "\n".join(["model t", *lines])


class TestNaming:
    """Test symbol naming conventions."""

    def test_velocity_names(self):
        """q<k> pairs with u<k>; other coordinates gain a 'u' prefix."""
        assert velocity_name("q3") == "u3"
        assert velocity_name("e") == "ue"
        assert velocity_name("x_0") == "ux_0"

    def test_metric_signature(self):
        """Mostly plus."""
        assert metric(4) == [-1, 1, 1, 1]


class TestCorpusModels:
    """Test that corpus files parse to the expected models."""

    def test_cawley(self, load):
        """Three coordinates and L = u1 u2 - q3 q2^2 / 2."""
        m = load("cawley")
        assert [c.name for c in m.coords] == ["q1", "q2", "q3"]
        assert [u.name for u in m.velocities] == ["u1", "u2", "u3"]
        assert [p.name for p in m.momenta] == ["pq1", "pq2", "pq3"]
        q2, q3 = m.coords[1], m.coords[2]
        u1, u2 = m.velocities[0], m.velocities[1]
        assert m.lagrangian == normalize(u1 * u2 - q3 * q2 ** 2 / 2)
        assert m.max_chain_order == 6

    def test_relativistic_particle_expands_vector(self, load):
        """vector x in dim 4 gives x_0..x_3 before the einbein."""
        m = load("relativistic_particle")
        assert m.n == 5
        assert [c.name for c in m.coords] == ["x_0", "x_1", "x_2", "x_3", "e"]
        assert m.dim == 4
        e = m.scope.lookup("e")
        mass = m.scope.lookup("m")
        ux = m.scope.lookup("ux")
        kinetic = -ux[0] ** 2 + ux[1] ** 2 + ux[2] ** 2 + ux[3] ** 2
        assert m.lagrangian == normalize(kinetic / (2 * e) - mass ** 2 * e / 2)

    def test_assumptions_attach_to_symbols(self, load):
        """'assume e nonzero' and 'const kappa nonzero' reach the symbols."""
        m = load("bilocal")
        assert m.scope.lookup("e1").is_zero is False
        assert m.scope.lookup("kappa").is_zero is False
        assert m.scope.lookup("x1_0").is_zero is None

    def test_constraint_hints_and_dtr(self, load):
        """Named constraints keep declaration order; the dtr is parsed."""
        m = load("bilocal")
        assert list(m.constraint_hints) == ["chi1", "chi2", "chi0"]
        assert [p.name for p in m.parameters] == ["eps0", "eps1", "eps2", "eta1", "eta2"]
        assert m.dtr is not None
        assert m.dtr.has(m.scope.lookup("eps0"))

    def test_usolution_with_theta(self, load):
        """theta3 becomes a free function of the phase space."""
        m = load("frenkel")
        assert m.provided_usolution is not None
        theta = m.provided_usolution[2]
        assert theta.func.__name__ == "theta3"
        assert set(theta.args) == set(m.phase_space)
        assert m.provided_usolution[1] == sp.sqrt(m.momenta[0])


class TestExpressions:
    """Test the expression grammar."""

    def test_power_is_right_associative(self, load):
        """2^3^2 = 2^9."""
        assert parse_expr("2^3^2", load("cawley")) == 512

    def test_unary_minus_binds_below_power(self, load):
        """-q1^2 = -(q1^2)."""
        m = load("cawley")
        assert parse_expr("-q1^2", m) == -m.coords[0] ** 2

    def test_decimal_literals_are_exact(self, load):
        """0.5 parses as 1/2."""
        m = load("cawley")
        assert parse_expr("0.5*q1", m) == m.coords[0] / 2

    def test_momentum_vectors_are_raised(self, load):
        """dot(px, x) = sum of px_k x_k with the metric absorbed."""
        m = load("relativistic_particle")
        x, px = m.scope.lookup("x"), m.scope.lookup("px")
        assert parse_expr("dot(px, x)", m) == normalize(sum(p * c for p, c in zip(px, x)))

    def test_indexing(self, load):
        """x[2] is the component x_2."""
        m = load("relativistic_particle")
        assert parse_expr("x[2]", m) == m.scope.lookup("x_2")

    def test_constraint_macros(self, load):
        """Named constraints can be used in later expressions."""
        m = load("bilocal")
        assert parse_expr("chi1 - chi1", m) == 0

    def test_vector_result_rejected(self, load):
        """A bare vector is not a scalar expression."""
        with pytest.raises(ModelSyntaxError):
            parse_expr("x + x", load("relativistic_particle"))

    def test_vector_product_rejected(self, load):
        """Vectors multiply only through dot."""
        with pytest.raises(ModelSyntaxError):
            parse_expr("dot(x*x, x)", load("relativistic_particle"))

    def test_index_out_of_range(self, load):
        """x[4] does not exist in dim 4."""
        with pytest.raises(ModelSyntaxError):
            parse_expr("x[4]", load("relativistic_particle"))

    @pytest.mark.parametrize("name, source", [
        ("frenkel", "pq2*sqrt(pq1) + (1/2)*q3*q2^2 + theta3*pq3"),
        ("relativistic_particle", "chi + e*pe - m^2*x[0]/3"),
        ("bilocal", "chi0*e1/e2 + kappa*dot(x1, px2)"),
    ])
    def test_printed_form_parses_back(self, load, name, source):
        """Printing an expression and parsing the text gives it back."""
        m = load(name)
        e = parse_expr(source, m)
        assert normalize(parse_expr(to_text(e), m) - e) == 0

    def test_theta_does_not_touch_the_model(self, load):
        """theta names in inline expressions leave the model scope unchanged."""
        m = load("cawley")
        before = m.scope.names()
        first = parse_expr("theta9*pq3", m)
        second = parse_expr("theta9*pq3", m)
        assert first == second == m.theta("theta9") * m.momenta[2]
        assert m.scope.names() == before
        assert "theta9" not in m.scope


class TestModelErrors:
    """Test rejection of malformed model files."""

    def test_undeclared_symbol_position(self):
        """The error names the symbol, line and column."""
        with pytest.raises(UndeclaredSymbol) as exc_info:
            parse_model(_source("coords q1", "lagrangian u1^2 + w"))
        assert exc_info.value.name == "w"
        assert exc_info.value.line == 3
        assert exc_info.value.column == 19

    def test_tau_rejected(self):
        """Explicit time dependence is refused."""
        with pytest.raises(ModelSyntaxError):
            parse_model(_source("coords q1", "lagrangian tau*u1^2"))

    def test_unknown_directive(self):
        """Unknown directives report their line."""
        with pytest.raises(ModelSyntaxError) as exc_info:
            parse_model(_source("coords q1", "hamiltonian pq1^2", "lagrangian u1^2"))
        assert exc_info.value.line == 3

    def test_missing_lagrangian(self):
        """Every model needs a Lagrangian."""
        with pytest.raises(ModelSyntaxError):
            parse_model(_source("coords q1"))

    def test_duplicate_names(self):
        """Names are unique across kinds."""
        with pytest.raises(ModelSyntaxError):
            parse_model(_source("coords q1 q1", "lagrangian u1^2"))

    def test_duplicate_reports_line(self):
        """A name redeclared on a later line reports that line."""
        source = _source("coords q1", "const m", "param q1", "lagrangian u1^2")
        with pytest.raises(ModelSyntaxError) as exc_info:
            parse_model(source)
        assert exc_info.value.line == 4
        assert "q1" in str(exc_info.value)

    def test_duplicate_constraint_reports_line(self):
        """A constraint named like a symbol reports its own line."""
        source = _source("coords q1", "lagrangian u1^2", "constraint q1 = pq1")
        with pytest.raises(ModelSyntaxError) as exc_info:
            parse_model(source)
        assert exc_info.value.line == 4

    def test_scope_rejects_redeclaration(self):
        """The scope itself raises DuplicateSymbol, a model error."""
        scope = Scope()
        scope.declare("a", 1)
        with pytest.raises(DuplicateSymbol):
            scope.declare("a", 2)
        assert issubclass(DuplicateSymbol, ModelError)

    def test_reserved_names(self):
        """tau and theta names cannot be declared."""
        with pytest.raises(ModelSyntaxError):
            parse_model(_source("coords q1", "const theta2", "lagrangian u1^2"))

    def test_momentum_in_lagrangian(self):
        """L depends on (q, u) only."""
        with pytest.raises(ModelSyntaxError):
            parse_model(_source("coords q1", "lagrangian u1^2 + pq1"))

    def test_usolution_arity(self):
        """One entry per velocity."""
        with pytest.raises(ArityMismatch):
            parse_model(_source("coords q1 q2", "lagrangian u1^2*u2", "usolution u1 = pq1"))

    def test_function_arity(self):
        """sqrt takes one argument."""
        with pytest.raises(ArityMismatch):
            parse_model(_source("coords q1", "lagrangian sqrt(u1, u1)"))

    def test_unbalanced_parentheses(self):
        """A missing ')' is a syntax error."""
        with pytest.raises(ModelSyntaxError):
            parse_model(_source("coords q1", "lagrangian (u1^2"))

    def test_max_order_directive(self):
        """max_order overrides the configured chain bound."""
        m = parse_model(_source("coords q1", "max_order 3", "lagrangian u1^2"))
        assert m.max_chain_order == 3

    def test_comments_and_blank_lines(self):
        """Comments and blank lines are ignored."""
        m = parse_model("# header\n\nmodel c  # trailing\ncoords q1\nlagrangian u1^2\n")
        assert m.name == "c"
        assert m.n == 1
