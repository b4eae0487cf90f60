"""
Model-file parser.

A model file is line oriented. Declarations (coords, vector, dim, const,
param, assume, max_order) are read first so that symbols carry their
assumptions from creation; then the expression directives (lagrangian,
usolution, constraint, dtr) are parsed against the finished scope.

Naming:
- coordinate ``q<k>`` pairs with velocity ``u<k>``; any other coordinate
  ``c`` pairs with ``uc``
- every coordinate ``c`` has momentum ``pc``
- a vector family ``x`` expands to ``x_0 .. x_{D-1}`` with families
  ``ux`` and ``px``; momentum families are raised by the metric when used
  as vectors
- ``theta<k>`` is a free function of all phase-space variables
"""
import logging
import re
from typing import Literal, Optional, Union

import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from app.core.config import get_settings
from app.core.exceptions import ArityMismatch, DuplicateSymbol, ModelSyntaxError, UndeclaredSymbol
from app.expr import (
    Coefficient,
    Coordinate,
    Expr,
    Momentum,
    Parameter,
    Scope,
    Velocity,
    free_function,
    normalize,
)

logger = logging.getLogger(__name__)

Value = Union[Expr, sp.ImmutableMatrix]

FUNCTIONS = {"sqrt": 1, "dot": 2}
RESERVED = {"tau", *FUNCTIONS}
THETA_RE = re.compile(r"theta\w*")
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*|\.\d+|\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),\[\]]))"
)


class Assumption(BaseModel):
    """Property attached to a constant or coordinate."""
    model_config = ConfigDict(frozen=True)

    symbol: str = Field(..., description="Name of the constant or coordinate")
    property: Literal["nonzero", "positive"] = Field(..., description="Assumed property")


class Model(BaseModel):
    """
    A parsed, validated model.

    Attributes:
        name: Model name
        coords: Coordinates q^A in declaration order
        velocities: Paired velocities u^A
        momenta: Paired momenta pi_A
        lagrangian: L(q, u)
        constants: Declared constants
        assumptions: Declared assumptions
        parameters: Declared tau-parameters (for a custom DTR)
        provided_usolution: Optional user-supplied U-hat(q, pi, theta)
        max_chain_order: Bound on both constraint chains
        dim: Vector dimension
        constraint_hints: Named constraint presentations, in declaration order
        dtr: Optional custom DTR generator
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    coords: list[Coordinate]
    velocities: list[Velocity]
    momenta: list[Momentum]
    lagrangian: Expr
    constants: list[Coefficient] = Field(default_factory=list)
    assumptions: list[Assumption] = Field(default_factory=list)
    parameters: list[Parameter] = Field(default_factory=list)
    provided_usolution: Optional[list[Expr]] = None
    max_chain_order: int = 6
    dim: int = 4
    constraint_hints: dict[str, Expr] = Field(default_factory=dict)
    dtr: Optional[Expr] = None
    scope: Scope

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def phase_space(self) -> list[sp.Symbol]:
        return [*self.coords, *self.momenta]

    def theta(self, name: str) -> Expr:
        """Free function of all phase-space variables."""
        return free_function(name, self.phase_space)


# ============================================================================
# Naming
# ============================================================================

def velocity_name(coordinate: str) -> str:
    match = re.fullmatch(r"q(\w+)", coordinate)
    return "u" + (match.group(1) if match else coordinate)


def momentum_name(coordinate: str) -> str:
    return "p" + coordinate


def metric(dim: int) -> list[int]:
    """Diagonal of the metric with signature (-, +, ..., +)."""
    return [-1] + [1] * (dim - 1)


# ============================================================================
# Expressions
# ============================================================================

class _Token:
    __slots__ = ("kind", "text", "column")

    def __init__(self, kind: str, text: str, column: int):
        self.kind = kind
        self.text = text
        self.column = column


def _tokenize(text: str, line: int, offset: int) -> list[_Token]:
    tokens = []
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = TOKEN_RE.match(text, position)
        if match is None or match.end() == position:
            column = offset + position + len(text[position:]) - len(text[position:].lstrip()) + 1
            raise ModelSyntaxError(f"unexpected character '{text[position:].lstrip()[0]}'", line, column)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), offset + match.start(kind) + 1))
        position = match.end()
    tokens.append(_Token("end", "", offset + len(text) + 1))
    return tokens


class ExpressionParser:
    """
    Recursive-descent parser for model expressions.

    Precedence: ``^`` (right associative) > unary minus > ``* /`` > ``+ -``.
    Values are scalars or column vectors; vectors support addition, scalar
    multiplication, indexing and ``dot``.
    """

    def __init__(self, scope: Scope, dim: int, line: int = 0, offset: int = 0):
        self.scope = scope
        self.metric = metric(dim)
        self.line = line
        self.offset = offset
        self.tokens: list[_Token] = []
        self.position = 0

    def parse(self, text: str) -> Expr:
        if not text.strip():
            raise ModelSyntaxError("empty expression", self.line, self.offset + 1)
        self.tokens = _tokenize(text, self.line, self.offset)
        self.position = 0
        value = self._sum()
        token = self._peek()
        if token.kind != "end":
            self._fail(f"unexpected '{token.text}'", token)
        if isinstance(value, sp.MatrixBase):
            self._fail("vector expression where a scalar is expected", self.tokens[0])
        return normalize(value)

    # -- token helpers ------------------------------------------------------

    def _peek(self) -> _Token:
        return self.tokens[self.position]

    def _next(self) -> _Token:
        token = self.tokens[self.position]
        self.position += 1
        return token

    def _accept(self, *texts: str) -> Optional[_Token]:
        token = self._peek()
        if token.kind == "op" and token.text in texts:
            self.position += 1
            return token
        return None

    def _expect(self, text: str) -> _Token:
        token = self._next()
        if token.kind != "op" or token.text != text:
            self._fail(f"expected '{text}'", token)
        return token

    def _fail(self, message: str, token: _Token):
        raise ModelSyntaxError(message, self.line, token.column)

    def _combine(self, op, left: Value, right: Value, token: _Token) -> Value:
        try:
            return op(left, right)
        except (TypeError, ValueError, sp.ShapeError) as exc:
            self._fail(f"invalid operands for '{token.text}': {exc}", token)

    # -- grammar ------------------------------------------------------------

    def _sum(self) -> Value:
        value = self._term()
        while True:
            token = self._accept("+", "-")
            if token is None:
                return value
            right = self._term()
            if token.text == "+":
                value = self._combine(lambda a, b: a + b, value, right, token)
            else:
                value = self._combine(lambda a, b: a - b, value, right, token)

    def _term(self) -> Value:
        value = self._unary()
        while True:
            token = self._accept("*", "/")
            if token is None:
                return value
            right = self._unary()
            if isinstance(value, sp.MatrixBase) and isinstance(right, sp.MatrixBase):
                self._fail("use dot(a, b) to multiply vectors", token)
            if token.text == "*":
                value = self._combine(lambda a, b: a * b, value, right, token)
            else:
                if isinstance(right, sp.MatrixBase):
                    self._fail("cannot divide by a vector", token)
                value = self._combine(lambda a, b: a / b, value, right, token)

    def _unary(self) -> Value:
        if self._accept("-"):
            return -self._unary()
        if self._accept("+"):
            return self._unary()
        return self._power()

    def _power(self) -> Value:
        base = self._atom()
        token = self._accept("^", "**")
        if token is None:
            return base
        exponent = self._unary()
        if isinstance(base, sp.MatrixBase) or isinstance(exponent, sp.MatrixBase):
            self._fail("powers of vectors are not defined", token)
        return sp.Pow(base, exponent)

    def _atom(self) -> Value:
        token = self._next()
        if token.kind == "number":
            return sp.Rational(token.text)
        if token.kind == "op" and token.text == "(":
            value = self._sum()
            self._expect(")")
            return value
        if token.kind == "ident":
            if self._peek().kind == "op" and self._peek().text == "(":
                return self._call(token)
            value = self._resolve(token)
            if self._accept("["):
                index = self._next()
                if index.kind != "number" or not index.text.isdigit():
                    self._fail("vector index must be an integer", index)
                self._expect("]")
                if not isinstance(value, sp.MatrixBase):
                    self._fail(f"'{token.text}' is not a vector", token)
                if int(index.text) >= value.rows:
                    self._fail(f"index {index.text} out of range", index)
                return self._component(token.text, int(index.text))
            return value
        self._fail(f"unexpected '{token.text or 'end of line'}'", token)

    def _call(self, name: _Token) -> Value:
        if name.text not in FUNCTIONS:
            raise UndeclaredSymbol(name.text, self.line, name.column)
        self._expect("(")
        arguments = [self._sum()]
        while self._accept(","):
            arguments.append(self._sum())
        self._expect(")")
        if len(arguments) != FUNCTIONS[name.text]:
            raise ArityMismatch(
                f"line {self.line}: {name.text} takes {FUNCTIONS[name.text]} "
                f"argument(s), got {len(arguments)}"
            )
        if name.text == "sqrt":
            if isinstance(arguments[0], sp.MatrixBase):
                self._fail("sqrt of a vector", name)
            return sp.sqrt(arguments[0])
        left, right = arguments
        if not (isinstance(left, sp.MatrixBase) and isinstance(right, sp.MatrixBase)):
            self._fail("dot expects two vectors", name)
        if left.rows != len(self.metric) or right.rows != len(self.metric):
            self._fail("dot of vectors with the wrong dimension", name)
        return sp.Add(*[g * left[k] * right[k] for k, g in enumerate(self.metric)])

    def _component(self, family: str, index: int) -> Expr:
        components = self.scope.lookup(family)
        return components[index]

    def _resolve(self, token: _Token) -> Value:
        name = token.text
        if name == "tau":
            self._fail("explicit time dependence is not supported", token)
        value = self.scope.lookup(name)
        if value is None:
            raise UndeclaredSymbol(name, self.line, token.column)
        if isinstance(value, list):
            components = value
            if components and isinstance(components[0], Momentum):
                components = [g * c for g, c in zip(self.metric, components)]
            return sp.ImmutableMatrix(components)
        return value


# ============================================================================
# Model files
# ============================================================================

def _split_top_level(text: str) -> list[tuple[str, int]]:
    """Split on commas outside parentheses; returns (part, offset) pairs."""
    parts = []
    depth = 0
    start = 0
    for i, char in enumerate(text):
        if char in "([":
            depth += 1
        elif char in ")]":
            depth -= 1
        elif char == "," and depth == 0:
            parts.append((text[start:i], start))
            start = i + 1
    parts.append((text[start:], start))
    return parts


def _names(rest: str, line: int, column: int) -> list[str]:
    names = rest.split()
    for name in names:
        if not IDENT_RE.fullmatch(name):
            raise ModelSyntaxError(f"invalid name '{name}'", line, column)
        if name in RESERVED or THETA_RE.fullmatch(name):
            raise ModelSyntaxError(f"'{name}' is reserved", line, column)
    return names


def _parse_int(rest: str, directive: str, line: int, column: int) -> int:
    if not rest.strip().isdigit() or int(rest) < 1:
        raise ModelSyntaxError(f"{directive} expects a positive integer", line, column)
    return int(rest)


class _Declarations:
    """Raw declarations gathered in the first pass."""

    def __init__(self):
        self.name: Optional[str] = None
        self.coords: list[tuple[str, Optional[str]]] = []   # (name, vector family)
        self.vectors: list[str] = []
        self.dim: Optional[int] = None
        self.constants: list[str] = []
        self.parameters: list[str] = []
        self.assumptions: list[tuple[str, str, int]] = []   # (name, property, line)
        self.max_order: Optional[int] = None
        self.lines: dict[str, int] = {}   # name -> line of its latest declaration

    def record(self, names: list[str], line: int) -> list[str]:
        for name in names:
            self.lines[name] = line
        return names


PROPERTIES = ("nonzero", "positive")


def _read_declarations(lines: list[tuple[int, str, str, int]]) -> _Declarations:
    decl = _Declarations()
    for number, directive, rest, column in lines:
        if directive == "model":
            name = rest.strip().strip('"')
            if not name:
                raise ModelSyntaxError("model name missing", number, column)
            decl.name = name
        elif directive == "coords":
            decl.coords.extend((n, None) for n in decl.record(_names(rest, number, column), number))
        elif directive == "vector":
            for family in decl.record(_names(rest, number, column), number):
                decl.vectors.append(family)
                decl.coords.append((family, family))
        elif directive == "dim":
            decl.dim = _parse_int(rest, "dim", number, column)
        elif directive == "max_order":
            decl.max_order = _parse_int(rest, "max_order", number, column)
        elif directive == "const":
            words = rest.split()
            if not words:
                raise ModelSyntaxError("const expects a name", number, column)
            names = [w for w in words if w not in PROPERTIES]
            properties = [w for w in words if w in PROPERTIES]
            for name in decl.record(_names(" ".join(names), number, column), number):
                decl.constants.append(name)
                decl.assumptions.extend((name, p, number) for p in properties)
        elif directive == "param":
            decl.parameters.extend(decl.record(_names(rest, number, column), number))
        elif directive == "assume":
            words = rest.split()
            if len(words) != 2 or words[1] not in PROPERTIES:
                raise ModelSyntaxError("assume expects: assume NAME nonzero|positive", number, column)
            decl.assumptions.append((words[0], words[1], number))
    return decl


def _build_scope(decl: _Declarations, dim: int) -> tuple[Scope, dict]:
    scope = Scope()
    properties: dict[str, dict] = {}
    coordinate_names = {n for n, family in decl.coords if family is None}
    vector_names = set(decl.vectors)
    for name, prop, number in decl.assumptions:
        if name in vector_names:
            targets = [f"{name}_{k}" for k in range(dim)]
        elif name in coordinate_names or name in decl.constants:
            targets = [name]
        elif name in decl.parameters:
            raise ModelSyntaxError(
                "assumptions attach only to constants and coordinates", number, 1
            )
        else:
            raise UndeclaredSymbol(name, number, 1)
        for target in targets:
            properties.setdefault(target, {})[prop] = True

    built = {"coords": [], "velocities": [], "momenta": [], "constants": [], "parameters": []}

    def declare(name: str, value, origin: str) -> None:
        try:
            scope.declare(name, value)
        except DuplicateSymbol as exc:
            raise ModelSyntaxError(str(exc), decl.lines.get(origin, 0), 1) from exc

    for name, family in decl.coords:
        names = [f"{name}_{k}" for k in range(dim)] if family else [name]
        coords = [Coordinate(n, **properties.get(n, {})) for n in names]
        velocities = [Velocity(velocity_name(n)) for n in names]
        momenta = [Momentum(momentum_name(n)) for n in names]
        for c, u, p in zip(coords, velocities, momenta):
            declare(c.name, c, name)
            declare(u.name, u, name)
            declare(p.name, p, name)
        if family:
            declare(family, coords, name)
            declare(velocity_name(family), velocities, name)
            declare(momentum_name(family), momenta, name)
        built["coords"].extend(coords)
        built["velocities"].extend(velocities)
        built["momenta"].extend(momenta)

    for name in decl.constants:
        symbol = Coefficient(name, **properties.get(name, {}))
        declare(name, symbol, name)
        built["constants"].append(symbol)
    for name in decl.parameters:
        symbol = Parameter(name)
        declare(name, symbol, name)
        built["parameters"].append(symbol)
    return scope, built


def _declare_thetas(text: str, scope: Scope, phase_space: list) -> None:
    for name in set(re.findall(r"\btheta\w*", text)):
        if name not in scope:
            scope.declare(name, free_function(name, phase_space))


def parse_model(text: str) -> Model:
    """
    Parse and validate a model file.

    Args:
        text: Model source

    Returns:
        Model: Validated model

    Raises:
        ModelSyntaxError: Malformed directive or expression (line/column)
        UndeclaredSymbol: Identifier not in scope
        ArityMismatch: Wrong usolution length or function arity
    """
    lines: list[tuple[int, str, str, int]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].rstrip()
        if not content.strip():
            continue
        stripped = content.lstrip()
        indent = len(content) - len(stripped)
        directive, _, rest = stripped.partition(" ")
        column = indent + len(directive) + 2
        lines.append((number, directive, rest, column))

    known = {
        "model", "coords", "vector", "dim", "max_order", "const", "param", "assume",
        "lagrangian", "usolution", "constraint", "dtr",
    }
    for number, directive, _, _ in lines:
        if directive not in known:
            raise ModelSyntaxError(f"unknown directive '{directive}'", number, 1)

    settings = get_settings()
    decl = _read_declarations(lines)
    dim = decl.dim or settings.default_dim
    scope, built = _build_scope(decl, dim)
    phase_space = [*built["coords"], *built["momenta"]]
    n = len(built["coords"])
    if n == 0:
        raise ModelSyntaxError("no coordinates declared", 0, 0)

    lagrangian: Optional[Expr] = None
    usolution: Optional[list[Expr]] = None
    hints: dict[str, Expr] = {}
    dtr: Optional[Expr] = None

    for number, directive, rest, column in lines:
        parser = ExpressionParser(scope, dim, number, column - 1)
        if directive == "lagrangian":
            if lagrangian is not None:
                raise ModelSyntaxError("duplicate lagrangian", number, 1)
            lagrangian = parser.parse(rest)
            offending = [s for s in lagrangian.free_symbols if isinstance(s, Momentum)]
            if offending or lagrangian.atoms(sp.core.function.AppliedUndef):
                raise ModelSyntaxError("lagrangian must depend on (q, u) only", number, column)
        elif directive == "usolution":
            _declare_thetas(rest, scope, phase_space)
            usolution = _parse_usolution(rest, scope, dim, built, number, column)
        elif directive == "constraint":
            name, eq, body = rest.partition("=")
            name = name.strip()
            if not eq or not IDENT_RE.fullmatch(name):
                raise ModelSyntaxError("constraint expects: constraint NAME = EXPR", number, column)
            offset = column - 1 + len(rest) - len(body)
            value = ExpressionParser(scope, dim, number, offset).parse(body)
            if any(isinstance(s, Velocity) for s in value.free_symbols):
                raise ModelSyntaxError("constraints live on phase space", number, column)
            try:
                scope.declare(name, value)
            except DuplicateSymbol as exc:
                raise ModelSyntaxError(str(exc), number, column) from exc
            hints[name] = value
        elif directive == "dtr":
            dtr = parser.parse(rest)
            if any(isinstance(s, Velocity) for s in dtr.free_symbols):
                raise ModelSyntaxError("dtr generator lives on phase space", number, column)

    if lagrangian is None:
        raise ModelSyntaxError("missing lagrangian directive", 0, 0)

    model = Model(
        name=decl.name or "unnamed",
        coords=built["coords"],
        velocities=built["velocities"],
        momenta=built["momenta"],
        lagrangian=lagrangian,
        constants=built["constants"],
        assumptions=[Assumption(symbol=s, property=p) for s, p, _ in decl.assumptions],
        parameters=built["parameters"],
        provided_usolution=usolution,
        max_chain_order=decl.max_order or settings.max_chain_order,
        dim=dim,
        constraint_hints=hints,
        dtr=dtr,
        scope=scope,
    )
    logger.info(f"Parsed model '{model.name}' with N={n}")
    return model


def _parse_usolution(
    rest: str, scope: Scope, dim: int, built: dict, number: int, column: int
) -> list[Expr]:
    velocities = [u.name for u in built["velocities"]]
    entries: dict[str, Expr] = {}
    for part, offset in _split_top_level(rest):
        name, eq, body = part.partition("=")
        name = name.strip()
        if not eq:
            raise ModelSyntaxError("usolution entries have the form u = EXPR", number, column + offset)
        if name not in velocities:
            raise UndeclaredSymbol(name, number, column + offset)
        if name in entries:
            raise ModelSyntaxError(f"duplicate usolution entry '{name}'", number, column + offset)
        body_offset = column - 1 + offset + len(part) - len(body)
        value = ExpressionParser(scope, dim, number, body_offset).parse(body)
        if any(isinstance(s, Velocity) for s in value.free_symbols):
            raise ModelSyntaxError("usolution must depend on (q, pi, theta)", number, column + offset)
        entries[name] = value
    if len(entries) != len(velocities):
        raise ArityMismatch(
            f"line {number}: usolution has {len(entries)} entries, expected {len(velocities)}"
        )
    return [entries[name] for name in velocities]


def parse_expr(text: str, scope: Model) -> Expr:
    """
    Parse an inline expression against a model scope.

    theta names are resolved in a copy of the scope; the model is not changed.

    Example:
        >>> parse_expr("(1/2)*q3*q2^2", cawley)
        q2**2*q3/2
    """
    local = scope.scope.copy()
    _declare_thetas(text, local, scope.phase_space)
    return ExpressionParser(local, scope.dim).parse(text)
