"""
Lagrangian transformations delta q^A = eps^A(q, u, tau).

A transformation is an LTR when its u-dot dependence integrates away,
i.e. an associated function E with dE/du^B = W_A deps^A/du^B exists; it is
an SGTR when the resulting Delta L vanishes modulo the Lagrangian
constraints.
"""
import logging
from typing import Optional, Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict

from app.canonical import pullback
from app.core.exceptions import AssociatedFunctionMissing, VerificationFailed
from app.expr import Expr, Parameter, diff, is_zero, normalize, reduce_mod_ideal, time_derivative, to_text
from app.lagrangian import LagAnalysis
from app.parser import Model

logger = logging.getLogger(__name__)


class LagTransform(BaseModel):
    """
    A Lagrangian transformation.

    Attributes:
        eps: delta q^A
        E: Associated function
        delta_l: Delta L, including tau-derivative terms of the parameters
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eps: list[Expr]
    E: Optional[Expr] = None
    delta_l: Expr


def check_ltr(eps: Sequence[Expr], m: Model, la: LagAnalysis) -> bool:
    """
    Integrability condition M_AC deps^C/du^B - M_BC deps^C/du^A = 0 for all A, B.
    """
    n = len(m.coords)
    d = [[diff(e, u) for u in m.velocities] for e in eps]
    for a in range(n):
        for b in range(a + 1, n):
            value = sp.Add(*[la.M[a][c] * d[c][b] - la.M[b][c] * d[c][a] for c in range(n)])
            if not is_zero(value):
                logger.info(f"Not an LTR: condition ({a}, {b}) leaves {to_text(normalize(value))}")
                return False
    return True


def _condition_holds(eps: Sequence[Expr], E: Expr, m: Model, la: LagAnalysis) -> bool:
    for u in m.velocities:
        value = diff(E, u) - sp.Add(*[w * diff(e, u) for w, e in zip(la.W, eps)])
        if not is_zero(value):
            return False
    return True


def associated_function(
    eps: Sequence[Expr], m: Model, la: LagAnalysis, E: Optional[Expr] = None
) -> Expr:
    """
    Verify a supplied E, or synthesize E = 0 for velocity-independent eps.

    Raises:
        AssociatedFunctionMissing: If E is absent for velocity-dependent eps,
            or the supplied E fails dE/du^B = W_A deps^A/du^B
    """
    if E is None:
        if any(e.has(*m.velocities) for e in map(sp.sympify, eps)):
            raise AssociatedFunctionMissing("eps depends on the velocities; supply E")
        return sp.Integer(0)
    if not _condition_holds(eps, E, m, la):
        raise AssociatedFunctionMissing(f"E = {to_text(E)} fails the LTR condition")
    return normalize(E)


def delta_l(
    eps: Sequence[Expr],
    E: Optional[Expr],
    m: Model,
    la: LagAnalysis,
    time_dependent: bool = True,
) -> Expr:
    """
    Delta L = dL/dq^A eps^A + (W_A deps^A/dq^B - dE/dq^B) u^B.

    With ``time_dependent`` the parameters are functions of tau and the terms
    W_A deps^A/dtau - dE/dtau are added.

    E defaults to 0 for velocity-independent eps. Any other valid E is then a
    function of q and tau only and shifts Delta L by the total derivative
    -dE/dtau.

    Raises:
        AssociatedFunctionMissing: See associated_function
    """
    E = associated_function(eps, m, la, E)
    terms = [diff(m.lagrangian, q) * e for q, e in zip(m.coords, eps)]
    for q, u in zip(m.coords, m.velocities):
        inner = sp.Add(*[w * diff(e, q) for w, e in zip(la.W, eps)]) - diff(E, q)
        terms.append(inner * u)
    if time_dependent:
        terms += [w * time_derivative(e) for w, e in zip(la.W, eps)]
        terms.append(-time_derivative(E))
    return normalize(sp.Add(*terms))


def is_sgtr(lt: LagTransform, la: LagAnalysis) -> bool:
    """True iff Delta L reduces to zero modulo every Lagrangian constraint."""
    return reduce_mod_ideal(lt.delta_l, la.all_constraints) == 0


def pullback_htr(Q: Expr, m: Model, la: LagAnalysis) -> LagTransform:
    """
    Pull back the Hamiltonian transformation generated by Q.

    eps^A = {q^A, Q} and E-hat = pi_A {q^A, Q} - Q, both at pi = W(q, u).

    Raises:
        VerificationFailed: If the pulled-back E fails the LTR condition
    """
    eps_hat = [diff(Q, p) for p in m.momenta]
    e_hat = normalize(sp.Add(*[p * e for p, e in zip(m.momenta, eps_hat)]) - Q)
    eps = [pullback(e, m, la) for e in eps_hat]
    E = pullback(e_hat, m, la)
    if not _condition_holds(eps, E, m, la):
        raise VerificationFailed(f"pulled-back E = {to_text(E)} fails the LTR condition")
    return LagTransform(eps=eps, E=E, delta_l=delta_l(eps, E, m, la))


def primary_sgtr(m: Model, la: LagAnalysis) -> tuple[LagTransform, list[Parameter]]:
    """
    The transformation eps = zeta_m z^(m) along the null directions.

    E = zeta_m z^(m) . W; Delta L then equals -zeta_m z^(m) . omega.
    """
    count = len(la.z)
    zetas = [Parameter("zeta" if count == 1 else f"zeta{i}") for i in range(1, count + 1)]
    n = len(m.coords)
    eps = [normalize(sp.Add(*[zeta * row[a] for zeta, row in zip(zetas, la.z)])) for a in range(n)]
    E = normalize(sp.Add(*[w * e for w, e in zip(la.W, eps)]))
    return LagTransform(eps=eps, E=E, delta_l=delta_l(eps, E, m, la)), zetas
