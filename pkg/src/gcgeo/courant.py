"""Twisted Courant brackets, the generalized symmetry group and its algebra.

Sections of TM + T*M over a chart are ``GvFieldC`` values; all bracket and
symmetry identities are verified pointwise through jet evaluation.  The
convention for the group action is

    (lambda, alpha) . (X + xi) = lambda_* X + (lambda^-1)^* (xi + i_X alpha),

and the Courant operator is D f = (0, df/2), matching the unnormalized
pairing <X+xi, Y+eta> = eta(X) + xi(Y).  (An alternative action convention
exists with the same infinitesimal action; it is not implemented.)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .chart import (
    ChartMap,
    ChartSpec,
    DiffForm,
    GvFieldC,
    ScalarField,
    VectorFieldC,
    batch_args,
    const_field,
    contract_form,
    d_scalar,
    exterior_d,
    flow_map,
    form_norm_at,
    lie_bracket,
    lie_derivative,
    pullback,
    push_forward,
)

__all__ = [
    "TwistedCourantContext",
    "GenSymmetry",
    "InfSymmetry",
    "courant_bracket",
    "d_operator",
    "pairing_field",
    "deriv_along",
    "axiom_residuals",
    "gsym_act",
    "gsym_compose",
    "gsym_inverse",
    "gsym_exp",
    "gsym_bracket_transport",
    "twisted_lie_bracket",
    "psi_h",
    "inf_action",
    "exp_form",
    "spinor_act",
    "spinor_inf_act",
    "alpha_cochain",
    "ce_coboundary_fields",
    "gv_norm_at",
    "section_closure_residual",
]


@dataclass
class TwistedCourantContext:
    """Chart plus a closed twisting 3-form (None means untwisted)."""

    chart: ChartSpec
    H: Optional[DiffForm] = None

    def __post_init__(self):
        if self.H is not None and self.H.degree != 3:
            raise ValueError("twisting form must be a 3-form")

    def closure_residual(self, points: np.ndarray) -> float:
        if self.H is None:
            return 0.0
        return form_norm_at(exterior_d(self.H), points)


@dataclass
class GenSymmetry:
    """Generalized symmetry (diffeomorphism, B-field)."""

    diffeo: ChartMap
    alpha: DiffForm

    def __post_init__(self):
        if self.alpha.degree not in (2, None):
            raise ValueError("B-field of a symmetry must be a 2-form")

    @staticmethod
    def identity(chart: ChartSpec) -> "GenSymmetry":
        return GenSymmetry(ChartMap.identity(chart), DiffForm.zero(chart, 2))

    def roundtrip_residual(self, points: np.ndarray) -> float:
        """|lambda(lambda^-1(p)) - p| over sample points."""
        worst = 0.0
        for p in np.atleast_2d(points):
            q = self.diffeo.inverse(list(p))
            back = self.diffeo(q)
            worst = max(worst, float(np.max(np.abs(np.asarray(back) - p))))
        return worst


@dataclass
class InfSymmetry:
    """Infinitesimal generalized symmetry (vector field, 2-form)."""

    X: VectorFieldC
    A: DiffForm

    def __post_init__(self):
        if self.A.degree not in (2, None):
            raise ValueError("form part must be a 2-form")

    @staticmethod
    def zero(chart: ChartSpec) -> "InfSymmetry":
        return InfSymmetry(VectorFieldC.zero(chart), DiffForm.zero(chart, 2))


def gv_norm_at(s: GvFieldC, points: np.ndarray) -> float:
    xs = batch_args(s.chart, points)
    worst = 0.0
    for f in list(s.vec) + list(s.cov):
        v = np.asarray(f.eval(xs))
        if v.size:
            worst = max(worst, float(np.max(np.abs(v))))
    return worst


def pairing_field(a: GvFieldC, b: GvFieldC) -> ScalarField:
    """<X+xi, Y+eta> = eta(X) + xi(Y) as a scalar field."""
    chart = a.chart
    terms = []
    for i in range(chart.dim):
        terms.append(a.vec[i] * b.cov[i])
        terms.append(b.vec[i] * a.cov[i])
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def deriv_along(X: VectorFieldC, f: ScalarField) -> ScalarField:
    """Directional derivative X(f)."""
    return contract_form(X, d_scalar(f)).coeff(())


def _form_to_cov(omega: DiffForm) -> tuple:
    m = omega.chart.dim
    return tuple(omega.coeff((i + 1,)) for i in range(m))


def courant_bracket(ctx: TwistedCourantContext, a: GvFieldC, b: GvFieldC) -> GvFieldC:
    """Skew H-twisted Courant bracket of two sections."""
    if a.chart != ctx.chart or b.chart != ctx.chart:
        raise ValueError("chart mismatch")
    X, Y = a.vector_part, b.vector_part
    xi, eta = a.covector_part, b.covector_part
    vec = lie_bracket(X, Y)
    cov_form = lie_derivative(X, eta) - lie_derivative(Y, xi)
    pair_fn = contract_form(X, eta).coeff(()) - contract_form(Y, xi).coeff(())
    cov_form = cov_form - d_scalar(pair_fn).scale(0.5)
    if ctx.H is not None:
        cov_form = cov_form + contract_form(Y, contract_form(X, ctx.H))
    return GvFieldC.from_parts(vec, cov_form)


def d_operator(ctx: TwistedCourantContext, f: ScalarField) -> GvFieldC:
    """Courant D f = 0 + df/2 (fixed by <Df, A> = a(A)f / 2)."""
    return GvFieldC.from_parts(VectorFieldC.zero(ctx.chart), d_scalar(f).scale(0.5))


def _gv_scale_field(s: GvFieldC, f: ScalarField) -> GvFieldC:
    return GvFieldC(s.chart, tuple(c * f for c in s.vec), tuple(c * f for c in s.cov))


def axiom_residuals(
    ctx: TwistedCourantContext,
    a: GvFieldC,
    b: GvFieldC,
    c: GvFieldC,
    f: ScalarField,
    g: ScalarField,
    points: np.ndarray,
) -> dict:
    """Pointwise residuals of the five Courant-algebroid compatibility laws."""
    res: dict = {}
    ab = courant_bracket(ctx, a, b)
    bc = courant_bracket(ctx, b, c)
    ca = courant_bracket(ctx, c, a)

    # (1) anchor is a homomorphism onto the Lie bracket
    anc = lie_bracket(a.vector_part, b.vector_part)
    diff = GvFieldC.from_parts(ab.vector_part - anc, DiffForm.zero(ctx.chart, 1))
    res["eq1_anchor"] = gv_norm_at(diff, points)

    # (2) Jacobiator = D Nijenhuis
    jac = (
        courant_bracket(ctx, ab, c)
        + courant_bracket(ctx, bc, a)
        + courant_bracket(ctx, ca, b)
    )
    nij = (
        pairing_field(ab, c) + pairing_field(bc, a) + pairing_field(ca, b)
    ) * (1.0 / 3.0)
    res["eq2_jacobiator"] = gv_norm_at(jac - d_operator(ctx, nij), points)

    # (3) Leibniz rule with the D-correction
    lhs = courant_bracket(ctx, a, _gv_scale_field(b, f))
    rhs = (
        _gv_scale_field(courant_bracket(ctx, a, b), f)
        + _gv_scale_field(b, deriv_along(a.vector_part, f))
        - _gv_scale_field(d_operator(ctx, f), pairing_field(a, b))
    )
    res["eq3_leibniz"] = gv_norm_at(lhs - rhs, points)

    # (4) <Df, Dg> = 0 (both legs are covectors)
    val = pairing_field(d_operator(ctx, f), d_operator(ctx, g))
    xs = batch_args(ctx.chart, points)
    res["eq4_anchor_d"] = float(np.max(np.abs(np.asarray(val.eval(xs)))))

    # (5) pairing invariance
    lhs5 = deriv_along(a.vector_part, pairing_field(b, c))
    t1 = ab + d_operator(ctx, pairing_field(a, b))
    t2 = courant_bracket(ctx, a, c) + d_operator(ctx, pairing_field(a, c))
    rhs5 = pairing_field(t1, c) + pairing_field(b, t2)
    res["eq5_invariance"] = float(np.max(np.abs(np.asarray((lhs5 - rhs5).eval(xs)))))
    return res


# --------------------------------------------------------------------------
# group of generalized symmetries


def gsym_act(g: GenSymmetry, s: GvFieldC) -> GvFieldC:
    """(lambda, alpha) . (X + xi) = lambda_* X + (lambda^-1)^*(xi + i_X alpha)."""
    lam = g.diffeo
    X = s.vector_part
    xi = s.covector_part
    new_vec = push_forward(lam, X)
    inner = xi + contract_form(X, g.alpha)
    new_cov = pullback(lam.inverse, inner)
    return GvFieldC.from_parts(new_vec, new_cov)


def gsym_compose(g1: GenSymmetry, g2: GenSymmetry) -> GenSymmetry:
    """(lambda, alpha) (mu, beta) = (lambda mu, mu^* alpha + beta)."""
    lam = g1.diffeo.after(g2.diffeo)
    alpha = pullback(g2.diffeo, g1.alpha) + g2.alpha
    return GenSymmetry(lam, alpha)


def gsym_inverse(g: GenSymmetry) -> GenSymmetry:
    inv = g.diffeo.inverse
    if inv is None:
        raise ValueError("diffeomorphism carries no inverse")
    return GenSymmetry(inv, pullback(inv, g.alpha).scale(-1.0))


def gsym_exp(
    chart: ChartSpec,
    gen,
    t: float,
    quad_intervals: int = 16,
    steps_per_unit: int = 256,
    flow_family: Optional[Callable[[float], ChartMap]] = None,
) -> GenSymmetry:
    """Time-t symmetry generated by a (possibly time-dependent) (X_s, A_s).

    ``gen`` is an ``InfSymmetry`` or a callable ``s -> InfSymmetry``.  The
    flow is fixed-step RK4 unless a closed-form ``flow_family`` is supplied;
    the B-field integral of pullbacks uses composite Simpson quadrature.
    """
    gen_fn = gen if callable(gen) and not isinstance(gen, InfSymmetry) else (lambda s: gen)
    if flow_family is None:
        lam = flow_map(chart, lambda s: gen_fn(s).X, t, steps_per_unit)
        lam_at = lambda s: flow_map(chart, lambda u: gen_fn(u).X, s, steps_per_unit)
    else:
        lam = flow_family(t)
        lam_at = flow_family

    n = max(2, quad_intervals + (quad_intervals % 2))
    h = t / n
    alpha = DiffForm.zero(chart, 2)
    if t != 0.0:
        for i in range(n + 1):
            s = i * h
            w = h / 3.0 * (1 if i in (0, n) else (4 if i % 2 else 2))
            As = gen_fn(s).A
            term = As if i == 0 else pullback(lam_at(s), As)
            alpha = alpha + term.scale(w)
    return GenSymmetry(lam, alpha)


def gsym_bracket_transport(
    g: GenSymmetry,
    ctx: TwistedCourantContext,
    a: GvFieldC,
    b: GvFieldC,
    points: np.ndarray,
) -> float:
    """Residual of the bracket-transport law under a generalized symmetry.

    (lambda,alpha) . [a, b]_H  =  [(lambda,alpha).a, (lambda,alpha).b]_H'
    with H' = (lambda^-1)^*(H - d alpha).
    """
    lhs = gsym_act(g, courant_bracket(ctx, a, b))
    Hs = ctx.H if ctx.H is not None else DiffForm.zero(ctx.chart, 3)
    H_new = pullback(g.diffeo.inverse, Hs - exterior_d(g.alpha))
    ctx_new = TwistedCourantContext(ctx.chart, H_new)
    rhs = courant_bracket(ctx_new, gsym_act(g, a), gsym_act(g, b))
    return gv_norm_at(lhs - rhs, points)


# --------------------------------------------------------------------------
# the Lie algebra, its twisted bracket and the translation psi_H


def twisted_lie_bracket(H: Optional[DiffForm], a: InfSymmetry, b: InfSymmetry) -> InfSymmetry:
    """[(X,A), (Y,B)]_H = ([X,Y], L_X B - L_Y A + d i_Y i_X H)."""
    chart = a.X.chart
    vec = lie_bracket(a.X, b.X)
    form = lie_derivative(a.X, b.A) - lie_derivative(b.X, a.A)
    if H is not None:
        form = form + exterior_d(contract_form(b.X, contract_form(a.X, H)))
    return InfSymmetry(vec, form)


def psi_h(H: Optional[DiffForm], a: InfSymmetry) -> InfSymmetry:
    """Translation (X, A) -> (X, A - i_X H) embedding the twisted algebra."""
    if H is None:
        return a
    return InfSymmetry(a.X, a.A - contract_form(a.X, H))


def inf_action(a: InfSymmetry, s: GvFieldC, H: Optional[DiffForm] = None) -> GvFieldC:
    """Infinitesimal action on sections; with H the twisted variant."""
    chart = s.chart
    vec = lie_bracket(a.X, s.vector_part).scale(-1.0)
    form = lie_derivative(a.X, s.covector_part).scale(-1.0) + contract_form(
        s.vector_part, a.A
    )
    if H is not None:
        form = form - contract_form(s.vector_part, contract_form(a.X, H))
    return GvFieldC.from_parts(vec, form)


def section_closure_residual(ctx: TwistedCourantContext, a: InfSymmetry, points) -> float:
    """Residual of d(i_X H + A) = 0, membership in the twisted symmetry algebra."""
    form = a.A
    if ctx.H is not None:
        form = form + contract_form(a.X, ctx.H)
    return form_norm_at(exterior_d(form), points)


# --------------------------------------------------------------------------
# spinor actions


def exp_form(alpha: DiffForm) -> DiffForm:
    """exp(alpha) = 1 + alpha + alpha^2/2 + ... (finite on a chart)."""
    chart = alpha.chart
    out = DiffForm(chart, {(): const_field(chart, 1.0)}, None)
    term = None
    fac = 1.0
    for k in range(1, chart.dim // 2 + 1):
        term = alpha if term is None else term.wedge(alpha)
        fac *= k
        if not term.coeffs:
            break
        out = out + term.scale(1.0 / fac)
    return out


def spinor_act(g: GenSymmetry, rho: DiffForm) -> DiffForm:
    """g . rho = (lambda^-1)^* (e^{-alpha} ^ rho)."""
    twisted = exp_form(g.alpha.scale(-1.0)).wedge(rho)
    return pullback(g.diffeo.inverse, twisted)


def spinor_inf_act(a: InfSymmetry, rho: DiffForm) -> DiffForm:
    """(X, A) . rho = -L_X rho - A ^ rho."""
    return lie_derivative(a.X, rho).scale(-1.0) - a.A.wedge(rho)


# --------------------------------------------------------------------------
# form-valued cochains on vector fields


def alpha_cochain(rho: DiffForm, Xs: Sequence[VectorFieldC]) -> DiffForm:
    """alpha_rho(X_1 ^ ... ^ X_k) = d i_{X_k} ... i_{X_1} rho (a 2-form)."""
    k = len(Xs)
    if rho.degree is not None and rho.degree != k + 1:
        raise ValueError("need a (k+1)-form for a k-cochain")
    cur = rho
    for X in Xs:
        cur = contract_form(X, cur)
    return exterior_d(cur)


def ce_coboundary_fields(alpha_fn, Ys: Sequence[VectorFieldC]) -> DiffForm:
    """Chevalley-Eilenberg coboundary of a form-valued cochain on vector fields.

    The module action is X o A = L_X A.  ``alpha_fn`` maps a list of k vector
    fields to a DiffForm; ``Ys`` supplies k+1 fields.
    """
    n = len(Ys)
    chart = Ys[0].chart
    out = None
    for i in range(n):
        rest = [Ys[j] for j in range(n) if j != i]
        term = lie_derivative(Ys[i], alpha_fn(rest)).scale(float((-1) ** i))
        out = term if out is None else out + term
    for i in range(n):
        for j in range(i + 1, n):
            rest = [Ys[l] for l in range(n) if l not in (i, j)]
            term = alpha_fn([lie_bracket(Ys[i], Ys[j])] + rest).scale(
                float((-1) ** (i + j))
            )
            out = out + term
    return out if out is not None else DiffForm.zero(chart, 2)
