"""Smooth fields on a single chart of R^m with exact jet derivatives.

Scalar fields are closures evaluated either on plain payloads (floats,
complex numbers, numpy batches) or on coordinate jets; differential
operators reseed their constituents at a higher jet order, so arbitrarily
stacked operators (d of a bracket of pullbacks, ...) stay exact.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .exterior import MultivectorValue, merge_blades
from .jets import Jet, deep_value, is_jet, seeds

__all__ = [
    "ChartDomainError",
    "ChartSpec",
    "ScalarField",
    "VectorFieldC",
    "GvFieldC",
    "DiffForm",
    "ChartMap",
    "make_field",
    "const_field",
    "coord_field",
    "batch_args",
    "d_scalar",
    "exterior_d",
    "contract_form",
    "lie_bracket",
    "lie_derivative",
    "pullback",
    "compose_scalar",
    "push_forward",
    "flow_map",
    "twisted_d",
    "finite_diff_oracle_d",
    "form_norm_at",
]


class ChartDomainError(ValueError):
    """Raised when a point (or a flow trajectory) leaves the chart domain."""


@dataclass(frozen=True)
class ChartSpec:
    """Open chart of R^dim with an optional membership predicate."""

    dim: int
    name: str = "chart"
    contains: Optional[Callable] = None

    def check(self, cols):
        """Validate a point given as a list of coordinate payloads."""
        if self.contains is None:
            return
        ok = self.contains(cols)
        if not bool(np.all(ok)):
            raise ChartDomainError(f"point outside chart '{self.name}'")


# -- shared seed cache -------------------------------------------------
# Combinators that differentiate reseed their constituents at ``order+1``.
# Sharing the reseeded tuple across sibling closures makes the per-field
# evaluation caches effective.  Strong references keep id() keys stable.
_SEED_CACHE: OrderedDict = OrderedDict()
_SEED_CACHE_MAX = 64


def order_of(xs) -> int:
    return xs[0].space.order if is_jet(xs[0]) else 0


def coords_of(xs):
    return [deep_value(x) for x in xs]


def reseed(xs, order: int):
    key = (id(xs), order)
    hit = _SEED_CACHE.get(key)
    if hit is not None and hit[0] is xs:
        return hit[1]
    ys = seeds(coords_of(xs), order)
    if len(_SEED_CACHE) >= _SEED_CACHE_MAX:
        _SEED_CACHE.popitem(last=False)
    _SEED_CACHE[key] = (xs, ys)
    return ys


def _finish(jet_result, k: int):
    """Truncate an (k+1)-order intermediate back to the caller's order."""
    if k == 0:
        return jet_result.value
    return jet_result.truncate(k)


class ScalarField:
    """Smooth chart function, evaluable on payloads or jets."""

    __slots__ = ("chart", "func", "_cache")

    def __init__(self, chart: ChartSpec, func: Callable):
        self.chart = chart
        self.func = func
        self._cache: dict = {}

    # -- evaluation -----------------------------------------------------
    def eval(self, xs):
        key = id(xs)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is xs:
            return hit[1]
        val = self.func(xs)
        if len(self._cache) > 16:
            self._cache.clear()
        self._cache[key] = (xs, val)
        return val

    def __call__(self, p):
        xs = tuple(np.asarray(c, dtype=float) if not np.iscomplexobj(c) else np.asarray(c)
                   for c in p)
        self.chart.check(xs)
        return self.eval(xs)

    def value_many(self, points: np.ndarray):
        xs = batch_args(self.chart, points)
        return self.eval(xs)

    def jet(self, p, order: int) -> Jet:
        xs = seeds(list(p), order)
        self.chart.check(coords_of(xs))
        out = self.eval(xs)
        return out if is_jet(out) else Jet.constant(xs[0].space, out)

    def gradient(self, p):
        return self.jet(p, 1).gradient()

    def partial(self, i: int) -> "ScalarField":
        base = self

        def func(xs):
            k = order_of(xs)
            ys = reseed(xs, k + 1)
            j = base.eval(ys)
            if not is_jet(j):
                j = Jet.constant(ys[0].space, j)
            return _finish(j.partial(i), k)

        return ScalarField(self.chart, func)

    # -- ring operations --------------------------------------------------
    def _lift(self, other) -> "ScalarField":
        if isinstance(other, ScalarField):
            return other
        return const_field(self.chart, other)

    def __add__(self, other):
        o = self._lift(other)
        return ScalarField(self.chart, lambda xs: self.eval(xs) + o.eval(xs))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return ScalarField(self.chart, lambda xs: self.eval(xs) - o.eval(xs))

    def __rsub__(self, other):
        o = self._lift(other)
        return ScalarField(self.chart, lambda xs: o.eval(xs) - self.eval(xs))

    def __mul__(self, other):
        o = self._lift(other)
        return ScalarField(self.chart, lambda xs: self.eval(xs) * o.eval(xs))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return ScalarField(self.chart, lambda xs: self.eval(xs) / o.eval(xs))

    def __rtruediv__(self, other):
        o = self._lift(other)
        return ScalarField(self.chart, lambda xs: o.eval(xs) / self.eval(xs))

    def __neg__(self):
        return ScalarField(self.chart, lambda xs: -self.eval(xs))

    def __pow__(self, n: int):
        return ScalarField(self.chart, lambda xs: self.eval(xs) ** n)


def make_field(chart: ChartSpec, func: Callable) -> ScalarField:
    return ScalarField(chart, func)


def const_field(chart: ChartSpec, value) -> ScalarField:
    return ScalarField(chart, lambda xs: value + 0 * xs[0])


def coord_field(chart: ChartSpec, i: int) -> ScalarField:
    return ScalarField(chart, lambda xs: xs[i])


def field_sum(chart: ChartSpec, fields: Sequence[ScalarField]) -> ScalarField:
    fields = list(fields)
    if not fields:
        return const_field(chart, 0.0)

    def func(xs):
        tot = fields[0].eval(xs)
        for f in fields[1:]:
            tot = tot + f.eval(xs)
        return tot

    return ScalarField(chart, func)


def batch_args(chart: ChartSpec, points: np.ndarray) -> tuple:
    pts = np.asarray(points)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] != chart.dim:
        raise ValueError("point dimension mismatch")
    xs = tuple(np.ascontiguousarray(pts[:, i]) for i in range(chart.dim))
    chart.check(xs)
    return xs


@dataclass
class VectorFieldC:
    """Vector field with (possibly complex) scalar-field components."""

    chart: ChartSpec
    comps: tuple

    def __post_init__(self):
        if len(self.comps) != self.chart.dim:
            raise ValueError("component count mismatch")
        self.comps = tuple(self.comps)

    def at(self, p):
        return [f(p) for f in self.comps]

    def eval_all(self, xs):
        return [f.eval(xs) for f in self.comps]

    def __add__(self, other: "VectorFieldC"):
        return VectorFieldC(self.chart, tuple(a + b for a, b in zip(self.comps, other.comps)))

    def __sub__(self, other: "VectorFieldC"):
        return VectorFieldC(self.chart, tuple(a - b for a, b in zip(self.comps, other.comps)))

    def __neg__(self):
        return VectorFieldC(self.chart, tuple(-a for a in self.comps))

    def scale(self, s):
        return VectorFieldC(self.chart, tuple(a * s for a in self.comps))

    @staticmethod
    def zero(chart: ChartSpec) -> "VectorFieldC":
        return VectorFieldC(chart, tuple(const_field(chart, 0.0) for _ in range(chart.dim)))

    @staticmethod
    def from_values(chart: ChartSpec, values) -> "VectorFieldC":
        return VectorFieldC(chart, tuple(const_field(chart, v) for v in values))


@dataclass
class GvFieldC:
    """Section X + xi of TM + T*M over a chart."""

    chart: ChartSpec
    vec: tuple
    cov: tuple

    def __post_init__(self):
        m = self.chart.dim
        if len(self.vec) != m or len(self.cov) != m:
            raise ValueError("component count mismatch")
        self.vec = tuple(self.vec)
        self.cov = tuple(self.cov)

    @property
    def vector_part(self) -> VectorFieldC:
        return VectorFieldC(self.chart, self.vec)

    @property
    def covector_part(self) -> "DiffForm":
        return DiffForm(self.chart, {(i + 1,): f for i, f in enumerate(self.cov)}, 1)

    @staticmethod
    def from_parts(X: VectorFieldC, xi: "DiffForm") -> "GvFieldC":
        m = X.chart.dim
        cov = tuple(xi.coeff((i + 1,)) for i in range(m))
        return GvFieldC(X.chart, X.comps, cov)

    def at(self, p):
        from .exterior import GvValue

        return GvValue(self.chart.dim, [f(p) for f in self.vec], [f(p) for f in self.cov])

    def __add__(self, other: "GvFieldC"):
        return GvFieldC(
            self.chart,
            tuple(a + b for a, b in zip(self.vec, other.vec)),
            tuple(a + b for a, b in zip(self.cov, other.cov)),
        )

    def __sub__(self, other: "GvFieldC"):
        return GvFieldC(
            self.chart,
            tuple(a - b for a, b in zip(self.vec, other.vec)),
            tuple(a - b for a, b in zip(self.cov, other.cov)),
        )

    def __neg__(self):
        return GvFieldC(self.chart, tuple(-a for a in self.vec), tuple(-a for a in self.cov))

    def scale(self, s):
        return GvFieldC(self.chart, tuple(a * s for a in self.vec), tuple(a * s for a in self.cov))


@dataclass
class DiffForm:
    """Differential form; ``degree`` is None for mixed-degree elements."""

    chart: ChartSpec
    coeffs: dict
    degree: Optional[int] = None

    def __post_init__(self):
        m = self.chart.dim
        for blade in self.coeffs:
            if any(not (1 <= i <= m) for i in blade) or any(
                a >= b for a, b in zip(blade, blade[1:])
            ):
                raise ValueError(f"bad blade {blade}")
        if self.degree is not None:
            if any(len(b) != self.degree for b in self.coeffs):
                raise ValueError("blade length does not match declared degree")

    @staticmethod
    def zero(chart: ChartSpec, degree: Optional[int] = None) -> "DiffForm":
        return DiffForm(chart, {}, degree)

    def coeff(self, blade: tuple) -> ScalarField:
        blade = tuple(blade)
        if blade in self.coeffs:
            return self.coeffs[blade]
        return const_field(self.chart, 0.0)

    def at(self, p) -> MultivectorValue:
        return MultivectorValue(self.chart.dim, {b: f(p) for b, f in self.coeffs.items()})

    def at_args(self, xs) -> MultivectorValue:
        return MultivectorValue(self.chart.dim, {b: f.eval(xs) for b, f in self.coeffs.items()})

    def __add__(self, other: "DiffForm") -> "DiffForm":
        deg = self.degree if self.degree == other.degree else None
        out = dict(self.coeffs)
        for b, f in other.coeffs.items():
            out[b] = out[b] + f if b in out else f
        return DiffForm(self.chart, out, deg)

    def __sub__(self, other: "DiffForm") -> "DiffForm":
        return self + other.scale(-1.0)

    def __neg__(self) -> "DiffForm":
        return self.scale(-1.0)

    def scale(self, s) -> "DiffForm":
        return DiffForm(self.chart, {b: f * s for b, f in self.coeffs.items()}, self.degree)

    def wedge(self, other: "DiffForm") -> "DiffForm":
        deg = None
        if self.degree is not None and other.degree is not None:
            deg = self.degree + other.degree
            if deg > self.chart.dim:
                return DiffForm.zero(self.chart, None)
        out: dict = {}
        for ba, fa in self.coeffs.items():
            for bb, fb in other.coeffs.items():
                merged = merge_blades(ba, bb)
                if merged is None:
                    continue
                sign, blade = merged
                term = fa * fb if sign > 0 else fa * fb * (-1.0)
                out[blade] = out[blade] + term if blade in out else term
        return DiffForm(self.chart, out, deg)


def form_norm_at(omega: DiffForm, points: np.ndarray) -> float:
    """Max absolute coefficient of a form over a batch of points."""
    xs = batch_args(omega.chart, points)
    worst = 0.0
    for f in omega.coeffs.values():
        v = np.asarray(f.eval(xs))
        if v.size:
            worst = max(worst, float(np.max(np.abs(v))))
    return worst


def d_scalar(f: ScalarField) -> DiffForm:
    """Exterior derivative of a function as a 1-form."""
    chart = f.chart

    def coeff(i):
        def func(xs):
            k = order_of(xs)
            ys = reseed(xs, k + 1)
            j = f.eval(ys)
            if not is_jet(j):
                j = Jet.constant(ys[0].space, j)
            return _finish(j.partial(i), k)

        return ScalarField(chart, func)

    return DiffForm(chart, {(i + 1,): coeff(i) for i in range(chart.dim)}, 1)


def exterior_d(omega: DiffForm) -> DiffForm:
    """Exterior derivative; coefficients differentiated through jets."""
    chart = omega.chart
    m = chart.dim
    terms: dict = {}
    for blade, f in omega.coeffs.items():
        if len(blade) >= m:
            continue
        for j in range(1, m + 1):
            merged = merge_blades((j,), blade)
            if merged is None:
                continue
            sign, new_blade = merged
            terms.setdefault(new_blade, []).append((sign, j - 1, f))
    out = {}
    for blade, parts in terms.items():

        def func(xs, parts=parts):
            k = order_of(xs)
            ys = reseed(xs, k + 1)
            tot = None
            for sign, var, f in parts:
                j = f.eval(ys)
                if not is_jet(j):
                    j = Jet.constant(ys[0].space, j)
                term = j.partial(var)
                term = term if sign > 0 else -term
                tot = term if tot is None else tot + term
            return _finish(tot, k)

        out[blade] = ScalarField(chart, func)
    deg = omega.degree + 1 if omega.degree is not None else None
    return DiffForm(chart, out, deg)


def contract_form(X: VectorFieldC, omega: DiffForm) -> DiffForm:
    """Interior product i_X omega."""
    chart = omega.chart
    terms: dict = {}
    for blade, f in omega.coeffs.items():
        for pos, i in enumerate(blade):
            sign = (-1) ** pos
            sub = blade[:pos] + blade[pos + 1 :]
            terms.setdefault(sub, []).append((sign, i - 1, f))
    out = {}
    for blade, parts in terms.items():

        def func(xs, parts=parts):
            tot = None
            for sign, i, f in parts:
                term = X.comps[i].eval(xs) * f.eval(xs)
                term = term if sign > 0 else -term
                tot = term if tot is None else tot + term
            return tot

        out[blade] = ScalarField(chart, func)
    deg = omega.degree - 1 if omega.degree else None
    return DiffForm(chart, out, deg)


def lie_bracket(X: VectorFieldC, Y: VectorFieldC) -> VectorFieldC:
    if X.chart is not Y.chart and X.chart != Y.chart:
        raise ValueError("chart mismatch")
    chart = X.chart
    m = chart.dim

    def comp(i):
        def func(xs):
            k = order_of(xs)
            ys = reseed(xs, k + 1)
            space = ys[0].space
            tot = None
            for j in range(m):
                xj = X.comps[j].eval(ys)
                yj = Y.comps[j].eval(ys)
                dyi = Y.comps[i].eval(ys)
                dxi = X.comps[i].eval(ys)
                dyi = (dyi if is_jet(dyi) else Jet.constant(space, dyi)).partial(j)
                dxi = (dxi if is_jet(dxi) else Jet.constant(space, dxi)).partial(j)
                term = xj * dyi - yj * dxi
                tot = term if tot is None else tot + term
            if not is_jet(tot):
                tot = Jet.constant(space, tot)
            return _finish(tot, k)

        return ScalarField(chart, func)

    return VectorFieldC(chart, tuple(comp(i) for i in range(m)))


def lie_derivative(X: VectorFieldC, omega: DiffForm) -> DiffForm:
    """Cartan formula L_X = d i_X + i_X d (this is the implementation)."""
    return exterior_d(contract_form(X, omega)) + contract_form(X, exterior_d(omega))


@dataclass
class ChartMap:
    """Smooth map between charts with jet-evaluable components."""

    src: ChartSpec
    dst: ChartSpec
    comps: tuple
    inverse: Optional["ChartMap"] = None

    def __post_init__(self):
        if len(self.comps) != self.dst.dim:
            raise ValueError("component count must equal target dimension")
        self.comps = tuple(self.comps)

    def __call__(self, p):
        return [f(p) for f in self.comps]

    def eval_all(self, xs):
        return [f.eval(xs) for f in self.comps]

    @staticmethod
    def identity(chart: ChartSpec) -> "ChartMap":
        m = ChartMap(chart, chart, tuple(coord_field(chart, i) for i in range(chart.dim)))
        m.inverse = m
        return m

    def after(self, other: "ChartMap") -> "ChartMap":
        """self o other."""
        comps = tuple(compose_scalar(f, other) for f in self.comps)
        inv = None
        if self.inverse is not None and other.inverse is not None:
            inv = other.inverse.after(self.inverse)
        out = ChartMap(other.src, self.dst, comps)
        out.inverse = inv
        return out


def compose_scalar(f: ScalarField, phi: ChartMap) -> ScalarField:
    """f o phi as a field on phi.src."""

    def func(xs):
        k = order_of(xs)
        inner = phi.eval_all(xs)
        if k == 0 and not is_jet(inner[0]):
            return f.eval(tuple(inner))
        space = xs[0].space
        inner = [j if is_jet(j) else Jet.constant(space, j) for j in inner]
        q = [j.value for j in inner]
        target_seeds = seeds(q, k)
        out = f.eval(target_seeds)
        if not is_jet(out):
            return out + 0 * inner[0]
        return out.compose(inner)

    return ScalarField(phi.src, func)


def pullback(phi: ChartMap, omega: DiffForm) -> DiffForm:
    """phi^* omega, jet-exact to the evaluation order."""
    from itertools import combinations

    src = phi.src

    def det_of(rows, cols, jac):
        # small determinant by permutation expansion
        from itertools import permutations

        n = len(rows)
        tot = None
        for perm in permutations(range(n)):
            sign = 1
            seen = list(perm)
            for a in range(n):
                for b in range(a + 1, n):
                    if seen[a] > seen[b]:
                        sign = -sign
            term = jac[(rows[0], cols[perm[0]])]
            for a in range(1, n):
                term = term * jac[(rows[a], cols[perm[a]])]
            term = term if sign > 0 else -term
            tot = term if tot is None else tot + term
        return tot

    def make_coeff(src_blade):
        def func(xs):
            k = order_of(xs)
            ys = reseed(xs, k + 1)
            space_hi = ys[0].space
            phi_hi = [
                j if is_jet(j) else Jet.constant(space_hi, j) for j in phi.eval_all(ys)
            ]
            q = [j.value for j in phi_hi]
            tseeds = seeds(q, k + 1)
            jac = {}
            deg = len(src_blade)
            if deg:
                for blade, _f in omega.coeffs.items():
                    if len(blade) != deg:
                        continue
                    for ti in blade:
                        for sj in src_blade:
                            if (ti, sj) not in jac:
                                jac[(ti, sj)] = phi_hi[ti - 1].partial(sj - 1)
            tot = None
            for blade, f in omega.coeffs.items():
                if len(blade) != deg:
                    continue
                fj = f.eval(tseeds)
                fj = fj if is_jet(fj) else Jet.constant(tseeds[0].space, fj)
                fj = fj.compose(phi_hi)
                if deg:
                    term = fj * det_of(list(blade), list(src_blade), jac)
                else:
                    term = fj
                tot = term if tot is None else tot + term
            if tot is None:
                return 0.0 * xs[0] if not is_jet(xs[0]) else Jet.constant(xs[0].space, 0.0)
            return _finish(tot, k)

        return ScalarField(src, func)

    out: dict = {}
    for deg in sorted({len(b) for b in omega.coeffs}):
        if deg == 0:
            out[()] = make_coeff(())
        else:
            for sb in combinations(range(1, src.dim + 1), deg):
                out[sb] = make_coeff(sb)
    return DiffForm(src, out, omega.degree)


def push_forward(phi: ChartMap, X: VectorFieldC) -> VectorFieldC:
    """phi_* X on the target chart; requires phi.inverse."""
    if phi.inverse is None:
        raise ValueError("push_forward needs an invertible map")
    inv = phi.inverse
    m = phi.dst.dim

    def comp(c):
        def func(xs):
            k = order_of(xs)
            # y-coordinates -> x = inv(y); evaluate dphi_c/dx_j and X_j at x
            inner = inv.eval_all(xs)
            space = xs[0].space if is_jet(xs[0]) else None
            if space is not None:
                inner = [j if is_jet(j) else Jet.constant(space, j) for j in inner]
                xq = [j.value for j in inner]
            else:
                xq = inner
            hi = seeds(xq, k + 1)
            tot = None
            for jvar in range(phi.src.dim):
                dphij = phi.comps[c].eval(hi)
                dphij = (dphij if is_jet(dphij) else Jet.constant(hi[0].space, dphij)).partial(jvar)
                xj = X.comps[jvar].eval(hi)
                if not is_jet(xj):
                    xj = Jet.constant(hi[0].space, xj)
                term = dphij * xj
                tot = term if tot is None else tot + term
            tot = tot.truncate(k)
            if space is None:
                return tot.value
            return tot.compose(inner)

        return ScalarField(phi.dst, func)

    return VectorFieldC(phi.dst, tuple(comp(c) for c in range(m)))


class _FlowEvaluator:
    """Shared RK4 integration cache for the component fields of a flow map."""

    def __init__(self, chart, gen, t, steps):
        self.chart = chart
        self.gen = gen  # callable s -> VectorFieldC
        self.t = t
        self.steps = steps
        self._cache: dict = {}

    def state(self, xs):
        key = id(xs)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is xs:
            return hit[1]
        n = self.steps
        dt = self.t / n
        state = list(xs)

        def rhs(s, st):
            X = self.gen(s)
            stt = tuple(st)
            return [f.eval(stt) for f in X.comps]

        for step in range(n):
            s0 = step * dt
            self.chart.check([deep_value(v) for v in state])
            k1 = rhs(s0, state)
            k2 = rhs(s0 + dt / 2, [a + (dt / 2) * b for a, b in zip(state, k1)])
            k3 = rhs(s0 + dt / 2, [a + (dt / 2) * b for a, b in zip(state, k2)])
            k4 = rhs(s0 + dt, [a + dt * b for a, b in zip(state, k3)])
            state = [
                a + (dt / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4)
            ]
        self.chart.check([deep_value(v) for v in state])
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = (xs, state)
        return state


def flow_map(chart: ChartSpec, X, t: float, steps_per_unit: int = 256) -> ChartMap:
    """Time-t flow of a vector field (or of ``s -> VectorFieldC``), fixed-step RK4."""
    gen = X if callable(X) and not isinstance(X, VectorFieldC) else (lambda s: X)
    steps = max(1, int(np.ceil(abs(t) * steps_per_unit)))
    fwd = _FlowEvaluator(chart, gen, t, steps)
    rev_gen = (lambda s: gen(t - s).scale(-1.0))
    rev = _FlowEvaluator(chart, rev_gen, t, steps)

    def comp(evaluator, c):
        return ScalarField(chart, lambda xs: evaluator.state(xs)[c])

    m = chart.dim
    fmap = ChartMap(chart, chart, tuple(comp(fwd, c) for c in range(m)))
    imap = ChartMap(chart, chart, tuple(comp(rev, c) for c in range(m)))
    fmap.inverse = imap
    imap.inverse = fmap
    return fmap


def twisted_d(H: Optional[DiffForm], rho: DiffForm) -> DiffForm:
    """d_H rho = d rho - H ^ rho for a closed 3-form twisting H."""
    d_rho = exterior_d(rho)
    if H is None:
        return d_rho
    if H.degree != 3:
        raise ValueError("twisting form must have degree 3")
    return d_rho - H.wedge(rho)


def finite_diff_oracle_d(omega: DiffForm, p, step: float = 1e-4) -> MultivectorValue:
    """Central-difference exterior derivative at a point (test oracle)."""
    chart = omega.chart
    m = chart.dim
    out: dict = {}
    p = list(map(float, p))
    for blade, f in omega.coeffs.items():
        if len(blade) >= m:
            continue
        for j in range(1, m + 1):
            merged = merge_blades((j,), blade)
            if merged is None:
                continue
            sign, new_blade = merged
            pp = list(p)
            pp[j - 1] += step
            pm = list(p)
            pm[j - 1] -= step
            dval = (f(pp) - f(pm)) / (2 * step)
            term = sign * dval
            out[new_blade] = out.get(new_blade, 0.0) + term
    return MultivectorValue(m, out)
