"""Truncated multivariate Taylor arithmetic (forward-mode jets).

A ``Jet`` stores the Taylor coefficients of a smooth function around a base
point, truncated at a fixed total order (<= 3 is all we ever need).  The
coefficient payload is a numpy array whose leading axis runs over the
monomials of the jet space; a trailing axis, when present, is a batch of
evaluation points.  All chart-level derivatives in this package are obtained
by evaluating closures on jet seeds, never by symbolic manipulation.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product as _iterproduct

import numpy as np

__all__ = [
    "JetSpace",
    "Jet",
    "seeds",
    "is_jet",
    "jsin",
    "jcos",
    "jexp",
    "jlog",
    "jsqrt",
    "deep_value",
]


def _align_payload(a: np.ndarray, b: np.ndarray):
    """Append trailing payload axes so coefficient arrays broadcast."""
    while a.ndim < b.ndim:
        a = a[..., None]
    while b.ndim < a.ndim:
        b = b[..., None]
    return a, b


def _payload_mul(c: np.ndarray, s) -> np.ndarray:
    """Coefficientwise product with a plain payload (scalar or batch)."""
    s = np.asarray(s)
    if s.ndim and c.ndim == 1:
        return c[:, None] * s
    return c * s


def _monomials(nvars: int, order: int):
    """All exponent tuples with total degree <= order, graded lexicographic."""
    out = []
    for total in range(order + 1):
        for combo in _iterproduct(range(total + 1), repeat=nvars):
            if sum(combo) == total:
                out.append(combo)
    return out


@lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> "JetSpace":
    return JetSpace(nvars, order)


class JetSpace:
    """Precomputed combinatorics for jets of a given arity and order."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        self.monomials = _monomials(nvars, order)
        self.index = {mono: k for k, mono in enumerate(self.monomials)}
        self.ncoeff = len(self.monomials)
        # product table grouped by output monomial: k -> (I, J) index arrays
        pairs: list[list[tuple[int, int]]] = [[] for _ in range(self.ncoeff)]
        for i, a in enumerate(self.monomials):
            for j, b in enumerate(self.monomials):
                tot = tuple(x + y for x, y in zip(a, b))
                k = self.index.get(tot)
                if k is not None:
                    pairs[k].append((i, j))
        self._prod_I = [np.array([p[0] for p in row], dtype=np.intp) for row in pairs]
        self._prod_J = [np.array([p[1] for p in row], dtype=np.intp) for row in pairs]
        # derivative shift: var v -> list of (src, dst, factor)
        self._shift = []
        for v in range(nvars):
            rows = []
            for i, mono in enumerate(self.monomials):
                if mono[v] > 0:
                    lowered = tuple(
                        e - 1 if w == v else e for w, e in enumerate(mono)
                    )
                    rows.append((i, self.index[lowered], mono[v]))
            self._shift.append(rows)

    def zeros(self, like) -> np.ndarray:
        arr = np.asarray(like)
        shape = (self.ncoeff,) + arr.shape
        dtype = np.result_type(arr.dtype, np.float64)
        return np.zeros(shape, dtype=dtype)

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = _align_payload(a, b)
        dtype = np.result_type(a.dtype, b.dtype)
        out = np.zeros((self.ncoeff,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]), dtype=dtype)
        for k in range(self.ncoeff):
            I, J = self._prod_I[k], self._prod_J[k]
            out[k] = np.einsum("i...->...", a[I] * b[J])
        return out

    def partial(self, c: np.ndarray, var: int) -> np.ndarray:
        out = np.zeros_like(c)
        for src, dst, fac in self._shift[var]:
            out[dst] += fac * c[src]
        return out


class Jet:
    """Taylor polynomial truncated at ``space.order`` around an implicit point."""

    __slots__ = ("space", "c")

    def __init__(self, space: JetSpace, coeffs: np.ndarray):
        self.space = space
        self.c = coeffs

    # -- constructors -------------------------------------------------
    @staticmethod
    def constant(space: JetSpace, value) -> "Jet":
        c = space.zeros(value)
        c[0] = value
        return Jet(space, c)

    @staticmethod
    def variable(space: JetSpace, var: int, value) -> "Jet":
        c = space.zeros(value)
        c[0] = value
        if space.order >= 1:
            one = tuple(1 if w == var else 0 for w in range(space.nvars))
            c[space.index[one]] = 1.0
        return Jet(space, c)

    # -- accessors ----------------------------------------------------
    @property
    def value(self):
        return self.c[0]

    def coeff(self, mono: tuple) -> np.ndarray:
        k = self.space.index.get(tuple(mono))
        if k is None:
            return np.zeros_like(self.c[0])
        return self.c[k]

    def derivative(self, mono: tuple):
        """Mixed partial d^mono f (Taylor coefficient times multinomial factor)."""
        fac = 1.0
        for e in mono:
            for q in range(2, e + 1):
                fac *= q
        return self.coeff(mono) * fac

    def gradient(self):
        sp = self.space
        outs = []
        for v in range(sp.nvars):
            one = tuple(1 if w == v else 0 for w in range(sp.nvars))
            outs.append(self.coeff(one))
        return outs

    def partial(self, var: int) -> "Jet":
        """d/dx_var as a jet of the same space (top coefficients drop out)."""
        return Jet(self.space, self.space.partial(self.c, var))

    def truncate(self, order: int) -> "Jet":
        if order >= self.space.order:
            return self
        target = jet_space(self.space.nvars, order)
        c = np.zeros((target.ncoeff,) + self.c.shape[1:], dtype=self.c.dtype)
        for k, mono in enumerate(target.monomials):
            c[k] = self.c[self.space.index[mono]]
        return Jet(target, c)

    # -- ring operations ----------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jet space mismatch")
            return other
        return Jet.constant(self.space, other)

    def __add__(self, other):
        o = self._coerce(other)
        a, b = _align_payload(self.c, o.c)
        return Jet(self.space, a + b)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.c)

    def __sub__(self, other):
        o = self._coerce(other)
        a, b = _align_payload(self.c, o.c)
        return Jet(self.space, a - b)

    def __rsub__(self, other):
        o = self._coerce(other)
        a, b = _align_payload(o.c, self.c)
        return Jet(self.space, a - b)

    def __mul__(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jet space mismatch")
            return Jet(self.space, self.space.multiply(self.c, other.c))
        return Jet(self.space, _payload_mul(self.c, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other._reciprocal()
        return Jet(self.space, _payload_mul(self.c, 1.0 / np.asarray(other)))

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("jets support nonnegative integer powers only")
        if n == 0:
            return Jet.constant(self.space, np.ones_like(self.c[0]))
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    # -- analytic functions --------------------------------------------
    def _compose_series(self, coeffs_by_degree) -> "Jet":
        """sum_n coeffs[n] * (self - value)^n, truncated."""
        delta_c = self.c.copy()
        delta_c[0] = np.zeros_like(delta_c[0])
        delta = Jet(self.space, delta_c)
        out = Jet.constant(self.space, coeffs_by_degree[0])
        power = None
        for n in range(1, self.space.order + 1):
            power = delta if power is None else power * delta
            out = out + power * coeffs_by_degree[n]
        return out

    def _reciprocal(self) -> "Jet":
        v = self.value
        series = [(-1.0) ** n / v ** (n + 1) for n in range(self.space.order + 1)]
        return self._compose_series(series)

    def sqrt(self) -> "Jet":
        v = self.value
        s = np.sqrt(v)
        series = [s, 0.5 / s, -1.0 / (8.0 * s * v), 1.0 / (16.0 * s * v * v)]
        return self._compose_series(series[: self.space.order + 1])

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        fact = 1.0
        series = []
        for n in range(self.space.order + 1):
            if n:
                fact *= n
            series.append(e / fact)
        return self._compose_series(series)

    def log(self) -> "Jet":
        v = self.value
        series = [np.log(v)]
        for n in range(1, self.space.order + 1):
            series.append((-1.0) ** (n + 1) / (n * v ** n))
        return self._compose_series(series)

    def sin(self) -> "Jet":
        v = self.value
        s, c = np.sin(v), np.cos(v)
        table = [s, c, -s / 2.0, -c / 6.0]
        return self._compose_series(table[: self.space.order + 1])

    def cos(self) -> "Jet":
        v = self.value
        s, c = np.sin(v), np.cos(v)
        table = [c, -s, -c / 2.0, s / 6.0]
        return self._compose_series(table[: self.space.order + 1])

    # -- composition ----------------------------------------------------
    def compose(self, inner: list) -> "Jet":
        """Substitute source-space jets for this jet's variables.

        ``self`` must be expanded around ``[j.value for j in inner]``.
        """
        space_in = inner[0].space
        deltas = []
        for j in inner:
            c = j.c.copy()
            c[0] = np.zeros_like(c[0])
            deltas.append(Jet(space_in, c))
        out = Jet.constant(space_in, self.c[0])
        power_cache: dict[tuple, Jet] = {}

        def mono_power(mono: tuple) -> Jet:
            if mono in power_cache:
                return power_cache[mono]
            # peel one variable off to reuse smaller powers
            for v in range(len(mono) - 1, -1, -1):
                if mono[v] > 0:
                    lower = tuple(e - 1 if w == v else e for w, e in enumerate(mono))
                    res = mono_power(lower) * deltas[v] if sum(lower) else deltas[v]
                    break
            power_cache[mono] = res
            return res

        for k, mono in enumerate(self.space.monomials):
            if sum(mono) == 0:
                continue
            coeff = self.c[k]
            if not np.any(coeff):
                continue
            out = out + mono_power(mono) * coeff
        return out


def seeds(point, order: int) -> tuple:
    """Coordinate jets of the given order at ``point`` (list of payloads)."""
    space = jet_space(len(point), order)
    return tuple(Jet.variable(space, i, np.asarray(p, dtype=np.result_type(np.asarray(p).dtype, np.float64)))
                 for i, p in enumerate(point))


def is_jet(x) -> bool:
    return isinstance(x, Jet)


def deep_value(x):
    return x.value if isinstance(x, Jet) else x


def _dispatch(name, np_func):
    def f(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        return np_func(x)

    f.__name__ = "j" + name
    return f


jsin = _dispatch("sin", np.sin)
jcos = _dispatch("cos", np.cos)
jexp = _dispatch("exp", np.exp)
jlog = _dispatch("log", np.log)
jsqrt = _dispatch("sqrt", np.sqrt)
