"""Pointwise exterior algebra on R^m, Clifford action and the split pairing.

Values live in the complexified exterior algebra of the dual space.  Blades
are strictly increasing tuples of 1-based coordinate indices; a missing blade
means a zero coefficient.  Coefficients may be any commutative ring elements
(complex numbers, ``fractions.Fraction``, jets) -- all operations only use
``+``, ``-`` and ``*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "MultivectorValue",
    "GvValue",
    "wedge",
    "contract",
    "clifford",
    "pairing",
    "merge_blades",
    "remove_index",
]


def _check_blade(blade: tuple, dim: int):
    if any(not (1 <= i <= dim) for i in blade):
        raise ValueError(f"blade index out of range 1..{dim}: {blade}")
    if any(a >= b for a, b in zip(blade, blade[1:])):
        raise ValueError(f"blade indices must be strictly increasing: {blade}")


def merge_blades(a: tuple, b: tuple):
    """Sign and sorted union of two disjoint blades, or None on repetition."""
    if set(a) & set(b):
        return None
    merged = a + b
    # count inversions of the concatenation
    sign = 1
    items = list(merged)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign, tuple(sorted(merged))


def remove_index(blade: tuple, pos: int):
    """Blade with entry ``pos`` removed and the sign (-1)^position."""
    k = blade.index(pos)
    return (-1) ** k, blade[:k] + blade[k + 1 :]


@dataclass
class MultivectorValue:
    """Element of the exterior algebra at a point (mixed degree allowed)."""

    dim: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        for blade in self.coeffs:
            _check_blade(blade, self.dim)

    @staticmethod
    def scalar(dim: int, value) -> "MultivectorValue":
        return MultivectorValue(dim, {(): value})

    @staticmethod
    def covector(dim: int, comps) -> "MultivectorValue":
        return MultivectorValue(dim, {(i + 1,): c for i, c in enumerate(comps)})

    def degree_part(self, k: int) -> "MultivectorValue":
        return MultivectorValue(
            self.dim, {b: c for b, c in self.coeffs.items() if len(b) == k}
        )

    def degrees(self):
        return sorted({len(b) for b in self.coeffs})

    def __add__(self, other: "MultivectorValue") -> "MultivectorValue":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        out = dict(self.coeffs)
        for b, c in other.coeffs.items():
            out[b] = out[b] + c if b in out else c
        return MultivectorValue(self.dim, out)

    def __sub__(self, other: "MultivectorValue") -> "MultivectorValue":
        return self + other.scale(-1)

    def scale(self, s) -> "MultivectorValue":
        return MultivectorValue(self.dim, {b: c * s for b, c in self.coeffs.items()})

    def coeff(self, blade: tuple):
        return self.coeffs.get(tuple(blade), 0.0)

    def norm(self) -> float:
        from .jets import deep_value
        import numpy as np

        tot = 0.0
        for c in self.coeffs.values():
            v = np.asarray(deep_value(c))
            tot = max(tot, float(np.max(np.abs(v))) if v.size else 0.0)
        return tot

    def __repr__(self):
        terms = ", ".join(f"{b}: {c}" for b, c in sorted(self.coeffs.items()))
        return f"MultivectorValue(dim={self.dim}, {{{terms}}})"


@dataclass
class GvValue:
    """Element X + xi of V + V* at a point."""

    dim: int
    vec: list
    cov: list

    def __post_init__(self):
        if len(self.vec) != self.dim or len(self.cov) != self.dim:
            raise ValueError("component count must equal dim")


def wedge(a: MultivectorValue, b: MultivectorValue) -> MultivectorValue:
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    out: dict = {}
    for ba, ca in a.coeffs.items():
        for bb, cb in b.coeffs.items():
            merged = merge_blades(ba, bb)
            if merged is None:
                continue
            sign, blade = merged
            term = ca * cb if sign > 0 else -(ca * cb)
            out[blade] = out[blade] + term if blade in out else term
    return MultivectorValue(a.dim, out)


def contract(vec_components, a: MultivectorValue) -> MultivectorValue:
    """Interior product of the vector with components ``vec_components``."""
    if len(vec_components) != a.dim:
        raise ValueError("dimension mismatch")
    out: dict = {}
    for blade, c in a.coeffs.items():
        for pos_idx, i in enumerate(blade):
            x = vec_components[i - 1]
            sign = (-1) ** pos_idx
            sub = blade[:pos_idx] + blade[pos_idx + 1 :]
            term = x * c if sign > 0 else -(x * c)
            out[sub] = out[sub] + term if sub in out else term
    return MultivectorValue(a.dim, out)


def clifford(v: GvValue, rho: MultivectorValue) -> MultivectorValue:
    """Clifford action (X + xi) . rho = i_X rho + xi ^ rho.

    With the pairing below this satisfies v.(v.rho) = <v,v>/2 * rho.
    """
    if v.dim != rho.dim:
        raise ValueError("dimension mismatch")
    return contract(v.vec, rho) + wedge(MultivectorValue.covector(v.dim, v.cov), rho)


def pairing(u: GvValue, v: GvValue):
    """<X+xi, Y+eta> = eta(X) + xi(Y)  (unnormalized split pairing)."""
    if u.dim != v.dim:
        raise ValueError("dimension mismatch")
    tot = u.vec[0] * v.cov[0]
    for i in range(1, u.dim):
        tot = tot + u.vec[i] * v.cov[i]
    for i in range(u.dim):
        tot = tot + v.vec[i] * u.cov[i]
    return tot
