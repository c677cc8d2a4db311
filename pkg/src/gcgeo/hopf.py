"""Built-in fixture: the twisted pair of structures on C^2 minus the origin.

Coordinates are (x1, y1, x2, y2).  The two structures J1, J2 share the
twisting 3-form

    H = (2/r^4) (y1 dx1 - x1 dy1 + y2 dx2 - x2 dy2) ^ (dx1 dy1 + dx2 dy2),

and f = ln r generates a circle action rotating the z1 plane (under J1) or
the z2 plane backwards (under J2).  The gauge objects for the level-r
reduction (disc slice, angle connection) live here too.

The transcribed matrix of the transformed structure J2' corrects one block
of its printed source: the (T*z1, Tz2) block must be J b (the printed zero
fails both J^2 = -1 and pairing orthogonality; see the acceptance tests).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .chart import (
    ChartMap,
    ChartSpec,
    DiffForm,
    ScalarField,
    VectorFieldC,
    const_field,
    coord_field,
)
from .jets import jcos, jsin, jsqrt, jlog
from .reduction import GcsField, MomentMapSpec, ReductionSetup

__all__ = [
    "punctured_chart",
    "z1_chart",
    "r2_field",
    "log_r",
    "twisting",
    "j1_field",
    "j2_field",
    "x1_field",
    "xi1_form",
    "x2_field",
    "xi2_form",
    "dphi1_form",
    "b_form",
    "printed_j1",
    "printed_j2",
    "printed_j1_prime",
    "printed_j2_prime",
    "b_map_matrix",
    "rotation_z1",
    "rotation_z2",
    "spherical_chart",
    "spherical_to_cartesian",
    "twisting_spherical",
    "moment_spec_j1",
    "moment_spec_j2",
    "disc_chart",
    "reduction_setup",
    "sample_points",
    "disc_points",
]

_J = np.array([[0.0, -1.0], [1.0, 0.0]])


def punctured_chart(name: str = "C2-minus-origin") -> ChartSpec:
    def contains(cols):
        r2 = np.asarray(cols[0]) ** 2 + np.asarray(cols[1]) ** 2 \
            + np.asarray(cols[2]) ** 2 + np.asarray(cols[3]) ** 2
        return r2 > 1e-12

    return ChartSpec(4, name, contains)


def z1_chart(name: str = "C2-minus-z1-axis") -> ChartSpec:
    def contains(cols):
        z1 = np.asarray(cols[0]) ** 2 + np.asarray(cols[1]) ** 2
        return z1 > 1e-12

    return ChartSpec(4, name, contains)


def r2_field(chart: ChartSpec) -> ScalarField:
    return ScalarField(
        chart, lambda xs: xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2] + xs[3] * xs[3]
    )


def log_r(chart: ChartSpec) -> ScalarField:
    r2 = r2_field(chart)
    return ScalarField(chart, lambda xs: 0.5 * jlog(r2.eval(xs)))


def twisting(chart: ChartSpec) -> DiffForm:
    """H in coordinates: (2/r^4)[y2 e123 - x2 e124 + y1 e134 - x1 e234]."""
    r2 = r2_field(chart)

    def coeff(pick, sign):
        return ScalarField(
            chart, lambda xs: sign * 2.0 * xs[pick] / (r2.eval(xs) ** 2)
        )

    return DiffForm(
        chart,
        {
            (1, 2, 3): coeff(3, 1.0),
            (1, 2, 4): coeff(2, -1.0),
            (1, 3, 4): coeff(1, 1.0),
            (2, 3, 4): coeff(0, -1.0),
        },
        3,
    )


def _block(out, rows, cols, mat2):
    for a in range(2):
        for b in range(2):
            v = mat2[a][b]
            if isinstance(v, float) and v == 0.0:
                continue
            out[rows + a][cols + b] = v


def j1_field(chart: Optional[ChartSpec] = None) -> GcsField:
    chart = chart or punctured_chart()
    r2f = r2_field(chart)

    def entry_fn(xs):
        r2 = r2f.eval(xs)
        ir2 = 1.0 / r2
        out = [[0.0] * 8 for _ in range(8)]
        _block(out, 0, 4, [[0.0, -r2], [r2, 0.0]])       # r^2 J on T*z1 -> Tz1
        _block(out, 2, 2, [[0.0, 1.0], [-1.0, 0.0]])     # -J on Tz2
        _block(out, 4, 0, [[0.0, -ir2], [ir2, 0.0]])     # r^-2 J on Tz1 -> T*z1
        _block(out, 6, 6, [[0.0, 1.0], [-1.0, 0.0]])     # -J on T*z2
        return out

    return GcsField(chart, entry_fn, twisting(chart))


def j2_field(chart: Optional[ChartSpec] = None) -> GcsField:
    chart = chart or punctured_chart()
    r2f = r2_field(chart)

    def entry_fn(xs):
        r2 = r2f.eval(xs)
        ir2 = 1.0 / r2
        out = [[0.0] * 8 for _ in range(8)]
        _block(out, 0, 0, [[0.0, -1.0], [1.0, 0.0]])     # J on Tz1
        _block(out, 2, 6, [[0.0, r2], [-r2, 0.0]])       # -r^2 J on T*z2 -> Tz2
        _block(out, 4, 4, [[0.0, -1.0], [1.0, 0.0]])     # J on T*z1
        _block(out, 6, 2, [[0.0, ir2], [-ir2, 0.0]])     # -r^-2 J on Tz2 -> T*z2
        return out

    return GcsField(chart, entry_fn, twisting(chart))


def x1_field(chart: ChartSpec) -> VectorFieldC:
    x1, y1 = coord_field(chart, 0), coord_field(chart, 1)
    return VectorFieldC(chart, (-y1, x1, const_field(chart, 0.0), const_field(chart, 0.0)))


def xi1_form(chart: ChartSpec) -> DiffForm:
    r2 = r2_field(chart)
    return DiffForm(
        chart,
        {
            (3,): ScalarField(chart, lambda xs: xs[3] / r2.eval(xs)),
            (4,): ScalarField(chart, lambda xs: -xs[2] / r2.eval(xs)),
        },
        1,
    )


def x2_field(chart: ChartSpec) -> VectorFieldC:
    x2, y2 = coord_field(chart, 2), coord_field(chart, 3)
    return VectorFieldC(chart, (const_field(chart, 0.0), const_field(chart, 0.0), y2, -x2))


def xi2_form(chart: ChartSpec) -> DiffForm:
    r2 = r2_field(chart)
    return DiffForm(
        chart,
        {
            (1,): ScalarField(chart, lambda xs: -xs[1] / r2.eval(xs)),
            (2,): ScalarField(chart, lambda xs: xs[0] / r2.eval(xs)),
        },
        1,
    )


def dphi1_form(chart: ChartSpec) -> DiffForm:
    """Angle form of the z1 plane: (x1 dy1 - y1 dx1)/|z1|^2."""

    def z1sq(xs):
        return xs[0] * xs[0] + xs[1] * xs[1]

    return DiffForm(
        chart,
        {
            (1,): ScalarField(chart, lambda xs: -xs[1] / z1sq(xs)),
            (2,): ScalarField(chart, lambda xs: xs[0] / z1sq(xs)),
        },
        1,
    )


def b_form(chart: ChartSpec) -> DiffForm:
    """B = dphi1 ^ xi1 (the gauge potential of H on the z1-complement)."""
    return dphi1_form(chart).wedge(xi1_form(chart))


def b_map_matrix(p) -> np.ndarray:
    """The 4x4 V -> V* matrix [[0, b], [-b^T, 0]] of the 2-form B at p."""
    x1, y1, x2, y2 = map(float, p)
    r2 = x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2
    z1 = x1 * x1 + y1 * y1
    b = np.outer([-y1, x1], [-y2, x2]) / (r2 * z1)
    M = np.zeros((4, 4))
    M[:2, 2:] = b
    M[2:, :2] = -b.T
    return M


def printed_j1(p) -> np.ndarray:
    x1, y1, x2, y2 = map(float, p)
    r2 = x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2
    out = np.zeros((8, 8))
    out[0:2, 4:6] = r2 * _J
    out[2:4, 2:4] = -_J
    out[4:6, 0:2] = _J / r2
    out[6:8, 6:8] = -_J
    return out


def printed_j2(p) -> np.ndarray:
    x1, y1, x2, y2 = map(float, p)
    r2 = x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2
    out = np.zeros((8, 8))
    out[0:2, 0:2] = _J
    out[2:4, 6:8] = -r2 * _J
    out[4:6, 4:6] = _J
    out[6:8, 2:4] = -_J / r2
    return out


def _b_block(p) -> tuple:
    x1, y1, x2, y2 = map(float, p)
    r2 = x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2
    z1 = x1 * x1 + y1 * y1
    b = np.outer([-y1, x1], [-y2, x2]) / (r2 * z1)
    return b, r2


def printed_j1_prime(p) -> np.ndarray:
    b, r2 = _b_block(p)
    out = np.zeros((8, 8))
    out[0:2, 2:4] = r2 * _J @ b
    out[0:2, 4:6] = r2 * _J
    out[2:4, 2:4] = -_J
    out[4:6, 0:2] = _J / r2
    out[4:6, 2:4] = b @ _J
    out[6:8, 0:2] = _J @ b.T
    out[6:8, 4:6] = r2 * b.T @ _J
    out[6:8, 6:8] = -_J
    return out


def printed_j2_prime(p, corrected: bool = True) -> np.ndarray:
    """The transformed second structure; ``corrected=False`` reproduces the
    printed matrix whose (T*z1, Tz2) block is zero (it fails orthogonality)."""
    b, r2 = _b_block(p)
    out = np.zeros((8, 8))
    out[0:2, 0:2] = _J
    out[2:4, 0:2] = r2 * _J @ b.T
    out[2:4, 6:8] = -r2 * _J
    out[4:6, 4:6] = _J
    out[4:6, 6:8] = r2 * b @ _J
    out[6:8, 0:2] = b.T @ _J
    out[6:8, 2:4] = -_J / r2
    if corrected:
        out[4:6, 2:4] = _J @ b
    return out


def rotation_z1(chart: ChartSpec, t: float) -> ChartMap:
    """Closed-form flow of X1 (rotation of the z1 plane by angle t)."""
    c, s = float(np.cos(t)), float(np.sin(t))
    x1, y1 = coord_field(chart, 0), coord_field(chart, 1)
    x2, y2 = coord_field(chart, 2), coord_field(chart, 3)
    fwd = ChartMap(chart, chart, (x1 * c - y1 * s, x1 * s + y1 * c, x2, y2))
    if t != 0.0:
        bwd = ChartMap(chart, chart, (x1 * c + y1 * s, -x1 * s + y1 * c, x2, y2))
        fwd.inverse = bwd
        bwd.inverse = fwd
    else:
        fwd.inverse = fwd
    return fwd


def rotation_z2(chart: ChartSpec, t: float) -> ChartMap:
    """Closed-form flow of X2 (clockwise rotation of the z2 plane)."""
    c, s = float(np.cos(t)), float(np.sin(t))
    x1, y1 = coord_field(chart, 0), coord_field(chart, 1)
    x2, y2 = coord_field(chart, 2), coord_field(chart, 3)
    fwd = ChartMap(chart, chart, (x1, y1, x2 * c + y2 * s, -x2 * s + y2 * c))
    bwd = ChartMap(chart, chart, (x1, y1, x2 * c - y2 * s, x2 * s + y2 * c))
    fwd.inverse = bwd
    bwd.inverse = fwd
    return fwd


def spherical_chart() -> ChartSpec:
    def contains(cols):
        r = np.asarray(cols[0])
        lam = np.asarray(cols[1])
        return np.logical_and(r > 1e-6, np.logical_and(lam > 1e-4, lam < np.pi / 2 - 1e-4))

    return ChartSpec(4, "spherical", contains)


def spherical_to_cartesian(sph: ChartSpec, cart: ChartSpec) -> ChartMap:
    """(r, lambda, phi1, phi2) -> (x1, y1, x2, y2)."""

    def mk(i):
        def func(xs):
            r, lam, p1, p2 = xs
            if i == 0:
                return r * jsin(lam) * jcos(p1)
            if i == 1:
                return r * jsin(lam) * jsin(p1)
            if i == 2:
                return r * jcos(lam) * jcos(p2)
            return r * jcos(lam) * jsin(p2)

        return ScalarField(sph, func)

    return ChartMap(sph, cart, tuple(mk(i) for i in range(4)))


def twisting_spherical(sph: ChartSpec) -> DiffForm:
    """-sin(2 lambda) d lambda ^ d phi1 ^ d phi2."""
    return DiffForm(
        sph,
        {(2, 3, 4): ScalarField(sph, lambda xs: -jsin(2.0 * xs[1]))},
        3,
    )


def moment_spec_j1(chart: ChartSpec, level_r: float = 1.0) -> MomentMapSpec:
    mu = log_r(chart) - float(np.log(level_r))
    return MomentMapSpec(1, [mu], [x1_field(chart)], [xi1_form(chart)])


def moment_spec_j2(chart: ChartSpec, level_r: float = 1.0) -> MomentMapSpec:
    mu = log_r(chart) - float(np.log(level_r))
    return MomentMapSpec(1, [mu], [x2_field(chart)], [xi2_form(chart)])


def disc_chart(level_r: float = 1.0, margin: float = 0.02) -> ChartSpec:
    def contains(cols):
        q2 = np.asarray(cols[0]) ** 2 + np.asarray(cols[1]) ** 2
        return q2 < (1.0 - margin) * level_r**2

    return ChartSpec(2, f"disc-r{level_r}", contains)


def reduction_setup(chart: ChartSpec, level_r: float = 1.0) -> ReductionSetup:
    """Gauge for the z1-rotation reduction at radius ``level_r``.

    Slice: z1 real positive over the z2 disc; connection: the z1 angle form.
    """
    q = disc_chart(level_r)

    def z1comp(xs):
        return jsqrt(level_r**2 - xs[0] * xs[0] - xs[1] * xs[1])

    sigma = ChartMap(
        q,
        chart,
        (
            ScalarField(q, z1comp),
            const_field(q, 0.0),
            ScalarField(q, lambda xs: xs[0]),
            ScalarField(q, lambda xs: xs[1]),
        ),
    )
    proj = ChartMap(chart, q, (coord_field(chart, 2), coord_field(chart, 3)))
    return ReductionSetup(q, sigma, [dphi1_form(chart)], projection=proj)


def sample_points(
    rng: np.random.Generator,
    n: int,
    rmin: float = 0.2,
    rmax: float = 5.0,
    min_z1_frac: float = 0.0,
) -> np.ndarray:
    """Random points with radius in [rmin, rmax], optionally away from z1 = 0."""
    out = np.empty((n, 4))
    got = 0
    while got < n:
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        r = rng.uniform(rmin, rmax)
        p = r * v
        if min_z1_frac > 0.0 and np.hypot(p[0], p[1]) < min_z1_frac * r:
            continue
        out[got] = p
        got += 1
    return out


def disc_points(rng: np.random.Generator, n: int, level_r: float = 1.0, rim: float = 0.9) -> np.ndarray:
    """Random points of the open z2 disc of radius level_r."""
    radii = level_r * rim * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    ang = rng.uniform(0.0, 2 * np.pi, size=n)
    return np.column_stack([radii * np.cos(ang), radii * np.sin(ang)])
