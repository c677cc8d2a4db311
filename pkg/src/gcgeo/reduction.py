"""Hamiltonian fields, moment maps, and reduction of twisted structures.

The quotient of a Hamiltonian torus action is realized concretely: a
``ReductionSetup`` carries a gauge slice sigma from the quotient chart into
the zero level set and a connection form; every descended object (structure
matrix, twisting, spinors, curvature) is computed by evaluating upstairs
data on horizontal lifts through sigma.  All descended coefficients remain
jet-evaluable, so integrability and closedness checks run on the quotient
exactly as on any other chart.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
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
    coords_of,
    d_scalar,
    exterior_d,
    form_norm_at,
    lie_bracket,
    lie_derivative,
    order_of,
    pullback,
)
from .courant import (
    TwistedCourantContext,
    courant_bracket,
    deriv_along,
    exp_form,
    gv_norm_at,
    pairing_field,
)
from .exterior import GvValue, MultivectorValue, contract as mv_contract
from .jets import Jet, deep_value, is_jet, seeds
from .linear import GcsValue, IsotropicSubspace, check_gcs, linear_reduce, pairing_matrix

__all__ = [
    "GcsField",
    "MomentMapSpec",
    "ReductionSetup",
    "ReductionResult",
    "b_transform_field",
    "form_matrix_at",
    "hamiltonian_field",
    "hamiltonian_isotropy_residuals",
    "lie_algebroid_d0",
    "poisson_bracket",
    "check_hamiltonian_action",
    "b_transform_invariance",
    "b1_form",
    "reduce_structure",
    "descend_structure",
    "descend_form",
    "connection_independence",
    "dh_check",
    "spinor_descend",
    "product_structure",
    "lift_scalar_to_product",
    "lift_form_to_product",
    "lift_vector_to_product",
    "cut",
    "CutResult",
    "involutivity_residual",
    "gcs_check_at",
]


# --------------------------------------------------------------------------
# payload matrix helpers (entries are numbers, numpy scalars or jets)


def _mat_mul(A, B):
    n, k, m = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = None
            for l in range(k):
                a = A[i][l]
                b = B[l][j]
                if _is_zero(a) or _is_zero(b):
                    continue
                term = a * b
                acc = term if acc is None else acc + term
            row.append(0.0 if acc is None else acc)
        out.append(row)
    return out


def _is_zero(x) -> bool:
    return isinstance(x, float) and x == 0.0


def _payload_abs(x) -> float:
    v = np.asarray(deep_value(x))
    return float(np.max(np.abs(v))) if v.size else 0.0


def _solve_payload(A, B):
    """Gaussian elimination with partial pivoting; payload entries."""
    n = len(A)
    k = len(B[0])
    M = [list(A[i]) + list(B[i]) for i in range(n)]
    for col in range(n):
        piv, best = col, _payload_abs(M[col][col])
        for r in range(col + 1, n):
            mag = _payload_abs(M[r][col])
            if mag > best:
                piv, best = r, mag
        if best == 0.0:
            raise np.linalg.LinAlgError("singular payload system")
        M[col], M[piv] = M[piv], M[col]
        inv = 1.0 / M[col][col]
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r == col:
                continue
            f = M[r][col]
            if _is_zero(f) or _payload_abs(f) == 0.0:
                continue
            M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [[M[i][n + j] for j in range(k)] for i in range(n)]


def _values_matrix(M) -> np.ndarray:
    return np.array([[complex(np.asarray(deep_value(x)).reshape(())) for x in row] for row in M])


# --------------------------------------------------------------------------
# point-dependent structures


class GcsField:
    """Point-dependent generalized complex structure over a chart."""

    def __init__(self, chart: ChartSpec, entry_fn: Callable, H: Optional[DiffForm] = None):
        self.chart = chart
        self.H = H
        self._entry_fn = entry_fn
        self._cache: dict = {}

    @staticmethod
    def from_fields(chart: ChartSpec, fields, H: Optional[DiffForm] = None) -> "GcsField":
        rows = [list(r) for r in fields]

        def entry_fn(xs):
            return [[f.eval(xs) for f in row] for row in rows]

        out = GcsField(chart, entry_fn, H)
        out._field_rows = rows
        return out

    @staticmethod
    def from_constant(chart: ChartSpec, value: GcsValue, H: Optional[DiffForm] = None) -> "GcsField":
        mat = np.asarray(value.mat, dtype=float)

        def entry_fn(xs):
            zero = 0.0 * xs[0]
            return [[mat[i, j] + zero if mat[i, j] != 0.0 else 0.0
                     for j in range(mat.shape[1])] for i in range(mat.shape[0])]

        return GcsField(chart, entry_fn, H)

    def entries_at(self, xs):
        key = id(xs)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is xs:
            return hit[1]
        val = self._entry_fn(xs)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = (xs, val)
        return val

    def field(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.chart, lambda xs: self.entries_at(xs)[i][j] + 0.0 * xs[0])

    def at(self, p) -> GcsValue:
        xs = tuple(np.asarray(c) for c in p)
        self.chart.check(xs)
        ent = self.entries_at(xs)
        return GcsValue(self.chart.dim, _values_matrix(ent).real)

    def apply(self, s: GvFieldC) -> GvFieldC:
        """Field-level J(X + xi)."""
        m = self.chart.dim
        comps = list(s.vec) + list(s.cov)

        def make(i):
            def func(xs):
                ent = self.entries_at(xs)
                acc = None
                for j in range(2 * m):
                    e = ent[i][j]
                    if _is_zero(e):
                        continue
                    term = e * comps[j].eval(xs)
                    acc = term if acc is None else acc + term
                return 0.0 * xs[0] if acc is None else acc

            return ScalarField(self.chart, func)

        out = [make(i) for i in range(2 * m)]
        return GvFieldC(self.chart, tuple(out[:m]), tuple(out[m:]))


def form_matrix_at(B: DiffForm, xs):
    """Skew payload matrix B_ij = B(e_i, e_j) of a 2-form at given args."""
    m = B.chart.dim
    out = [[0.0] * m for _ in range(m)]
    for (i, j), f in B.coeffs.items():
        v = f.eval(xs)
        out[i - 1][j - 1] = v
        out[j - 1][i - 1] = -v
    return out


def b_transform_field(S: GcsField, B: DiffForm) -> GcsField:
    """e^{-B} J e^{B} pointwise; the twisting becomes H + dB."""
    m = S.chart.dim

    def entry_fn(xs):
        J = S.entries_at(xs)
        Bm = form_matrix_at(B, xs)
        one = 1.0 + 0.0 * xs[0]
        E = [[one if i == j else 0.0 for j in range(2 * m)] for i in range(2 * m)]
        Ei = [[one if i == j else 0.0 for j in range(2 * m)] for i in range(2 * m)]
        for i in range(m):
            for j in range(m):
                bij = Bm[j][i]  # map matrix is the transpose of the form matrix
                if _payload_abs(bij) == 0.0 and not is_jet(bij):
                    continue
                E[m + i][j] = bij
                Ei[m + i][j] = -bij
        return _mat_mul(Ei, _mat_mul(J, E))

    H_new = None
    if S.H is not None or B.coeffs:
        dB = exterior_d(B)
        H_new = dB if S.H is None else S.H + dB
    return GcsField(S.chart, entry_fn, H_new)


def gcs_check_at(S: GcsField, points: np.ndarray, tol: float = 1e-9):
    """Worst pointwise structure residuals over a sample batch."""
    worst_sq = worst_orth = 0.0
    for p in np.atleast_2d(points):
        c = check_gcs(S.at(list(p)), tol)
        worst_sq = max(worst_sq, c.square_residual)
        worst_orth = max(worst_orth, c.orthogonality_residual)
    return worst_sq, worst_orth


def involutivity_residual(S: GcsField, points: np.ndarray, rng=None) -> float:
    """Closure of the +i-eigenframe under the twisted bracket.

    A smooth frame is produced by applying (I - iJ)/2 to fixed generic
    constant sections; the residual is the (I + iJ)/2 component of the
    pairwise brackets.
    """
    m = S.chart.dim
    rng = rng or np.random.default_rng(20240301)
    basis = rng.normal(size=(2 * m, m)) + 1j * rng.normal(size=(2 * m, m))
    ctx = TwistedCourantContext(S.chart, S.H)

    def frame(a: int) -> GvFieldC:
        comps = []
        for i in range(2 * m):
            def func(xs, i=i, a=a):
                ent = S.entries_at(xs)
                acc = basis[i, a] + 0.0 * xs[0]
                for j in range(2 * m):
                    e = ent[i][j]
                    if _is_zero(e):
                        continue
                    acc = acc - 1j * e * basis[j, a]
                return 0.5 * acc

            comps.append(ScalarField(S.chart, func))
        return GvFieldC(S.chart, tuple(comps[:m]), tuple(comps[m:]))

    frames = [frame(a) for a in range(m)]
    worst = 0.0
    pts = np.atleast_2d(points)
    for a in range(m):
        for b in range(a + 1, m):
            br = courant_bracket(ctx, frames[a], frames[b])
            for p in pts:
                xs = tuple(np.asarray(c) for c in p)
                ent = S.entries_at(xs)
                col = [f.eval(xs) for f in list(br.vec) + list(br.cov)]
                Jcol = [
                    sum((ent[i][j] * col[j]) for j in range(2 * m) if not _is_zero(ent[i][j]))
                    for i in range(2 * m)
                ]
                proj = [0.5 * (c + 1j * jc) for c, jc in zip(col, Jcol)]
                worst = max(worst, max(_payload_abs(x) for x in proj))
    return worst


# --------------------------------------------------------------------------
# Hamiltonian machinery


def hamiltonian_field(S: GcsField, f: ScalarField) -> GvFieldC:
    """J(df) = X_f + xi_f."""
    df = d_scalar(f)
    m = S.chart.dim
    cov = [df.coeff((i + 1,)) for i in range(m)]

    def make(i):
        def func(xs):
            ent = S.entries_at(xs)
            acc = None
            for j in range(m):
                e = ent[i][m + j]
                if _is_zero(e):
                    continue
                term = e * cov[j].eval(xs)
                acc = term if acc is None else acc + term
            return 0.0 * xs[0] if acc is None else acc

        return ScalarField(S.chart, func)

    out = [make(i) for i in range(2 * m)]
    return GvFieldC(S.chart, tuple(out[:m]), tuple(out[m:]))


def hamiltonian_isotropy_residuals(S: GcsField, f: ScalarField, points) -> dict:
    """i_{X_f} df = i_{X_f} xi_f = 0."""
    xf = hamiltonian_field(S, f)
    X = xf.vector_part
    r1 = deriv_along(X, f)
    r2 = contract_form(X, xf.covector_part).coeff(())
    xs = batch_args(S.chart, points)
    return {
        "ix_df": float(np.max(np.abs(np.asarray(r1.eval(xs))))),
        "ix_xi": float(np.max(np.abs(np.asarray(r2.eval(xs))))),
    }


def lie_algebroid_d0(S: GcsField, F: ScalarField) -> GvFieldC:
    """d_L F = dF + i J(dF) for a complex function F."""
    m = S.chart.dim
    dF = d_scalar(F)
    jdf = hamiltonian_field(S, F)
    vec = tuple(jdf.vec[i] * 1j for i in range(m))
    cov = tuple(dF.coeff((i + 1,)) + jdf.cov[i] * 1j for i in range(m))
    return GvFieldC(S.chart, vec, cov)


def poisson_bracket(S: GcsField, f: ScalarField, g: ScalarField) -> ScalarField:
    """{f, g} = X_f(g)."""
    return deriv_along(hamiltonian_field(S, f).vector_part, g)


@dataclass
class MomentMapSpec:
    """Torus-rank moment data: mu_i, generators X_i and covector parts xi_i."""

    rank: int
    mu: Sequence[ScalarField]
    X: Sequence[VectorFieldC]
    xi: Sequence[DiffForm]

    def __post_init__(self):
        if not (len(self.mu) == len(self.X) == len(self.xi) == self.rank):
            raise ValueError("rank inconsistent with component lists")

    def section(self, i: int) -> GvFieldC:
        return GvFieldC.from_parts(self.X[i], self.xi[i])


def check_hamiltonian_action(
    S: GcsField, spec: MomentMapSpec, points: np.ndarray, level_points: Optional[np.ndarray] = None
) -> dict:
    """Residual report for the moment-map axioms of a torus action."""
    out: dict = {}
    res_moment = 0.0
    res_split = 0.0
    res_comm = 0.0
    for i in range(spec.rank):
        ham = hamiltonian_field(S, spec.mu[i])
        res_moment = max(res_moment, gv_norm_at(ham - spec.section(i), points))
        split = exterior_d(spec.xi[i])
        if S.H is not None:
            split = split - contract_form(spec.X[i], S.H)
        res_split = max(res_split, form_norm_at(split, points))
        for j in range(spec.rank):
            res_comm = max(
                res_comm,
                gv_norm_at(
                    GvFieldC.from_parts(
                        lie_bracket(spec.X[i], spec.X[j]), DiffForm.zero(S.chart, 1)
                    ),
                    points,
                ),
            )
    out["moment_field"] = res_moment
    out["splitting"] = res_split
    out["commutation"] = res_comm

    lp = level_points if level_points is not None else points
    res_equiv = 0.0
    for i in range(spec.rank):
        for j in range(spec.rank):
            v = deriv_along(spec.X[i], spec.mu[j])
            xs = batch_args(S.chart, lp)
            res_equiv = max(res_equiv, float(np.max(np.abs(np.asarray(v.eval(xs))))))
    out["equivariance"] = res_equiv

    # regularity: smallest singular value of d mu across the level set
    min_sv = np.inf
    min_norm = np.inf
    dmu = [d_scalar(mu_i) for mu_i in spec.mu]
    for p in np.atleast_2d(lp):
        G = np.array([[dmu[i].coeff((c + 1,))(list(p)).real for c in range(S.chart.dim)]
                      for i in range(spec.rank)], dtype=float)
        sv = np.linalg.svd(G, compute_uv=False)
        min_sv = min(min_sv, float(sv[-1]))
        Xm = np.array([[comp(list(p)) for comp in spec.X[i].comps] for i in range(spec.rank)],
                      dtype=complex)
        svx = np.linalg.svd(Xm, compute_uv=False)
        min_norm = min(min_norm, float(svx[-1]))
    out["regularity_min_sv"] = min_sv
    out["freeness_min_norm"] = min_norm
    return out


def b_transform_invariance(S: GcsField, spec: MomentMapSpec, B: DiffForm, points) -> dict:
    """Invariance of the Hamiltonian data under an invariant B-transform.

    Transformed structure e^{B} J e^{-B}: same moment map, xi' = xi + i_X B;
    requires L_{X_i} B = 0.
    """
    out: dict = {}
    res_inv = 0.0
    for i in range(spec.rank):
        res_inv = max(res_inv, form_norm_at(lie_derivative(spec.X[i], B), points))
    out["lie_derivative"] = res_inv

    Sp = b_transform_field(S, B.scale(-1.0))
    res_field = 0.0
    for i in range(spec.rank):
        ham = hamiltonian_field(Sp, spec.mu[i])
        expect = GvFieldC.from_parts(spec.X[i], spec.xi[i] + contract_form(spec.X[i], B))
        res_field = max(res_field, gv_norm_at(ham - expect, points))
    out["transformed_moment_field"] = res_field
    return out


@dataclass
class ReductionSetup:
    """Gauge data: quotient chart, slice into the zero level, connection."""

    q_chart: ChartSpec
    slice_map: ChartMap
    theta: Sequence[DiffForm]
    projection: Optional[ChartMap] = None

    def __post_init__(self):
        self.theta = list(self.theta)
        for th in self.theta:
            if th.degree != 1:
                raise ValueError("connection components must be 1-forms")


def b1_form(setup: ReductionSetup, spec: MomentMapSpec) -> DiffForm:
    """theta ^ xi_mu - (1/2) sum theta_j ^ theta_k i_{X_k} xi_j."""
    chart = spec.xi[0].chart
    out = DiffForm.zero(chart, 2)
    for j in range(spec.rank):
        out = out + setup.theta[j].wedge(spec.xi[j])
    for j in range(spec.rank):
        for k in range(spec.rank):
            coeff = contract_form(spec.X[k], spec.xi[j]).coeff(())
            term = setup.theta[j].wedge(setup.theta[k])
            out = out - DiffForm(
                chart,
                {b: f * coeff for b, f in term.coeffs.items()},
                2,
            ).scale(0.5)
    return out


class QuotientFrame:
    """Shared lift machinery for all descended objects of one reduction."""

    def __init__(self, S: GcsField, spec: MomentMapSpec, setup: ReductionSetup,
                 b1: Optional[DiffForm] = None):
        self.S = S
        self.spec = spec
        self.setup = setup
        self.m = S.chart.dim
        self.mq = setup.q_chart.dim
        self.r = spec.rank
        if self.mq != self.m - 2 * self.r:
            raise ValueError("quotient chart dimension must be m - 2r")
        self.b1 = b1 if b1 is not None else b1_form(setup, spec)
        self.J1 = b_transform_field(S, self.b1)
        self.HdB1 = self.J1.H if self.J1.H is not None else DiffForm.zero(S.chart, 3)
        self.dmu = [d_scalar(mu_i) for mu_i in spec.mu]
        self._cache: dict = {}

    # -- core state -----------------------------------------------------
    def state(self, xs):
        key = id(xs)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is xs:
            return hit[1]
        k = order_of(xs)
        sigma = self.setup.slice_map
        m, mq, r = self.m, self.mq, self.r

        # slice jets one order up: lift columns need d sigma to order k
        hi = k + 1
        from .chart import reseed

        ys = reseed(xs, hi)
        space_hi = ys[0].space
        phi_hi = [j if is_jet(j) else Jet.constant(space_hi, j)
                  for j in sigma.eval_all(ys)]
        pvals = [j.value for j in phi_hi]
        tseeds = seeds(pvals, hi)

        def pull(f: ScalarField):
            """M-side scalar at sigma(q), as a jet in q of order k."""
            out = f.eval(tseeds)
            if not is_jet(out):
                out = Jet.constant(tseeds[0].space, out)
            return out.compose(phi_hi).truncate(k) if k < hi else out.compose(phi_hi)

        def pull_vec(V: VectorFieldC):
            return [pull(c) for c in V.comps]

        def pull_form_row(omega: DiffForm):
            return [pull(omega.coeff((i + 1,))) for i in range(m)]

        # vertical generators and covectors
        Xcols = [pull_vec(self.spec.X[j]) for j in range(r)]
        dmu_rows = [pull_form_row(self.dmu[j]) for j in range(r)]
        theta_rows = [pull_form_row(self.setup.theta[j]) for j in range(r)]

        # tangent lifts: horizontalized slice-jacobian columns
        dsig = [[phi_hi[c].partial(a).truncate(k) for a in range(mq)] for c in range(m)]
        w = []
        for a in range(mq):
            col = [dsig[c][a] for c in range(m)]
            for j in range(r):
                coef = None
                for c in range(m):
                    term = theta_rows[j][c] * col[c]
                    coef = term if coef is None else coef + term
                col = [cc - coef * Xcols[j][c] for c, cc in enumerate(col)]
            w.append(col)

        # covector lifts: eta(X_j) = 0, eta(w_b) = delta, eta(n_c) = 0
        rows = []
        rhs_rows = []
        for j in range(r):
            rows.append(Xcols[j])
            rhs_rows.append([0.0] * mq)
        for b in range(mq):
            rows.append(w[b])
            rhs_rows.append([1.0 if b == a else 0.0 for a in range(mq)])
        for j in range(r):
            rows.append(dmu_rows[j])  # Euclidean gradient as normal vector
            rhs_rows.append([0.0] * mq)
        eta_cols = _solve_payload(rows, rhs_rows)  # m x mq
        eta = [[eta_cols[c][a] for c in range(m)] for a in range(mq)]

        state = {
            "order": k,
            "pvals": pvals,
            "tseeds": tseeds,
            "phi_hi": phi_hi,
            "pull": pull,
            "w": w,
            "eta": eta,
            "X": Xcols,
            "dmu": dmu_rows,
            "theta": theta_rows,
        }
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = (xs, state)
        return state

    # -- descended structure ---------------------------------------------
    def structure_entries(self, xs, M_structure: Optional[GcsField] = None):
        st = self.state(xs)
        m, mq, r = self.m, self.mq, self.r
        struct = M_structure if M_structure is not None else self.J1
        tseeds = st["tseeds"]
        ent = struct.entries_at(tseeds)
        zero_hi = 0.0 * tseeds[0].value
        k = st["order"]

        def pull_payload(v):
            if not is_jet(v):
                v = Jet.constant(tseeds[0].space, v + zero_hi)
            return v.compose(st["phi_hi"]).truncate(k)

        Jp = [[pull_payload(ent[i][j]) if not _is_zero(ent[i][j]) else 0.0
               for j in range(2 * m)] for i in range(2 * m)]

        # basis columns in V + V*: reps, S1 = (dmu, J1 dmu), complement (n, theta)
        cols = []
        for a in range(mq):
            cols.append(st["w"][a] + [0.0] * m)
        for a in range(mq):
            cols.append([0.0] * m + st["eta"][a])
        S1 = []
        for j in range(r):
            S1.append([0.0] * m + st["dmu"][j])
        for j in range(r):
            dmu_col = [0.0] * m + st["dmu"][j]
            S1.append(_matvec(Jp, dmu_col))
        comp = []
        for j in range(r):
            comp.append(st["dmu"][j] + [0.0] * m)        # normal vector
        for j in range(r):
            comp.append([0.0] * m + st["theta"][j])      # connection covector
        basis = cols + S1 + comp  # 2m columns

        A = [[basis[c][i] for c in range(2 * m)] for i in range(2 * m)]
        targets = [_matvec(Jp, cols[a]) for a in range(2 * mq)]
        Bmat = [[targets[t][i] for t in range(2 * mq)] for i in range(2 * m)]
        sol = _solve_payload(A, Bmat)
        Jred = [[sol[i][t] for t in range(2 * mq)] for i in range(2 * mq)]
        leak = max(
            (_payload_abs(sol[i][t]) for i in range(2 * mq + 2 * r, 2 * m) for t in range(2 * mq)),
            default=0.0,
        )
        return Jred, leak

    # -- descended forms ---------------------------------------------------
    def descend_form_values(self, omega: DiffForm, xs) -> dict:
        """Coefficients of the horizontal descent at given quotient args."""
        st = self.state(xs)
        mq = self.mq
        pull = st["pull"]
        mv = MultivectorValue(
            self.m, {b: pull(f) for b, f in omega.coeffs.items()}
        )
        from itertools import combinations

        degs = sorted({len(b) for b in omega.coeffs})
        out: dict = {}
        for deg in degs:
            part = mv.degree_part(deg)
            if deg == 0:
                if () in part.coeffs:
                    out[()] = part.coeffs[()]
                continue
            for sb in combinations(range(1, mq + 1), deg):
                cur = part
                for idx in sb:
                    cur = mv_contract(st["w"][idx - 1], cur)
                val = cur.coeffs.get((), None)
                if val is not None:
                    out[sb] = val
        return out


def reduce_structure(
    S: GcsField,
    spec: MomentMapSpec,
    setup: ReductionSetup,
    check_points: Optional[np.ndarray] = None,
) -> "ReductionResult":
    """Reduction of a Hamiltonian structure through an explicit gauge."""
    frame = QuotientFrame(S, spec, setup)
    mq = frame.mq

    diagnostics: dict = {}
    if check_points is not None:
        # float-path verification through linear_reduce at sample points
        worst = {"assumption1": 0.0, "mu_on_slice": 0.0, "theta_normalization": 0.0,
                 "linear_expansion": 0.0, "pairing": 0.0}
        for q in np.atleast_2d(check_points):
            xs = tuple(np.asarray(c) for c in q)
            st = frame.state(xs)
            p = [float(np.asarray(deep_value(v)).reshape(())) for v in st["pvals"]]
            for j in range(spec.rank):
                worst["mu_on_slice"] = max(worst["mu_on_slice"], abs(float(spec.mu[j](p))))
                for l in range(spec.rank):
                    th = sum(
                        complex(np.asarray(deep_value(st["theta"][j][c])).reshape(()))
                        * complex(np.asarray(deep_value(st["X"][l][c])).reshape(()))
                        for c in range(frame.m)
                    )
                    worst["theta_normalization"] = max(
                        worst["theta_normalization"], abs(th - (1.0 if j == l else 0.0))
                    )
            J1p = frame.J1.at(p)
            K = IsotropicSubspace(
                frame.m,
                np.column_stack(
                    [np.concatenate([np.zeros(frame.m), [complex(np.asarray(deep_value(c)).reshape(())).real for c in st["dmu"][j]]])
                     for j in range(spec.rank)]
                ),
            )
            reps = np.zeros((2 * frame.m, 2 * mq))
            for a in range(mq):
                reps[: frame.m, a] = [
                    complex(np.asarray(deep_value(c)).reshape(())).real for c in st["w"][a]
                ]
                reps[frame.m :, mq + a] = [
                    complex(np.asarray(deep_value(c)).reshape(())).real for c in st["eta"][a]
                ]
            lin = linear_reduce(J1p, K, representatives=reps)
            worst["assumption1"] = max(worst["assumption1"], lin.diagnostics["assumption1"])
            worst["linear_expansion"] = max(
                worst["linear_expansion"], lin.diagnostics["expansion_residual"]
            )
            Pq = pairing_matrix(mq)
            worst["pairing"] = max(
                worst["pairing"], float(np.max(np.abs(lin.reduced_pairing - Pq)))
            )
        diagnostics.update(worst)

    def entry_fn(xs):
        Jred, leak = frame.structure_entries(xs)
        return Jred

    # descended twisting
    HdB1 = frame.HdB1

    def h_coeff(blade):
        def func(xs):
            vals = frame.descend_form_values(HdB1, xs)
            v = vals.get(blade, None)
            return 0.0 * xs[0] if v is None else v

        return ScalarField(setup.q_chart, func)

    from itertools import combinations

    h = DiffForm(
        setup.q_chart,
        {b: h_coeff(b) for b in combinations(range(1, mq + 1), 3)},
        3,
    )
    quotient = GcsField(setup.q_chart, entry_fn, h)
    return ReductionResult(quotient, frame.b1, h, spec, setup, frame, diagnostics)


@dataclass
class ReductionResult:
    quotient: GcsField
    b1: DiffForm
    h: DiffForm
    spec: MomentMapSpec
    setup: ReductionSetup
    frame: QuotientFrame
    diagnostics: dict = dc_field(default_factory=dict)


def descend_structure(other: GcsField, spec: MomentMapSpec, setup: ReductionSetup,
                      frame: Optional[QuotientFrame] = None,
                      b1: Optional[DiffForm] = None) -> GcsField:
    """Descend a companion invariant structure through an existing reduction.

    The companion is transformed by the same B1 and projected onto the
    quotient representatives along the vertical and normal directions.
    """
    fr = frame if frame is not None else QuotientFrame(other, spec, setup, b1=b1)
    other1 = b_transform_field(other, fr.b1)

    def entry_fn(xs):
        Jred, _ = fr.structure_entries(xs, M_structure=other1)
        return Jred

    return GcsField(setup.q_chart, entry_fn, None)


def descend_form(omega: DiffForm, frame: QuotientFrame) -> DiffForm:
    """Quotient form whose value is omega evaluated on horizontal lifts."""
    from itertools import combinations

    mq = frame.mq
    degs = sorted({len(b) for b in omega.coeffs})

    def coeff(blade):
        def func(xs):
            vals = frame.descend_form_values(omega, xs)
            v = vals.get(blade, None)
            return 0.0 * xs[0] if v is None else v

        return ScalarField(frame.setup.q_chart, func)

    out: dict = {}
    for deg in degs:
        if deg == 0:
            out[()] = coeff(())
        else:
            for sb in combinations(range(1, mq + 1), deg):
                out[sb] = coeff(sb)
    degree = degs[0] if len(degs) == 1 else None
    return DiffForm(frame.setup.q_chart, out, degree)


def connection_independence(
    S: GcsField,
    spec: MomentMapSpec,
    setup: ReductionSetup,
    setup2: ReductionSetup,
    q_points: np.ndarray,
    m_points: np.ndarray,
) -> dict:
    """Two connections give twistings differing by an exact descended form."""
    r1 = reduce_structure(S, spec, setup)
    r2 = reduce_structure(S, spec, setup2)
    diff = r2.b1 - r1.b1
    out: dict = {}
    res_h = 0.0
    for i in range(spec.rank):
        res_h = max(res_h, form_norm_at(contract_form(spec.X[i], diff), m_points))
        res_h = max(res_h, form_norm_at(lie_derivative(spec.X[i], diff), m_points))
    out["b_horizontal_invariant"] = res_h

    b_desc = descend_form(diff, r1.frame)
    target = exterior_d(b_desc)
    resid = 0.0
    for q in np.atleast_2d(q_points):
        xs = tuple(np.asarray(c) for c in q)
        v1 = r1.h.at_args(xs)
        v2 = r2.h.at_args(xs)
        tv = target.at_args(xs)
        num = (v2 - v1 - tv)
        resid = max(resid, num.norm())
    out["h_difference_exact"] = resid
    return out


def dh_check(result: ReductionResult, q_points: np.ndarray) -> dict:
    """Torus Duistermaat-Heckman form of the descended twisting.

    h = h0 + sum_j Omega_j ^ zeta_j with h0, zeta the horizontal descents of
    H and xi, Omega the descended curvature d theta.
    """
    frame = result.frame
    S, spec, setup = frame.S, frame.spec, frame.setup
    H = S.H if S.H is not None else DiffForm.zero(S.chart, 3)
    h0 = descend_form(H, frame)
    terms = h0
    for j in range(spec.rank):
        omega_j = descend_form(exterior_d(setup.theta[j]), frame)
        zeta_j = descend_form(spec.xi[j], frame)
        terms = terms + omega_j.wedge(zeta_j)
    resid = 0.0
    for q in np.atleast_2d(q_points):
        xs = tuple(np.asarray(c) for c in q)
        diff = result.h.at_args(xs) - terms.at_args(xs)
        resid = max(resid, diff.norm())
    return {"dh_residual": resid}


def spinor_descend(
    S: GcsField,
    spec: MomentMapSpec,
    setup: ReductionSetup,
    rho: DiffForm,
    q_points: np.ndarray,
    m_points: np.ndarray,
    frame: Optional[QuotientFrame] = None,
) -> tuple:
    """Descend a d_H-closed invariant pure spinor; returns (rho_mu, report)."""
    from .chart import twisted_d
    from .courant import InfSymmetry, psi_h, spinor_inf_act

    fr = frame if frame is not None else QuotientFrame(S, spec, setup)
    report: dict = {}
    report["dH_closed"] = form_norm_at(twisted_d(S.H, rho), m_points)
    inv = 0.0
    for j in range(spec.rank):
        gen = psi_h(S.H, InfSymmetry(spec.X[j], exterior_d(spec.xi[j])))
        inv = max(inv, form_norm_at(spinor_inf_act(gen, rho), m_points))
    report["invariance"] = inv

    rho_mu = descend_form(exp_form(fr.b1).wedge(rho), fr)
    h = descend_form(fr.HdB1, fr)
    h = DiffForm(h.chart, {b: f for b, f in h.coeffs.items() if len(b) == 3}, 3)

    d_rho_mu = twisted_d(h, rho_mu)
    resid = 0.0
    for q in np.atleast_2d(q_points):
        xs = tuple(np.asarray(c) for c in q)
        resid = max(resid, d_rho_mu.at_args(xs).norm())
    report["dh_closed_downstairs"] = resid
    return rho_mu, report


# --------------------------------------------------------------------------
# products and cutting


def lift_scalar_to_product(f: ScalarField, chart: ChartSpec, offset: int, width: int) -> ScalarField:
    """View a factor field as a field on the product chart.

    Only works for fields built from plain arithmetic closures (all fixture
    fields are); operator-made fields must be lifted before the operator.
    """
    return ScalarField(chart, lambda xs: f.eval(tuple(xs[offset : offset + width])))


def lift_form_to_product(omega: DiffForm, chart: ChartSpec, offset: int) -> DiffForm:
    width = omega.chart.dim
    out = {}
    for blade, f in omega.coeffs.items():
        nb = tuple(i + offset for i in blade)
        out[nb] = lift_scalar_to_product(f, chart, offset, width)
    return DiffForm(chart, out, omega.degree)


def lift_vector_to_product(X: VectorFieldC, chart: ChartSpec, offset: int) -> VectorFieldC:
    width = X.chart.dim
    comps = [const_field(chart, 0.0) for _ in range(chart.dim)]
    for i, f in enumerate(X.comps):
        comps[offset + i] = lift_scalar_to_product(f, chart, offset, width)
    return VectorFieldC(chart, tuple(comps))


def product_structure(S1: GcsField, S2: GcsField, name: str = "product") -> GcsField:
    """Block-diagonal structure on the product chart, twisting H1 + H2."""
    m1, m2 = S1.chart.dim, S2.chart.dim
    m = m1 + m2
    c1, c2 = S1.chart.contains, S2.chart.contains

    def contains(cols):
        ok = True
        if c1 is not None:
            ok = np.logical_and(ok, c1(cols[:m1]))
        if c2 is not None:
            ok = np.logical_and(ok, c2(cols[m1:]))
        return ok

    chart = ChartSpec(m, name, contains)

    def entry_fn(xs):
        xs1 = tuple(xs[:m1])
        xs2 = tuple(xs[m1:])
        e1 = S1.entries_at(xs1)
        e2 = S2.entries_at(xs2)
        out = [[0.0] * (2 * m) for _ in range(2 * m)]

        def put(block_val, i, j):
            out[i][j] = block_val

        for i in range(m1):
            for j in range(m1):
                put(e1[i][j], i, j)
                put(e1[i][m1 + j], i, m + j)
                put(e1[m1 + i][j], m + i, j)
                put(e1[m1 + i][m1 + j], m + i, m + j)
        for i in range(m2):
            for j in range(m2):
                put(e2[i][j], m1 + i, m1 + j)
                put(e2[i][m2 + j], m1 + i, m + m1 + j)
                put(e2[m2 + i][j], m + m1 + i, m1 + j)
                put(e2[m2 + i][m2 + j], m + m1 + i, m + m1 + j)
        return out

    H = None
    parts = []
    if S1.H is not None:
        parts.append(lift_form_to_product(S1.H, chart, 0))
    if S2.H is not None:
        parts.append(lift_form_to_product(S2.H, chart, m1))
    if parts:
        H = parts[0]
        for p in parts[1:]:
            H = H + p
    return GcsField(chart, entry_fn, H)


@dataclass
class CutResult:
    """Reduction of M x C at a level of f + |z|^2/2."""

    reduction: ReductionResult
    comparison_b: DiffForm      # sigma^* B1, on the cut region of M
    product: GcsField
    spec: MomentMapSpec
    setup: ReductionSetup


def cut(
    S: GcsField,
    f: ScalarField,
    Xf: VectorFieldC,
    xif: DiffForm,
    eps: float,
    region_name: str = "cut-region",
    extra_contains: Optional[Callable] = None,
) -> CutResult:
    """Generalized complex cutting along the moment level f + |z|^2/2 = eps.

    The C-factor carries the standard symplectic structure with moment
    g = |z|^2 / 2; the gauge slice takes z real positive, z = sqrt(2(eps-f)).
    """
    from .linear import from_symplectic

    m = S.chart.dim
    mc = m + 2

    # C factor: standard rotation moment
    plane = ChartSpec(2, "c-plane")
    Om = np.array([[0.0, 1.0], [-1.0, 0.0]])
    Sc = GcsField.from_constant(plane, from_symplectic(Om.T), None)

    prod = product_structure(S, Sc, name="cut-product")
    pchart = prod.chart

    f_lift = lift_scalar_to_product(f, pchart, 0, m)
    zx = ScalarField(pchart, lambda xs: xs[m])
    zy = ScalarField(pchart, lambda xs: xs[m + 1])
    g = (zx * zx + zy * zy) * 0.5
    mu = f_lift + g - eps

    Xdiag = lift_vector_to_product(Xf, pchart, 0)
    # standard rotation on the C factor: Y_g = -y d/dx + x d/dy
    rot = VectorFieldC(pchart, tuple(
        [const_field(pchart, 0.0)] * m + [zy * (-1.0), zx]
    ))
    Xtot = Xdiag + rot
    xi_tot = lift_form_to_product(xif, pchart, 0)
    spec = MomentMapSpec(1, [mu], [Xtot], [xi_tot])

    # connection: angle form of the C factor
    z2 = zx * zx + zy * zy
    theta = DiffForm(pchart, {(m + 1,): zy / z2 * (-1.0), (m + 2,): zx / z2}, 1)

    base_contains = S.chart.contains

    def q_contains(cols):
        ok = np.asarray(f.eval(tuple(cols))) < eps
        if base_contains is not None:
            ok = np.logical_and(ok, base_contains(cols))
        if extra_contains is not None:
            ok = np.logical_and(ok, extra_contains(cols))
        return ok

    q_chart = ChartSpec(m, region_name, q_contains)

    slice_comps = [ScalarField(q_chart, (lambda i: (lambda xs: xs[i]))(i)) for i in range(m)]
    from .jets import jsqrt

    def zcomp(xs):
        return jsqrt(2.0 * (eps - f.eval(tuple(xs[:m]))))

    slice_comps.append(ScalarField(q_chart, zcomp))
    slice_comps.append(const_field(q_chart, 0.0))
    sigma = ChartMap(q_chart, pchart, tuple(slice_comps))

    setup = ReductionSetup(q_chart, sigma, [theta], projection=None)
    result = reduce_structure(prod, spec, setup)
    b_cmp = pullback(sigma, result.b1)
    return CutResult(result, b_cmp, prod, spec, setup)


def _matvec(M, col):
    n = len(M)
    out = []
    for i in range(n):
        acc = None
        for j in range(len(col)):
            a, b = M[i][j], col[j]
            if _is_zero(a) or _is_zero(b):
                continue
            term = a * b
            acc = term if acc is None else acc + term
        out.append(0.0 if acc is None else acc)
    return out
