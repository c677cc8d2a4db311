"""Pointwise linear algebra of generalized complex structures on V + V*.

Matrices act on column vectors ordered (d_1..d_m, dx^1..dx^m).  The split
pairing matrix is [[0, I], [I, 0]] (unnormalized convention).  A 2-form B is
passed around as the skew matrix B_ij = B(e_i, e_j); the induced map
V -> V*, v -> i_v B, then has matrix B^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional

import numpy as np

from .exterior import GvValue, MultivectorValue, clifford

__all__ = [
    "GcsValue",
    "GcsCheck",
    "IsotropicSubspace",
    "PureSpinorLine",
    "LinearReductionResult",
    "pairing_matrix",
    "check_gcs",
    "from_symplectic",
    "from_complex",
    "b_transform",
    "b_field_exp",
    "i_eigenbundle",
    "pure_spinor_line",
    "linear_reduce",
]


def pairing_matrix(m: int) -> np.ndarray:
    P = np.zeros((2 * m, 2 * m))
    P[:m, m:] = np.eye(m)
    P[m:, :m] = np.eye(m)
    return P


@dataclass
class GcsValue:
    """Pointwise generalized complex structure: a 2m x 2m matrix."""

    dim: int
    mat: np.ndarray

    def __post_init__(self):
        self.mat = np.asarray(self.mat)
        if self.mat.shape != (2 * self.dim, 2 * self.dim):
            raise ValueError("matrix must be 2m x 2m")

    def apply(self, v: GvValue) -> GvValue:
        m = self.dim
        col = list(v.vec) + list(v.cov)
        out = [sum(self.mat[i, j] * col[j] for j in range(2 * m) if self.mat[i, j] != 0)
               for i in range(2 * m)]
        zero = 0.0 * (v.vec[0] + v.cov[0])
        out = [o if not isinstance(o, int) else zero for o in out]
        return GvValue(m, out[:m], out[m:])


@dataclass
class GcsCheck:
    """Residuals of the pointwise structure equations."""

    square_residual: float
    orthogonality_residual: float

    def passes(self, tol: float) -> bool:
        return self.square_residual < tol and self.orthogonality_residual < tol


def check_gcs(J, tol: float = 1e-9) -> GcsCheck:
    mat = J.mat if isinstance(J, GcsValue) else np.asarray(J)
    n = mat.shape[0]
    if n % 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("even square matrix required")
    m = n // 2
    P = pairing_matrix(m)
    sq = float(np.max(np.abs(mat @ mat + np.eye(n))))
    orth = float(np.max(np.abs(mat.T @ P @ mat - P)))
    return GcsCheck(sq, orth)


def from_symplectic(W) -> GcsValue:
    """Structure of a linear symplectic form, given the map matrix W: V -> V*.

    W is the matrix of v -> i_v omega; it must be skew and invertible.
    """
    W = np.asarray(W, dtype=float)
    m = W.shape[0]
    if np.max(np.abs(W + W.T)) > 1e-12:
        raise ValueError("symplectic map matrix must be skew")
    Winv = np.linalg.inv(W)
    out = np.zeros((2 * m, 2 * m))
    out[:m, m:] = -Winv
    out[m:, :m] = W
    return GcsValue(m, out)


def from_complex(Jc) -> GcsValue:
    """Structure of a linear complex structure J (block [[-J, 0], [0, J^T]])."""
    Jc = np.asarray(Jc, dtype=float)
    m = Jc.shape[0]
    if np.max(np.abs(Jc @ Jc + np.eye(m))) > 1e-12:
        raise ValueError("matrix must square to -identity")
    out = np.zeros((2 * m, 2 * m))
    out[:m, :m] = -Jc
    out[m:, m:] = Jc.T
    return GcsValue(m, out)


def b_field_exp(B) -> np.ndarray:
    """Matrix of e^B: X + xi -> X + xi + i_X B."""
    B = np.asarray(B)
    m = B.shape[0]
    if np.max(np.abs(B + B.T)) > 1e-10:
        raise ValueError("B must be skew")
    E = np.eye(2 * m, dtype=B.dtype)
    E[m:, :m] = B.T
    return E


def b_transform(J: GcsValue, B) -> GcsValue:
    """e^{-B} J e^{B} for a 2-form with matrix B."""
    E = b_field_exp(B)
    Einv = b_field_exp(-np.asarray(B))
    return GcsValue(J.dim, Einv @ J.mat @ E)


@dataclass
class IsotropicSubspace:
    """Subspace of (V + V*) tensor C spanned by the columns of ``basis``."""

    dim: int
    basis: np.ndarray

    def __post_init__(self):
        self.basis = np.atleast_2d(np.asarray(self.basis))
        if self.basis.shape[0] != 2 * self.dim:
            raise ValueError("basis columns must have length 2m")

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def isotropy_residual(self) -> float:
        P = pairing_matrix(self.dim)
        G = self.basis.T @ P @ self.basis
        return float(np.max(np.abs(G))) if G.size else 0.0


def i_eigenbundle(J: GcsValue, tol: float = 1e-9) -> IsotropicSubspace:
    """+i eigenspace of J, via the projector (I - iJ)/2."""
    n = 2 * J.dim
    proj = 0.5 * (np.eye(n) - 1j * J.mat)
    u, s, _ = np.linalg.svd(proj)
    rank = int(np.sum(s > tol * s[0]))
    if rank != J.dim:
        raise ValueError(f"eigenbundle rank {rank} != {J.dim}; J fails invariants")
    return IsotropicSubspace(J.dim, u[:, : J.dim])


@dataclass
class PureSpinorLine:
    """Line in the exterior algebra annihilated by a maximal isotropic."""

    dim: int
    generator: MultivectorValue


def _blade_list(m: int):
    blades = []
    for k in range(m + 1):
        blades.extend(combinations(range(1, m + 1), k))
    return blades


def clifford_matrix(m: int, column: np.ndarray) -> np.ndarray:
    """Matrix of Clifford action of (X, xi) on the 2^m blade basis."""
    blades = _blade_list(m)
    index = {b: i for i, b in enumerate(blades)}
    v = GvValue(m, list(column[:m]), list(column[m:]))
    out = np.zeros((len(blades), len(blades)), dtype=complex)
    for j, b in enumerate(blades):
        res = clifford(v, MultivectorValue(m, {b: 1.0}))
        for bb, c in res.coeffs.items():
            out[index[bb], j] += c
    return out


def pure_spinor_line(L: IsotropicSubspace, tol: float = 1e-9) -> PureSpinorLine:
    """Joint Clifford kernel of the m annihilator sections."""
    m = L.dim
    ops = [clifford_matrix(m, L.basis[:, j]) for j in range(L.rank)]
    stacked = np.vstack(ops)
    _, s, vh = np.linalg.svd(stacked)
    small = np.sum(s < tol * max(1.0, s[0]))
    null_dim = vh.shape[0] - int(np.sum(s >= tol * max(1.0, s[0])))
    if null_dim != 1:
        raise ValueError(f"annihilator kernel has dimension {null_dim}, expected 1 (non-pure input)")
    gen = vh[-1].conj()
    k = int(np.argmax(np.abs(gen)))
    gen = gen / gen[k]
    blades = _blade_list(m)
    coeffs = {b: gen[i] for i, b in enumerate(blades) if abs(gen[i]) > 1e-14}
    return PureSpinorLine(m, MultivectorValue(m, coeffs))


# --------------------------------------------------------------------------
# exact rational linear algebra (used by the exact reduction path)


def _exact_rref(rows):
    rows = [list(r) for r in rows]
    nr = len(rows)
    nc = len(rows[0]) if nr else 0
    pivots = []
    r = 0
    for c in range(nc):
        piv = None
        for rr in range(r, nr):
            if rows[rr][c] != 0:
                piv = rr
                break
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = Fraction(1, 1) / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for rr in range(nr):
            if rr != r and rows[rr][c] != 0:
                f = rows[rr][c]
                rows[rr] = [a - f * b for a, b in zip(rows[rr], rows[r])]
        pivots.append(c)
        r += 1
        if r == nr:
            break
    return rows, pivots


def _exact_nullspace(rows):
    """Basis of the right null space of a Fraction matrix (columns)."""
    nc = len(rows[0]) if rows else 0
    rref, pivots = _exact_rref(rows)
    free = [c for c in range(nc) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * nc
        vec[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            vec[pc] = -rref[r][fc]
        basis.append(vec)
    return basis


def _exact_solve(A_cols, b):
    """Solve sum_j x_j A_cols[j] = b exactly; raises if inconsistent."""
    n = len(b)
    k = len(A_cols)
    aug = [[A_cols[j][i] for j in range(k)] + [b[i]] for i in range(n)]
    rref, pivots = _exact_rref(aug)
    if k in pivots:
        raise ValueError("inconsistent exact linear system")
    x = [Fraction(0)] * k
    for r, pc in enumerate(pivots):
        x[pc] = rref[r][k]
    # verify exactly (guards against rank deficiency)
    for i in range(n):
        acc = sum(x[j] * A_cols[j][i] for j in range(k))
        if acc != b[i]:
            raise ValueError("exact solve residual nonzero")
    return x


@dataclass
class LinearReductionResult:
    """Quotient data of a linear reduction by an isotropic K in V*."""

    dim: int                       # ambient m
    quotient_dim: int              # m - 2k (manifold count; fibre rank is twice this)
    representatives: np.ndarray    # 2m x 2(m-2k), columns represent the quotient basis
    subspace: np.ndarray           # 2m x 2k, the null directions K + J(K)
    reduced_pairing: np.ndarray
    reduced_structure: GcsValue
    splitting_b: Optional[np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    def project(self, column) -> np.ndarray:
        """Quotient coordinates of an element of Ann(K + JK)."""
        A = np.column_stack([self.representatives, self.subspace])
        sol, *_ = np.linalg.lstsq(A, np.asarray(column, dtype=complex), rcond=None)
        return sol[: self.representatives.shape[1]]


def _float_complement(ann: np.ndarray, S: np.ndarray, tol: float) -> np.ndarray:
    """Orthogonal complement of span(S) inside span(ann) (Euclidean)."""
    q_s, _ = np.linalg.qr(S)
    proj = ann - q_s @ (q_s.conj().T @ ann)
    u, s, _ = np.linalg.svd(proj, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return u[:, :rank]


def linear_reduce(
    J: GcsValue,
    K: IsotropicSubspace,
    representatives: Optional[np.ndarray] = None,
    exact: bool = False,
    rank_tol: float = 1e-9,
) -> LinearReductionResult:
    """Reduce (V + V*, <,>, J) by a subspace K of V*.

    Checks the two assumptions (K + JK isotropic-annihilated, JK meets V*
    trivially) numerically and reports worst-case violations.  When the
    extra orthogonality <N, cov(JK)> = 0 holds, also returns the splitting
    2-form built from a pairing-dual basis.
    """
    m = J.dim
    Kb = K.basis
    k = Kb.shape[1] if Kb.ndim == 2 else 0
    if k == 0:
        P = pairing_matrix(m)
        return LinearReductionResult(
            m, m, np.eye(2 * m), np.zeros((2 * m, 0)), P, GcsValue(m, J.mat.copy()),
            None, {"assumption1": 0.0, "assumption2_min_sv": np.inf, "assumption3": 0.0},
        )

    in_vstar = float(np.max(np.abs(Kb[:m, :])))
    if in_vstar > rank_tol:
        raise ValueError("K must lie in V* (vector components found)")

    if exact:
        return _linear_reduce_exact(J, K)

    P = pairing_matrix(m)
    JK = J.mat @ Kb
    N = JK[:m, :]                      # a(JK)
    g = JK[m:, :]                      # cov part of JK
    sv = np.linalg.svd(N, compute_uv=False)
    a2_min = float(sv[-1]) if len(sv) >= k else 0.0
    if a2_min < rank_tol:
        raise ValueError(f"assumption-2-violated: JK meets V*, min sv {a2_min:.3e}")

    S = np.column_stack([Kb, JK])
    gram = S.T @ P @ S
    a1 = float(np.max(np.abs(gram)))
    if a1 > 1e-6:
        raise ValueError(f"assumption-1-violated: K+JK not isotropic, residual {a1:.3e}")

    # annihilator of S under the pairing
    A = S.T @ P
    _, s, vh = np.linalg.svd(A)
    ann = vh[int(np.sum(s > rank_tol * max(1.0, s[0]))):].conj().T

    if representatives is None:
        reps = _float_complement(ann, S, rank_tol)
    else:
        reps = np.asarray(representatives)
        res = np.max(np.abs(S.T @ P @ reps))
        if res > 1e-6:
            raise ValueError(f"provided representatives not in Ann(K+JK): {res:.3e}")

    q2 = reps.shape[1]
    red_pair = reps.T @ P @ reps
    ev = np.linalg.eigvalsh(0.5 * (red_pair + red_pair.T).real)
    if np.min(np.abs(ev)) < 1e-8:
        raise ValueError("reduced pairing degenerate")

    # reduced structure: expand J*reps in [reps | S]
    basis = np.column_stack([reps, S])
    sol, *_ = np.linalg.lstsq(basis, J.mat @ reps, rcond=None)
    J_red = sol[:q2, :]
    resid = float(np.max(np.abs(basis @ sol - J.mat @ reps)))

    a3 = float(np.max(np.abs(N.T @ g))) if k else 0.0
    splitting = None
    if a3 < 1e-8:
        vstar = N @ np.linalg.inv(N.T @ N)
        B = np.zeros((m, m))
        for j in range(k):
            B += np.outer(g[:, j].real, vstar[:, j].real)
            B -= np.outer(vstar[:, j].real, g[:, j].real)
        splitting = B

    diags = {
        "assumption1": a1,
        "assumption2_min_sv": a2_min,
        "assumption3": a3,
        "expansion_residual": resid,
        "signature": (int(np.sum(ev > 0)), int(np.sum(ev < 0))),
    }
    if np.max(np.abs(np.asarray(J_red).imag)) < 1e-9:
        J_red = np.asarray(J_red).real
    return LinearReductionResult(
        m, m - 2 * k, reps, S, red_pair, GcsValue(m - 2 * k, J_red), splitting, diags
    )


def _linear_reduce_exact(J: GcsValue, K: IsotropicSubspace) -> LinearReductionResult:
    """Fraction-arithmetic variant; requires rational J and K entries."""
    m = J.dim
    Kb = K.basis
    k = Kb.shape[1]

    def frac(x):
        return Fraction(x).limit_denominator(10**12)

    Jm = [[frac(J.mat[i, j]) for j in range(2 * m)] for i in range(2 * m)]
    Kcols = [[frac(Kb[i, j]) for i in range(2 * m)] for j in range(k)]

    def matvec(M, v):
        return [sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M))]

    def pair(u, v):
        return sum(u[i] * v[m + i] + v[i] * u[m + i] for i in range(m))

    JKcols = [matvec(Jm, c) for c in Kcols]
    Scols = Kcols + JKcols
    for u in Scols:
        for v in Scols:
            if pair(u, v) != 0:
                raise ValueError("assumption-1-violated (exact)")

    # Ann(S): null space of the pairing conditions <u, .> = 0
    rows = []
    for u in Scols:
        row = [u[m + j] for j in range(m)] + [u[j] for j in range(m)]
        rows.append(row)
    ann = _exact_nullspace(rows)

    # complement of S inside Ann(S): grow rank greedily
    reps = []
    base = [list(c) for c in Scols]
    for cand in ann:
        trial = base + reps + [cand]
        rr, piv = _exact_rref([list(col) for col in zip(*trial)])
        if len(piv) == len(trial):
            reps.append(cand)
    q2 = len(reps)
    if q2 != 2 * (m - 2 * k):
        raise ValueError("exact quotient dimension mismatch")

    red_pair = [[pair(a, b) for b in reps] for a in reps]
    cols = [list(c) for c in (reps + Scols)]
    Jred = []
    for a in reps:
        x = _exact_solve(cols, matvec(Jm, a))
        Jred.append(x[:q2])
    J_red = [[Jred[j][i] for j in range(q2)] for i in range(q2)]  # columns -> matrix

    reps_np = np.array([[float(x) for x in col] for col in reps]).T
    S_np = np.array([[float(x) for x in col] for col in Scols]).T
    red_pair_np = np.array([[float(x) for x in row] for row in red_pair])
    J_red_np = np.array([[float(x) for x in row] for row in J_red])
    result = LinearReductionResult(
        m, m - 2 * k, reps_np, S_np, red_pair_np, GcsValue(m - 2 * k, J_red_np),
        None, {"exact": True},
    )
    result.diagnostics["exact_matrix"] = J_red
    result.diagnostics["exact_reps"] = reps
    result.diagnostics["exact_pairing"] = red_pair
    return result
