"""Truncated twisted Hilbert space and its operator algebra.

Sections of the charge-l line bundle over S^2 are realized as functions on
SU(2) with right equivariance under the diagonal subgroup.  The orthonormal
basis is

    phi_{jm}(g) = sqrt(2j+1) conj(D^j_{m,l}(g)),   |l| <= j <= j_max,

(normalized against the Haar probability measure; divide by sqrt(4 pi r^2)
for the sphere's area measure).  The left regular action turns the index m
into a spin-j multiplet, so angular momentum is block diagonal and position
couples neighbouring shells through Clebsch-Gordan coefficients.

Operators are stored densely.  The truncated spaces used here are at most a
few thousand dimensional, and dense matmuls keep every identity check a
one-liner.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .classical import ModelParams, params_from_twist
from .groups import clebsch_gordan, covering_map, exp_su2, spin_matrices, wigner_d

__all__ = [
    "BadTwist",
    "Overflow",
    "SignMismatch",
    "TwistedHilbert",
    "BlockOperator",
    "build_space",
    "angular_momentum_operators",
    "position_operators",
    "linear_momentum",
    "heat_operator",
    "annihilation_conjugation",
    "annihilation_closed_form",
    "closed_form_coefficients",
    "relation_report",
    "intertwiner",
    "l1_section",
    "EPS3",
]


class BadTwist(ValueError):
    pass


class Overflow(ArithmeticError):
    pass


class SignMismatch(RuntimeError):
    pass


EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    EPS3[_i, _j, _k] = 1.0
    EPS3[_j, _i, _k] = -1.0


@dataclass(frozen=True)
class TwistedHilbert:
    twice_l: int
    twice_j_max: int
    params: ModelParams
    twice_js: tuple = field(init=False)
    offsets: tuple = field(init=False)
    twice_j_of: np.ndarray = field(init=False, repr=False)
    twice_m_of: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tjs = tuple(range(abs(self.twice_l), self.twice_j_max + 1, 2))
        offs, n = [], 0
        for tj in tjs:
            offs.append(n)
            n += tj + 1
        object.__setattr__(self, "twice_js", tjs)
        object.__setattr__(self, "offsets", tuple(offs))
        tj_of = np.concatenate([np.full(tj + 1, tj) for tj in tjs])
        tm_of = np.concatenate([np.arange(-tj, tj + 1, 2) for tj in tjs])
        tj_of.setflags(write=False)
        tm_of.setflags(write=False)
        object.__setattr__(self, "twice_j_of", tj_of)
        object.__setattr__(self, "twice_m_of", tm_of)

    @property
    def dim(self) -> int:
        return int(sum(tj + 1 for tj in self.twice_js))

    @property
    def j_max(self) -> float:
        return self.twice_j_max / 2

    @property
    def j_of(self) -> np.ndarray:
        return self.twice_j_of / 2

    def shell_slice(self, twice_j: int) -> slice:
        i = self.twice_js.index(twice_j)
        return slice(self.offsets[i], self.offsets[i] + twice_j + 1)

    def index(self, twice_j: int, twice_m: int) -> int:
        return self.shell_slice(twice_j).start + (twice_m + twice_j) // 2

    def interior_mask(self, margin: int = 2) -> np.ndarray:
        """Basis vectors with j <= j_max - margin."""
        return self.twice_j_of <= self.twice_j_max - 2 * margin

    def casimir(self) -> np.ndarray:
        """Diagonal of J^2 / hbar^2."""
        j = self.j_of
        return j * (j + 1)


def build_space(twice_l: int, twice_j_max: int, params: ModelParams | None = None) -> TwistedHilbert:
    twice_l, twice_j_max = int(twice_l), int(twice_j_max)
    if twice_j_max < abs(twice_l):
        raise BadTwist(f"twice_j_max = {twice_j_max} is below |twice_l| = {abs(twice_l)}")
    if (twice_j_max - twice_l) % 2:
        raise BadTwist("twice_j_max and twice_l must have the same parity")
    if params is None:
        params = params_from_twist(twice_l, 1.0, 1.0, 1.0, 1.0)
    elif params.twice_l != twice_l:
        raise BadTwist(f"params carry twice_l = {params.twice_l}, space asks for {twice_l}")
    return TwistedHilbert(twice_l, twice_j_max, params)


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Dense operator on a TwistedHilbert, coupling shells at most `bandwidth` apart."""

    space: TwistedHilbert
    mat: np.ndarray
    bandwidth: int = 1

    def __post_init__(self):
        self.mat.setflags(write=False)

    def block(self, twice_jp: int, twice_j: int) -> np.ndarray:
        return self.mat[self.space.shell_slice(twice_jp), self.space.shell_slice(twice_j)]

    def __matmul__(self, other):
        if isinstance(other, BlockOperator):
            return BlockOperator(self.space, self.mat @ other.mat, self.bandwidth + other.bandwidth)
        return self.mat @ other

    @property
    def H(self) -> "BlockOperator":
        return BlockOperator(self.space, self.mat.conj().T.copy(), self.bandwidth)

    def __array__(self, dtype=None, copy=None):
        return self.mat if dtype is None else self.mat.astype(dtype)


def _triple(space, mats, bandwidth):
    return tuple(BlockOperator(space, np.ascontiguousarray(m), bandwidth) for m in mats)


def angular_momentum_operators(space: TwistedHilbert):
    """J_k: spin-j generators (times hbar) on every shell."""
    n = space.dim
    out = np.zeros((3, n, n), complex)
    for tj in space.twice_js:
        s = space.shell_slice(tj)
        out[:, s, s] = spin_matrices(tj, space.params.hbar)
    return _triple(space, out, 0)


@functools.lru_cache(maxsize=1)
def intertwiner() -> np.ndarray:
    """T with R_U T = T D^1(U), scaled so that T maps the weight-0 vector to e3.

    Column mu + 1 expresses the vector-valued function x / r as
    sum_mu T[:, mu + 1] D^1_{mu, 0}.
    """
    dD = -1j * spin_matrices(2, 1.0)
    h = 1e-6
    rows = []
    for k in range(3):
        xi = np.zeros(3)
        xi[k] = h
        dR = (covering_map(exp_su2(xi)) - covering_map(exp_su2(-xi))) / (2 * h)
        rows.append(np.kron(np.eye(3), dR) - np.kron(dD[k].T, np.eye(3)))
    ns = null_space(np.vstack(rows), rcond=1e-6)
    if ns.shape[1] != 1:
        raise RuntimeError("intertwiner is not unique")
    T = ns[:, 0].reshape(3, 3, order="F")
    T = T / T[2, 1]
    # the exact entries are 0, +-1, +-1/sqrt(2) times powers of i
    snap = np.array([0.0, 1.0, math.sqrt(0.5)])
    for part in (T.real, T.imag):
        a = np.abs(part)
        part[...] = np.sign(part) * snap[np.argmin(np.abs(a[..., None] - snap), axis=-1)]
    T.setflags(write=False)
    return T


def position_operators(space: TwistedHilbert):
    """Multiplication by the ambient coordinates x_k (bandwidth 1)."""
    T = intertwiner()
    r, tl = space.params.r, space.twice_l
    n = space.dim
    out = np.zeros((3, n, n), complex)
    for tj in space.twice_js:
        sj = space.shell_slice(tj)
        for tjp in (tj - 2, tj, tj + 2):
            if tjp not in space.twice_js:
                continue
            c_l = clebsch_gordan(tjp, tl, 2, 0, tj, tl)
            if c_l == 0.0:
                continue
            sjp = space.shell_slice(tjp)
            pref = r * math.sqrt((tjp + 1) / (tj + 1)) * c_l
            blk = np.zeros((3, tjp + 1, tj + 1), complex)
            for b, tm in enumerate(range(-tj, tj + 1, 2)):
                for mu in (-1, 0, 1):
                    tmp = tm - 2 * mu
                    if abs(tmp) > tjp:
                        continue
                    c = clebsch_gordan(tjp, tmp, 2, 2 * mu, tj, tm)
                    blk[:, (tmp + tjp) // 2, b] += pref * c * T[:, mu + 1]
            out[:, sjp, sj] = blk
    # exact Hermiticity: keep the lower-shell-to-upper blocks and mirror them
    for k in range(3):
        up = np.triu(out[k], 1)
        out[k] = up + up.conj().T + np.diag(np.diag(out[k]).real)
    return _triple(space, out, 1)


def _cross(Aops, Bops):
    """(A x B)_i = eps_ijk A_j B_k on stacked dense matrices."""
    A = [np.asarray(a) for a in Aops]
    B = [np.asarray(b) for b in Bops]
    return np.array([A[1] @ B[2] - A[2] @ B[1], A[2] @ B[0] - A[0] @ B[2], A[0] @ B[1] - A[1] @ B[0]])


def linear_momentum(space: TwistedHilbert, J=None, X=None):
    """P = (1/r^2) J x X."""
    J = angular_momentum_operators(space) if J is None else J
    X = position_operators(space) if X is None else X
    return _triple(space, _cross(J, X) / space.params.r**2, 1)


def heat_operator(space: TwistedHilbert, t: float) -> BlockOperator:
    """exp(-t j(j+1)/2) on shell j."""
    jm = space.j_max
    if t * jm * (jm + 1) / 2 < -700:
        raise Overflow(f"heat operator at t = {t} overflows at j_max = {jm}")
    return BlockOperator(space, np.diag(np.exp(-t * space.casimir() / 2)).astype(complex), 0)


def _heat_conjugate(space, M, tau):
    c = space.casimir()
    jm = space.j_max
    if tau * jm * (jm + 1) / 2 > 700:
        raise Overflow(f"tau = {tau} overflows at j_max = {jm}")
    # rows get exp(-tau c_row / 2), columns exp(+tau c_col / 2); combine exponents first
    return M * np.exp(-tau * (c[:, None] - c[None, :]) / 2)


def annihilation_conjugation(space: TwistedHilbert, X=None, tau: float | None = None):
    """A_k = H(tau) X_k H(-tau)."""
    tau = space.params.tau if tau is None else tau
    X = position_operators(space) if X is None else X
    return _triple(space, [_heat_conjugate(space, np.asarray(x), tau) for x in X], 1)


def closed_form_coefficients(Lhat, eps):
    """Scalar coefficient functions (c_X, c_P, Lambda) of the closed form.

    A = c_X X + i c_P P/(m alpha) -/+ Lambda B J/(m^2 alpha^2 r), with
    c_X = e^eps (cosh L + eps sinh L / L), c_P = e^eps sinh L / L and
    Lambda = (1 + e^eps (eps sinh L / L - cosh L)) / (L^2 - eps^2).
    Lambda has a removable singularity at L = eps, filled in by its limit.
    """
    L = np.asarray(Lhat, dtype=float)
    shc = np.sinh(L) / L
    cx = np.exp(eps) * (np.cosh(L) + eps * shc)
    cp = np.exp(eps) * shc
    den = L * L - eps * eps
    near = np.abs(den) < 1e-6 * max(eps * eps, 1e-300)
    num = 1 + np.exp(eps) * (eps * shc - np.cosh(L))
    safe = np.where(near, 1.0, den)
    lam = np.where(near, _lambda_limit(eps), num / safe)
    return cx, cp, lam


def _lambda_limit(eps):
    # d/dL of the numerator over d/dL of L^2 - eps^2, at L = eps
    e = math.exp(eps)
    d_num = e * (eps * (math.cosh(eps) / eps - math.sinh(eps) / eps**2) - math.sinh(eps))
    return d_num / (2 * eps)


def annihilation_closed_form(space: TwistedHilbert, X=None, J=None, P=None, tol=1e-9, sign=None):
    """Closed-form annihilation operators with coefficients applied on the left.

    The Lambda term is tried with the printed minus sign first and then with a
    plus sign; the one that reproduces the conjugation route on the interior
    is returned.  `sign` forces a choice and skips the check.
    """
    prm = space.params
    J = angular_momentum_operators(space) if J is None else J
    X = position_operators(space) if X is None else X
    P = linear_momentum(space, J, X) if P is None else P
    ma, r, B, tau = prm.m_alpha, prm.r, prm.B, prm.tau
    eps = tau / 2
    Lhat = tau * (space.j_of + 0.5)
    cx, cp, lam = closed_form_coefficients(Lhat, eps)

    def build(sgn):
        mats = []
        for k in range(3):
            Xk, Pk, Jk = np.asarray(X[k]), np.asarray(P[k]), np.asarray(J[k])
            mats.append(
                cx[:, None] * Xk
                + 1j * cp[:, None] * Pk / ma
                + sgn * (lam * B / (ma * ma * r))[:, None] * Jk
            )
        return _triple(space, mats, 1)

    if sign is not None:
        return build(sign)
    ref = annihilation_conjugation(space, X)
    cols = space.interior_mask()
    scale = _abs_scale(ref, ref)
    for sgn in (-1.0, 1.0):
        A = build(sgn)
        err = max(np.abs(np.asarray(a)[:, cols] - np.asarray(b)[:, cols]).max() for a, b in zip(A, ref))
        if err <= tol * scale:
            return A
    raise SignMismatch("neither sign of the Lambda term matches the conjugation route")


def _abs_scale(Aops, Bops) -> float:
    """Largest entry of sum_k |A_k| |B_k|: the size of the products being compared."""
    tot = sum(np.abs(np.asarray(a)) @ np.abs(np.asarray(b)) for a, b in zip(Aops, Bops))
    return float(np.max(tot)) if np.size(tot) else 0.0


def _maxabs(M, cols=None):
    M = np.asarray(M)
    if cols is not None:
        M = M[:, cols]
    return float(np.max(np.abs(M))) if M.size else 0.0


DEFAULT_TOLERANCES = {
    "JJ_commutator": 1e-13,
    "JX_commutator": 1e-11,
    "XX_commutator": 1e-12,
    "J_dot_X": 1e-11,
    "X_dot_X": 1e-11,
    "J_cross_J": 1e-13,
    "J_cross_P": 1e-10,
    "P_adjoint": 1e-12,
    "AA_commutator": 1e-9,
    "A_dot_A": 1e-9,
    "A_two_route": 1e-9,
}


def relation_report(space: TwistedHilbert, tolerances: dict | None = None) -> list[dict]:
    """Max-norm residuals of the algebraic relations, full and interior.

    The interior is the span of shells j <= j_max - 2 (columns restricted,
    all rows kept).  Every residual is divided by a scale: the largest entry
    of the sum of absolute products of the operators involved.  A relation
    is a breach when its interior figure exceeds the tolerance.
    """
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(tolerances or {})
    prm = space.params
    hbar, r, B = prm.hbar, prm.r, prm.B
    J = angular_momentum_operators(space)
    X = position_operators(space)
    P = linear_momentum(space, J, X)
    Ac = annihilation_conjugation(space, X)
    Af = annihilation_closed_form(space, X, J, P)
    Jm = [np.asarray(o) for o in J]
    Xm = [np.asarray(o) for o in X]
    Pm = [np.asarray(o) for o in P]
    Am = [np.asarray(o) for o in Ac]
    Fm = [np.asarray(o) for o in Af]
    eye = np.eye(space.dim)
    cols = space.interior_mask()
    J2 = sum(a @ a for a in Jm)

    rel = {}

    def comm(Ao, Bo, rhs):
        out = []
        for j in range(3):
            for k in range(3):
                R = Ao[j] @ Bo[k] - Bo[k] @ Ao[j]
                for l in range(3):
                    if EPS3[j, k, l]:
                        R = R - EPS3[j, k, l] * rhs[l]
                out.append(R)
        return out

    rel["JJ_commutator"] = (comm(Jm, Jm, [1j * hbar * a for a in Jm]), _abs_scale(Jm, Jm))
    rel["JX_commutator"] = (comm(Jm, Xm, [1j * hbar * a for a in Xm]), _abs_scale(Jm, Xm))
    rel["XX_commutator"] = (comm(Xm, Xm, [0 * a for a in Xm]), _abs_scale(Xm, Xm))
    rel["J_dot_X"] = ([sum(a @ b for a, b in zip(Jm, Xm)) - r * hbar * prm.l * eye], _abs_scale(Jm, Xm))
    rel["X_dot_X"] = ([sum(a @ a for a in Xm) - r * r * eye], _abs_scale(Xm, Xm))
    JxJ = _cross(Jm, Jm)
    rel["J_cross_J"] = ([JxJ[i] - 1j * hbar * Jm[i] for i in range(3)], _abs_scale(Jm, Jm))
    JxP = _cross(Jm, Pm)
    rel["J_cross_P"] = (
        [JxP[i] + J2 @ Xm[i] / r**2 - 1j * hbar * Pm[i] + r * B * Jm[i] for i in range(3)],
        _abs_scale(Jm, Pm),
    )
    # P is not Hermitian: P - P^dagger = 2 i hbar X / r^2 follows from [J, X]
    rel["P_adjoint"] = (
        [p - p.conj().T - 2j * hbar * x / r**2 for p, x in zip(Pm, Xm)],
        max(_maxabs(p) for p in Pm),
    )
    rel["AA_commutator"] = (comm(Am, Am, [0 * a for a in Am]), _abs_scale(Am, Am))
    rel["A_dot_A"] = ([sum(a @ a for a in Am) - r * r * eye], _abs_scale(Am, Am))
    rel["A_two_route"] = ([a - f for a, f in zip(Am, Fm)], _abs_scale(Am, Am))

    out = []
    for name, (mats, scale) in rel.items():
        scale = scale if scale > 0 else 1.0
        full = max(_maxabs(M) for M in mats) / scale
        interior = max(_maxabs(M, cols) for M in mats) / scale
        if name == "P_adjoint":
            interior = max(_maxabs(M[np.ix_(cols, cols)]) for M in mats) / scale
        out.append(
            {
                "relation": name,
                "norm_full": full,
                "norm_interior": interior,
                "scale": scale,
                "tolerance": tols[name],
                "breach": bool(interior > tols[name]),
                "j_max": space.j_max,
                "twice_l": space.twice_l,
                "tau": prm.tau,
            }
        )
    return out


def report_json(report: list[dict]) -> str:
    return json.dumps(report, indent=2, sort_keys=False)


# --------------------------------------------------------------------------
# l = 1 cross-check: sections as C^3-valued functions psi with (x/r) x psi = i psi


def l1_section(space: TwistedHilbert, coeffs, g) -> np.ndarray:
    """C^3-valued function on the sphere for a state of the l = 1 space.

    Evaluated at group elements g (batch, 2, 2) lying over the points
    x = r R_g e3; returns (batch, 3) vectors T-column weighted by the
    equivariant coefficient function.  Only defined for twice_l = 2.
    """
    if space.twice_l != 2:
        raise BadTwist("the C^3 realization exists only for l = 1")
    g = np.asarray(g, dtype=complex)
    f = np.zeros(g.shape[:-2], complex)
    for tj in space.twice_js:
        D = wigner_d(tj, g)
        c = np.asarray(coeffs)[space.shell_slice(tj)]
        f = f + math.sqrt(tj + 1) * np.einsum("...m,m->...", D[..., :, (tj + 2) // 2].conj(), c)
    R = covering_map(g)
    T = np.asarray(intertwiner())
    # the weight +1 column of T, carried to the point x
    e_plus = np.einsum("...ab,b->...a", R, T[:, 2])
    return f[..., None] * e_plus
