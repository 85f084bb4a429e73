"""SU(2) / SL(2,C) kernel.

Conventions
-----------
The basis of su(2) is

    E1 = 1/2 [[0, 1], [-1, 0]],  E2 = 1/2 [[0, i], [i, 0]],  E3 = 1/2 [[i, 0], [0, -i]]

with [E_j, E_k] = eps_jkl E_l.  The covering map sends U to the matrix of
Ad_U in this basis, so that diag(e^{i theta/2}, e^{-i theta/2}) is the
counter-clockwise rotation by theta about e3.  The same formula, with U^{-1}
in place of U^dagger, gives the complex rotation R_g in SO(3, C) of any
g in SL(2, C).

Angular-momentum labels are carried as twice-integers throughout.  The
spin-j representation acts on homogeneous polynomials of degree 2j in two
variables; the weight-m basis vector is e1^(j-m) e2^(j+m) / sqrt((j-m)!(j+m)!),
basis order is ascending m, and D^{1/2}(g) = g.  Matrix entries are
polynomials in the entries of g, so `wigner_d` is valid on all of SL(2, C).

The generators sigma_k = i hbar dD(E_k) in this basis are the Condon-Shortley
spin matrices rotated by -90 degrees about e3:
sigma_1 = S_2, sigma_2 = -S_1, sigma_3 = S_3.  Clebsch-Gordan coefficients are
Condon-Shortley; the relative phase (-i)^(j+m) between the two bases cancels
in every product formula D^{j1} D^{j2} = sum CG CG D^J used here.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "E",
    "PAULI",
    "GroupElement",
    "IrrepData",
    "NotUnitary",
    "Singular",
    "exp_su2",
    "covering_map",
    "complex_rotation",
    "polar_decompose",
    "wigner_d",
    "spin_matrices",
    "irrep",
    "clebsch_gordan",
    "haar_quadrature",
    "su2_from_euler",
    "MAX_TWICE_J",
]

MAX_TWICE_J = 128
# the monomial expansion of D^j keeps ~1e-13 accuracy up to here
POLY_TWICE_J = 24

E = np.array(
    [
        [[0, 1], [-1, 0]],
        [[0, 1j], [1j, 0]],
        [[1j, 0], [0, -1j]],
    ],
    dtype=complex,
) / 2

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class NotUnitary(ValueError):
    pass


class Singular(ValueError):
    pass


@dataclass(frozen=True)
class GroupElement:
    """A 2x2 complex matrix of unit determinant."""

    entries: np.ndarray
    is_unitary: bool = False

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if abs(np.linalg.det(m) - 1) > 1e-12:
            raise ValueError(f"det = {np.linalg.det(m)!r}, expected 1")
        if self.is_unitary and np.abs(m.conj().T @ m - np.eye(2)).max() > 1e-12:
            raise NotUnitary("flagged SU(2) but g^dagger g != I")

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        prod = self.entries @ np.asarray(other)
        unitary = self.is_unitary and isinstance(other, GroupElement) and other.is_unitary
        return GroupElement(prod, is_unitary=unitary)

    def inverse(self):
        a, b, c, d = self.entries.ravel()
        return GroupElement(np.array([[d, -b], [-c, a]]), is_unitary=self.is_unitary)


def _inv2(g):
    """Inverse of unimodular 2x2 matrices (batched)."""
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1]
    out[..., 1, 1] = g[..., 0, 0]
    out[..., 0, 1] = -g[..., 0, 1]
    out[..., 1, 0] = -g[..., 1, 0]
    return out


def exp_su2(xi) -> np.ndarray:
    """Matrix exponential of sum_k xi_k E_k.

    Uses (xi.E)^2 = -|xi|^2/4 I, so the exponential is
    cos(|xi|/2) I + (2/|xi|) sin(|xi|/2) xi.E.  Complex coefficients give
    elements of SL(2, C).  Batched over leading axes of `xi`.
    """
    xi = np.asarray(xi)
    X = np.einsum("...k,kab->...ab", xi.astype(complex), E)
    theta = np.sqrt(np.sum(xi.astype(complex) ** 2, axis=-1))
    half = theta / 2
    # sin(x)/x with the removable singularity handled explicitly
    small = np.abs(half) < 1e-8
    safe = np.where(small, 1.0, half)
    sinc = np.where(small, 1 - half**2 / 6, np.sin(safe) / safe)
    return np.cos(half)[..., None, None] * np.eye(2) + sinc[..., None, None] * X


def complex_rotation(g) -> np.ndarray:
    """3x3 matrix R_g with g E_k g^{-1} = sum_j R_jk E_j (batched)."""
    g = np.asarray(g, dtype=complex)
    ginv = _inv2(g)
    conj = np.einsum("...ab,kbc,...cd->...kad", g, E, ginv)
    # coefficient extraction: E_j are orthonormal for <X, Y> = -2 tr(XY)
    return -2 * np.einsum("jab,...kba->...jk", E, conj)


def covering_map(U, tol: float = 1e-10) -> np.ndarray:
    """Rotation matrix R_U in SO(3) of an SU(2) element U."""
    U = np.asarray(U, dtype=complex)
    err = np.abs(np.swapaxes(U.conj(), -1, -2) @ U - np.eye(2)).max()
    if err > tol:
        raise NotUnitary(f"||U^dagger U - I|| = {err:.3e}")
    return complex_rotation(U).real


def polar_decompose(g):
    """Left polar decomposition g = k p with k in SU(2), p = p^dagger > 0.

    Returns ``(k, s, axis)`` where p = exp(-i s axis.E); the eigenvalues of
    g^dagger g are e^{+s} and e^{-s}, so s is the hyperbolic distance of
    g.SU(2) from the base point.  For s = 0 the axis defaults to e3.
    """
    g = np.asarray(g, dtype=complex)
    gg = g.conj().T @ g
    evals, V = np.linalg.eigh(gg)
    if evals.min() <= 0 or np.abs(V.conj().T @ V - np.eye(2)).max() > 1e-10:
        raise Singular("g^dagger g is not positive definite")
    root = np.sqrt(evals)
    p = (V * root) @ V.conj().T
    pinv = (V / root) @ V.conj().T
    k = g @ pinv
    s = float(np.log(root.max() / root.min()))
    if s < 1e-14:
        return k, 0.0, np.array([0.0, 0.0, 1.0])
    sh = np.sinh(s / 2)
    traceless = p - np.cosh(s / 2) * np.eye(2)
    axis = (-1j * np.einsum("jab,ba->j", E, traceless) / sh).real
    return k, s, axis / np.linalg.norm(axis)


@functools.lru_cache(maxsize=None)
def _wigner_terms(twice_j: int):
    """Sparse expansion of D^j in monomials a^e1 c^e2 b^e3 d^e4."""
    n = twice_j
    if n < 0 or n > MAX_TWICE_J:
        raise ValueError(f"twice_j must lie in [0, {MAX_TWICE_J}], got {n}")
    d = n + 1
    lf = [math.lgamma(k + 1) for k in range(n + 1)]
    exps, rows, cols, vals = [], [], [], []
    t = 0
    for i in range(d):  # column: weight m with j - m = n - i, j + m = i
        am, bm = n - i, i
        for ip in range(d):  # row m'
            target = n - ip  # k1 + k2 = j - m'
            for k1 in range(max(0, target - bm), min(am, target) + 1):
                k2 = target - k1
                coef = math.comb(am, k1) * math.comb(bm, k2)
                norm = math.exp(0.5 * (lf[n - ip] + lf[ip] - lf[am] - lf[bm]))
                exps.append((k1, am - k1, k2, bm - k2))
                rows.append(t)
                cols.append(ip * d + i)
                vals.append(coef * norm)
                t += 1
    S = sp.csr_matrix((vals, (rows, cols)), shape=(t, d * d))
    return np.array(exps, dtype=np.intp), S


def wigner_d(twice_j: int, g, chunk: int = 4096) -> np.ndarray:
    """Wigner D-matrix D^j(g), holomorphic in the entries of g.

    `g` may carry leading batch axes; the result has shape
    ``batch + (2j+1, 2j+1)``.
    """
    g = np.asarray(g, dtype=complex)
    batch = g.shape[:-2]
    n = twice_j
    d = n + 1
    flat = g.reshape(-1, 2, 2)
    if n == 0:
        return np.ones(batch + (1, 1), dtype=complex)
    if n > POLY_TWICE_J:
        return _wigner_spectral(n, flat).reshape(batch + (d, d))
    exps, S = _wigner_terms(n)
    powers = np.arange(n + 1)
    out = np.empty((flat.shape[0], d * d), dtype=complex)
    for start in range(0, flat.shape[0], chunk):
        blk = flat[start : start + chunk]
        entries = (blk[:, 0, 0], blk[:, 1, 0], blk[:, 0, 1], blk[:, 1, 1])
        mono = np.ones((blk.shape[0], exps.shape[0]), dtype=complex)
        for q, z in enumerate(entries):
            table = z[:, None] ** powers[None, :]
            mono *= table[:, exps[:, q]]
        out[start : start + chunk] = (S.T @ mono.T).T
    return out.reshape(batch + (d, d))


@functools.lru_cache(maxsize=None)
def _e2_eigen(twice_j: int):
    lam, W = np.linalg.eigh(spin_matrices(twice_j, 1.0)[1])
    return lam, W


def _su2_euler(k):
    """Euler angles (alpha, beta, gamma) of SU(2) elements, batched."""
    a, b = k[:, 0, 0], k[:, 0, 1]
    beta = 2 * np.arctan2(np.abs(b), np.abs(a))
    plus = 2 * np.angle(a)
    minus = 2 * (np.angle(b) - np.pi / 2)
    return (plus + minus) / 2, beta, (plus - minus) / 2


def _wigner_spectral(twice_j: int, flat):
    """D^j through g = k1 diag(e^{s/2}, e^{-s/2}) k2 and Euler angles of k1, k2.

    Every factor is a unitary or diagonal matrix, so no cancellation occurs;
    used for large j where the monomial expansion loses digits.
    """
    m = -twice_j / 2 + np.arange(twice_j + 1)
    lam, W = _e2_eigen(twice_j)
    U, sv, Vh = np.linalg.svd(flat)
    du = np.linalg.det(U)
    dv = np.linalg.det(Vh)
    U = U / np.sqrt(du)[:, None, None]
    Vh = Vh / np.sqrt(dv)[:, None, None]
    # g = U diag(sv) Vh * sqrt(du dv), and sqrt(du) sqrt(dv) = +-1
    sign = np.sqrt(du) * np.sqrt(dv)
    U = U * np.where(sign.real < 0, -1.0, 1.0)[:, None, None]
    s = 2 * np.log(sv[:, 0])

    def rot(k):
        al, be, ga = _su2_euler(k)
        mid = np.einsum("ik,bk,jk->bij", W, np.exp(-1j * be[:, None] * lam[None, :]), W.conj())
        return np.exp(-1j * al[:, None] * m)[:, :, None] * mid * np.exp(-1j * ga[:, None] * m)[:, None, :]

    return rot(U) @ (np.exp(-s[:, None] * m)[:, :, None] * rot(Vh))


@functools.lru_cache(maxsize=None)
def _spin_matrices_cached(twice_j: int, hbar: float):
    j = twice_j / 2
    m = -j + np.arange(twice_j + 1)
    up = np.zeros((twice_j + 1, twice_j + 1))
    idx = np.arange(twice_j)
    up[idx + 1, idx] = np.sqrt(j * (j + 1) - m[idx] * (m[idx] + 1))
    s1 = (up + up.T) / 2
    s2 = (up - up.T) / 2j
    s3 = np.diag(m).astype(complex)
    out = np.array([s2, -s1, s3], dtype=complex) * hbar
    out.setflags(write=False)
    return out


def spin_matrices(twice_j: int, hbar: float = 1.0) -> np.ndarray:
    """Generators sigma_k = i hbar d/dt D^j(exp(t E_k)) at t = 0, shape (3, d, d)."""
    return _spin_matrices_cached(int(twice_j), float(hbar))


@dataclass(frozen=True)
class IrrepData:
    twice_l: int
    hbar: float = 1.0
    sigma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.twice_l < 0:
            raise ValueError("twice_l must be non-negative")
        object.__setattr__(self, "sigma", spin_matrices(self.twice_l, self.hbar))

    @property
    def dim(self) -> int:
        return self.twice_l + 1

    def weight_index(self, twice_m: int) -> int:
        """Basis position of the weight-m vector."""
        if abs(twice_m) > self.twice_l or (twice_m - self.twice_l) % 2:
            raise ValueError(f"no weight {twice_m}/2 in spin {self.twice_l}/2")
        return (twice_m + self.twice_l) // 2

    def __call__(self, g) -> np.ndarray:
        return wigner_d(self.twice_l, g)


def irrep(twice_l: int, hbar: float = 1.0) -> IrrepData:
    return IrrepData(abs(int(twice_l)), hbar)


@functools.lru_cache(maxsize=200_000)
def clebsch_gordan(twice_j1, twice_m1, twice_j2, twice_m2, twice_J, twice_M) -> float:
    """<j1 m1; j2 m2 | J M> in the Condon-Shortley convention (Racah formula)."""
    j1, m1, j2, m2, J, M = twice_j1, twice_m1, twice_j2, twice_m2, twice_J, twice_M
    if m1 + m2 != M:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return 0.0
    if (j1 + m1) % 2 or (j2 + m2) % 2 or (J + M) % 2:
        return 0.0
    if J < abs(j1 - j2) or J > j1 + j2 or (j1 + j2 + J) % 2:
        return 0.0

    def lf(twice):
        return math.lgamma(twice // 2 + 1)

    pre = 0.5 * (
        math.log(J + 1)
        + lf(J + j1 - j2) + lf(J - j1 + j2) + lf(j1 + j2 - J) - lf(j1 + j2 + J + 2)
        + lf(J + M) + lf(J - M) + lf(j1 - m1) + lf(j1 + m1) + lf(j2 - m2) + lf(j2 + m2)
    )
    total = 0.0
    # k runs over integers; all factorial arguments below are twice-integers / 2
    kmin = max(0, (j2 - J - m1) // 2, (j1 - J + m2) // 2)
    kmax = min((j1 + j2 - J) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    for k in range(kmin, kmax + 1):
        args = (
            2 * k,
            j1 + j2 - J - 2 * k,
            j1 - m1 - 2 * k,
            j2 + m2 - 2 * k,
            J - j2 + m1 + 2 * k,
            J - j1 - m2 + 2 * k,
        )
        if min(args) < 0:
            continue
        term = math.exp(pre - sum(lf(a) for a in args))
        total += -term if k % 2 else term
    return total


def su2_from_euler(alpha, beta, gamma) -> np.ndarray:
    """exp(alpha E3) exp(beta E2) exp(gamma E3), batched over broadcast shapes."""
    alpha, beta, gamma = np.broadcast_arrays(
        np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float)
    )
    zeros = np.zeros_like(alpha)
    A = exp_su2(np.stack([zeros, zeros, alpha], -1))
    B = exp_su2(np.stack([zeros, beta, zeros], -1))
    C = exp_su2(np.stack([zeros, zeros, gamma], -1))
    return A @ B @ C


def haar_quadrature(order: int):
    """Product Euler-angle rule for the normalized Haar measure on SU(2).

    Gauss-Legendre in cos(beta) with order+1 nodes and trapezoid rules in both
    E3 angles over the full 4 pi period with 2*order+2 nodes each, so Wigner-D
    entries with j <= order (and products with total degree <= order in cos beta)
    integrate exactly, half-integer j included.

    Returns ``(elements, weights)`` with shapes (N, 2, 2) and (N,).
    """
    if order < 2:
        raise ValueError("order must be >= 2")
    x, wx = np.polynomial.legendre.leggauss(order + 1)
    nt = 2 * order + 2
    ang = 4 * np.pi * np.arange(nt) / nt
    al, be, ga = np.meshgrid(ang, np.arccos(x), ang, indexing="ij")
    w = np.broadcast_to(wx[None, :, None], al.shape) / (2 * nt * nt)
    U = su2_from_euler(al.ravel(), be.ravel(), ga.ravel())
    return U, w.ravel().copy()
