"""Coherent states: heat-evolved delta sections and diagnostics built on them.

A point a of the complex sphere is represented by a lift g_a in SL(2, C)
with R_{g_a} (0, 0, r) = a.  The delta section at a has coefficients

    delta_{jm} = sqrt((2j+1) / (4 pi r^2)) D^j_{m,l}(g_a),

which are polynomial, hence holomorphic, in g_a.  Lifts differ by diagonal
matrices h, which rescale every coefficient by the same factor D^l_{ll}(h),
so all shipped diagnostics are moduli or ratios.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .classical import ComplexSpherePoint, ModelParams
from .groups import E, complex_rotation, exp_su2, wigner_d
from .quantum import (
    TwistedHilbert,
    angular_momentum_operators,
    annihilation_conjugation,
    heat_operator,
    position_operators,
)

__all__ = [
    "BranchCut",
    "TruncationWarning",
    "SectionPoint",
    "CoherentState",
    "lift_point",
    "holomorphic_lift",
    "polar_data",
    "delta_section",
    "coherent_state",
    "eigen_residual",
    "overlap",
    "expectations",
    "evaluate_section",
    "husimi_grid",
    "husimi_rows",
    "HUSIMI_HEADER",
]


class BranchCut(ValueError):
    pass


class TruncationWarning(UserWarning):
    def __init__(self, tail: float):
        super().__init__(f"top-shell mass fraction {tail:.3e} exceeds 1e-8")
        self.tail = tail


@dataclass(frozen=True)
class SectionPoint:
    a: np.ndarray
    g: np.ndarray

    @property
    def r(self) -> float:
        return float(np.sqrt(np.sum(self.a * self.a)).real)


@dataclass(frozen=True)
class CoherentState:
    vec: np.ndarray
    point: SectionPoint
    tau: float

    @property
    def a(self) -> np.ndarray:
        return self.point.a

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


def _as_a(a) -> np.ndarray:
    if isinstance(a, SectionPoint):
        return a.a
    if isinstance(a, ComplexSpherePoint):
        return a.a
    return np.asarray(a, dtype=complex)


def polar_data(a, r: float):
    """(s, u, v) with a = r (cosh s u + i sinh s v), u and v orthonormal."""
    a = _as_a(a)
    re, im = a.real, a.imag
    s = math.asinh(np.linalg.norm(im) / r)
    u = re / np.linalg.norm(re)
    v = im / np.linalg.norm(im) if s > 0 else np.zeros(3)
    return s, u, v


def lift_point(a, r: float, cut_tol: float = 1e-8) -> SectionPoint:
    """Deterministic lift: rotate the north pole to u, then boost toward v."""
    a = _as_a(a)
    s, u, v = polar_data(a, r)
    if u[2] < -1 + cut_tol:
        raise BranchCut("Re(a) points to the south pole")
    axis = np.cross([0.0, 0.0, 1.0], u)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        k = np.eye(2, dtype=complex)
    else:
        k = exp_su2(math.atan2(n, u[2]) * axis / n)
    if s > 0:
        Rk = complex_rotation(k).real
        w = Rk.T @ v
        boost = exp_su2(1j * s * np.cross([0.0, 0.0, 1.0], w))
        g = k @ boost
    else:
        g = k
    return SectionPoint(a, g)


def holomorphic_lift(a, r: float) -> SectionPoint:
    """Lift depending holomorphically on a, valid off the plane a3 = -r."""
    a = _as_a(a)
    c1, c2, c3 = a / r
    if abs(1 + c3) < 1e-12:
        raise BranchCut("a3 = -r")
    g = np.array([[(1 + c3) / 2, (1j * c1 - c2) / (1 + c3)], [(1j * c1 + c2) / 2, 1.0]])
    return SectionPoint(a, g)


def _shell_blocks(space: TwistedHilbert, g):
    """Yield (twice_j, slice, D^j(g)) for each shell."""
    for tj in space.twice_js:
        yield tj, space.shell_slice(tj), wigner_d(tj, g)


def delta_section(sp: SectionPoint, space: TwistedHilbert) -> np.ndarray:
    r, tl = space.params.r, space.twice_l
    out = np.zeros(space.dim, complex)
    for tj, sl, D in _shell_blocks(space, sp.g):
        out[sl] = math.sqrt((tj + 1) / (4 * math.pi * r * r)) * D[:, (tl + tj) // 2]
    return out


def coherent_state(a, space: TwistedHilbert, lift: str = "polar", warn: bool = True) -> CoherentState:
    """chi_a = H(tau) delta_a in the chosen lift ("polar" or "holomorphic")."""
    r, tau = space.params.r, space.params.tau
    if isinstance(a, SectionPoint):
        sp = a
    elif lift == "holomorphic":
        sp = holomorphic_lift(a, r)
    else:
        sp = lift_point(a, r)
    vec = heat_operator(space, tau).mat.diagonal() * delta_section(sp, space)
    if warn:
        top = space.shell_slice(space.twice_js[-1])
        tail = float(np.sum(np.abs(vec[top]) ** 2) / np.sum(np.abs(vec) ** 2))
        if tail > 1e-8:
            warnings.warn(TruncationWarning(tail), stacklevel=2)
    return CoherentState(vec, sp, tau)


def eigen_residual(cs: CoherentState, space: TwistedHilbert, A=None, dps: int | None = None) -> np.ndarray:
    """rho_k = ||A_k chi - a_k chi|| / ||chi||.

    With `dps` set, the whole computation is redone in mpmath at that many
    digits (see `monosphere.precise`); in double precision the residual
    cannot drop below roughly 1e-15.
    """
    if dps is not None:
        from .precise import eigen_residual_mp

        return eigen_residual_mp(cs.point.g, space, dps=dps)
    A = annihilation_conjugation(space) if A is None else A
    nv = np.linalg.norm(cs.vec)
    return np.array([np.linalg.norm(A[k] @ cs.vec - cs.a[k] * cs.vec) / nv for k in range(3)])


def overlap(a, b, space: TwistedHilbert) -> complex:
    ca = a if isinstance(a, CoherentState) else coherent_state(a, space)
    cb = b if isinstance(b, CoherentState) else coherent_state(b, space)
    return complex(np.vdot(ca.vec, cb.vec))


def expectations(cs: CoherentState, space: TwistedHilbert, X=None, J=None):
    """Rayleigh quotients <X> and <J> (real 3-vectors)."""
    X = position_operators(space) if X is None else X
    J = angular_momentum_operators(space) if J is None else J
    v = cs.vec
    nn = np.vdot(v, v).real
    ex = np.array([np.vdot(v, X[k] @ v).real for k in range(3)]) / nn
    ej = np.array([np.vdot(v, J[k] @ v).real for k in range(3)]) / nn
    return ex, ej


def evaluate_section(vec, space: TwistedHilbert, g) -> np.ndarray:
    """Scalar coefficient function f(g) = sum_jm c_jm sqrt((2j+1)/(4 pi r^2)) conj(D^j_{ml}(g)).

    For unitary g over the point x = r R_g e3 this is the value of the
    section at x in the frame fixed by g; `g` may be batched.
    """
    r, tl = space.params.r, space.twice_l
    vec = np.asarray(vec)
    g = np.asarray(g, dtype=complex)
    out = np.zeros(g.shape[:-2], complex)
    for tj, sl, D in _shell_blocks(space, g):
        col = D[..., :, (tl + tj) // 2].conj()
        out = out + math.sqrt((tj + 1) / (4 * math.pi * r * r)) * (col @ vec[sl])
    return out


HUSIMI_HEADER = ["s", "theta", "phi", "value"]


def _grid_point(s, th, ph, beta, r):
    u = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    e_th = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)])
    e_ph = np.array([-math.sin(ph), math.cos(ph), 0.0])
    v = math.cos(beta) * e_th + math.sin(beta) * e_ph
    return r * (math.cosh(s) * u + 1j * math.sinh(s) * v)


def _rotated_state(a, space):
    """Coherent state for a point on the branch cut, via a pi rotation about e1."""
    U = exp_su2(np.array([math.pi, 0.0, 0.0]))
    R = complex_rotation(U).real
    cs = coherent_state(R.T @ a, space, warn=False)
    vec = np.zeros(space.dim, complex)
    for tj, sl, D in _shell_blocks(space, U):
        vec[sl] = D @ cs.vec[sl]
    return vec


def husimi_grid(psi, space: TwistedHilbert, s_values, n_theta: int, n_phi: int, beta: float = 0.0):
    """|<chi_a, psi>|^2 / ||chi_a||^2 on an (s, theta, phi) grid.

    theta runs over cell midpoints of (0, pi) and phi over [0, 2 pi); the
    imaginary direction is cos(beta) e_theta + sin(beta) e_phi.
    Returns ``(S, TH, PH, values)`` arrays of shape (len(s), n_theta, n_phi).
    """
    r = space.params.r
    psi = np.asarray(psi)
    thetas = (np.arange(n_theta) + 0.5) * math.pi / n_theta
    phis = np.arange(n_phi) * 2 * math.pi / n_phi
    S, TH, PH = np.meshgrid(np.asarray(s_values, float), thetas, phis, indexing="ij")
    vals = np.empty(S.shape)
    for idx in np.ndindex(S.shape):
        a = _grid_point(S[idx], TH[idx], PH[idx], beta, r)
        try:
            chi = coherent_state(a, space, warn=False).vec
        except BranchCut:
            chi = _rotated_state(a, space)
        vals[idx] = abs(np.vdot(chi, psi)) ** 2 / np.vdot(chi, chi).real
    return S, TH, PH, vals


def husimi_rows(S, TH, PH, vals) -> np.ndarray:
    return np.column_stack([S.ravel(), TH.ravel(), PH.ravel(), vals.ravel()])
