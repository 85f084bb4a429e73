"""Magnetic phase space TS^2: parameters, brackets, flow and the complex sphere.

Points of TS^2 are ambient pairs (x, p) with x.x = r^2 and x.p = 0, p the
kinetic momentum.  The magnetic field is B times the area form, and all
brackets come from omega^B = omega - pi^*(B).  Only `params_from_twist`
touches hbar; everything else in this module is hbar-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "InvalidParams",
    "ChartSingularity",
    "StepTooLarge",
    "NoConvergence",
    "DegenerateStart",
    "ModelParams",
    "PhasePoint",
    "ComplexSpherePoint",
    "params_from_twist",
    "angular_momentum",
    "energy",
    "poisson_bracket",
    "flow",
    "Trajectory",
    "trajectory_rows",
    "complexifier_map",
    "complexifier_map_expm",
    "complexifier_coefficients",
    "complexifier_inverse",
    "random_phase_points",
    "TRAJECTORY_HEADER",
]


class InvalidParams(ValueError):
    pass


class ChartSingularity(ValueError):
    pass


class StepTooLarge(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, msg, residual=float("nan")):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


class DegenerateStart(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical constants.  `twice_l` is the signed twist 2l."""

    r: float
    m: float
    alpha: float
    hbar: float
    twice_l: int = 0
    B: float = 0.0
    tau: float = 0.0

    @property
    def l(self) -> float:
        return self.twice_l / 2

    @property
    def flux(self) -> float:
        """-(4 pi r^2 B) / (2 pi hbar), the quantized sphere flux 2l."""
        return -(2 * self.r * self.r * self.B) / self.hbar

    @property
    def flux_integer(self) -> int:
        return int(round(self.flux))

    @property
    def m_alpha(self) -> float:
        return self.m * self.alpha


def params_from_twist(twice_l: int, r: float, m: float, alpha: float, hbar: float) -> ModelParams:
    """Build parameters with B = -hbar l / r^2 and tau = hbar / (m alpha r^2).

    This B makes the sphere's magnetic flux 2 pi hbar (2l) and J.x = -r^3 B
    equal to the quantum value r hbar l.
    """
    for name, v in (("r", r), ("m", m), ("alpha", alpha), ("hbar", hbar)):
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise InvalidParams(f"{name} must be a positive finite number, got {v!r}")
    if int(twice_l) != twice_l:
        raise InvalidParams(f"twice_l must be an integer, got {twice_l!r}")
    twice_l = int(twice_l)
    r, m, alpha, hbar = float(r), float(m), float(alpha), float(hbar)
    B = -(hbar * twice_l) / (2 * r * r) + 0.0  # no signed zero at l = 0
    tau = hbar / (m * alpha * r * r)
    return ModelParams(r=r, m=m, alpha=alpha, hbar=hbar, twice_l=twice_l, B=B, tau=tau)


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    def validate(self, r: float) -> "PhasePoint":
        if abs(self.x @ self.x - r * r) > 1e-10 * r * r:
            raise ValueError("x is off the sphere")
        if abs(self.x @ self.p) > 1e-10 * r * max(np.linalg.norm(self.p), 1e-300):
            raise ValueError("p is not tangent")
        return self


@dataclass(frozen=True)
class ComplexSpherePoint:
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=complex))

    def validate(self, r: float) -> "ComplexSpherePoint":
        if abs(np.sum(self.a * self.a) - r * r) > 1e-10 * r * r:
            raise ValueError("a is off the complex quadric")
        return self


def _xp(pt):
    """Accept a PhasePoint or an (x, p) pair of (possibly batched) arrays."""
    if isinstance(pt, PhasePoint):
        return pt.x, pt.p
    x, p = pt
    return np.asarray(x, dtype=float), np.asarray(p, dtype=float)


def angular_momentum(pt, params: ModelParams) -> np.ndarray:
    """J = x cross p - r B x (batched over leading axes)."""
    x, p = _xp(pt)
    return np.cross(x, p) - params.r * params.B * x


def energy(p, params: ModelParams) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.sum(p * p, axis=-1) / (2 * params.m)


# --------------------------------------------------------------------------
# Poisson brackets through spherical charts


def _chart_frame(axis: int) -> np.ndarray:
    """Columns f1, f2, f3 of the chart frame; f3 is the polar axis."""
    return np.roll(np.eye(3), 2 - axis, axis=1) if axis != 2 else np.eye(3)


def _chart_to_ambient(q, frame, r):
    th, ph, u, v = q
    f1, f2, f3 = frame.T
    n = np.sin(th) * (np.cos(ph) * f1 + np.sin(ph) * f2) + np.cos(th) * f3
    e_th = np.cos(th) * (np.cos(ph) * f1 + np.sin(ph) * f2) - np.sin(th) * f3
    e_ph = -np.sin(ph) * f1 + np.cos(ph) * f2
    return r * n, u * e_th + v * e_ph, n, e_th, e_ph


def _ambient_to_chart(x, p, frame, r):
    f1, f2, f3 = frame.T
    th = math.acos(max(-1.0, min(1.0, (x @ f3) / r)))
    ph = math.atan2(x @ f2, x @ f1)
    _, _, _, e_th, e_ph = _chart_to_ambient((th, ph, 0.0, 0.0), frame, r)
    return np.array([th, ph, p @ e_th, p @ e_ph])


def _omega_b(q, frame, params):
    """4x4 matrix of omega^B in the chart at q."""
    r, B = params.r, params.B
    th, ph, u, v = q
    _, _, n, e_th, e_ph = _chart_to_ambient(q, frame, r)
    zero = np.zeros(3)
    dx = [r * e_th, r * np.sin(th) * e_ph, zero, zero]
    dp = [
        -u * n,
        u * np.cos(th) * e_ph - v * (np.sin(th) * n + np.cos(th) * e_th),
        e_th,
        e_ph,
    ]
    W = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            W[a, b] = dx[a] @ dp[b] - dp[a] @ dx[b] - B * n @ np.cross(dx[a], dx[b])
    return W


def poisson_bracket(f, g, pt, params: ModelParams, chart: int | None = None, rel_step=1e-5):
    """{f, g} at (x, p) for the magnetic symplectic form.

    `f` and `g` are callables ``f(x, p)`` on ambient coordinates (complex
    values allowed).  The chart is the spherical chart whose polar axis is
    e3 (``chart=2``) or e1 (``chart=0``); by default the one with pt farther
    from its poles.  Gradients are central differences.
    """
    x, p = _xp(pt)
    r = params.r
    if chart is None:
        chart = 2 if abs(x[2]) <= abs(x[0]) else 0
    frame = _chart_frame(chart)
    q0 = _ambient_to_chart(x, p, frame, r)
    if min(q0[0], math.pi - q0[0]) < 1e-6:
        raise ChartSingularity(f"point within 1e-6 rad of the pole of chart {chart}")
    pscale = max(np.linalg.norm(p), r * abs(params.B))
    if pscale == 0.0:
        pscale = 1.0
    steps = rel_step * np.array([1.0, 1.0, pscale, pscale])

    def grad(fun):
        out = []
        for i in range(4):
            dq = np.zeros(4)
            dq[i] = steps[i]
            xp_, pp_ = _chart_to_ambient(q0 + dq, frame, r)[:2]
            xm_, pm_ = _chart_to_ambient(q0 - dq, frame, r)[:2]
            out.append((fun(xp_, pp_) - fun(xm_, pm_)) / (2 * steps[i]))
        return np.array(out)

    W = _omega_b(q0, frame, params)
    return -grad(f) @ np.linalg.solve(W, grad(g))


# --------------------------------------------------------------------------
# Magnetic geodesic flow


def _vector_field(x, p, params):
    m, r, B = params.m, params.r, params.B
    dx = p / m
    dp = (B / (m * r)) * np.cross(p, x) - (p @ p) / (m * r * r) * x
    return dx, dp


def _project(x, p, r):
    x = x * (r / np.linalg.norm(x))
    p = p - (p @ x) / (r * r) * x
    return x, p


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    X: np.ndarray
    P: np.ndarray

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for t, x, p in zip(self.t, self.X, self.P):
            yield float(t), PhasePoint(x, p)


def flow(pt0, t_max: float, dt: float, params: ModelParams, drift_limit=1e-3) -> "Trajectory":
    """RK4 integration of the magnetic geodesic flow with constraint projection."""
    if not (dt > 0 and t_max >= dt):
        raise ValueError("need dt > 0 and t_max >= dt")
    n = int(round(t_max / dt))
    x, p = _project(*_xp(pt0), params.r)
    X = np.empty((n + 1, 3))
    P = np.empty((n + 1, 3))
    X[0], P[0] = x, p
    for i in range(n):
        k1 = _vector_field(x, p, params)
        k2 = _vector_field(x + dt / 2 * k1[0], p + dt / 2 * k1[1], params)
        k3 = _vector_field(x + dt / 2 * k2[0], p + dt / 2 * k2[1], params)
        k4 = _vector_field(x + dt * k3[0], p + dt * k3[1], params)
        xn = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        pn = p + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        xn, pn = _project(xn, pn, params.r)
        e0, e1 = p @ p, pn @ pn
        if e0 > 0 and abs(e1 - e0) > drift_limit * e0:
            raise StepTooLarge(f"step {i}: relative energy drift {abs(e1 - e0) / e0:.3e}")
        x, p = xn, pn
        X[i + 1], P[i + 1] = x, p
    return Trajectory(dt * np.arange(n + 1), X, P)


TRAJECTORY_HEADER = ["t", "x1", "x2", "x3", "p1", "p2", "p3", "J1", "J2", "J3", "H"]


def trajectory_rows(traj: Trajectory, params) -> np.ndarray:
    J = angular_momentum((traj.X, traj.P), params)
    H = energy(traj.P, params)
    return np.column_stack([traj.t, traj.X, traj.P, J, H])


# --------------------------------------------------------------------------
# Complexifier map onto the complex sphere


def _shc(L):
    """sinh(L)/L and (cosh(L) - 1)/L^2 with the L -> 0 limits."""
    L = np.asarray(L, dtype=float)
    small = L < 1e-4
    Ls = np.where(small, 1.0, L)
    L2 = L * L
    sinhc = np.where(small, 1 + L2 / 6 + L2 * L2 / 120, np.sinh(Ls) / Ls)
    coshc = np.where(small, 0.5 + L2 / 24 + L2 * L2 / 720, (np.cosh(Ls) - 1) / (Ls * Ls))
    return sinhc, coshc


def complexifier_coefficients(L):
    """Coefficients of x, p/(m alpha) and B J/(m^2 alpha^2 r) in a(x, p)."""
    sinhc, coshc = _shc(L)
    return np.cosh(L), 1j * sinhc, coshc


def complexifier_map(pt, params: ModelParams) -> np.ndarray:
    """a(x, p) = cosh L x + i sinh L/L p/(m alpha) + (cosh L - 1)/L^2 B J/(m^2 alpha^2 r).

    The sign of the J term is the one produced by exponentiating the
    cross-product-with-J matrix on (x, p, J); it is the sign for which
    a.a = r^2 (at p = 0 it reduces a to x).  Batched over leading axes.
    """
    x, p = _xp(pt)
    ma, r, B = params.m_alpha, params.r, params.B
    J = angular_momentum((x, p), params)
    L = np.sqrt(np.sum(p * p, axis=-1) + (r * B) ** 2) / (ma * r)
    cx, cp, cj = complexifier_coefficients(L)
    return (
        cx[..., None] * x
        + cp[..., None] * p / ma
        + (cj * B / (ma * ma * r))[..., None] * J
    )


def complexifier_map_expm(pt, params: ModelParams) -> np.ndarray:
    """Same map via expm of (i / (m alpha r^2)) times the cross-with-J matrix."""
    x, p = _xp(pt)
    r, B = params.r, params.B
    J = angular_momentum((x, p), params)
    M = np.array([[0.0, -(J @ J) / r**2, 0.0], [r**2, 0.0, 0.0], [0.0, -r * B, 0.0]])
    col = expm(1j / (params.m_alpha * r * r) * M)[:, 0]
    return col[0] * x + col[1] * p + col[2] * J


def _tangent_basis(x):
    n = x / np.linalg.norm(x)
    helper = np.eye(3)[np.argmin(np.abs(n))]
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def complexifier_inverse(a, params: ModelParams, tol=1e-13, max_iter=50) -> PhasePoint:
    """Solve a(x, p) = a for (x, p) in TS^2 by damped Gauss-Newton.

    The initial guess inverts the B = 0 map exactly:
    Re a = cosh L x, Im a = sinh L / L p / (m alpha).
    """
    if isinstance(a, ComplexSpherePoint):
        a = a.a
    a = np.asarray(a, dtype=complex)
    r, ma = params.r, params.m_alpha
    re, im = a.real, a.imag
    nre = np.linalg.norm(re)
    if nre < 1e-12 * r:
        raise DegenerateStart("Re(a) = 0")
    L0 = math.acosh(max(1.0, nre / r))
    x = r * re / nre
    p = im * ma * (L0 / math.sinh(L0) if L0 > 1e-12 else 1.0)
    x, p = _project(x, p, r)

    def resid(x_, p_):
        d = complexifier_map((x_, p_), params) - a
        return np.concatenate([d.real, d.imag])

    def move(x_, p_, dq):
        t1, t2 = _tangent_basis(x_)
        xn = x_ + dq[0] * t1 + dq[1] * t2
        pn = p_ + dq[2] * t1 + dq[3] * t2
        return _project(xn, pn, r)

    F = resid(x, p)
    pscale = max(np.linalg.norm(p), ma * r)
    for _ in range(max_iter):
        if np.linalg.norm(F) <= tol * r:
            return PhasePoint(x, p)
        h = np.array([1e-7 * r, 1e-7 * r, 1e-7 * pscale, 1e-7 * pscale])
        Jac = np.empty((6, 4))
        for i in range(4):
            dq = np.zeros(4)
            dq[i] = h[i]
            Jac[:, i] = (resid(*move(x, p, dq)) - resid(*move(x, p, -dq))) / (2 * h[i])
        step = np.linalg.lstsq(Jac, -F, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            xn, pn = move(x, p, lam * step)
            Fn = resid(xn, pn)
            if np.linalg.norm(Fn) < np.linalg.norm(F):
                break
            lam /= 2
        else:
            break
        x, p, F = xn, pn, Fn
    if np.linalg.norm(F) <= 1e3 * tol * r:
        return PhasePoint(x, p)
    raise NoConvergence("complexifier_inverse did not converge", float(np.linalg.norm(F)))


def random_phase_points(n: int, params: ModelParams, rng, p_max: float = 2.0):
    """Uniform points of S^2 with tangent momenta |p| <= p_max m alpha r."""
    x = rng.normal(size=(n, 3))
    x *= params.r / np.linalg.norm(x, axis=1, keepdims=True)
    v = rng.normal(size=(n, 3))
    v -= np.sum(v * x, axis=1, keepdims=True) * x / params.r**2
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    mag = p_max * params.m_alpha * params.r * rng.uniform(size=(n, 1))
    return x, v * mag
