"""Segal-Bargmann transform onto the complex sphere and its isometry.

Conventions
-----------
Every g in SL(2, C) is k exp(i s n.E) with k in SU(2) and n a unit vector;
s >= 0 is the hyperbolic distance, so g^dagger g has eigenvalues e^{+-s}.
The group density is

    nu_tau(g) = N (s / sinh s) exp(-s^2 / tau),   N = 4 e^{-tau/4} / (tau sqrt(pi tau)),

the heat kernel of hyperbolic 3-space at time tau/4, normalized so that the
j = 0 sector is isometric.  Points of the complex sphere are parameterized
as z = r R_k (cosh s e3 + i sinh s e1), i.e. g = k exp(i s E2), and the
invariant measure is

    dz = 2 pi r^2 sinh(s) cosh(s) ds dk      (dk the Haar probability measure).

The twisted density integrates nu over D_C = {diag(e^{(x+i theta)/2}, e^{-(x+i theta)/2})}
with measure dx dtheta / (4 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .groups import complex_rotation, exp_su2, haar_quadrature, spin_matrices, wigner_d
from .quantum import TwistedHilbert, heat_operator
from .states import lift_point

__all__ = [
    "QuadratureNotConverged",
    "ChartDegeneracy",
    "HoloSection",
    "RadialDensity",
    "sbt_transform",
    "sbt_inverse",
    "nu_group",
    "nu_profile_pde",
    "sector_isometry",
    "nu_twisted",
    "twisted_weight",
    "radial_profile",
    "chart_density",
    "measure_density_numeric",
    "measure_quadrature",
    "isometry_check",
    "DZ_CONSTANT",
]

DZ_CONSTANT = 2 * math.pi  # times r^2


class QuadratureNotConverged(RuntimeError):
    def __init__(self, msg, estimate=float("nan")):
        super().__init__(f"{msg} (error estimate {estimate:.3e})")
        self.estimate = estimate


class ChartDegeneracy(ValueError):
    pass


def _boost_e2(s):
    """exp(i s E2), batched over s."""
    s = np.asarray(s, float)
    xi = np.zeros(s.shape + (3,), complex)
    xi[..., 1] = 1j * s
    return exp_su2(xi)


# --------------------------------------------------------------------------
# The transform


@dataclass(frozen=True)
class HoloSection:
    """Heat-damped coefficients and their holomorphic evaluator."""

    coeffs: np.ndarray
    space: TwistedHilbert

    def scalar(self, g) -> np.ndarray:
        """f(g) = sum c_jm sqrt((2j+1)/(4 pi r^2)) D^j_{l,m}(g^{-1}), batched over g."""
        sp = self.space
        r, tl = sp.params.r, sp.twice_l
        g = np.asarray(g, dtype=complex)
        ginv = np.empty_like(g)
        ginv[..., 0, 0], ginv[..., 1, 1] = g[..., 1, 1], g[..., 0, 0]
        ginv[..., 0, 1], ginv[..., 1, 0] = -g[..., 0, 1], -g[..., 1, 0]
        out = np.zeros(g.shape[:-2], complex)
        for tj in sp.twice_js:
            row = wigner_d(tj, ginv)[..., (tl + tj) // 2, :]
            out = out + math.sqrt((tj + 1) / (4 * math.pi * r * r)) * (row @ self.coeffs[sp.shell_slice(tj)])
        return out

    def __call__(self, a) -> np.ndarray:
        """Psi(a) = f(g) Pi(g) e_l in V_|l|, independent of the lift g of a."""
        sp = self.space
        g = lift_point(a, sp.params.r).g
        tl = sp.twice_l
        col = wigner_d(abs(tl), g)[:, (tl + abs(tl)) // 2]
        return self.scalar(g) * col

    def equivariance_residual(self, a) -> float:
        """|(sigma.a) Psi - r hbar l Psi| / |Psi|."""
        sp = self.space
        a = np.asarray(a, dtype=complex)
        psi = self(a)
        sig = spin_matrices(abs(sp.twice_l), sp.params.hbar)
        lhs = np.einsum("k,kab,b->a", a, sig, psi)
        rhs = sp.params.r * sp.params.hbar * sp.params.l * psi
        return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(psi), 1e-300))


def sbt_transform(psi, space: TwistedHilbert) -> HoloSection:
    return HoloSection(heat_operator(space, space.params.tau).mat.diagonal() * np.asarray(psi), space)


def sbt_inverse(holo: HoloSection, order: int | None = None) -> np.ndarray:
    """Recover psi from samples of the transform on SU(2) (the real sphere).

    Projects f on the Peter-Weyl basis with an exact Haar quadrature, then
    undoes the heat damping.
    """
    sp = holo.space
    r, tl = sp.params.r, sp.twice_l
    order = order or max(2, 2 * sp.twice_j_max)
    U, w = haar_quadrature(order)
    f = holo.scalar(U)
    Uinv = np.swapaxes(U.conj(), -1, -2)
    c = np.zeros(sp.dim, complex)
    for tj in sp.twice_js:
        row = wigner_d(tj, Uinv)[:, (tl + tj) // 2, :]
        # basis functions sqrt((2j+1)/(4 pi r^2)) D_{lm}(U^{-1}) have norm^2 1/(4 pi r^2) under dk
        c[sp.shell_slice(tj)] = (4 * math.pi * r * r) * math.sqrt((tj + 1) / (4 * math.pi * r * r)) * (
            np.einsum("n,nm,n->m", w, row.conj(), f)
        )
    return heat_operator(sp, -sp.params.tau).mat.diagonal() * c


# --------------------------------------------------------------------------
# Group density


def _log_s_over_sinh(s):
    s = np.asarray(s, float)
    small = s < 1e-4
    ss = np.where(small, 1.0, s)
    big = np.log(ss) - ss - np.log1p(-np.exp(-2 * ss)) + math.log(2)
    return np.where(small, -s * s / 6, big)


@dataclass(frozen=True)
class RadialDensity:
    tau: float
    norm: float = field(default=0.0)

    def log_profile(self, s):
        return math.log(self.norm) + _log_s_over_sinh(s) - np.asarray(s, float) ** 2 / self.tau

    def __call__(self, s):
        return np.exp(self.log_profile(s))

    def s_max(self, twice_j: int = 0, digits: float = 40.0) -> float:
        """Radius beyond which the sector-j integrand is below e^{-digits} of its peak."""
        j = twice_j / 2
        return self.tau * (j + 1) + 2 * math.sqrt(digits * self.tau) + 1.0


def _gl(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return (b - a) / 2 * x + (a + b) / 2, (b - a) / 2 * w


def _sector_integral(nu: RadialDensity, twice_j: int, n: int, s_max: float) -> float:
    j = twice_j / 2
    s, w = _gl(0.0, s_max, n)
    a = twice_j + 1
    # log of sinh(a s) sinh(s) nu(s) e^{-tau j(j+1)} / (2j+1)
    log_sh = a * s - math.log(2) + np.log1p(-np.exp(-2 * a * s))
    log_s1 = s - math.log(2) + np.log1p(-np.exp(-2 * s))
    lg = log_sh + log_s1 + nu.log_profile(s) - nu.tau * j * (j + 1) - math.log(a)
    return float(np.sum(w * np.exp(lg)))


def sector_isometry(twice_j: int, tau: float, nu: RadialDensity | None = None, tol: float = 1e-8) -> float:
    """R_j for l = 0: the ratio ||Psi_j||_nu^2 / ||psi_j||^2 in the shell j.

    The SU(2) x SU(2) average of |D^j|^2 collapses by Schur orthogonality to
    the character, leaving a radial integral over the hyperbolic distance.
    """
    nu = nu_group(tau) if nu is None else nu
    s_max = nu.s_max(twice_j)
    n = 64
    prev = _sector_integral(nu, twice_j, n, s_max)
    while True:
        n *= 2
        cur = _sector_integral(nu, twice_j, n, s_max)
        err = abs(cur - prev) / abs(cur)
        if err <= tol * 1e-3 or n >= 4096:
            break
        prev = cur
    if err > tol:
        raise QuadratureNotConverged("sector integral", err)
    return cur


def nu_group(tau: float, normalize: str = "numeric") -> RadialDensity:
    """nu_tau with its constant fixed by R_0 = 1.

    normalize="numeric" solves R_0 = 1 by quadrature; "analytic" uses
    N = 4 e^{-tau/4} / (tau sqrt(pi tau)).  Both agree to ~1e-15.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    analytic = 4 * math.exp(-tau / 4) / (tau * math.sqrt(math.pi * tau))
    nu = RadialDensity(tau, analytic)
    if normalize == "analytic":
        return nu
    r0 = sector_isometry(0, tau, nu)
    return RadialDensity(tau, analytic / r0)


def nu_profile_pde(tau: float, s, length: float = 40.0, n: int = 32768, t0_frac: float = 1e-3):
    """Radial heat kernel on hyperbolic 3-space at time tau/4, by a sine series.

    With v = sinh(s) u the radial heat equation u_t = u_ss + 2 coth(s) u_s
    becomes v_t = v_ss - v, v(0) = 0.  Starting from the near-delta datum
    v = s exp(-s^2 / (4 t0)) at t0 = t0_frac tau / 4, each sine mode decays
    independently.  Returns the profile at `s` normalized to 1 at s = 0.
    """
    from scipy.fft import dst, idst

    T = tau / 4
    t0 = t0_frac * T
    h = length / (n + 1)
    grid = h * np.arange(1, n + 1)
    v0 = grid * np.exp(-(grid**2) / (4 * t0))
    coef = dst(v0, type=1)
    k = np.arange(1, n + 1)
    coef *= np.exp(-((k * math.pi / length) ** 2 + 1) * (T - t0))
    v = idst(coef, type=1)
    s = np.asarray(s, float)
    u = np.interp(s, grid, v / np.sinh(grid))
    # u is even in s: extrapolate u(0) from the first two nodes, u ~ u0 + c s^2
    u1, u2 = v[0] / np.sinh(grid[0]), v[1] / np.sinh(grid[1])
    u0 = (4 * u1 - u2) / 3
    return u / u0


# --------------------------------------------------------------------------
# Twisted density


def _sigma_window(M00, M11, tau, twice_l, digits=40.0):
    center = 0.5 * math.log(M11 / M00)
    half = abs(twice_l) / 2 * tau + 2 * math.sqrt(digits * tau) + 1.0
    return center - half, center + half


def twisted_weight(tau: float, twice_l: int, s, nu: RadialDensity | None = None, n_sigma: int = 400):
    """W_m(s) = int e^{2 m x} nu(g_s diag(e^{x/2}, e^{-x/2})) dx for every weight m of V_|l|.

    g_s = exp(i s E2); cosh s' = cosh s cosh x.  Returns shape (len(s), 2|l|+1).
    """
    nu = nu_group(tau) if nu is None else nu
    s = np.atleast_1d(np.asarray(s, float))
    tl = abs(twice_l)
    m = -tl / 2 + np.arange(tl + 1)
    lo, hi = _sigma_window(1.0, 1.0, tau, tl)
    x, w = _gl(lo, hi, n_sigma)
    sp = np.arccosh(np.cosh(s)[:, None] * np.cosh(x)[None, :])
    vals = np.exp(nu.log_profile(sp)[:, :, None] + 2 * m[None, None, :] * x[None, :, None])
    return np.einsum("x,sxm->sm", w, vals)


def nu_twisted(tau: float, twice_l: int, z=None, g=None, nu: RadialDensity | None = None,
               n_sigma: int = 400, n_theta: int = 8) -> np.ndarray:
    """The operator-valued density at z, integrated literally over D_C.

    nu^l(z) = int Pi_l(((g h)^{-1})^* (g h)^{-1}) nu(g h) dh with h running over
    a Gauss-Legendre grid in x and a 4 pi trapezoid in theta.  `g` is any lift
    of z (default: the polar lift).
    """
    nu = nu_group(tau) if nu is None else nu
    if g is None:
        g = lift_point(z, 1.0 if z is None else float(np.sqrt(np.sum(np.asarray(z) ** 2)).real)).g
    g = np.asarray(g, complex)
    M = g.conj().T @ g
    lo, hi = _sigma_window(M[0, 0].real, M[1, 1].real, tau, twice_l)
    x, wx = _gl(lo, hi, n_sigma)
    th = 4 * math.pi * np.arange(n_theta) / n_theta
    X, TH = np.meshgrid(x, th, indexing="ij")
    W = np.broadcast_to(wx[:, None], X.shape) / n_theta
    h = np.zeros(X.shape + (2, 2), complex)
    h[..., 0, 0] = np.exp((X + 1j * TH) / 2)
    h[..., 1, 1] = np.exp(-(X + 1j * TH) / 2)
    gh = g @ h
    inv = np.empty_like(gh)
    inv[..., 0, 0], inv[..., 1, 1] = gh[..., 1, 1], gh[..., 0, 0]
    inv[..., 0, 1], inv[..., 1, 0] = -gh[..., 0, 1], -gh[..., 1, 0]
    P = np.swapaxes(inv.conj(), -1, -2) @ inv
    ch = 0.5 * np.trace(np.swapaxes(gh.conj(), -1, -2) @ gh, axis1=-2, axis2=-1).real
    dens = nu(np.arccosh(np.maximum(ch, 1.0)))
    D = wigner_d(abs(twice_l), P)
    out = np.einsum("xt,xt,xtab->ab", W, dens, D)
    return (out + out.conj().T) / 2


# --------------------------------------------------------------------------
# Invariant measure on the complex sphere


def radial_profile(s):
    """sigma(s) = sinh(s) cosh(s)."""
    s = np.asarray(s, float)
    return np.sinh(s) * np.cosh(s)


def _z_of(k_angles, s, r):
    al, be, ga = k_angles
    from .groups import su2_from_euler

    g = su2_from_euler(al, be, ga) @ _boost_e2(s)
    return r * complex_rotation(g)[..., :, 2]


def chart_density(z, chart: int = 2) -> float:
    """|Omega|^2 density against Lebesgue measure in the two other coordinates.

    Omega = dz_i ^ dz_j / z_chart (cyclic i, j); the three charts define the
    same form on the quadric.
    """
    z = np.asarray(z, complex)
    if abs(z[chart]) < 1e-10:
        raise ChartDegeneracy(f"|z_{chart + 1}| < 1e-10")
    return 1.0 / abs(z[chart]) ** 2


def measure_density_numeric(k_angles, s, r: float, chart: int = 2, h: float = 1e-3) -> float:
    """Density of |Omega|^2 in (alpha, beta, gamma, s), by a numerical Jacobian.

    Dividing by sin(beta) (the Haar density of Euler angles) leaves the
    radial profile times a constant, which the tests compare with sinh cosh.
    """
    i, j = [c for c in range(3) if c != chart]
    q0 = np.array([*k_angles, s], float)

    def coords(q):
        z = _z_of(q[:3], q[3], r)
        return np.array([z[i].real, z[i].imag, z[j].real, z[j].imag])

    Jm = np.empty((4, 4))
    for c in range(4):
        dq = np.zeros(4)
        dq[c] = h
        # fourth-order central difference
        Jm[:, c] = (8 * (coords(q0 + dq) - coords(q0 - dq)) - (coords(q0 + 2 * dq) - coords(q0 - 2 * dq))) / (12 * h)
    z0 = _z_of(q0[:3], q0[3], r)
    return abs(np.linalg.det(Jm)) * chart_density(z0, chart)


def measure_quadrature(r: float, k_order: int, s_nodes: int, s_max: float):
    """Nodes z (N, 3) and weights for dz on the region s <= s_max."""
    U, wk = haar_quadrature(k_order)
    s, ws = _gl(0.0, s_max, s_nodes)
    B = _boost_e2(s)
    Rk = complex_rotation(U)
    col = r * complex_rotation(B)[:, :, 2]  # (S, 3)
    z = np.einsum("kab,sb->ksa", Rk, col).reshape(-1, 3)
    w = (wk[:, None] * (DZ_CONSTANT * r * r * ws * radial_profile(s))[None, :]).ravel()
    return z, w


# --------------------------------------------------------------------------
# Full isometry


def isometry_check(psi, space: TwistedHilbert, k_order: int | None = None, s_nodes: int = 48,
                   n_sigma: int = 400, tol: float = 1e-8, max_nodes: int = 768) -> dict:
    """||psi||^2 vs the nu^l-weighted integral of |Psi|^2 over the complex sphere.

    The integrand <Psi, nu^l Psi> reduces to |f(g)|^2 W_l(s) with g = k exp(i s E2),
    because Pi(g)^{-1} nu^l(z) Pi(g)^{-1 *} is diagonal in the lift g.  The
    k-integral uses a Haar rule of order twice_j_max, exact for |f|^2; s uses
    Gauss-Legendre on [0, s_max], doubled until two successive totals agree to
    `tol` (QuadratureNotConverged past `max_nodes`).
    """
    sp = space
    tau, r, tl = sp.params.tau, sp.params.r, sp.twice_l
    psi = np.asarray(psi, complex)
    nu = nu_group(tau)
    jm = sp.j_max
    s_max = tau * (jm + 1 + abs(tl) / 2) + 2 * math.sqrt(40 * tau) + 1.0
    k_order = k_order or max(2, sp.twice_j_max)
    U, wk = haar_quadrature(k_order)
    Uinv = np.swapaxes(U.conj(), -1, -2)
    coeffs = heat_operator(sp, tau).mat.diagonal() * psi
    # v_j(k) = D^j(k^{-1}) c_j, stacked over shells
    V = np.zeros((len(U), sp.dim), complex)
    for tj in sp.twice_js:
        sl = sp.shell_slice(tj)
        V[:, sl] = math.sqrt((tj + 1) / (4 * math.pi * r * r)) * (wigner_d(tj, Uinv) @ coeffs[sl])

    def integral(n_s):
        s, ws = _gl(0.0, s_max, n_s)
        Binv = _boost_e2(-s)
        rows = np.zeros((n_s, sp.dim), complex)
        for tj in sp.twice_js:
            rows[:, sp.shell_slice(tj)] = wigner_d(tj, Binv)[:, (tl + tj) // 2, :]
        f = V @ rows.T  # (K, S)
        W = twisted_weight(tau, tl, s, nu, n_sigma)[:, (tl + abs(tl)) // 2]
        radial = DZ_CONSTANT * r * r * ws * radial_profile(s) * W
        return float(np.einsum("k,ks,s->", wk, np.abs(f) ** 2, radial))

    prev = integral(s_nodes)
    while True:
        s_nodes *= 2
        total = integral(s_nodes)
        err = abs(total - prev) / abs(total)
        if err <= tol:
            break
        if s_nodes >= max_nodes:
            raise QuadratureNotConverged("isometry radial quadrature", err)
        prev = total
    norm2 = float(np.vdot(psi, psi).real)
    ratio = total / norm2
    return {
        "twice_l": tl,
        "j_max": jm,
        "tau": tau,
        "ratio": ratio,
        "error_estimate": err,
        "s_max": s_max,
        "nodes": {"k_order": k_order, "k_nodes": int(len(U)), "s_nodes": s_nodes, "sigma_nodes": n_sigma},
        "radial_coordinate": "s = log of the top eigenvalue of g^dagger g",
    }
