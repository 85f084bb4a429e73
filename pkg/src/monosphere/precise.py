"""Extended-precision evaluation of coherent-state eigen-residuals.

In double precision the residual ||A_k chi - a_k chi|| / ||chi|| bottoms out
near 1e-15, which hides the truncation error once j_max is moderately large.
This module recomputes the same quantity in mpmath: Clebsch-Gordan
coefficients from exact rational arithmetic, Wigner-D columns from their
polynomial expansion, and the heat factors at the working precision.  Nothing
here reuses the double-precision operators, so it also serves as an
independent oracle for them.
"""

from __future__ import annotations

import functools
from fractions import Fraction
from math import comb, factorial

import mpmath
import numpy as np

from .quantum import TwistedHilbert, intertwiner

__all__ = ["clebsch_gordan_exact", "eigen_residual_mp"]


@functools.lru_cache(maxsize=200_000)
def _cg_parts(j1, m1, j2, m2, J, M):
    """(square of prefactor, signed sum) as Fractions; arguments are twice-integers."""
    if m1 + m2 != M or abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return Fraction(0), Fraction(0)
    if (j1 + m1) % 2 or (j2 + m2) % 2 or (J + M) % 2:
        return Fraction(0), Fraction(0)
    if J < abs(j1 - j2) or J > j1 + j2 or (j1 + j2 + J) % 2:
        return Fraction(0), Fraction(0)

    def f(twice):
        return factorial(twice // 2)

    pre = Fraction(
        (J + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J)
        * f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2),
        f(j1 + j2 + J + 2),
    )
    total = Fraction(0)
    kmin = max(0, (j2 - J - m1) // 2, (j1 - J + m2) // 2)
    kmax = min((j1 + j2 - J) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    for k in range(kmin, kmax + 1):
        args = (2 * k, j1 + j2 - J - 2 * k, j1 - m1 - 2 * k, j2 + m2 - 2 * k,
                J - j2 + m1 + 2 * k, J - j1 - m2 + 2 * k)
        if min(args) < 0:
            continue
        den = 1
        for a in args:
            den *= f(a)
        total += Fraction(-1 if k % 2 else 1, den)
    return pre, total


def clebsch_gordan_exact(j1, m1, j2, m2, J, M):
    pre, total = _cg_parts(j1, m1, j2, m2, J, M)
    if total == 0:
        return mpmath.mpf(0)
    return mpmath.sqrt(mpmath.mpf(pre.numerator) / pre.denominator) * (
        mpmath.mpf(total.numerator) / total.denominator
    )


def _mp_T():
    T = np.asarray(intertwiner())
    h = mpmath.sqrt(mpmath.mpf(1) / 2)

    def cv(x):
        ax = abs(x)
        if ax < 0.1:
            return mpmath.mpf(0)
        mag = mpmath.mpf(1) if ax > 0.9 else h
        return mag if x > 0 else -mag

    return [[mpmath.mpc(cv(T[k, c].real), cv(T[k, c].imag)) for c in range(3)] for k in range(3)]


def _wigner_column(twice_j, col, g):
    """Column `col` of D^j(g) at working precision, g a 2x2 list of mpc."""
    n = twice_j
    a, b = g[0]
    c, d = g[1]
    am, bm = n - col, col
    out = []
    for ip in range(n + 1):
        target = n - ip
        s = mpmath.mpc(0)
        for k1 in range(max(0, target - bm), min(am, target) + 1):
            k2 = target - k1
            s += comb(am, k1) * comb(bm, k2) * a**k1 * c ** (am - k1) * b**k2 * d ** (bm - k2)
        norm = mpmath.sqrt(
            mpmath.mpf(factorial(n - ip) * factorial(ip)) / (factorial(am) * factorial(bm))
        )
        out.append(s * norm)
    return out


def eigen_residual_mp(g, space: TwistedHilbert, dps: int = 40) -> np.ndarray:
    """rho_k for the coherent state lifted by g, evaluated with `dps` digits.

    g is rescaled to unit determinant at working precision and the point a
    is recomputed from it, so the state and its eigenvalue are consistent to
    the working precision.
    """
    prm = space.params
    tl = space.twice_l
    with mpmath.workdps(dps):
        G = [[mpmath.mpc(complex(g[i][j])) for j in range(2)] for i in range(2)]
        det = G[0][0] * G[1][1] - G[0][1] * G[1][0]
        sq = mpmath.sqrt(det)
        G = [[x / sq for x in row] for row in G]
        (p, q), (u, v) = G
        r = mpmath.mpf(prm.r)
        tau = mpmath.mpf(prm.tau)
        I = mpmath.mpc(0, 1)
        # R_g e3 from g E3 g^{-1}
        a = [r * (-I * (p * q + u * v)), r * (u * v - p * q), r * (p * v + q * u)]
        T = _mp_T()
        delta = {}
        for tj in space.twice_js:
            colv = _wigner_column(tj, (tl + tj) // 2, G)
            w = mpmath.sqrt(tj + 1)
            for i, val in enumerate(colv):
                delta[(tj, 2 * i - tj)] = w * val
        heat = {tj: mpmath.exp(-tau * mpmath.mpf(tj * (tj + 2)) / 8) for tj in space.twice_js}
        num = [mpmath.mpf(0)] * 3
        den = mpmath.mpf(0)
        for (tj, tm), dv in delta.items():
            den += abs(heat[tj] * dv) ** 2
        js = set(space.twice_js)
        for tjp in space.twice_js:
            for tmp in range(-tjp, tjp + 1, 2):
                acc = [mpmath.mpc(0)] * 3
                for tj in (tjp - 2, tjp, tjp + 2):
                    if tj not in js:
                        continue
                    cl = clebsch_gordan_exact(tjp, tl, 2, 0, tj, tl)
                    if cl == 0:
                        continue
                    pref = r * mpmath.sqrt(mpmath.mpf(tjp + 1) / (tj + 1)) * cl
                    for mu in (-1, 0, 1):
                        tm = tmp + 2 * mu
                        if abs(tm) > tj:
                            continue
                        c = clebsch_gordan_exact(tjp, tmp, 2, 2 * mu, tj, tm)
                        if c == 0:
                            continue
                        w = pref * c * delta[(tj, tm)]
                        for k in range(3):
                            acc[k] += T[k][mu + 1] * w
                dv = delta[(tjp, tmp)]
                for k in range(3):
                    num[k] += abs(heat[tjp] * (acc[k] - a[k] * dv)) ** 2
        return np.array([float(mpmath.sqrt(num[k] / den)) for k in range(3)])
