import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import eval_legendre

from conftest import complex_point, make_space, random_su2
from monosphere.classical import PhasePoint, complexifier_inverse, complexifier_map
from monosphere.groups import complex_rotation, covering_map
from monosphere.states import (
    BranchCut,
    TruncationWarning,
    _rotated_state,
    coherent_state,
    eigen_residual,
    evaluate_section,
    expectations,
    holomorphic_lift,
    husimi_grid,
    husimi_rows,
    lift_point,
    overlap,
    polar_data,
)

seeds = st.integers(0, 2**32 - 1)


def legendre_kernel(space, t, z):
    """sum_j (2j+1)/(4 pi r^2) e^{-t j(j+1)/2} P_j(z) for l = 0."""
    r = space.params.r
    return sum((2 * j + 1) / (4 * math.pi * r * r) * math.exp(-t * j * (j + 1) / 2) * eval_legendre(j, z)
               for j in range(int(space.j_max) + 1))


@given(seeds, st.floats(0.0, 1.5))
def test_lifts_cover_the_point(seed, s):
    rng = np.random.default_rng(seed)
    r = 1.3
    a = complex_point(rng, r, s)
    for sp in (lift_point(a, r), holomorphic_lift(a, r)):
        assert np.allclose(r * complex_rotation(sp.g)[:, 2], a, atol=1e-12)
        assert abs(np.linalg.det(sp.g) - 1) < 1e-12


def test_polar_data_round_trip(rng):
    a = complex_point(rng, 2.0, 0.8)
    s, u, v = polar_data(a, 2.0)
    assert s == pytest.approx(0.8)
    assert np.allclose(2.0 * (np.cosh(s) * u + 1j * np.sinh(s) * v), a)


def test_branch_cuts():
    with pytest.raises(BranchCut):
        lift_point([0, 0, -1.0], 1.0)
    with pytest.raises(BranchCut):
        holomorphic_lift([0, 0, -1.0], 1.0)


def test_legendre_series_pointwise(rng):
    sp = make_space(0, 20)
    a = complex_point(rng, sp.params.r, 0.0)
    chi = coherent_state(a, sp).vec
    U = random_su2(rng, 100)
    x = sp.params.r * covering_map(U)[..., :, 2]
    vals = evaluate_section(chi, sp, U)
    ref = legendre_kernel(sp, sp.params.tau, np.clip(x @ a.real / sp.params.r**2, -1, 1))
    assert np.abs(vals - ref).max() < 1e-9 * np.abs(ref).max()


@given(seeds)
def test_overlap_is_heat_kernel_at_double_time(seed):
    rng = np.random.default_rng(seed)
    sp = make_space(0, 24)
    r = sp.params.r
    a, b = complex_point(rng, r, 0.4), complex_point(rng, r, 0.3)
    ref = legendre_kernel(sp, 2 * sp.params.tau, a.conj() @ b / r**2)
    assert overlap(a, b, sp) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("tl", [0, 1, -2])
def test_lifts_differ_by_constant(tl, rng):
    sp = make_space(tl, abs(tl) + 12)
    a = complex_point(rng, sp.params.r, 0.6)
    v1 = coherent_state(a, sp, warn=False).vec
    v2 = coherent_state(a, sp, lift="holomorphic", warn=False).vec
    k = np.argmax(np.abs(v1))
    ratio = v2[k] / v1[k]
    assert np.abs(v2 - ratio * v1).max() < 1e-12 * np.abs(v2).max()


def test_holomorphic_in_a(rng):
    sp = make_space(1, 11)
    a = complex_point(rng, sp.params.r, 0.4)
    h = 1e-6
    # tangent direction to the quadric at a
    d = np.cross(a, rng.normal(size=3))
    d /= np.linalg.norm(d)

    def vec(z):
        return coherent_state(z, sp, lift="holomorphic", warn=False).vec

    # a sqrt(.) correction keeps the displaced points on the quadric to second order
    def on(z):
        return z * sp.params.r / np.sqrt(z @ z)

    dbar = (vec(on(a + h * d)) - vec(on(a - h * d)) + 1j * (vec(on(a + 1j * h * d)) - vec(on(a - 1j * h * d)))) / (4 * h)
    dz = (vec(on(a + h * d)) - vec(on(a - h * d))) / (2 * h)
    assert np.abs(dbar).max() < 1e-6 * np.abs(dz).max()


@pytest.mark.parametrize("tl", [0, 1, 2])
def test_eigen_residual_small_and_decreasing(tl, rng):
    a = complex_point(rng, 1.3, 0.4)
    res = []
    for jm in (8, 16):
        sp = make_space(tl, 2 * jm - (tl % 2))
        res.append(eigen_residual(coherent_state(a, sp, warn=False), sp).max())
    assert res[1] < res[0] / 10
    assert res[1] < 1e-5


def test_precise_residual_agrees_with_double(rng):
    sp = make_space(1, 13)
    cs = coherent_state(complex_point(rng, 1.3, 0.5), sp, warn=False)
    fast = eigen_residual(cs, sp)
    slow = eigen_residual(cs, sp, dps=30)
    assert slow == pytest.approx(fast, rel=1e-6)


def test_truncation_warning(rng):
    sp = make_space(0, 4, tau=0.05)
    with pytest.warns(TruncationWarning):
        coherent_state(complex_point(rng, 1.3, 0.2), sp)


@pytest.mark.parametrize("tl", [0, 2])
def test_expectations_approach_classical(tl):
    r, m, alpha = 1.3, 1.0, 1.5
    devs = []
    for hbar in (0.4, 0.2, 0.1):
        tau = hbar / (m * alpha * r * r)
        # the state sits near j = |J| / hbar with a spread of order tau^{-1/2}
        jmax = int(1.0 / hbar + 6 / tau**0.5) + 1
        sp = make_space(tl, 2 * jmax, tau=tau, r=r, m=m, hbar=hbar)
        prm = sp.params
        pt = PhasePoint([r * 0.6, 0, r * 0.8], [0, 0.3 * m * alpha * r, 0])
        a = complexifier_map(pt, prm)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            ex, ej = expectations(coherent_state(a, sp), sp)
        J = np.cross(pt.x, pt.p) - r * prm.B * pt.x
        devs.append(max(np.linalg.norm(ex - pt.x) / r, np.linalg.norm(ej - J) / np.linalg.norm(J)))
    assert devs[0] > devs[1] > devs[2]
    assert 1.5 < devs[1] / devs[2] < 2.5


def test_husimi_peak_and_shapes(rng):
    sp = make_space(0, 12)
    a = lift_point(complex_point(rng, sp.params.r, 0.0), sp.params.r).a
    psi = coherent_state(a, sp, warn=False).vec
    S, TH, PH, vals = husimi_grid(psi, sp, [0.0, 0.3], 3, 4)
    assert vals.shape == (2, 3, 4) and (vals >= 0).all()
    assert husimi_rows(S, TH, PH, vals).shape == (24, 4)
    own = abs(np.vdot(psi, psi)) ** 2 / np.vdot(psi, psi).real
    assert vals.max() <= own * (1 + 1e-12)


def test_branch_cut_fallback_matches_holomorphic(rng):
    sp = make_space(1, 9)
    r = sp.params.r
    a = r * np.array([0.0, math.cosh(0.3) * 0 + 1j * math.sinh(0.3), -math.cosh(0.3)])
    psi = rng.normal(size=sp.dim) + 1j * rng.normal(size=sp.dim)
    chi1 = _rotated_state(a, sp)
    chi2 = coherent_state(a + 1e-12, sp, lift="holomorphic", warn=False).vec
    hus = lambda c: abs(np.vdot(c, psi)) ** 2 / np.vdot(c, c).real
    assert hus(chi1) == pytest.approx(hus(chi2), rel=1e-8)


def test_inverse_of_state_point(rng):
    # the classical point behind a coherent-state label is recovered by the inverse map
    sp = make_space(2, 10)
    x, p = np.array([0.0, 1.3, 0.0]), np.array([0.2, 0.0, 0.1])
    a = complexifier_map((x, p), sp.params)
    back = complexifier_inverse(a, sp.params)
    assert np.allclose(back.x, x) and np.allclose(back.p, p)
