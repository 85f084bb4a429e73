import numpy as np
import pytest
from hypothesis import settings

from monosphere.classical import params_from_twist
from monosphere.quantum import build_space

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_sl2c(rng, scale=0.6, size=None):
    shape = (() if size is None else (size,)) + (2, 2)
    g = rng.normal(size=shape) * scale + 1j * rng.normal(size=shape) * scale + np.eye(2)
    det = np.linalg.det(g)
    return g / np.sqrt(det)[..., None, None]


def random_su2(rng, size=None):
    shape = (() if size is None else (size,)) + (4,)
    q = rng.normal(size=shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    a = q[..., 0] + 1j * q[..., 1]
    b = q[..., 2] + 1j * q[..., 3]
    return np.stack([np.stack([a, -b.conj()], -1), np.stack([b, a.conj()], -1)], -2)


def complex_point(rng, r, s):
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    v = rng.normal(size=3)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    return r * (np.cosh(s) * u + 1j * np.sinh(s) * v)


def make_space(twice_l, twice_j_max, tau=0.2, r=1.3, m=1.0, hbar=1.0):
    alpha = hbar / (tau * m * r * r)
    return build_space(twice_l, twice_j_max, params_from_twist(twice_l, r, m, alpha, hbar))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
