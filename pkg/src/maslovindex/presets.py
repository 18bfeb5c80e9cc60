"""Named curvature profiles with closed-form index data.

Sign convention: Jacobi fields solve ``X'' = R X``, so conjugate points
need negative curvature operators here. A geodesic on the unit round
sphere has ``R = -I`` in this convention.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidInputError
from .jacobiflow import CurvatureProfile


@dataclass(frozen=True)
class Preset:
    name: str
    profile: CurvatureProfile
    index: int
    conjugate_times: tuple = ()
    multiplicities: tuple = ()
    note: str = ""
    extra: dict = field(default_factory=dict)


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _piecewise_second_zero():
    # X = sin(2t)/2 on [0, 2); afterwards X = cos4 sin(t-2) + (sin4/2) cos(t-2)
    return 2.0 + math.pi - math.atan(math.tan(4.0) / 2.0)


def _build():
    coupled = _rot(math.pi / 6) @ np.diag([-1.0, -4.0]) @ _rot(math.pi / 6).T
    items = [
        Preset("flat", CurvatureProfile.constant([[0.0]], 0.0, 1.0), 0,
               note="R = 0: Jacobi fields X = t X'(0) never return to zero"),
        Preset("positive", CurvatureProfile.constant([[1.0]], 0.0, 1.0), 0,
               note="R = +1: X = sinh t has no positive zero"),
        Preset("sphere-like-n1", CurvatureProfile.constant([[-1.0]], 0.0, 10.0), 3,
               (math.pi, 2 * math.pi, 3 * math.pi), (1, 1, 1),
               note="R = -1: zeros of sin t; Dirichlet eigenvalues (k pi/10)^2 - 1"),
        Preset("sphere-like-n2", CurvatureProfile.constant(-np.eye(2), 0.0, 4.0), 2,
               (math.pi,), (2,), note="R = -I2: both components vanish at pi"),
        Preset("diag-1-4", CurvatureProfile.diagonal([-1.0, -4.0], 0.0, 4.0), 3,
               (math.pi / 2, math.pi), (1, 2),
               note="zeros of sin t and sin 2t; both vanish at pi"),
        Preset("scaled-50", CurvatureProfile.constant([[-50.0]], 0.0, 1.0), 2,
               (math.pi / math.sqrt(50), 2 * math.pi / math.sqrt(50)), (1, 1),
               note="zeros of sin(sqrt(50) t); k^2 pi^2 < 50 for k = 1, 2"),
        Preset("piecewise-n1",
               CurvatureProfile.piecewise_constant([2.0], [[[-4.0]], [[-1.0]]], 0.0, 5.0), 2,
               (math.pi / 2, _piecewise_second_zero()), (1, 1),
               note="R = -4 on [0, 2), -1 on [2, 5]; field continued across the jump"),
        Preset("coupled-n2", CurvatureProfile.constant(coupled, 0.0, 4.0), 3,
               (math.pi / 2, math.pi), (1, 2),
               note="diag(-1, -4) rotated by 30 degrees; same spectrum as diag-1-4"),
        Preset("polynomial-n1", CurvatureProfile.polynomial([[[0.0]], [[-1.0]]], 0.0, 6.0), 3,
               note="R = -t: X = Bi(0) Ai(-t) - Ai(0) Bi(-t)"),
    ]
    return {p.name: p for p in items}


PRESETS = _build()


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}") from None


def _random_symmetric(rng, n, scale):
    G = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (G + G.T)


def random_trigonometric_profile(rng, n, degree, length, bound=10.0):
    """Random ``R(t) = C + sum_k A_k cos(k w t) + B_k sin(k w t)`` on [0, length].

    The coefficients are rescaled so that the sum of their spectral norms,
    and hence the spectrum of every R(t), stays within [-bound, bound].
    The constant part leans negative so that conjugate points occur.
    """
    if n < 1 or degree < 0 or not length > 0:
        raise InvalidInputError("need n >= 1, degree >= 0 and positive length")
    C = _random_symmetric(rng, n, 1.0) - rng.uniform(1.0, 4.0) * np.eye(n)
    A = [_random_symmetric(rng, n, 1.0 / (k + 1)) for k in range(degree)]
    B = [_random_symmetric(rng, n, 1.0 / (k + 1)) for k in range(degree)]
    omega = 2.0 * math.pi / length * rng.uniform(0.5, 1.5)
    total = sum(np.linalg.norm(M, 2) for M in [C, *A, *B])
    if total > bound:
        f = bound / total
        C, A, B = C * f, [M * f for M in A], [M * f for M in B]
    return CurvatureProfile.trigonometric(C, A, B, omega, 0.0, float(length))


def random_suite(seed, count=20, max_n=4, max_degree=3, max_length=6.0):
    """Reproducible list of random trigonometric profiles."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        degree = int(rng.integers(0, max_degree + 1))
        length = float(rng.uniform(1.0, max_length))
        out.append(random_trigonometric_profile(rng, n, degree, length))
    return out
