"""Closed-form data of the symmetric n-body problem in the rotating frame.

Bodies have unit mass.  The frame rotates about the z axis with frequency
``sqrt(s1)``; body ``j`` is recovered from body ``n`` through
``u_j(t) = R_j u_n(t + j k zeta)`` with ``R_j`` the xy-rotation by ``j zeta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

# generator of xy-rotations: exp(theta * JBAR) rotates counterclockwise by theta
JBAR = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
IBAR = np.diag([1.0, 1.0, 0.0])


def rotation(theta: float) -> np.ndarray:
    """``exp(theta * JBAR)``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compute_sk(n: int, k: int) -> float:
    """Squared frequency of the k-th vertical mode of the regular n-gon.

    >>> round(compute_sk(3, 1), 7)
    0.5773503
    """
    if n < 3:
        raise ValueError(f"need at least 3 bodies, got n={n}")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, n-1], got k={k} for n={n}")
    zeta = 2.0 * math.pi / n
    total = math.fsum(
        math.sin(k * j * zeta / 2.0) ** 2 / math.sin(j * zeta / 2.0) ** 3
        for j in range(1, n)
    )
    return total / 4.0


def compute_s1(n: int) -> float:
    """``s1`` through its own closed form, ``(1/4) sum 1/sin(j zeta/2)``."""
    zeta = 2.0 * math.pi / n
    return math.fsum(1.0 / math.sin(j * zeta / 2.0) for j in range(1, n)) / 4.0


@dataclass(frozen=True)
class ModelParams:
    n: int
    m: int
    k: int = 2
    zeta: float = field(init=False)
    s1: float = field(init=False)
    sk: float = field(init=False)
    delays: tuple[float, ...] = field(init=False, repr=False)
    rotations: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        n, k, m = self.n, self.k, self.m
        if n < 3 or n % 2 == 0:
            raise ValueError(f"n must be odd and >= 3 (got {n}); even n admits no figure eight")
        # n = 3 only has k = 2 = n - 1, which shares s_2 = s_1
        if not 2 <= k <= max(2, n // 2):
            raise ValueError(f"branch index k={k} outside [2, n/2] for n={n}")
        if m < 2:
            raise ValueError(f"truncation order must be >= 2, got {m}")
        zeta = 2.0 * math.pi / n
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "s1", compute_s1(n))
        object.__setattr__(self, "sk", compute_sk(n, k))
        object.__setattr__(self, "delays", tuple(j * k * zeta for j in range(1, n)))
        rots = []
        for j in range(1, n):
            R = rotation(j * zeta)
            R.setflags(write=False)
            rots.append(R)
        object.__setattr__(self, "rotations", tuple(rots))

    @property
    def omega0(self) -> float:
        """Frequency at which the vertical family leaves the polygon."""
        return math.sqrt(self.sk)

    @property
    def omega_eight(self) -> float:
        return 2.0 * math.sqrt(self.s1)

    @property
    def w_polygon(self) -> np.ndarray:
        """Reciprocal distances ``1 / (2 sin(j pi / n))`` at the polygon."""
        j = np.arange(1, self.n)
        return 1.0 / (2.0 * np.sin(j * np.pi / self.n))

    def with_order(self, m: int) -> "ModelParams":
        return ModelParams(n=self.n, m=m, k=self.k)


@dataclass(frozen=True)
class KnotClass:
    p: int
    q: int
    is_choreography: bool

    def __post_init__(self):
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"winding numbers ({self.p}, {self.q}) are not coprime")


def satisfies_diophantine(p: int, q: int, n: int, k: int) -> bool:
    return (k * q - p) % n == 0


def classify_frequency(omega: float, params: ModelParams, qmax: int = 64,
                       tol: float = 1e-9) -> KnotClass | None:
    """Match ``omega / sqrt(s1)`` against coprime ``p/q`` with ``q <= qmax``.

    The reduced fraction is unique, so the first hit is returned with
    ``is_choreography`` telling whether ``k q - p = 0 (mod n)`` holds.  No
    rational match within ``tol`` gives ``None``.
    """
    if omega <= 0 or qmax < 1:
        raise ValueError("need omega > 0 and qmax >= 1")
    ratio = omega / math.sqrt(params.s1)
    for q in range(1, qmax + 1):
        p = round(ratio * q)
        if p < 1 or math.gcd(p, q) != 1:
            continue
        if abs(ratio - p / q) < tol:
            return KnotClass(p, q, satisfies_diophantine(p, q, params.n, params.k))
    return None


def nearest_fraction(omega: float, params: ModelParams, qmax: int = 64) -> Fraction:
    return Fraction(omega / math.sqrt(params.s1)).limit_denominator(qmax)


def polygon_state(params: ModelParams, omega: float | None = None) -> "StateVector":
    """The regular n-gon as a constant solution of the augmented system.

    ``u = (1, 0, 0)``, ``v = 0``, ``w_j = 1 / (2 sin(j pi / n))``, all unfolding
    multipliers zero; it solves the system for every ``omega`` (default
    ``sqrt(s_k)``).
    """
    from .state import StateVector

    X = StateVector.zeros(params.n, params.m, params.omega0 if omega is None else omega)
    X.u[0, 0] = 1.0
    X.w[:, 0] = params.w_polygon
    return X


def vertical_tangent(params: ModelParams, normalized: bool = False) -> np.ndarray:
    """Flat direction ``(x1, 0)`` with ``u1 = (0, 0, sin t)``, ``v1 = (0, 0, cos t)``."""
    from .state import StateVector

    d = StateVector.zeros(params.n, params.m, 0.0)
    d.u[2, 1] = -0.5j
    d.v[2, 1] = 0.5
    vec = d.to_real()
    if normalized:
        vec /= np.linalg.norm(vec)
    return vec
