"""Back to n bodies: reconstruction, rotating-frame dynamics, Floquet analysis
and geometric checks of converged orbits.

Physical time ``s`` relates to the series time by ``t = omega s``, so a
2pi-periodic series is an orbit of period ``T = 2 pi / omega``.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial.distance import pdist

from . import fourier
from .fourier import FourierVec3
from .model import IBAR, JBAR, ModelParams
from .state import StateVector, u_from_real

log = logging.getLogger(__name__)

COLLISION_DISTANCE = 1e-8


class CollisionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

def _as_half(u) -> np.ndarray:
    if isinstance(u, FourierVec3):
        return u.half
    return np.asarray(u, dtype=complex)


def reconstruct_bodies(u, params: ModelParams):
    """Series of all bodies, ``u_j = R_j u(t + j k zeta)`` for ``j = 1..n``.

    Accepts a :class:`FourierVec3` or a one-sided ``(3, m)`` array and returns
    a list of the same kind; the last entry is body ``n``, i.e. ``u`` itself.
    """
    half = _as_half(u)
    m = half.shape[1]
    out = []
    for j in range(1, params.n):
        shifted = half * fourier.shift_factors(m, params.delays[j - 1])
        out.append(params.rotations[j - 1] @ shifted)
    out.append(half.copy())
    if isinstance(u, FourierVec3):
        return [FourierVec3.from_half(b) for b in out]
    return out


def eval_series(half: np.ndarray, t) -> np.ndarray:
    """Values of one-sided series ``(..., m)`` at times ``t`` -> ``(len(t), ...)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = half.shape[-1]
    ell = np.arange(m)
    e = np.exp(1j * np.outer(t, ell))
    e[:, 1:] *= 2.0
    return np.real(np.tensordot(e, half, axes=([1], [-1])))


@dataclass
class FullState:
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have equal shape")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.positions.ravel(), self.velocities.ravel()])

    @classmethod
    def from_flat(cls, y: np.ndarray) -> "FullState":
        h = y.size // 2
        return cls(y[:h], y[h:])

    def min_distance(self) -> float:
        return float(pdist(self.positions).min())


def full_state(u, omega: float, params: ModelParams, t: float = 0.0) -> FullState:
    """Positions and physical velocities of all bodies at series time ``t``."""
    bodies = reconstruct_bodies(_as_half(u), params)
    m = bodies[0].shape[1]
    dfac = fourier.deriv_factors(m)
    pos = np.array([eval_series(b, t)[0] for b in bodies])
    vel = np.array([omega * eval_series(b * dfac, t)[0] for b in bodies])
    return FullState(pos, vel)


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def _gravity(pos: np.ndarray) -> np.ndarray:
    d = pos[:, None, :] - pos[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    np.fill_diagonal(r, np.inf)
    if r.min() < COLLISION_DISTANCE:
        raise CollisionError(f"bodies within {r.min():.2e} of each other")
    return -np.einsum("ijk,ij->ik", d, r ** -3)


def _accel(pos: np.ndarray, vel: np.ndarray, sqrt_s1: float) -> np.ndarray:
    return (-2.0 * sqrt_s1 * vel @ JBAR.T + sqrt_s1 ** 2 * pos @ IBAR.T
            + _gravity(pos))


def rotating_vector_field(state: FullState, params: ModelParams) -> FullState:
    """``(positions, velocities)' `` in the frame rotating with ``sqrt(s1)``."""
    acc = _accel(state.positions, state.velocities, math.sqrt(params.s1))
    return FullState(state.velocities.copy(), acc)


def jacobi_integral(state: FullState, params: ModelParams) -> float:
    """First integral of the rotating-frame flow."""
    pos, vel = state.positions, state.velocities
    kinetic = 0.5 * np.sum(vel ** 2)
    centrifugal = 0.5 * params.s1 * np.sum(pos[:, :2] ** 2)
    return float(kinetic - centrifugal - np.sum(1.0 / pdist(pos)))


def _linearization(pos: np.ndarray, sqrt_s1: float) -> np.ndarray:
    n = pos.shape[0]
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, 1.0)
    r = np.sqrt(r2)
    K = (np.eye(3)[None, None] / (r ** 3)[..., None, None]
         - 3.0 * np.einsum("ijk,ijl->ijkl", d, d) / (r ** 5)[..., None, None])
    idx = np.arange(n)
    K[idx, idx] = 0.0
    # d G_j / d u_i = K_ji (i != j), d G_j / d u_j = -sum_i K_ji
    K[idx, idx] = -K.sum(axis=1)
    A = K.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    A += sqrt_s1 ** 2 * np.kron(np.eye(n), IBAR)
    Df = np.zeros((6 * n, 6 * n))
    Df[: 3 * n, 3 * n:] = np.eye(3 * n)
    Df[3 * n:, : 3 * n] = A
    Df[3 * n:, 3 * n:] = -2.0 * sqrt_s1 * np.kron(np.eye(n), JBAR)
    return Df


def vector_field_jacobian(state: FullState, params: ModelParams) -> np.ndarray:
    """``6n x 6n`` derivative of the flat rotating-frame vector field."""
    return _linearization(state.positions, math.sqrt(params.s1))


def integrate(state: FullState, params: ModelParams, duration: float,
              rtol: float = 1e-10, atol: float = 1e-12, t_eval=None):
    n = state.n
    sq = math.sqrt(params.s1)

    def rhs(_, y):
        pos = y[: 3 * n].reshape(n, 3)
        vel = y[3 * n:].reshape(n, 3)
        return np.concatenate([vel.ravel(), _accel(pos, vel, sq).ravel()])

    return solve_ivp(rhs, (0.0, duration), state.flat(), method="DOP853",
                     rtol=rtol, atol=atol, t_eval=t_eval)


# ---------------------------------------------------------------------------
# monodromy
# ---------------------------------------------------------------------------

@dataclass
class MonodromyResult:
    multipliers: np.ndarray
    morse_index: int
    symplectic_defect: float
    unit_circle_defect: float
    period: float = 0.0
    closure_error: float = 0.0
    trivial: np.ndarray | None = None
    matrix: np.ndarray | None = None

    @property
    def max_modulus_defect(self) -> float:
        """``max ||lambda| - 1|`` over all multipliers."""
        return float(np.max(np.abs(np.abs(self.multipliers) - 1.0)))

    @property
    def nontrivial(self) -> np.ndarray:
        return self.multipliers[~self.trivial] if self.trivial is not None else self.multipliers


def trivial_targets(omega: float, params: ModelParams) -> list[complex]:
    """Multipliers forced by the symmetries of the rotating-frame problem.

    With ``theta = sqrt(s1) T``: six at 1 (energy and time shift, rotation
    about z and its momentum, vertical centre-of-mass motion) and four each at
    ``exp(+-i theta)`` (planar centre-of-mass motion, tilts of the inertial
    orbit about horizontal axes).
    """
    theta = math.sqrt(params.s1) * 2.0 * math.pi / omega
    e = complex(math.cos(theta), math.sin(theta))
    return [1.0 + 0j] * 6 + [e] * 4 + [e.conjugate()] * 4


def classify_trivial(multipliers: np.ndarray, targets: list[complex]) -> np.ndarray:
    """Greedily match each target with the closest unmatched multiplier."""
    mask = np.zeros(multipliers.size, dtype=bool)
    for z in targets:
        dist = np.abs(multipliers - z)
        dist[mask] = np.inf
        mask[int(np.argmin(dist))] = True
    return mask


def monodromy(u, omega: float, params: ModelParams, rtol: float = 1e-10,
              atol: float = 1e-12, instability_tol: float = 1e-6,
              keep_matrix: bool = False) -> MonodromyResult:
    """Monodromy matrix of the reconstructed orbit over ``T = 2 pi / omega``.

    The Morse index counts the multipliers outside ``|lambda| = 1 +
    instability_tol`` once the symmetry-forced ones are set aside; those sit
    in Jordan blocks whose numerical splitting would otherwise be counted.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    s0 = full_state(u, omega, params)
    n = s0.n
    dim = 6 * n
    sq = math.sqrt(params.s1)
    T = 2.0 * math.pi / omega

    def rhs(_, y):
        pos = y[: 3 * n].reshape(n, 3)
        vel = y[3 * n: dim].reshape(n, 3)
        M = y[dim:].reshape(dim, dim)
        dM = _linearization(pos, sq) @ M
        return np.concatenate([vel.ravel(), _accel(pos, vel, sq).ravel(), dM.ravel()])

    y0 = np.concatenate([s0.flat(), np.eye(dim).ravel()])
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"variational integration failed: {sol.message}")
    yT = sol.y[:, -1]
    M = yT[dim:].reshape(dim, dim)
    mult = np.linalg.eigvals(M)
    trivial = classify_trivial(mult, trivial_targets(omega, params))
    nontrivial = mult[~trivial]
    morse = int(np.count_nonzero(np.abs(nontrivial) > 1.0 + instability_tol))
    return MonodromyResult(
        multipliers=mult,
        morse_index=morse,
        symplectic_defect=float(abs(np.linalg.det(M) - 1.0)),
        unit_circle_defect=float(np.max(np.abs(np.abs(mult[trivial]) - 1.0))),
        period=T,
        closure_error=float(np.max(np.abs(yT[:dim] - s0.flat()))),
        trivial=trivial,
        matrix=M if keep_matrix else None,
    )


def morse_profile(archive, stride: int = 10, threads: int | None = None,
                  rtol: float = 1e-10) -> dict[str, int | None]:
    """Morse index at every ``stride``-th archived state.

    Failures are recorded as ``None``.  The pool size comes from ``threads``
    or the ``CHOREO_THREADS`` environment variable (default 1).
    """
    params = archive.params
    if threads is None:
        threads = int(os.environ.get("CHOREO_THREADS", "1"))
    keys = [r.state_ref for r in archive.records[::stride]]

    def one(key):
        X = archive.states[key]
        try:
            u = u_from_real(X, params.n, params.m)
            return key, monodromy(u, float(X[-1]), params, rtol=rtol).morse_index
        except Exception as exc:  # noqa: BLE001 - a gap, not fatal
            log.warning("monodromy failed for state %s: %s", key, exc)
            return key, None

    if threads <= 1:
        results = [one(k) for k in keys]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, keys))
    out = dict(results)
    by_key = {r.state_ref: r for r in archive.records}
    for key, idx in out.items():
        by_key[key].morse_index = idx
    return out


# ---------------------------------------------------------------------------
# Newton equations in original coordinates
# ---------------------------------------------------------------------------

def newton_residual(u, omega: float, params: ModelParams, samples: int = 256) -> float:
    """Sup norm on a grid of ``(omega d/dt + sqrt(s1) J)^2 u_j + sum (u_j - u_i)/r^3``."""
    bodies = np.array(reconstruct_bodies(_as_half(u), params))  # (n, 3, m)
    m = bodies.shape[-1]
    sq = math.sqrt(params.s1)
    ik = fourier.deriv_factors(m)
    first = omega * bodies * ik + sq * np.einsum("ab,jbl->jal", JBAR, bodies)
    second = omega * first * ik + sq * np.einsum("ab,jbl->jal", JBAR, first)
    t = 2.0 * np.pi * np.arange(samples) / samples
    pos = eval_series(bodies, t)        # (samples, n, 3)
    lhs = eval_series(second, t)
    grav = np.array([_gravity(p) for p in pos])
    return float(np.max(np.abs(lhs - grav)))


# ---------------------------------------------------------------------------
# inertial frame and geometry
# ---------------------------------------------------------------------------

def _rotate_z(points: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    out = points.copy()
    out[..., 0] = c * points[..., 0] - s * points[..., 1]
    out[..., 1] = s * points[..., 0] + c * points[..., 1]
    return out


def inertial_period(omega: float, params: ModelParams, qmax: int = 64) -> float:
    """Smallest common period of the orbit and the frame, from ``omega/sqrt(s1) = p/q``."""
    from .model import nearest_fraction

    frac = nearest_fraction(omega, params, qmax)
    return 2.0 * math.pi * frac.denominator / math.sqrt(params.s1)


class InertialCurve:
    """``q_j(s) = exp(sqrt(s1) s J) u_j(omega s)`` as an exact function of ``s``."""

    def __init__(self, body_half: np.ndarray, omega: float, params: ModelParams):
        self.half = np.asarray(body_half)
        self.omega = omega
        self.rate = math.sqrt(params.s1)
        ik = fourier.deriv_factors(self.half.shape[1])
        self.d1 = self.half * ik
        self.d2 = self.d1 * ik

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(s)
        return _rotate_z(eval_series(self.half, self.omega * s), self.rate * s)

    def derivatives(self, s):
        """Position, first and second derivatives in ``s``."""
        s = np.atleast_1d(s)
        t = self.omega * s
        p = eval_series(self.half, t)
        dp = self.omega * eval_series(self.d1, t)
        ddp = self.omega ** 2 * eval_series(self.d2, t)
        a = self.rate
        J = JBAR
        q = p
        dq = dp + a * q @ J.T
        ddq = ddp + 2 * a * dp @ J.T + a * a * q @ (J @ J).T
        ang = a * s
        return _rotate_z(q, ang), _rotate_z(dq, ang), _rotate_z(ddq, ang)


def inertial_curves(u, omega: float, params: ModelParams, samples: int = 1024):
    """Samples ``(n, samples, 3)`` of all inertial orbits over their common period."""
    S = inertial_period(omega, params)
    s = S * np.arange(samples) / samples
    bodies = reconstruct_bodies(_as_half(u), params)
    return np.array([InertialCurve(b, omega, params)(s) for b in bodies]), s


def _distance_to_curve(points: np.ndarray, curve: InertialCurve, s_grid: np.ndarray,
                       grid_pts: np.ndarray, candidates: int = 4,
                       iterations: int = 30) -> np.ndarray:
    """Distance from each point to the curve.

    The few nearest samples seed a safeguarded Newton refinement of the curve
    parameter; several seeds keep self-crossings from trapping the search on
    the wrong strand.
    """
    d2 = ((points[:, None, :] - grid_pts[None, :, :]) ** 2).sum(-1)
    idx = np.argsort(d2, axis=1)[:, :candidates]
    rows = np.arange(points.shape[0])[:, None]
    best = np.sqrt(d2[rows, idx]).min(axis=1)
    h = s_grid[1] - s_grid[0]
    s = s_grid[idx].ravel()
    targets = np.repeat(points, idx.shape[1], axis=0)
    lo, hi = s - h, s + h
    for _ in range(iterations):
        q, dq, ddq = curve.derivatives(s)
        diff = q - targets
        g = np.sum(diff * dq, axis=1)
        H = np.sum(dq * dq, axis=1) + np.sum(diff * ddq, axis=1)
        step = np.where(H > 0, g / np.where(H > 0, H, 1.0), 0.0)
        s = np.clip(s - step, lo, hi)
        if np.max(np.abs(step)) < 1e-15 * max(1.0, s_grid[-1]):
            break
    dist = np.linalg.norm(curve(s) - targets, axis=1).reshape(idx.shape).min(axis=1)
    return np.minimum(dist, best)


def hausdorff_distance(u, omega: float, params: ModelParams, samples: int = 1024,
                       a: int = -1, b: int = 0) -> float:
    """Symmetric Hausdorff distance between the inertial curves of bodies ``a`` and ``b``."""
    bodies = reconstruct_bodies(_as_half(u), params)
    S = inertial_period(omega, params)
    s = S * np.arange(samples) / samples
    ca = InertialCurve(bodies[a], omega, params)
    cb = InertialCurve(bodies[b], omega, params)
    pa, pb = ca(s), cb(s)
    d_ab = _distance_to_curve(pa, cb, s, pb).max()
    d_ba = _distance_to_curve(pb, ca, s, pa).max()
    return float(max(d_ab, d_ba))


def choreography_defect(u, omega: float, params: ModelParams, samples: int = 1024) -> float:
    """Largest Hausdorff distance between body ``n``'s curve and any other body's."""
    return max(hausdorff_distance(u, omega, params, samples, a=-1, b=j)
               for j in range(params.n - 1))


def planarity(points: np.ndarray) -> float:
    """Largest distance to the best-fit plane relative to the curve diameter."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    centred = pts - pts.mean(axis=0)
    _, _, Vt = np.linalg.svd(centred, full_matrices=False)
    normal = Vt[-1]
    return float(np.max(np.abs(centred @ normal)) / pdist(pts).max())


def energy_drift(u, omega: float, params: ModelParams, rtol: float = 1e-12,
                 atol: float = 1e-12, samples: int = 64) -> float:
    """Relative drift of the Jacobi integral over one period."""
    s0 = full_state(u, omega, params)
    T = 2.0 * math.pi / omega
    sol = integrate(s0, params, T, rtol=rtol, atol=atol,
                    t_eval=np.linspace(0.0, T, samples))
    E = np.array([jacobi_integral(FullState.from_flat(y), params) for y in sol.y.T])
    return float(np.max(np.abs(E - E[0])) / abs(E[0]))


def state_from_vector(X: np.ndarray, params: ModelParams) -> tuple[np.ndarray, float]:
    """``(u_half, omega)`` of a flat state vector."""
    sv = StateVector.from_real(X, params.n)
    return sv.u, sv.omega
