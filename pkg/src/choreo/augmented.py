"""Galerkin projection of the augmented choreography map and its Jacobian.

Unknowns ``x = (lambda, alpha, u, v, w)`` plus the frequency ``omega``; the
residual blocks are

* ``eta``   phase sections: ``int u.JBAR ref``, ``int u.ref'``, ``int u_3``
* ``gamma`` regularization at ``t = 0``: ``w_j(0)^2 |d_j(0)|^2 - 1``
* ``f``     ``u' - v``
* ``g``     ``omega^2 v' + 2 omega sqrt(s1) JBAR v - s1 IBAR u + P(u, w)
            + lambda_1 JBAR u + lambda_2 v + lambda_3 e_3``
* ``h``     ``w_j' + w_j^3 <d_j', d_j> + alpha_j w_j^3``

with ``d_j(t) = u(t) - R_j u(t + tau_j)`` and ``P = sum_j w_j^3 d_j``.
Nonlinear terms are evaluated on a grid fine enough that projecting back onto
the kept modes is exact (no aliasing), so ``F`` is the exact projection of the
infinite-dimensional map restricted to trigonometric polynomials.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .fourier import FourierScalar, FourierVec3
from .model import IBAR, JBAR, ModelParams
from .state import Layout, StateVector

log = logging.getLogger(__name__)


class DegenerateReference(ValueError):
    """Reference orbit has collapsed onto an equilibrium."""


@dataclass(frozen=True)
class ReferencePhase:
    """Reference curve for the phase sections and its derivative."""

    u_ref: FourierVec3
    du_ref: FourierVec3

    @classmethod
    def from_half(cls, u_half: np.ndarray) -> "ReferencePhase":
        u_ref = FourierVec3.from_half(u_half)
        return cls(u_ref, u_ref.map(fourier.differentiate))


def set_reference(X: StateVector) -> ReferencePhase:
    """Reference taken from the current ``u`` with its vertical mean removed."""
    u = np.array(X.u, copy=True)
    u[2, 0] = 0.0
    ref = ReferencePhase.from_half(u)
    if np.linalg.norm(fourier.to_real(ref.du_ref.half)) < 1e-10:
        raise DegenerateReference("reference orbit has no time dependence (collapsed to equilibrium)")
    return ref


@dataclass
class Residual:
    eta: np.ndarray
    gamma: np.ndarray
    f: np.ndarray          # (3, m) one-sided coefficients
    g: np.ndarray          # (3, m)
    h: np.ndarray          # (n-1, m)
    diagnostic: str | None = field(default=None)

    def to_real(self) -> np.ndarray:
        return np.concatenate([
            self.eta, self.gamma,
            fourier.to_real(self.f).ravel(),
            fourier.to_real(self.g).ravel(),
            fourier.to_real(self.h).ravel(),
        ])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.to_real())))


class AugmentedSystem:
    """``F^{(m)}`` for fixed model parameters and reference phase.

    Works on the flat real vector ``X`` of :class:`choreo.state.Layout`.
    """

    def __init__(self, params: ModelParams, ref: ReferencePhase):
        self.params = params
        self.ref = ref
        n, m = params.n, params.m
        self.n, self.m = n, m
        self.layout = Layout(n, m)
        self.grid = fourier.grid_size(m, degree=5)
        self.R = np.stack(params.rotations)                      # (n-1, 3, 3)
        self.shift = np.stack([fourier.shift_factors(m, tau) for tau in params.delays])
        self.ell = np.arange(m)
        self.ik = fourier.deriv_factors(m)
        self._E = fourier.synthesis_matrix(m, self.grid)
        self._A = fourier.analysis_matrix(m, self.grid)
        self._D = fourier.deriv_matrix(m)
        self._S = np.stack([fourier.shift_matrix(m, tau) for tau in params.delays])
        self._e0 = fourier.eval_row(m, 0.0)
        self._etau = np.stack([fourier.eval_row(m, tau) for tau in params.delays])
        weights = fourier.pairing_weights(m)
        jref = np.einsum("cd,dm->cm", JBAR, ref.u_ref.half)
        self._row_rot = (fourier.to_real(jref) * weights).ravel()
        self._row_phase = (fourier.to_real(ref.du_ref.half) * weights).ravel()
        self.sqrt_s1 = math.sqrt(params.s1)

    # ------------------------------------------------------------------
    def with_reference(self, ref: ReferencePhase) -> "AugmentedSystem":
        return AugmentedSystem(self.params, ref)

    def unpack(self, X: np.ndarray):
        lay = self.layout
        r, n = lay.r, self.n
        u = fourier.from_real(X[lay.u].reshape(3, r))
        v = fourier.from_real(X[lay.v].reshape(3, r))
        w = fourier.from_real(X[lay.w].reshape(n - 1, r))
        return X[lay.lam], X[lay.alpha], u, v, w, X[lay.omega]

    def _differences(self, a: np.ndarray) -> np.ndarray:
        """``a - R_j a(. + tau_j)`` for all j, shape ``(n-1, 3, m)``."""
        shifted = a[None, :, :] * self.shift[:, None, :]
        return a[None] - np.einsum("jcd,jdm->jcm", self.R, shifted)

    def _pieces(self, X: np.ndarray):
        lam, alpha, u, v, w, omega = self.unpack(X)
        d = self._differences(u)
        dv = self._differences(v)
        M = self.grid
        dg = fourier.to_grid(d, M)
        dvg = fourier.to_grid(dv, M)
        wg = fourier.to_grid(w, M)
        return lam, alpha, u, v, w, omega, d, dg, dvg, wg

    def residual_blocks(self, X: np.ndarray) -> Residual:
        lam, alpha, u, v, w, omega, d, dg, dvg, wg = self._pieces(X)
        m, s1, rs1 = self.m, self.params.s1, self.sqrt_s1
        w3 = wg ** 3
        P = fourier.from_grid(np.einsum("jM,jcM->cM", w3, dg), m)
        inner = np.einsum("jcM,jcM->jM", dvg, dg)

        f = self.ik * u - v
        g = (omega ** 2) * self.ik * v + 2 * omega * rs1 * (JBAR @ v) - s1 * (IBAR @ u) + P
        g = g + lam[0] * (JBAR @ u) + lam[1] * v
        g[2, 0] += lam[2]
        h = self.ik * w + fourier.from_grid(w3 * (inner + alpha[:, None]), m)

        u_r = fourier.to_real(u).ravel()
        eta = np.array([self._row_rot @ u_r, self._row_phase @ u_r, 2 * np.pi * u[2, 0].real])

        w0 = self._e0 @ fourier.to_real(w).T                    # (n-1,)
        u_r3 = fourier.to_real(u)                               # (3, r)
        u_at0 = u_r3 @ self._e0                                 # (3,)
        u_at_tau = u_r3 @ self._etau.T                          # (3, n-1)
        d0 = u_at0[None, :] - np.einsum("jcd,dj->jc", self.R, u_at_tau)
        gamma = w0 ** 2 * np.sum(d0 ** 2, axis=1) - 1.0

        diagnostic = None
        if np.any(w[:, 0].real <= 0) or np.any(np.abs(gamma) > 10):
            diagnostic = "collision guard: regularized distances degenerate"
            log.warning(diagnostic)
        return Residual(eta, gamma, f, g, h, diagnostic)

    def residual(self, X: np.ndarray) -> np.ndarray:
        return self.residual_blocks(X).to_real()

    # ------------------------------------------------------------------
    def _mult(self, weights: np.ndarray) -> np.ndarray:
        """Real-form matrices of ``a -> proj(weight * a)``, batched over leading axes."""
        weights = np.asarray(weights)
        lead = weights.shape[:-1]
        flat = weights.reshape(-1, self.grid)
        out = np.empty((flat.shape[0], self.layout.r, self.layout.r))
        for i, gw in enumerate(flat):
            out[i] = self._A @ (gw[:, None] * self._E)
        return out.reshape(lead + out.shape[1:])

    def jacobian(self, X: np.ndarray) -> np.ndarray:
        """Dense ``N x (N+1)`` Jacobian, last column ``dF/d omega``."""
        lam, alpha, u, v, w, omega, d, dg, dvg, wg = self._pieces(X)
        lay, r, n = self.layout, self.layout.r, self.n
        s1, rs1 = self.params.s1, self.sqrt_s1
        N = lay.size
        J = np.zeros((N, N + 1))
        I = np.eye(r)
        Dm = self._D
        w2 = wg ** 2
        w3 = w2 * wg
        inner = np.einsum("jcM,jcM->jM", dvg, dg)

        # L[j, c, c'] = d d_{j,c} / d u_{c'} in real form
        L = np.einsum("cd,rs->cdrs", np.eye(3), I)[None] - np.einsum(
            "jcd,jrs->jcdrs", self.R, self._S)

        mult_w3 = self._mult(w3)                                # (n-1, r, r)
        mult_dw = self._mult(3 * w2[:, None, :] * dg)           # (n-1, 3, r, r)
        mult_h_u = self._mult(w3[:, None, :] * dvg)             # (n-1, 3, r, r)
        mult_h_v = self._mult(w3[:, None, :] * dg)              # (n-1, 3, r, r)
        mult_h_w = self._mult(3 * w2 * (inner + alpha[:, None]))  # (n-1, r, r)

        u_r = fourier.to_real(u)
        v_r = fourier.to_real(v)
        ju_r = JBAR @ u_r
        jv_r = JBAR @ v_r

        # eta
        J[0, lay.u] = self._row_rot
        J[1, lay.u] = self._row_phase
        J[2, lay.u_comp(2).start] = 2 * np.pi

        # gamma
        w0 = self._e0 @ fourier.to_real(w).T
        u_at0 = u_r @ self._e0
        u_at_tau = u_r @ self._etau.T
        d0 = u_at0[None, :] - np.einsum("jcd,dj->jc", self.R, u_at_tau)
        for j in range(n - 1):
            row = lay.gamma.start + j
            J[row, lay.w_comp(j)] = 2 * w0[j] * np.sum(d0[j] ** 2) * self._e0
            for cp in range(3):
                grad = np.zeros(r)
                for c in range(3):
                    grad += d0[j, c] * ((c == cp) * self._e0 - self.R[j, c, cp] * self._etau[j])
                J[row, lay.u_comp(cp)] = 2 * w0[j] ** 2 * grad

        # f
        for c in range(3):
            J[lay.f_comp(c), lay.u_comp(c)] = Dm
            J[lay.f_comp(c), lay.v_comp(c)] = -I

        # g
        for c in range(3):
            rows = lay.g_comp(c)
            for cp in range(3):
                block_v = 2 * omega * rs1 * JBAR[c, cp] * I
                block_u = (-s1 * IBAR[c, cp] + lam[0] * JBAR[c, cp]) * I
                if c == cp:
                    block_v = block_v + omega ** 2 * Dm + lam[1] * I
                block_u = block_u + np.einsum("jrs,jst->rt", mult_w3, L[:, c, cp])
                J[rows, lay.v_comp(cp)] = block_v
                J[rows, lay.u_comp(cp)] = block_u
            for j in range(n - 1):
                J[rows, lay.w_comp(j)] = mult_dw[j, c]
            J[rows, lay.lam.start] = ju_r[c]
            J[rows, lay.lam.start + 1] = v_r[c]
            J[rows, N] = 2 * omega * (Dm @ v_r[c]) + 2 * rs1 * jv_r[c]
        J[lay.g_comp(2).start, lay.lam.start + 2] = 1.0

        # h
        w3_coef = fourier.to_real(fourier.from_grid(w3, self.m))
        for j in range(n - 1):
            rows = lay.h_comp(j)
            J[rows, lay.w_comp(j)] = Dm + mult_h_w[j]
            J[rows, lay.alpha.start + j] = w3_coef[j]
            for cp in range(3):
                J[rows, lay.u_comp(cp)] = sum(mult_h_u[j, c] @ L[j, c, cp] for c in range(3))
                J[rows, lay.v_comp(cp)] = sum(mult_h_v[j, c] @ L[j, c, cp] for c in range(3))
        return J


# ---------------------------------------------------------------------------
# functional front end
# ---------------------------------------------------------------------------

def eval_F(X: StateVector, ref: ReferencePhase, params: ModelParams) -> Residual:
    return AugmentedSystem(params, ref).residual_blocks(X.to_real())


def eval_jacobian(X: StateVector, ref: ReferencePhase, params: ModelParams) -> np.ndarray:
    return AugmentedSystem(params, ref).jacobian(X.to_real())


def polygon_reference(params: ModelParams) -> ReferencePhase:
    """Reference used while leaving the polygon: ``(1, 0, sin t)``.

    Its planar part pins the xy-rotation, its vertical part the time shift.
    """
    from .model import polygon_state, vertical_tangent

    X = polygon_state(params).to_real() + vertical_tangent(params)
    return set_reference(StateVector.from_real(X, params.n))


def dde_nonlinearity(u_grid: np.ndarray, params: ModelParams, t: np.ndarray,
                     u_of) -> np.ndarray:
    """``G(u)(t) = sum_j (u - R_j u(t+tau_j)) / |u - R_j u(t+tau_j)|^3`` on samples.

    ``u_grid`` holds ``u(t)`` with shape ``(len(t), 3)``; ``u_of(s)`` evaluates
    ``u`` at arbitrary times.
    """
    total = np.zeros_like(u_grid)
    for R, tau in zip(params.rotations, params.delays):
        d = u_grid - u_of(t + tau) @ R.T
        total += d / np.linalg.norm(d, axis=1, keepdims=True) ** 3
    return total
