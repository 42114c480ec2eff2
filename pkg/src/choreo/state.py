"""Unknowns of the augmented system and their flat real parameterization.

The flat vector is ordered ``(lambda[3], alpha[n-1], u[3], v[3], w[n-1], omega)``
where every series block is stored in the real form of
:func:`choreo.fourier.to_real`.  Its length is ``2m(n+5) - 3 + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fourier
from .fourier import FourierScalar, FourierVec3


@dataclass(frozen=True)
class Layout:
    n: int
    m: int

    @property
    def r(self) -> int:
        """Real length of one scalar series."""
        return 2 * self.m - 1

    @property
    def lam(self) -> slice:
        return slice(0, 3)

    @property
    def alpha(self) -> slice:
        return slice(3, 3 + self.n - 1)

    @property
    def u(self) -> slice:
        start = self.alpha.stop
        return slice(start, start + 3 * self.r)

    @property
    def v(self) -> slice:
        start = self.u.stop
        return slice(start, start + 3 * self.r)

    @property
    def w(self) -> slice:
        start = self.v.stop
        return slice(start, start + (self.n - 1) * self.r)

    @property
    def omega(self) -> int:
        return self.w.stop

    @property
    def size(self) -> int:
        """``N``: number of equations, also number of unknowns besides omega."""
        return self.w.stop

    def u_comp(self, c: int) -> slice:
        return slice(self.u.start + c * self.r, self.u.start + (c + 1) * self.r)

    def v_comp(self, c: int) -> slice:
        return slice(self.v.start + c * self.r, self.v.start + (c + 1) * self.r)

    def w_comp(self, j: int) -> slice:
        """Block of ``w_{j+1}`` (``j`` is zero based)."""
        return slice(self.w.start + j * self.r, self.w.start + (j + 1) * self.r)

    # residual blocks share the offsets of the unknowns:
    # eta <-> lambda, gamma <-> alpha, f <-> u, g <-> v, h <-> w
    eta = lam
    gamma = alpha
    f = u
    g = v
    h = w
    f_comp = u_comp
    g_comp = v_comp
    h_comp = w_comp


def expected_size(n: int, m: int) -> int:
    return 2 * m * (n + 5) - 3


@dataclass
class StateVector:
    """``X = (lambda, alpha, u, v, w, omega)`` with one-sided coefficient arrays.

    ``u``, ``v`` have shape ``(3, m)``, ``w`` has shape ``(n-1, m)``; entries are
    the modes ``l = 0..m-1`` (negative modes are their conjugates).
    """

    lam: np.ndarray
    alpha: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    omega: float

    @property
    def n(self) -> int:
        return self.w.shape[0] + 1

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def layout(self) -> Layout:
        return Layout(self.n, self.m)

    @classmethod
    def zeros(cls, n: int, m: int, omega: float = 0.0) -> "StateVector":
        return cls(np.zeros(3), np.zeros(n - 1), np.zeros((3, m), complex),
                   np.zeros((3, m), complex), np.zeros((n - 1, m), complex), omega)

    def to_real(self) -> np.ndarray:
        lay = self.layout
        X = np.empty(lay.size + 1)
        X[lay.lam] = self.lam
        X[lay.alpha] = self.alpha
        X[lay.u] = fourier.to_real(self.u).ravel()
        X[lay.v] = fourier.to_real(self.v).ravel()
        X[lay.w] = fourier.to_real(self.w).ravel()
        X[lay.omega] = self.omega
        return X

    @classmethod
    def from_real(cls, X: np.ndarray, n: int) -> "StateVector":
        X = np.asarray(X, dtype=float)
        m = (X.size - 1 + 3) // (2 * (n + 5))
        lay = Layout(n, m)
        if lay.size + 1 != X.size:
            raise ValueError(f"vector of length {X.size} does not fit n={n}")
        return cls(
            lam=X[lay.lam].copy(),
            alpha=X[lay.alpha].copy(),
            u=fourier.from_real(X[lay.u].reshape(3, lay.r)),
            v=fourier.from_real(X[lay.v].reshape(3, lay.r)),
            w=fourier.from_real(X[lay.w].reshape(n - 1, lay.r)),
            omega=float(X[lay.omega]),
        )

    def u_series(self) -> FourierVec3:
        return FourierVec3.from_half(self.u)

    def v_series(self) -> FourierVec3:
        return FourierVec3.from_half(self.v)

    def w_series(self) -> list[FourierScalar]:
        return [FourierScalar.from_half(row) for row in self.w]

    def copy(self) -> "StateVector":
        return StateVector(self.lam.copy(), self.alpha.copy(), self.u.copy(),
                           self.v.copy(), self.w.copy(), float(self.omega))


def u_from_real(X: np.ndarray, n: int, m: int) -> np.ndarray:
    """One-sided ``u`` coefficients ``(3, m)`` straight from a flat vector."""
    lay = Layout(n, m)
    return fourier.from_real(np.asarray(X)[lay.u].reshape(3, lay.r))
