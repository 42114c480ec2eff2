"""Truncated Fourier series of real 2pi-periodic functions.

A series of order ``m`` keeps the modes ``|l| < m`` as the two-sided complex
sequence ``c[-(m-1)], ..., c[m-1]`` with ``c[-l] = conj(c[l])``.  Differentiation
and time shifts are diagonal in this basis, products are truncated
convolutions.

Besides the value types the module exposes array-level helpers working on the
*one-sided* half ``c[0], ..., c[m-1]`` (shape ``(..., m)``); the augmented
system uses those directly to avoid object overhead in the Newton loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REALITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# array helpers (one-sided storage)
# ---------------------------------------------------------------------------

def modes(m: int) -> np.ndarray:
    return np.arange(m)


def deriv_factors(m: int) -> np.ndarray:
    return 1j * np.arange(m)


def shift_factors(m: int, tau: float) -> np.ndarray:
    ell = np.arange(m)
    return np.cos(ell * tau) + 1j * np.sin(ell * tau)


def grid_size(m: int, degree: int = 5) -> int:
    """Smallest power of two that evaluates a degree-``degree`` product of
    order-``m`` series without aliasing into the kept modes."""
    need = (degree + 1) * (m - 1) + 1
    size = 8
    while size < need:
        size *= 2
    return size


def to_grid(c: np.ndarray, size: int) -> np.ndarray:
    """Values at ``t_k = 2 pi k / size`` of the series with one-sided coeffs ``c``."""
    m = c.shape[-1]
    if size < 2 * m:
        raise ValueError(f"grid of {size} points cannot resolve order {m}")
    spec = np.zeros(c.shape[:-1] + (size // 2 + 1,), dtype=complex)
    spec[..., :m] = c
    return np.fft.irfft(spec, n=size, axis=-1) * size


def from_grid(f: np.ndarray, m: int) -> np.ndarray:
    """One-sided coefficients ``|l| < m`` of real grid samples ``f``."""
    size = f.shape[-1]
    c = np.fft.rfft(f, axis=-1)[..., :m] / size
    c[..., 0] = c[..., 0].real
    return c


def to_real(c: np.ndarray) -> np.ndarray:
    """One-sided complex coeffs ``(..., m)`` -> real vector ``(..., 2m-1)``
    ordered ``(c0, Re c1, Im c1, ..., Re c_{m-1}, Im c_{m-1})``."""
    m = c.shape[-1]
    r = np.empty(c.shape[:-1] + (2 * m - 1,))
    r[..., 0] = c[..., 0].real
    r[..., 1::2] = c[..., 1:].real
    r[..., 2::2] = c[..., 1:].imag
    return r


def from_real(r: np.ndarray) -> np.ndarray:
    size = r.shape[-1]
    if size % 2 != 1:
        raise ValueError("real parameterization must have odd length 2m-1")
    m = (size + 1) // 2
    c = np.empty(r.shape[:-1] + (m,), dtype=complex)
    c[..., 0] = r[..., 0]
    c[..., 1:] = r[..., 1::2] + 1j * r[..., 2::2]
    return c


def pairing_weights(m: int) -> np.ndarray:
    """Weights ``W`` with ``int_0^{2pi} a b dt = a_r @ (W * b_r)`` in real form."""
    w = np.full(2 * m - 1, 4.0 * np.pi)
    w[0] = 2.0 * np.pi
    return w


def eval_row(m: int, t: float) -> np.ndarray:
    """Row vector ``e`` with ``a(t) = e @ a_r`` for real-form coefficients."""
    ell = np.arange(1, m)
    e = np.empty(2 * m - 1)
    e[0] = 1.0
    e[1::2] = 2.0 * np.cos(ell * t)
    e[2::2] = -2.0 * np.sin(ell * t)
    return e


# real-form operator matrices --------------------------------------------

def deriv_matrix(m: int) -> np.ndarray:
    """``d/dt`` acting on the real parameterization."""
    r = 2 * m - 1
    D = np.zeros((r, r))
    for ell in range(1, m):
        re, im = 2 * ell - 1, 2 * ell
        D[re, im] = -ell
        D[im, re] = ell
    return D


def shift_matrix(m: int, tau: float) -> np.ndarray:
    """``a(t) -> a(t + tau)`` acting on the real parameterization."""
    r = 2 * m - 1
    S = np.zeros((r, r))
    S[0, 0] = 1.0
    for ell in range(1, m):
        re, im = 2 * ell - 1, 2 * ell
        c, s = np.cos(ell * tau), np.sin(ell * tau)
        S[re, re], S[re, im] = c, -s
        S[im, re], S[im, im] = s, c
    return S


def synthesis_matrix(m: int, size: int) -> np.ndarray:
    """``(size, 2m-1)`` matrix mapping real-form coefficients to grid values."""
    t = 2.0 * np.pi * np.arange(size) / size
    ell = np.arange(1, m)
    E = np.empty((size, 2 * m - 1))
    E[:, 0] = 1.0
    E[:, 1::2] = 2.0 * np.cos(np.outer(t, ell))
    E[:, 2::2] = -2.0 * np.sin(np.outer(t, ell))
    return E


def analysis_matrix(m: int, size: int) -> np.ndarray:
    """``(2m-1, size)`` matrix mapping grid values to real-form coefficients."""
    t = 2.0 * np.pi * np.arange(size) / size
    ell = np.arange(1, m)
    A = np.empty((2 * m - 1, size))
    A[0] = 1.0 / size
    A[1::2] = np.cos(np.outer(ell, t)) / size
    A[2::2] = -np.sin(np.outer(ell, t)) / size
    return A


def _pow2_at_least(k: int) -> int:
    size = 1
    while size < k:
        size *= 2
    return size


def convolve_truncated(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Truncated convolution of one-sided coefficient arrays via padded FFT."""
    m = a.shape[-1]
    size = _pow2_at_least(2 * (2 * m - 1))
    prod = to_grid(a, size) * to_grid(b, size)
    return from_grid(prod, m)


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

def _mirror(half: np.ndarray) -> np.ndarray:
    half = np.asarray(half, dtype=complex).copy()
    half[0] = half[0].real
    return np.concatenate([np.conj(half[:0:-1]), half])


@dataclass(frozen=True)
class FourierScalar:
    """Real trigonometric polynomial of order ``m`` (modes ``|l| < m``).

    ``coeffs[l + m - 1]`` holds ``c_l``.  Construction rejects sequences that
    violate ``c_{-l} = conj(c_l)`` beyond round-off and stores the exactly
    symmetrized sequence.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 != 1 or c.size < 3:
            raise ValueError(f"need 2m-1 coefficients with m >= 2, got shape {c.shape}")
        m = (c.size + 1) // 2
        scale = 1.0 + np.max(np.abs(c))
        if np.max(np.abs(c[::-1] - np.conj(c))) > REALITY_TOL * scale:
            raise ValueError("coefficients are not conjugate symmetric")
        sym = _mirror(0.5 * (c[m - 1:] + np.conj(c[m - 1::-1])))
        sym.setflags(write=False)
        object.__setattr__(self, "coeffs", sym)

    @property
    def order(self) -> int:
        return (self.coeffs.size + 1) // 2

    @property
    def half(self) -> np.ndarray:
        """One-sided view ``c_0, ..., c_{m-1}``."""
        return self.coeffs[self.order - 1:]

    def __getitem__(self, ell: int) -> complex:
        m = self.order
        if abs(ell) >= m:
            return 0j
        return complex(self.coeffs[ell + m - 1])

    @classmethod
    def from_half(cls, half) -> "FourierScalar":
        return cls(_mirror(half))

    @classmethod
    def zeros(cls, m: int) -> "FourierScalar":
        return cls(np.zeros(2 * m - 1, dtype=complex))

    @classmethod
    def constant(cls, value: float, m: int) -> "FourierScalar":
        half = np.zeros(m, dtype=complex)
        half[0] = value
        return cls.from_half(half)

    @classmethod
    def from_real(cls, r) -> "FourierScalar":
        return cls.from_half(from_real(np.asarray(r, dtype=float)))

    @classmethod
    def from_samples(cls, f, m: int) -> "FourierScalar":
        return cls.from_half(from_grid(np.asarray(f, dtype=float), m))

    def to_real(self) -> np.ndarray:
        return to_real(self.half)

    def samples(self, size: int) -> np.ndarray:
        return to_grid(self.half, size)

    def is_real_symmetric(self) -> bool:
        return bool(np.array_equal(self.coeffs[::-1], np.conj(self.coeffs)))

    def __add__(self, other: "FourierScalar") -> "FourierScalar":
        _check_orders(self, other)
        return FourierScalar.from_half(self.half + other.half)

    def __sub__(self, other: "FourierScalar") -> "FourierScalar":
        _check_orders(self, other)
        return FourierScalar.from_half(self.half - other.half)

    def __mul__(self, scalar: float) -> "FourierScalar":
        return FourierScalar.from_half(self.half * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class FourierVec3:
    """Three scalar series of a common order (a curve in R^3)."""

    components: tuple[FourierScalar, FourierScalar, FourierScalar]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != 3:
            raise ValueError("FourierVec3 needs exactly three components")
        if len({c.order for c in comps}) != 1:
            raise ValueError("components must share the same order")
        object.__setattr__(self, "components", comps)

    @property
    def order(self) -> int:
        return self.components[0].order

    @property
    def half(self) -> np.ndarray:
        return np.stack([c.half for c in self.components])

    @classmethod
    def from_half(cls, half) -> "FourierVec3":
        return cls(tuple(FourierScalar.from_half(h) for h in half))

    def __getitem__(self, i: int) -> FourierScalar:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def map(self, op, *args) -> "FourierVec3":
        return FourierVec3(tuple(op(c, *args) for c in self.components))

    def samples(self, size: int) -> np.ndarray:
        """``(size, 3)`` array of points on the curve."""
        return to_grid(self.half, size).T


def _check_orders(a: FourierScalar, b: FourierScalar) -> None:
    if a.order != b.order:
        raise ValueError(f"order mismatch: {a.order} vs {b.order}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def differentiate(a: FourierScalar) -> FourierScalar:
    return FourierScalar.from_half(a.half * deriv_factors(a.order))


def delay_shift(a: FourierScalar, tau: float) -> FourierScalar:
    """Coefficients of ``t -> a(t + tau)``."""
    return FourierScalar.from_half(a.half * shift_factors(a.order, tau))


def product(a: FourierScalar, b: FourierScalar) -> FourierScalar:
    """Pointwise product truncated back to the common order."""
    _check_orders(a, b)
    return FourierScalar.from_half(convolve_truncated(a.half, b.half))


def integral_pairing(a: FourierScalar, b: FourierScalar) -> float:
    """``int_0^{2 pi} a(t) b(t) dt``."""
    _check_orders(a, b)
    value = 2.0 * np.pi * np.sum(a.coeffs * b.coeffs[::-1])
    if abs(value.imag) >= 1e-10 * (1.0 + abs(value.real)):
        raise ValueError("pairing of reality-symmetric series is not real")
    return float(value.real)


def evaluate_at(a: FourierScalar, t: float) -> float:
    m = a.order
    ell = np.arange(-(m - 1), m)
    value = np.sum(a.coeffs * np.exp(1j * ell * t))
    if abs(value.imag) >= 1e-10 * (1.0 + abs(value.real)):
        raise ValueError("series does not evaluate to a real number")
    return float(value.real)
