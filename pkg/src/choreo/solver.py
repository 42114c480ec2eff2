"""Dense linear algebra for the continuation: Newton, determinant sign,
condition number and near-kernel extraction."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class NotSimpleBranchPoint(RuntimeError):
    pass


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    final_residual: float
    final_step: float
    history: list[float] = field(default_factory=list, repr=False)
    reason: str = ""


def newton_correct(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol_residual: float = 1e-10,
    tol_step: float = 1e-12,
    max_iter: int = 20,
) -> tuple[np.ndarray, NewtonReport]:
    """Undamped Newton iteration for a square system.

    Stops once the residual sup norm drops below ``tol_residual`` or the step
    below ``tol_step``; reports failure on a singular solve, after
    ``max_iter`` iterations, or when the residual grows three times in a row.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = fun(x)
    res = float(np.max(np.abs(r)))
    history = [res]
    step = np.inf
    growth = 0
    it = 0
    reason = ""
    while res >= tol_residual:
        if it >= max_iter:
            reason = "iteration limit"
            break
        A = jac(x)
        try:
            with np.errstate(all="raise"), warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(A, check_finite=True)
                if np.min(np.abs(np.diag(lu[0]))) == 0.0:
                    raise np.linalg.LinAlgError("exactly singular")
                dx = scipy.linalg.lu_solve(lu, r)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError,
                FloatingPointError) as exc:
            reason = f"singular linear solve: {exc}"
            break
        x -= dx
        it += 1
        step = float(np.max(np.abs(dx)))
        r = fun(x)
        new_res = float(np.max(np.abs(r)))
        if not np.isfinite(new_res):
            res = new_res
            history.append(res)
            reason = "non-finite residual"
            break
        growth = growth + 1 if new_res > res else 0
        res = new_res
        history.append(res)
        if growth >= 3:
            reason = "diverging"
            break
        if step < tol_step:
            break
    converged = bool(np.isfinite(res) and res < tol_residual)
    if not converged and not reason:
        reason = "stagnated"
    return x, NewtonReport(converged, it, res, step, history, reason)


def det_sign(A: np.ndarray) -> int:
    """Sign of ``det(A)`` from a partially pivoted LU factorization.

    Returns 0 when a pivot falls below ``1e-14`` times the largest one.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("det_sign needs a square matrix")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    diag = np.diag(lu)
    pmax = np.max(np.abs(diag))
    if pmax == 0.0 or np.min(np.abs(diag)) < 1e-14 * pmax:
        return 0
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    sign = (-1) ** swaps * np.prod(np.sign(diag))
    return int(sign)


def condition_estimate(A: np.ndarray) -> float:
    """``sigma_max / sigma_min`` by SVD (1e300 when numerically singular)."""
    s = scipy.linalg.svdvals(np.asarray(A, dtype=float), check_finite=False)
    if s[-1] < 1e-300:
        return 1e300
    return float(s[0] / s[-1])


def kernel_basis(A: np.ndarray, count: int, small: float = 1e-6,
                 gap: float = 1e-3) -> list[np.ndarray]:
    """Right singular vectors of the ``count`` smallest singular values of a
    wide ``N x (N+1)`` matrix.

    The implicit zero singular value of the extra column counts as the
    smallest.  For ``count == 2`` the numerical rank deficiency must be
    exactly two: both small values below ``small * sigma_max`` and the next
    one above ``gap * sigma_max``.
    """
    if count not in (1, 2):
        raise ValueError("count must be 1 or 2")
    A = np.asarray(A, dtype=float)
    _, s, Vt = scipy.linalg.svd(A, full_matrices=True, check_finite=False)
    ncols = A.shape[1]
    sig = np.zeros(ncols)
    sig[: s.size] = s
    if count == 2:
        smax = sig[0]
        if not (sig[-1] < small * smax and sig[-2] < small * smax and sig[-3] > gap * smax):
            raise NotSimpleBranchPoint(
                "not a simple branching point: singular values "
                f"{sig[-3]:.3e}, {sig[-2]:.3e}, {sig[-1]:.3e} (max {smax:.3e})")
    return [Vt[-1 - i].copy() for i in range(count)]


def singular_values(A: np.ndarray) -> np.ndarray:
    """Singular values of a wide matrix padded with the implicit zero."""
    s = scipy.linalg.svdvals(np.asarray(A, dtype=float), check_finite=False)
    pad = max(A.shape) - s.size
    return np.concatenate([s, np.zeros(pad)])
