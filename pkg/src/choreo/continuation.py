"""Pseudo-arclength continuation from the polygon to the figure eight.

The engine works on flat real vectors ``X = (x, omega)`` of length ``N + 1``.
Each step predicts along the unit tangent, then corrects with Newton on
``(T0 . (X - X_pred), F(X)) = 0``.  On the vertical family it watches the sign
of ``det [T0^T; DF(X)]`` together with the condition number; a flip above the
threshold is bisected down to a simple branch point, where the kernel of
``DF`` supplies the direction of the symmetry-broken branch.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import fourier
from .augmented import AugmentedSystem, polygon_reference, set_reference
from .model import ModelParams, polygon_state, vertical_tangent
from .solver import (NewtonReport, NotSimpleBranchPoint, condition_estimate,
                     det_sign, kernel_basis, newton_correct)
from .state import Layout, StateVector

log = logging.getLogger(__name__)

AMPLITUDE_MEASURES = ("sup_u3", "l2_u")


class ContinuationError(RuntimeError):
    """A pipeline stage failed; ``stage`` and ``step`` say where."""

    def __init__(self, message: str, stage: str = "", step: int | None = None,
                 states: tuple = ()):
        where = f"[{stage}" + (f" @ step {step}" if step is not None else "") + "] " if stage else ""
        super().__init__(where + message)
        self.stage = stage
        self.step = step
        self.states = states


class NearBranchPoint(ContinuationError):
    pass


@dataclass
class ContinuationConfig:
    ds: float = 1e-3
    ds_min: float = 1e-6
    ds_max: float = 1e-2
    cond_threshold: float = 1e3
    bisect_tol: float = 1e-8
    max_steps: int = 3000
    amplitude_measure: str = "sup_u3"
    grow: float = 1.3
    easy_iterations: int = 3
    tol_residual: float = 1e-10
    max_newton: int = 20
    # sigma_max grows with m through the derivative columns, so the
    # separation of the third singular value is judged on a looser scale here
    kernel_gap: float = 1e-5
    # steps archived on the discarded side of the pitchfork
    mirror_steps: int = 10

    def __post_init__(self):
        if not 0 < self.ds_min <= self.ds <= self.ds_max:
            raise ValueError("need 0 < ds_min <= ds <= ds_max")
        if self.amplitude_measure not in AMPLITUDE_MEASURES:
            raise ValueError(f"unknown amplitude measure {self.amplitude_measure!r}")


@dataclass
class BranchRecord:
    step: int
    omega: float
    arclength: float
    amplitude: float
    det_sign: int
    condition: float
    morse_index: int | None = None
    state_ref: str = ""
    segment: str = "vertical"
    ds: float = 0.0
    newton_iterations: int = 0
    residual: float = 0.0
    symmetry_breaking: float = 0.0
    tangent_omega: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BranchRecord":
        return cls(**d)


@dataclass
class BranchPoint:
    X_bif: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    switch_tangent: np.ndarray
    incoming_tangent: np.ndarray
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step: int = -1
    # arclength from the last record before the flip
    offset: float = 0.0


@dataclass
class BranchArchive:
    """Accepted continuation steps with their full states."""

    params: ModelParams
    config: ContinuationConfig
    records: list[BranchRecord] = field(default_factory=list)
    states: dict[str, np.ndarray] = field(default_factory=dict)
    branch_point: BranchPoint | None = None
    switches: int = 0
    eight_key: str | None = None
    folds: int = 0
    events: list[str] = field(default_factory=list)

    def add(self, record: BranchRecord, X: np.ndarray) -> BranchRecord:
        record.state_ref = f"{record.step:05d}"
        self.records.append(record)
        self.states[record.state_ref] = np.array(X, copy=True)
        return record

    def state(self, key) -> np.ndarray:
        if isinstance(key, int):
            key = f"{key:05d}"
        return self.states[key]

    def segment(self, name: str) -> list[BranchRecord]:
        return [r for r in self.records if r.segment == name]


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def amplitude(X: np.ndarray, params: ModelParams, measure: str = "sup_u3") -> float:
    lay = Layout(params.n, params.m)
    u = fourier.from_real(X[lay.u].reshape(3, lay.r))
    if measure == "sup_u3":
        return float(np.max(np.abs(fourier.to_grid(u[2], 4 * params.m))))
    if measure == "l2_u":
        osc = u.copy()
        osc[:, 0] = 0
        return float(np.sqrt(np.sum(np.abs(osc) ** 2) * 2))
    raise ValueError(measure)


def symmetry_breaking(X: np.ndarray, params: ModelParams) -> float:
    """Size of the modes that vanish on the vertical family.

    The vertical family is invariant under ``u(t) -> diag(1, 1, -1) u(t + pi)``,
    so its planar components carry only even modes and its vertical component
    only odd ones.  Returns the largest odd planar / even vertical coefficient.
    """
    lay = Layout(params.n, params.m)
    u = fourier.from_real(X[lay.u].reshape(3, lay.r))
    odd_planar = np.abs(u[:2, 1::2])
    even_vertical = np.abs(u[2, 2::2])
    return float(max(odd_planar.max(initial=0.0), even_vertical.max(initial=0.0)))


def spectral_tail(X: np.ndarray, params: ModelParams, fraction: float = 0.1) -> float:
    """Largest coefficient among the top ``fraction`` of modes relative to the
    largest coefficient overall (series blocks only)."""
    lay = Layout(params.n, params.m)
    blocks = [X[lay.u].reshape(3, lay.r), X[lay.v].reshape(3, lay.r),
              X[lay.w].reshape(params.n - 1, lay.r)]
    coeffs = np.abs(np.concatenate([fourier.from_real(b) for b in blocks]))
    top = max(1, int(math.ceil(fraction * params.m)))
    return float(coeffs[:, -top:].max() / coeffs.max())


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def tangent_vector(system: AugmentedSystem, X: np.ndarray, previous: np.ndarray | None = None,
                   seed_projection: bool = False, rank_tol: float = 1e-9) -> np.ndarray:
    """Unit tangent of the solution curve through ``X``; see :func:`null_direction`."""
    return null_direction(system.jacobian(X), previous, seed_projection, rank_tol)


def null_direction(jac: np.ndarray, previous: np.ndarray | None = None,
                   seed_projection: bool = False, rank_tol: float = 1e-9) -> np.ndarray:
    """Unit null vector of the ``N x (N+1)`` Jacobian, oriented along ``previous``.

    A null space of dimension > 1 raises :class:`NearBranchPoint`, unless
    ``seed_projection`` is set, in which case ``previous`` is projected onto
    the numerical null space (used to leave the polygon, where the kernel
    also contains the trivial directions).
    """
    _, s, Vt = scipy.linalg.svd(jac, full_matrices=True, check_finite=False)
    ncols = jac.shape[1]
    sig = np.zeros(ncols)
    sig[: s.size] = s
    null = sig < rank_tol * sig[0]
    if null.sum() > 1:
        if not (seed_projection and previous is not None):
            raise NearBranchPoint(f"null space has dimension {int(null.sum())}: "
                                  "at or near a branch point", stage="tangent")
        basis = Vt[null]
        t = basis.T @ (basis @ previous)
    else:
        t = Vt[-1].copy()
    t /= np.linalg.norm(t)
    if previous is not None and t @ previous < 0:
        t = -t
    return t


def bordered_tangent(jac: np.ndarray, previous: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Tangent from ``[J; previous^T] t = e_{N+1}``; also returns the LU of the
    bordered matrix ``[previous^T; J]`` ordering used for the determinant."""
    A = np.vstack([previous[None, :], jac])
    lu = scipy.linalg.lu_factor(A, check_finite=False)
    rhs = np.zeros(A.shape[0])
    rhs[0] = 1.0
    t = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
    t /= np.linalg.norm(t)
    return t, lu


def _lu_det_sign(lu) -> int:
    a, piv = lu
    diag = np.diag(a)
    pmax = np.max(np.abs(diag))
    if np.min(np.abs(diag)) < 1e-14 * pmax:
        return 0
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    return int((-1) ** swaps * np.prod(np.sign(diag)))


@dataclass
class StepResult:
    X: np.ndarray
    tangent: np.ndarray
    report: NewtonReport
    ds: float
    jac: np.ndarray
    det_sign: int
    condition: float


def correct(system: AugmentedSystem, X_pred: np.ndarray, direction: np.ndarray,
            config: ContinuationConfig) -> tuple[np.ndarray, NewtonReport]:
    """Newton on the pseudo-arclength map with hyperplane through ``X_pred``."""

    def fun(X):
        return np.concatenate([[direction @ (X - X_pred)], system.residual(X)])

    def jac(X):
        return np.vstack([direction[None, :], system.jacobian(X)])

    return newton_correct(fun, jac, X_pred, tol_residual=config.tol_residual,
                          max_iter=config.max_newton)


def step(system: AugmentedSystem, X0: np.ndarray, T0: np.ndarray,
         config: ContinuationConfig, ds: float | None = None,
         with_condition: bool = True) -> StepResult:
    """One predictor-corrector step with step-size halving on failure."""
    ds = config.ds if ds is None else ds
    while True:
        X_pred = X0 + ds * T0
        X1, report = correct(system, X_pred, T0, config)
        if report.converged:
            break
        log.debug("newton failed at ds=%.3e (%s); halving", ds, report.reason)
        ds *= 0.5
        if ds < config.ds_min:
            raise ContinuationError(
                f"step size fell below ds_min={config.ds_min:g} ({report.reason})",
                stage="step", states=(X0,))
    J1 = system.jacobian(X1)
    T1, lu = bordered_tangent(J1, T0)
    if T1 @ T0 < 0:
        T1 = -T1
    sign = _lu_det_sign(lu)
    cond = condition_estimate(np.vstack([T0[None, :], J1])) if with_condition else float("nan")
    return StepResult(X1, T1, report, ds, J1, sign, cond)


def next_step_size(ds: float, report: NewtonReport, config: ContinuationConfig) -> float:
    if report.iterations <= config.easy_iterations:
        return min(ds * config.grow, config.ds_max)
    return ds


# ---------------------------------------------------------------------------
# branch points
# ---------------------------------------------------------------------------

def switch_direction(phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    """Kernel combination with no component along omega."""
    t = phi2[-1] * phi1 - phi1[-1] * phi2
    t[-1] = 0.0
    return t / np.linalg.norm(t)


def locate_branch_point(system: AugmentedSystem, X_a: np.ndarray, T_a: np.ndarray,
                        ds_ab: float, config: ContinuationConfig,
                        sign_a: int | None = None) -> BranchPoint:
    """Bisect the step length from ``X_a`` along ``T_a`` until the determinant
    flip is bracketed within ``bisect_tol``; return the branch point.

    The determinant is always taken of ``[T_a^T; DF(X)]`` so that both ends of
    the bracket use the same bordering row.
    """
    def sign_at(ds):
        X_pred = X_a + ds * T_a
        X, report = correct(system, X_pred, T_a, config)
        if not report.converged:
            raise ContinuationError(f"bisection corrector failed at ds={ds:.3e}",
                                    stage="locate")
        return X, det_sign(np.vstack([T_a[None, :], system.jacobian(X)]))

    if sign_a is None:
        sign_a = det_sign(np.vstack([T_a[None, :], system.jacobian(X_a)]))
    lo, hi = 0.0, ds_ab
    X_hi, sign_hi = sign_at(hi)
    if sign_hi == sign_a:
        raise ContinuationError("no determinant flip inside the bracket", stage="locate")
    while hi - lo > config.bisect_tol:
        mid = 0.5 * (lo + hi)
        X_mid, s_mid = sign_at(mid)
        if s_mid == sign_a:
            lo = mid
        else:
            hi, X_hi = mid, X_mid
    X_bif, _ = sign_at(0.5 * (lo + hi))
    J = system.jacobian(X_bif)
    try:
        phi1, phi2 = kernel_basis(J, 2, gap=config.kernel_gap)
    except NotSimpleBranchPoint as exc:
        raise ContinuationError(str(exc), stage="locate") from exc
    s = scipy.linalg.svdvals(J, check_finite=False)
    return BranchPoint(X_bif=X_bif, phi1=phi1, phi2=phi2,
                       switch_tangent=switch_direction(phi1, phi2),
                       incoming_tangent=T_a.copy(), singular_values=s[-4:],
                       offset=0.5 * (lo + hi))


def switch_branch(system: AugmentedSystem, bp: BranchPoint, config: ContinuationConfig,
                  sign: int = 1) -> tuple[np.ndarray, np.ndarray, StepResult]:
    """Take the first step off the branch point along ``sign * switch_tangent``.

    Raises when the corrected point falls back onto the incoming branch.
    """
    T = sign * bp.switch_tangent
    res = step(system, bp.X_bif, T, config, ds=config.ds, with_condition=False)
    old = bp.incoming_tangent
    if abs(res.tangent @ old) > 0.999:
        raise ContinuationError("switch failed: new tangent follows the old branch; "
                                "try another ds", stage="switch")
    # distance from the incoming branch's linear model
    delta = res.X - bp.X_bif
    off = delta - (delta @ old) * old
    if np.linalg.norm(off) <= 10 * res.ds ** 2:
        raise ContinuationError("switch failed: step stayed on the incoming branch",
                                stage="switch")
    return bp.X_bif.copy(), T, res


# ---------------------------------------------------------------------------
# frequency targeting
# ---------------------------------------------------------------------------

def solve_at_frequency(system: AugmentedSystem, X_near: np.ndarray, omega_target: float,
                       tol: float = 1e-10, max_iter: int = 20,
                       bracket: tuple = ()) -> np.ndarray:
    """Newton on ``F(x, omega_target) = 0`` with the frequency frozen."""
    N = system.layout.size

    def fun(x):
        return system.residual(np.append(x, omega_target))

    def jac(x):
        return system.jacobian(np.append(x, omega_target))[:, :N]

    x, report = newton_correct(fun, jac, X_near[:N], tol_residual=tol, max_iter=max_iter)
    if not report.converged:
        raise ContinuationError(f"fixed-frequency Newton failed ({report.reason}, "
                                f"residual {report.final_residual:.2e})",
                                stage="solve_at_frequency", states=tuple(bracket) or (X_near,))
    return np.append(x, omega_target)


def interpolate_to(X_a: np.ndarray, X_b: np.ndarray, omega_target: float) -> np.ndarray:
    wa, wb = X_a[-1], X_b[-1]
    theta = 0.0 if wb == wa else (omega_target - wa) / (wb - wa)
    X = X_a + theta * (X_b - X_a)
    X[-1] = omega_target
    return X


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

class Continuation:
    """Stateful driver of the polygon-to-eight pipeline."""

    def __init__(self, params: ModelParams, config: ContinuationConfig | None = None,
                 target_omegas: tuple[float, ...] = ()):
        self.params = params
        self.config = config or ContinuationConfig()
        self.archive = BranchArchive(params, self.config)
        self.target_omegas = tuple(target_omegas)
        self.targets: dict[float, np.ndarray] = {}
        self._step = 0
        self._s = 0.0

    # -- helpers ------------------------------------------------------
    def _record(self, X, res: StepResult | None, segment: str, det: int, cond: float,
                tangent: np.ndarray | None) -> BranchRecord:
        p, cfg = self.params, self.config
        rec = BranchRecord(
            step=self._step, omega=float(X[-1]), arclength=self._s,
            amplitude=amplitude(X, p, cfg.amplitude_measure), det_sign=det,
            condition=cond, segment=segment,
            ds=res.ds if res else 0.0,
            newton_iterations=res.report.iterations if res else 0,
            residual=res.report.final_residual if res else 0.0,
            symmetry_breaking=symmetry_breaking(X, p),
            tangent_omega=float(tangent[-1]) if tangent is not None else 0.0,
        )
        self.archive.add(rec, X)
        self._step += 1
        return rec

    def _check_fold(self, T_prev, T_new):
        if T_prev is not None and T_prev[-1] * T_new[-1] < 0:
            self.archive.folds += 1
            self.archive.events.append(f"fold near step {self._step - 1}")

    # -- stages -------------------------------------------------------
    def start(self):
        p = self.params
        system = AugmentedSystem(p, polygon_reference(p))
        X0 = polygon_state(p).to_real()
        T0 = vertical_tangent(p, normalized=True)
        self._record(X0, None, "vertical", 0, float("inf"), T0)
        return system, X0, T0

    def follow_vertical(self, system, X0, T0) -> BranchPoint:
        """Continue the vertical family until the first genuine determinant flip."""
        cfg = self.config
        ds = cfg.ds
        sign_prev = None
        X, T = X0, T0
        while self._step < cfg.max_steps:
            res = step(system, X, T, cfg, ds=ds)
            flipped = sign_prev is not None and res.det_sign != sign_prev and res.det_sign != 0
            if flipped and res.condition > cfg.cond_threshold:
                log.info("determinant flip at step %d (cond %.2e); bisecting",
                         self._step, res.condition)
                bp = locate_branch_point(system, X, T, res.ds, cfg, sign_a=sign_prev)
                bp.step = self._step
                self._s += bp.offset
                self.archive.branch_point = bp
                self.archive.events.append(f"branch point bracketed at step {self._step}")
                return bp
            if flipped:
                self.archive.events.append(
                    f"spurious flip dismissed at step {self._step} (cond {res.condition:.2e})")
            self._s += res.ds
            self._check_fold(T, res.tangent)
            self._record(res.X, res, "vertical", res.det_sign, res.condition, res.tangent)
            self._check_targets(X, res.X, system)
            sign_prev = res.det_sign
            X, T = res.X, res.tangent
            ds = next_step_size(res.ds, res.report, cfg)
        raise ContinuationError("no branch point found on the vertical family",
                                stage="vertical", step=self._step)

    def follow_axial(self, system, bp: BranchPoint, sign: int, omega_stop: float):
        """Continue the symmetry-broken branch until omega crosses ``omega_stop``.

        Returns ``(X_before, X_after, system)`` bracketing the crossing.
        """
        cfg = self.config
        X_start, T, res = switch_branch(system, bp, cfg, sign)
        self.archive.switches += 1
        self.archive.events.append(f"branch switch ({'+' if sign > 0 else '-'} side) "
                                   f"at step {self._step}")
        X_prev = X_start
        target_side = np.sign(omega_stop - X_start[-1])
        ds = cfg.ds
        while True:
            self._s += res.ds
            self._record(res.X, res, "axial", res.det_sign, res.condition, res.tangent)
            self._check_targets(X_prev, res.X, system)
            if np.sign(omega_stop - res.X[-1]) != target_side:
                return X_prev, res.X, system
            if self._step >= cfg.max_steps:
                raise ContinuationError("omega never crossed the target on the axial branch",
                                        stage="axial", step=self._step)
            # refresh the phase reference to the accepted state
            system = system.with_reference(set_reference(StateVector.from_real(res.X, self.params.n)))
            T_prev = res.tangent
            J = system.jacobian(res.X)
            T_new, _ = bordered_tangent(J, T_prev)
            self._check_fold(T_prev, T_new)
            ds = next_step_size(res.ds, res.report, cfg)
            X_prev = res.X
            res = step(system, res.X, T_new, cfg, ds=ds, with_condition=False)

    def probe_mirror(self, system, bp: BranchPoint, sign: int):
        """Archive a few steps on the other side of the pitchfork."""
        cfg = self.config
        if cfg.mirror_steps <= 0:
            return
        s_saved = self._s
        self._s = float(self.archive.records[bp.step - 1].arclength) + bp.offset
        try:
            _, _, res = switch_branch(system, bp, cfg, sign)
            for i in range(cfg.mirror_steps):
                self._s += res.ds
                self._record(res.X, res, "mirror", res.det_sign, res.condition, res.tangent)
                if i + 1 == cfg.mirror_steps:
                    break
                system = system.with_reference(
                    set_reference(StateVector.from_real(res.X, self.params.n)))
                T_new, _ = bordered_tangent(system.jacobian(res.X), res.tangent)
                res = step(system, res.X, T_new, cfg,
                           ds=next_step_size(res.ds, res.report, cfg), with_condition=False)
        except ContinuationError as exc:
            self.archive.events.append(f"mirror side abandoned: {exc}")
        finally:
            self._s = s_saved

    def _check_targets(self, X_a, X_b, system):
        for target in self.target_omegas:
            if target in self.targets:
                continue
            if (X_a[-1] - target) * (X_b[-1] - target) <= 0 and X_a[-1] != X_b[-1]:
                try:
                    X = solve_at_frequency(system, interpolate_to(X_a, X_b, target), target,
                                           bracket=(X_a, X_b))
                except ContinuationError as exc:
                    log.warning("target omega %.6f not resolved: %s", target, exc)
                    continue
                self.targets[target] = X

    def run(self) -> tuple[BranchArchive, np.ndarray]:
        p = self.params
        t0 = time.perf_counter()
        system, X0, T0 = self.start()
        bp = self.follow_vertical(system, X0, T0)
        omega_eight = p.omega_eight
        last_error = None
        for sign in (1, -1):
            try:
                X_a, X_b, ax_system = self.follow_axial(system, bp, sign, omega_eight)
            except ContinuationError as exc:
                last_error = exc
                self.archive.events.append(f"axial side {sign:+d} abandoned: {exc}")
                continue
            X_eight = solve_at_frequency(ax_system, interpolate_to(X_a, X_b, omega_eight),
                                         omega_eight, bracket=(X_a, X_b))
            rec = self._record(X_eight, None, "eight", 0, float("nan"), None)
            rec.residual = float(np.max(np.abs(ax_system.residual(X_eight))))
            self.probe_mirror(system, bp, -sign)
            self.archive.eight_key = rec.state_ref
            log.info("eight reached after %d steps in %.1fs", self._step,
                     time.perf_counter() - t0)
            return self.archive, X_eight
        raise ContinuationError(f"neither side of the branch point reached the eight: {last_error}",
                                stage="axial", step=self._step)


def run_polygon_to_eight(params: ModelParams, config: ContinuationConfig | None = None,
                         target_omegas: tuple[float, ...] = ()):
    """Polygon -> vertical family -> branch point -> axial family -> eight."""
    if params.n % 2 == 0:
        raise ValueError("even n has no figure eight")
    engine = Continuation(params, config, target_omegas)
    try:
        archive, X_eight = engine.run()
    except ContinuationError as exc:
        exc.archive = engine.archive
        raise
    return archive, X_eight, engine
