import numpy as np
import pytest

from choreo.augmented import AugmentedSystem, polygon_reference
from choreo.continuation import ContinuationConfig, correct
from choreo.model import ModelParams, polygon_state, vertical_tangent
from choreo.solver import (NotSimpleBranchPoint, condition_estimate, det_sign, kernel_basis,
                           newton_correct, singular_values)


class TestNewton:
    def test_scalar_quadratic(self):
        x, rep = newton_correct(lambda x: x ** 2 - 4, lambda x: np.array([[2 * x[0]]]),
                                np.array([3.0]), tol_residual=1e-14)
        assert rep.converged and x[0] == pytest.approx(2.0, abs=1e-14)
        h = rep.history
        ratios = [h[i + 1] / h[i] ** 2 for i in range(len(h) - 2)]
        assert max(ratios) < 1.0

    def test_fixed_point(self):
        x0 = np.array([2.0])
        x, rep = newton_correct(lambda x: x ** 2 - 4, lambda x: np.array([[2 * x[0]]]), x0)
        assert rep.iterations <= 1 and abs(x[0] - 2) < 1e-12

    def test_quadratic_convergence_regular_system(self, rng):
        A = rng.normal(size=(6, 6)) + 6 * np.eye(6)
        b = rng.normal(size=6)

        def fun(x):
            return A @ x + 0.3 * x ** 3 - b

        def jac(x):
            return A + np.diag(0.9 * x ** 2)

        x, rep = newton_correct(fun, jac, np.zeros(6), tol_residual=1e-14)
        h = rep.history
        assert rep.converged
        assert h[-1] <= 50 * h[-2] ** 2 + 1e-15

    def test_singular(self):
        x, rep = newton_correct(lambda x: x ** 2 + 1, lambda x: np.zeros((1, 1)), np.array([0.0]))
        assert not rep.converged and "singular" in rep.reason

    def test_divergence_or_limit(self):
        x, rep = newton_correct(lambda x: x ** 2 + 1, lambda x: np.array([[2 * x[0]]]),
                                np.array([0.5]), max_iter=20)
        assert not rep.converged
        assert rep.reason in ("diverging", "iteration limit", "stagnated")

    def test_predictor_off_polygon(self):
        p = ModelParams(3, 30)
        system = AugmentedSystem(p, polygon_reference(p))
        X0 = polygon_state(p).to_real()
        T = vertical_tangent(p, normalized=True)
        X, rep = correct(system, X0 + 1e-3 * T, T, ContinuationConfig())
        assert rep.converged and rep.iterations <= 6


class TestDetSign:
    def test_simple(self):
        assert det_sign(np.eye(5)) == 1
        assert det_sign(np.diag([1.0, -1.0, 1.0])) == -1
        assert det_sign(np.diag([1.0, 1e-20, 1.0])) == 0

    def test_oracle(self, rng):
        for _ in range(20):
            A = rng.normal(size=(50, 50))
            assert det_sign(A) == int(np.sign(np.linalg.det(A)))

    def test_multiplicative(self, rng):
        for _ in range(20):
            A = rng.normal(size=(20, 20)) + 3 * np.eye(20)
            B = rng.normal(size=(20, 20)) - 3 * np.eye(20)
            assert det_sign(A) * det_sign(B) == det_sign(A @ B)

    def test_rejects_rectangular(self):
        with pytest.raises(ValueError):
            det_sign(np.ones((2, 3)))


class TestCondition:
    def test_simple(self):
        assert condition_estimate(np.eye(4)) == pytest.approx(1.0)
        assert condition_estimate(np.diag([1000.0, 1.0])) == pytest.approx(1000.0)
        assert condition_estimate(np.zeros((3, 3))) == 1e300


class TestKernel:
    def test_axis(self):
        A = np.hstack([np.eye(6), np.zeros((6, 1))])
        (phi,) = kernel_basis(A, 1)
        assert abs(phi[-1]) == pytest.approx(1.0, abs=1e-15)

    def test_rank_deficient_wide(self, rng):
        N = 12
        U, _ = np.linalg.qr(rng.normal(size=(N, N)))
        V, _ = np.linalg.qr(rng.normal(size=(N + 1, N + 1)))
        s = np.linspace(1.0, 3.0, N)
        s[-1] = 1e-12
        A = U @ np.diag(s) @ V[:N]
        phi1, phi2 = kernel_basis(A, 2)
        assert abs(phi1 @ phi2) < 1e-12
        assert np.linalg.norm(phi1) == pytest.approx(1, abs=1e-12)
        sv = singular_values(A)
        for phi in (phi1, phi2):
            assert np.linalg.norm(A @ phi) <= 10 * max(sv[-2], 1e-15)

    def test_not_simple(self, rng):
        N = 12
        A = rng.normal(size=(N, N + 1))
        with pytest.raises(NotSimpleBranchPoint, match="not a simple branching point"):
            kernel_basis(A, 2)
        U, _ = np.linalg.qr(rng.normal(size=(N, N)))
        V, _ = np.linalg.qr(rng.normal(size=(N + 1, N + 1)))
        s = np.ones(N)
        s[-2:] = 1e-12          # three-dimensional kernel
        with pytest.raises(NotSimpleBranchPoint):
            kernel_basis(U @ np.diag(s) @ V[:N], 2)

    def test_bad_count(self):
        with pytest.raises(ValueError):
            kernel_basis(np.ones((2, 3)), 3)

    def test_polygon_kernel_contains_x1(self):
        p = ModelParams(3, 10)
        system = AugmentedSystem(p, polygon_reference(p))
        J = system.jacobian(polygon_state(p).to_real())
        _, s, Vt = np.linalg.svd(J)
        sig = np.concatenate([s, [0.0]])
        basis = Vt[sig < 1e-10 * sig[0]]
        x1 = vertical_tangent(p, normalized=True)
        assert np.linalg.norm(basis @ x1) > 0.999
        (phi,) = kernel_basis(J, 1)
        assert np.linalg.norm(J @ phi) < 1e-12
