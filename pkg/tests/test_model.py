import math
from math import gcd

import numpy as np
import pytest

from choreo.augmented import AugmentedSystem, polygon_reference
from choreo.fourier import FourierScalar, evaluate_at
from choreo.model import (KnotClass, ModelParams, classify_frequency, compute_s1, compute_sk,
                          nearest_fraction, polygon_state, rotation, satisfies_diophantine,
                          vertical_tangent)
from choreo.state import StateVector


class TestFrequencies:
    def test_three_bodies(self):
        assert compute_sk(3, 1) == pytest.approx(1 / math.sqrt(3), abs=1e-14)
        assert compute_sk(3, 2) == pytest.approx(compute_sk(3, 1), rel=1e-14)

    def test_five_bodies(self):
        assert compute_sk(5, 2) == pytest.approx(2.4278, abs=5e-5)

    @pytest.mark.parametrize("n", range(3, 16))
    def test_symmetry_and_s1(self, n):
        for k in range(1, n):
            assert compute_sk(n, k) == pytest.approx(compute_sk(n, n - k), rel=1e-14)
        assert compute_sk(n, 1) == pytest.approx(compute_s1(n), rel=1e-14)

    @pytest.mark.parametrize("n,k", [(3, 0), (3, 3), (5, -1), (2, 1)])
    def test_out_of_range(self, n, k):
        with pytest.raises(ValueError):
            compute_sk(n, k)


class TestParams:
    @pytest.mark.parametrize("n", [2, 4, 6, 1])
    def test_even_or_small_n_rejected(self, n):
        with pytest.raises(ValueError):
            ModelParams(n, 8)

    def test_k_range(self):
        ModelParams(7, 8, k=3)
        with pytest.raises(ValueError):
            ModelParams(7, 8, k=4)
        with pytest.raises(ValueError):
            ModelParams(5, 8, k=1)

    def test_rotations(self):
        p = ModelParams(7, 8)
        for j, R in enumerate(p.rotations, start=1):
            assert np.allclose(R @ R.T, np.eye(3), atol=1e-15)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-14)
            assert R[2, 2] == 1.0 and np.all(R[2, :2] == 0) and np.all(R[:2, 2] == 0)
            assert np.allclose(R, rotation(j * p.zeta))
            assert np.array_equal(R @ np.array([0, 0, 2.5]), [0, 0, 2.5])
        for j in range(1, p.n):
            assert np.allclose(p.rotations[j - 1] @ p.rotations[p.n - j - 1], np.eye(3), atol=1e-14)

    def test_rotation_direction(self):
        p = ModelParams(3, 4)
        assert np.allclose(p.rotations[0] @ [1, 0, 0], [math.cos(p.zeta), math.sin(p.zeta), 0])

    def test_delays_and_frequencies(self):
        p = ModelParams(5, 8)
        assert p.delays == tuple(j * 2 * p.zeta for j in range(1, 5))
        assert p.omega0 == math.sqrt(p.sk)
        assert p.omega_eight == 2 * math.sqrt(p.s1)
        with pytest.raises(AttributeError):
            p.n = 7


class TestPolygon:
    def test_reciprocal_distances(self):
        assert np.allclose(polygon_state(ModelParams(3, 6)).w[:, 0], 1 / math.sqrt(3), atol=1e-15)
        assert polygon_state(ModelParams(5, 6)).w[0, 0] == pytest.approx(0.8506508, abs=1e-7)

    def test_structure(self):
        X = polygon_state(ModelParams(5, 6))
        expected = np.zeros((3, 6), complex)
        expected[0, 0] = 1
        assert np.array_equal(X.u, expected)
        assert not X.v.any() and not X.lam.any() and not X.alpha.any()
        assert np.all(X.w[:, 1:] == 0)
        assert X.omega == ModelParams(5, 6).omega0

    @pytest.mark.parametrize("n", [3, 5, 7])
    def test_steady_for_all_omega(self, n):
        p = ModelParams(n, 10)
        system = AugmentedSystem(p, polygon_reference(p))
        for omega in (0.5, 1.0, p.omega0, p.omega_eight):
            X = polygon_state(p, omega).to_real()
            assert np.max(np.abs(system.residual(X))) < 1e-12


class TestVerticalTangent:
    def test_coefficients(self):
        p = ModelParams(3, 5)
        d = StateVector.from_real(vertical_tangent(p), 3)
        u3 = FourierScalar.from_half(d.u[2])
        assert u3[-1] == 0.5j and u3[1] == -0.5j
        v3 = FourierScalar.from_half(d.v[2])
        assert v3[1] == 0.5 and v3[-1] == 0.5
        assert evaluate_at(u3, math.pi / 2) == pytest.approx(1.0, abs=1e-15)
        assert not d.u[:2].any() and not d.v[:2].any() and not d.w.any()
        assert d.omega == 0.0

    def test_normalized(self):
        t = vertical_tangent(ModelParams(5, 8), normalized=True)
        assert np.linalg.norm(t) == pytest.approx(1.0, abs=1e-15)


class TestClassify:
    @pytest.mark.parametrize("n", [3, 5, 7, 9, 11])
    def test_eight(self, n):
        p = ModelParams(n, 8)
        kc = classify_frequency(2 * math.sqrt(p.s1), p)
        assert (kc.p, kc.q, kc.is_choreography) == (2, 1, True)

    def test_torus_knot(self):
        p = ModelParams(3, 8)
        kc = classify_frequency(math.sqrt(p.s1) * 19 / 41, p)
        assert (kc.p, kc.q, kc.is_choreography) == (19, 41, True)

    def test_irrational(self):
        p = ModelParams(3, 8)
        assert classify_frequency(math.sqrt(p.s1) * math.pi, p, qmax=100) is None

    def test_congruence_failure_is_flagged(self):
        p = ModelParams(5, 8)
        kc = classify_frequency(math.sqrt(p.s1) * 1 / 1, p)
        assert (kc.p, kc.q) == (1, 1) and not kc.is_choreography

    @pytest.mark.parametrize("n", [3, 5, 7])
    def test_exhaustive_small(self, n):
        p = ModelParams(n, 8)
        for q in range(1, 21):
            for pp in range(1, 3 * q):
                if gcd(pp, q) == 1 and satisfies_diophantine(pp, q, n, 2):
                    kc = classify_frequency(math.sqrt(p.s1) * pp / q, p)
                    assert (kc.p, kc.q, kc.is_choreography) == (pp, q, True)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            classify_frequency(-1.0, ModelParams(3, 8))
        with pytest.raises(ValueError):
            KnotClass(4, 2, True)

    def test_nearest_fraction(self):
        p = ModelParams(3, 8)
        assert nearest_fraction(math.sqrt(p.s1) * 2.0000001, p) == 2
