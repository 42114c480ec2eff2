import math

import numpy as np
import pytest

from choreo.augmented import AugmentedSystem, polygon_reference, set_reference
from choreo.continuation import (BranchArchive, Continuation, ContinuationConfig,
                                 ContinuationError, NearBranchPoint, amplitude, correct,
                                 locate_branch_point, next_step_size, null_direction,
                                 solve_at_frequency, spectral_tail, step, switch_direction,
                                 symmetry_breaking, tangent_vector)
from choreo.model import ModelParams, polygon_state, vertical_tangent
from choreo.solver import condition_estimate
from choreo.state import StateVector

from conftest import own_residual, pipeline


class Circle:
    """Toy branch x^2 + omega^2 = 1 with folds at omega = +-1."""

    def residual(self, X):
        return np.array([X[0] ** 2 + X[1] ** 2 - 1.0])

    def jacobian(self, X):
        return np.array([[2 * X[0], 2 * X[1]]])


class Broken:
    def residual(self, X):
        return np.ones(1)

    def jacobian(self, X):
        return np.zeros((1, 2))


def polygon_setup(n=3, m=12):
    p = ModelParams(n, m)
    system = AugmentedSystem(p, polygon_reference(p))
    return p, system, polygon_state(p).to_real(), vertical_tangent(p, normalized=True)




class TestConfig:
    def test_defaults(self):
        c = ContinuationConfig()
        assert (c.ds, c.ds_min, c.ds_max, c.cond_threshold, c.bisect_tol) == (1e-3, 1e-6, 1e-2, 1e3, 1e-8)
        assert c.amplitude_measure == "sup_u3"

    @pytest.mark.parametrize("kw", [dict(ds=1e-7), dict(ds=0.1), dict(ds_min=0.0),
                                    dict(amplitude_measure="nope")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ContinuationConfig(**kw)

    def test_growth(self):
        from choreo.solver import NewtonReport
        c = ContinuationConfig()
        assert next_step_size(1e-3, NewtonReport(True, 2, 0, 0), c) == pytest.approx(1.3e-3)
        assert next_step_size(1e-3, NewtonReport(True, 5, 0, 0), c) == 1e-3
        assert next_step_size(9e-3, NewtonReport(True, 1, 0, 0), c) == 1e-2


class TestTangent:
    def test_polygon_seed(self):
        p, system, X0, x1 = polygon_setup()
        t = tangent_vector(system, X0, x1, seed_projection=True)
        assert t @ x1 > 0.999
        with pytest.raises(NearBranchPoint, match="branch point"):
            tangent_vector(system, X0, x1)

    def test_orientation_and_smoothness(self):
        p, system, X0, x1 = polygon_setup()
        res = step(system, X0, x1, ContinuationConfig())
        t = tangent_vector(system, res.X, x1)
        assert t @ x1 > 0.99
        assert np.linalg.norm(t) == pytest.approx(1.0, abs=1e-14)
        assert np.array_equal(tangent_vector(system, res.X, -x1), -t)
        assert np.allclose(t, res.tangent, atol=1e-10)


class TestStep:
    def test_first_step(self):
        p, system, X0, x1 = polygon_setup()
        cfg = ContinuationConfig()
        res = step(system, X0, x1, cfg)
        assert np.max(np.abs(system.residual(res.X))) < 1e-10
        assert abs(x1 @ (res.X - (X0 + cfg.ds * x1))) < 1e-12
        # the unit tangent splits its weight evenly between u3 and v3
        assert amplitude(res.X, p) == pytest.approx(math.sqrt(2) * cfg.ds, rel=1e-2)
        assert res.X[-1] == pytest.approx(p.omega0, abs=1e-5)

    def test_corrector_at_solution(self):
        p, system, X0, x1 = polygon_setup()
        res = step(system, X0, x1, ContinuationConfig())
        X, rep = correct(system, res.X, res.tangent, ContinuationConfig())
        assert np.max(np.abs(X - res.X)) < 1e-12

    def test_symmetric_steps(self):
        p, system, X0, x1 = polygon_setup()
        cfg = ContinuationConfig()
        for _ in range(5):
            r = step(system, X0, x1, cfg)
            X0, x1 = r.X, r.tangent
        ds = 1e-3
        fwd = step(system, X0, x1, cfg, ds=ds).X
        bwd = step(system, X0, -x1, cfg, ds=ds).X
        mid = 0.5 * (fwd + bwd) - X0
        assert np.linalg.norm(mid) < 10 * ds ** 2
        assert np.linalg.norm(fwd - X0) == pytest.approx(ds, rel=1e-2)

    def test_underflow(self):
        cfg = ContinuationConfig()
        with pytest.raises(ContinuationError, match="ds_min"):
            step(Broken(), np.array([1.0, 0.0]), np.array([0.0, 1.0]), cfg)

    def test_through_fold(self):
        cfg = ContinuationConfig(ds=0.05, ds_max=0.05)
        X, T = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        omegas, folds = [], 0
        for _ in range(140):
            res = step(Circle(), X, T, cfg, ds=0.05)
            folds += res.tangent[-1] * T[-1] < 0
            X, T = res.X, res.tangent
            omegas.append(X[-1])
        assert folds >= 2
        assert max(omegas) > 0.999 and min(omegas) < -0.999


class TestBranchPoint:
    def test_switch_direction(self, rng):
        phi1, phi2 = rng.normal(size=7), rng.normal(size=7)
        t = switch_direction(phi1, phi2)
        assert t[-1] == 0.0
        assert np.linalg.norm(t) == pytest.approx(1.0)

    def test_pipeline_structure(self, run3):
        params, archive, X8, engine = run3
        vertical = archive.segment("vertical")
        signs = [r.det_sign for r in vertical[1:]]
        flips = sum(a != b for a, b in zip(signs, signs[1:]))
        assert flips == 0 and archive.switches == 1
        bp = archive.branch_point
        assert bp.switch_tangent[-1] == 0.0
        assert abs(bp.switch_tangent @ bp.incoming_tangent) < 0.99
        assert bp.X_bif[-1] < params.omega_eight
        system = AugmentedSystem(params, polygon_reference(params))
        J = system.jacobian(bp.X_bif)
        assert np.linalg.norm(J @ bp.phi1) < 1e-6 and np.linalg.norm(J @ bp.phi2) < 1e-6
        assert condition_estimate(np.vstack([bp.incoming_tangent, J])) > 1e6
        assert not any("spurious" in e for e in archive.events)

    def test_no_flip_in_bracket(self):
        p, system, X0, x1 = polygon_setup()
        res = step(system, X0, x1, ContinuationConfig())
        with pytest.raises(ContinuationError, match="no determinant flip"):
            locate_branch_point(system, res.X, res.tangent, 1e-3, ContinuationConfig())

    def test_reproducible_with_half_step(self, run3_small):
        p, archive, _, _ = run3_small
        _, other, _, _ = pipeline(3, 16, ds=5e-4)
        assert np.linalg.norm(archive.branch_point.X_bif - other.branch_point.X_bif) < 1e-6


class TestPipeline:
    def test_archived_residuals(self, run3):
        params, archive, X8, _ = run3
        assert len(archive.records) == len(archive.states)
        for rec in archive.records:
            assert own_residual(params, archive.states[rec.state_ref]) < 1e-10, rec.step

    def test_frequencies(self, run3):
        params, archive, X8, _ = run3
        assert archive.records[0].omega == pytest.approx(math.sqrt(params.sk), abs=1e-14)
        assert X8[-1] == params.omega_eight
        assert archive.states[archive.eight_key][-1] == params.omega_eight

    def test_arclength_increments(self, run3):
        params, archive, _, _ = run3
        for seg in ("vertical", "axial"):
            recs = archive.segment(seg)
            for a, b in zip(recs, recs[1:]):
                assert b.arclength - a.arclength == pytest.approx(b.ds, rel=1e-12)
                X_a, X_b = archive.states[a.state_ref], archive.states[b.state_ref]
                assert np.linalg.norm(X_b - X_a) == pytest.approx(b.ds, rel=0.05)

    def test_symmetry_breaking(self, run3):
        params, archive, _, _ = run3
        assert max(r.symmetry_breaking for r in archive.segment("vertical")) < 1e-10
        first = [r.symmetry_breaking for r in archive.segment("axial")[:10]]
        assert all(b > a for a, b in zip(first, first[1:]))
        assert first[0] > 1e-6

    def test_mirror_side(self, run3):
        params, archive, _, _ = run3
        mirror = archive.segment("mirror")
        axial = archive.segment("axial")
        assert len(mirror) == archive.config.mirror_steps
        for rec in mirror:
            assert own_residual(params, archive.states[rec.state_ref]) < 1e-10
        # the two pitchfork sides share frequency to first order
        assert mirror[0].omega == pytest.approx(axial[0].omega, abs=1e-5)

    def test_spectral_tail(self, run3):
        params, archive, X8, _ = run3
        assert spectral_tail(X8, params) < 1e-9
        for key in list(archive.states)[1::25]:
            assert spectral_tail(archive.states[key], params) < 1e-9

    def test_solve_at_recorded_frequency(self, run3):
        params, archive, _, _ = run3
        axial = archive.segment("axial")
        prev, rec = axial[20], axial[21]
        system = AugmentedSystem(params, set_reference(
            StateVector.from_real(archive.states[prev.state_ref], params.n)))
        target = archive.states[rec.state_ref]
        X = solve_at_frequency(system, archive.states[prev.state_ref], rec.omega)
        assert np.max(np.abs(X - target)) < 1e-10

    def test_solve_failure_carries_states(self):
        p, system, X0, x1 = polygon_setup()
        with pytest.raises(ContinuationError) as info:
            solve_at_frequency(system, X0 + 0.3 * x1, p.omega0, max_iter=1,
                               bracket=(X0, X0 + x1))
        assert info.value.stage == "solve_at_frequency" and len(info.value.states) == 2

    def test_amplitude_measures(self, run3):
        params, archive, X8, _ = run3
        assert amplitude(X8, params, "l2_u") > 0
        with pytest.raises(ValueError):
            amplitude(X8, params, "bogus")

    def test_target_omegas(self):
        p = ModelParams(3, 12)
        target = 1.0
        eng = Continuation(p, ContinuationConfig(), target_omegas=(target,))
        archive, X8 = eng.run()
        X = eng.targets[target]
        assert X[-1] == target
        assert own_residual(p, X) < 1e-10
        assert symmetry_breaking(X, p) > 1e-3

    def test_even_n_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(4, 16)
