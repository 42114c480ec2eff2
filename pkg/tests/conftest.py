import numpy as np
import pytest

from choreo.continuation import ContinuationConfig, run_polygon_to_eight
from choreo.fourier import FourierScalar
from choreo.model import ModelParams

_RUNS = {}


def random_series(rng, m, decay=0.0):
    half = rng.normal(size=m) + 1j * rng.normal(size=m)
    half *= np.exp(-decay * np.arange(m))
    return FourierScalar.from_half(half)


def pipeline(n, m=40, **config):
    """Polygon-to-eight run shared across the session."""
    key = (n, m, tuple(sorted(config.items())))
    if key not in _RUNS:
        params = ModelParams(n, m)
        archive, X_eight, engine = run_polygon_to_eight(params, ContinuationConfig(**config))
        _RUNS[key] = (params, archive, X_eight, engine)
    return _RUNS[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def run3():
    return pipeline(3, 40)


@pytest.fixture(scope="session")
def run3_small():
    return pipeline(3, 16)


def own_residual(params, X):
    """Residual of an archived state under the phase reference it was archived with."""
    from choreo.augmented import AugmentedSystem, polygon_reference, set_reference
    from choreo.state import StateVector

    sv = StateVector.from_real(X, params.n)
    ref = polygon_reference(params) if not sv.u[2, 1:].any() else set_reference(sv)
    return np.max(np.abs(AugmentedSystem(params, ref).residual(X)))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in rep.nodeid and (rep.when == "call" or rep.failed):
                lines.append((rep.nodeid.split("::")[-1], outcome))
    if lines:
        terminalreporter.section("acceptance")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
