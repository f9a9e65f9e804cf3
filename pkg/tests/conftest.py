import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, n, shift=0.1):
    M = rng.standard_normal((n, n))
    return M @ M.T + shift * np.eye(n)


def make_instance(rng, n_z, n_g, n_s=None, scale=1.0):
    """Well-conditioned (Z, G, Y, P); ``P`` is ``Z`` unless ``n_s`` is given."""
    Z = random_psd(rng, n_z, 0.5) / n_z
    G = random_psd(rng, n_g, 0.5) / n_g
    P = Z if n_s is None else rng.standard_normal((n_s, n_z))
    Y = scale * rng.standard_normal((P.shape[0], n_g))
    return Z, G, Y, P


@pytest.fixture(scope="session")
def example1_data():
    from rkhs_koopman.dataset import build_subspace_data
    from rkhs_koopman.evaluation import example1_scenario

    sc = example1_scenario()
    return build_subspace_data(sc.kernel, sc.clean_trajectories(), sc.observables, sc.obs_anchors)


ACCEPTANCE_LINES: dict[int, str] = {}


def record(n, ok, detail):
    ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
