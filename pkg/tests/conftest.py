import os

# single-threaded BLAS for the latency criterion; must precede the numpy import
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sqrtm_eig(m):
    """Reference PSD square root by eigendecomposition."""
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def wasserstein_trace_form(mu1, s1, mu2, s2):
    """Textbook 2-Wasserstein distance between Gaussians (trace form)."""
    r1 = sqrtm_eig(s1)
    cross = sqrtm_eig(r1 @ s2 @ r1)
    d2 = float(np.sum((np.asarray(mu1) - np.asarray(mu2)) ** 2) + np.trace(s1 + s2 - 2 * cross))
    return np.sqrt(max(d2, 0.0))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
