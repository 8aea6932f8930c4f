import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def moment_gap_in_se(a: np.ndarray, b: np.ndarray, n_se: float = 4.0):
    """Assert per-coordinate means of two samples agree within n_se
    combined standard errors, and likewise their second central moments."""
    a, b = np.atleast_2d(a.T).T, np.atleast_2d(b.T).T
    mean_a, mean_b = a.mean(axis=0), b.mean(axis=0)
    se_mean = np.sqrt(a.var(axis=0, ddof=1) / a.shape[0] + b.var(axis=0, ddof=1) / b.shape[0])
    np.testing.assert_array_less(np.abs(mean_a - mean_b), n_se * se_mean + 1e-12)

    ca, cb = (a - mean_a) ** 2, (b - mean_b) ** 2
    se_var = np.sqrt(ca.var(axis=0, ddof=1) / a.shape[0] + cb.var(axis=0, ddof=1) / b.shape[0])
    np.testing.assert_array_less(np.abs(ca.mean(axis=0) - cb.mean(axis=0)), n_se * se_var + 1e-12)


def batch_means_se(chain: np.ndarray, n_batches: int = 20) -> np.ndarray:
    """Standard error of the chain mean estimated from batch means."""
    chain = np.atleast_2d(chain.T).T
    usable = (chain.shape[0] // n_batches) * n_batches
    batches = chain[:usable].reshape(n_batches, -1, chain.shape[1]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
