import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

from basket_ppmx.ppmx import (CohesionConfig, LognormalPrior, MCMCConfig, ModelData,  # noqa: E402
                              PosteriorDraws, PPMxModel, SimilarityHyper)


def make_draws(cov, levels, labels, mu, sig2, M=1.0, prior=None, use_similarity=True, weight=1.0):
    """Posterior draws assembled by hand: one row of labels / mu / sig2 per draw."""
    cov = np.asarray(cov, dtype=np.int64).reshape(-1, len(levels))
    n = cov.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    labels = labels.reshape(-1, n) if n else labels.reshape(max(len(labels), 1), 0)
    D = labels.shape[0]
    J = np.array([len(set(r)) if n else 0 for r in labels], dtype=np.int64)
    width = n + 1
    mu_a = np.zeros((D, width))
    s2_a = np.ones((D, width))
    for d in range(D):
        mu_a[d, :J[d]] = np.asarray(mu[d])[:J[d]]
        s2_a[d, :J[d]] = np.asarray(sig2[d])[:J[d]]
    data = ModelData(cov, tuple(levels), np.full(n, np.nan), np.zeros(n, bool))
    model = PPMxModel(CohesionConfig(M), SimilarityHyper.uniform(levels, weight, use_similarity),
                      prior or LognormalPrior())
    return PosteriorDraws(labels, J, mu_a, s2_a, np.zeros((D, n)), data, model, MCMCConfig(2, 1, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow operating-characteristic criteria")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
