import numpy as np
import pytest
from hypothesis import settings

from finite_ilc.filters import design_zero_phase_butterworth, design_zpetc
from finite_ilc.lti import lifted, load_benchmark, sensitivity

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bench():
    return load_benchmark()


@pytest.fixture(scope="session")
def bench_ops(bench):
    """Lifted benchmark operators at the reference length."""
    N = 229
    j_hat = bench.j_hat()
    return dict(
        N=N,
        J_hat=lifted(j_hat, N),
        J_true=lifted(bench.j_true(), N),
        S_true=lifted(sensitivity(bench.true_plant, bench.controller), N),
        zpetc=design_zpetc(j_hat),
        L=design_zpetc(j_hat).matrix(N),
        Q=design_zero_phase_butterworth(2, 40.0, 1000.0).matrix(N),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
