import numpy as np
import pytest

from bhopm.model import BHOPM, ModelConfig, ParameterSpace
from bhopm.sampler import ChainOutput, Posterior, SamplerConfig, fit
from bhopm.synthetic import SyntheticConfig, generate_synthetic


def posterior_from_draws(ds, U, config=None, chains=1):
    """Wrap an ``(S, D)`` matrix of unconstrained draws as a Posterior."""
    config = config or ModelConfig()
    sp = ParameterSpace.build(ds, config)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    parts = np.split(U, chains)
    outs = [ChainOutput(draws=p, logp=np.zeros(len(p)), accept_stat=np.ones(len(p)),
                        tree_depth=np.ones(len(p), dtype=np.int64),
                        n_leapfrog=np.ones(len(p), dtype=np.int64),
                        divergent=np.zeros(len(p), dtype=bool), step_size=0.1,
                        inv_metric=np.ones(sp.D)) for p in parts]
    return Posterior(outs, sp, config, ds.fingerprint(), SamplerConfig(chains=chains))


@pytest.fixture(scope="session")
def small_data():
    return generate_synthetic(SyntheticConfig(C=15, I=5, R=2, N=200, seed=3,
                                              delta_round_means=(0.3, -0.3)))


@pytest.fixture(scope="session")
def small_fit(small_data):
    ds, _ = small_data
    cfg = SamplerConfig(chains=2, warmup=150, samples=150, master_seed=11)
    return fit(BHOPM(ds), cfg)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
