import numpy as np
import pytest

from rewardcert.divergence import DivergenceSpec
from rewardcert.envs import make_env
from rewardcert.policies import PDController, train_tabular_q

ALL_SPECS = [
    DivergenceSpec.hockey_stick(0.5),
    DivergenceSpec.hockey_stick(1.0),
    DivergenceSpec.hockey_stick(2.0),
    DivergenceSpec.hockey_stick(5.0),
    DivergenceSpec.total_variation(),
    DivergenceSpec.power_renyi(0.0),
    DivergenceSpec.power_renyi(0.5),
    DivergenceSpec.power_renyi(2.0),
    DivergenceSpec.power_renyi(4.0),
]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pd_policy():
    return PDController()


@pytest.fixture(scope="session")
def chain_env():
    return make_env("chain")


@pytest.fixture(scope="session")
def chain_policy(chain_env):
    return train_tabular_q(chain_env, 500, seed=1)


# criterion number -> "PASS/FAIL criterion N: detail", filled by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
