import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, scale=2.5):
    from legged_inekf.lie import exp_so3

    return exp_so3(rng.uniform(-1, 1, 3) * scale / np.sqrt(3))


def random_state(rng):
    from legged_inekf.state import RobotState

    return RobotState(
        R=random_rotation(rng),
        v=rng.normal(size=3),
        p=rng.normal(size=3),
        b_omega=0.01 * rng.normal(size=3),
        b_a=0.05 * rng.normal(size=3),
        R_c=random_rotation(rng),
        p_c=0.2 * rng.normal(size=3),
    )


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("[")[1].split("]")[0])):
        terminalreporter.write_line(line)
