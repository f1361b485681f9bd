import numpy as np
import pytest

from tactile_explore.env import EnvConfig
from tactile_explore.geometry import GridSpec, Polygon, load_default_objects


@pytest.fixture(scope="session")
def objects():
    return load_default_objects()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid_spec():
    return GridSpec()


@pytest.fixture
def square():
    """A 6 cm axis-aligned square centered on the origin."""
    return Polygon(np.array([[-0.03, -0.03], [0.03, -0.03], [0.03, 0.03], [-0.03, 0.03]]))


@pytest.fixture
def small_env():
    """A 12 x 12 workspace of 5 mm cells, handy for fast episode tests."""
    return EnvConfig(workspace_size=0.06, cell_size=0.005, translation_noise=0.0, max_actions=200)


# acceptance reporting: one PASS/FAIL line per @pytest.mark.criterion test


def pytest_configure(config):
    config.stash[_CRITERIA] = []


_CRITERIA = pytest.StashKey[list]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(rep.longrepr).strip().splitlines()[-1][:200]
    item.config.stash[_CRITERIA].append((mark.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_CRITERIA, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in rows:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
