import numpy as np
import pytest

from cpfloc.synthetic import SyntheticSceneConfig, generate_scene

# acceptance checks append "PASS/FAIL ..." lines here; printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_scene():
    cfg = SyntheticSceneConfig(num_points=3000, num_db_images=30, num_queries=6, cluster_count=1000, seed=11)
    return generate_scene(cfg)


@pytest.fixture(scope="session")
def small_model(small_scene):
    return small_scene.build_model(n_words=64, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
