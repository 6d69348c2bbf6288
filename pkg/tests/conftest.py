from pathlib import Path

from hypothesis import HealthCheck, settings
import pytest

from laplab import CIRCLE, SPHERE, get_density, sample

settings.register_profile(
    "laplab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("laplab")

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


@pytest.fixture(scope="session")
def s1_uniform():
    return sample(CIRCLE, get_density("uniform", CIRCLE), 400, 11)


@pytest.fixture(scope="session")
def s1_nonuniform():
    return sample(CIRCLE, get_density("nonuniform", CIRCLE), 400, 12)


@pytest.fixture(scope="session")
def s2_uniform():
    return sample(SPHERE, get_density("uniform", SPHERE), 400, 13)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module and module.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.REPORT, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
