import numpy as np
import pytest

from zals.generators import GeneratorKind
from zals.simulation import SimDesign, generate_dataset

# one representative per family, plus the boundary cases of the power-exponential
GENERATORS = [
    GeneratorKind.lognormal(),
    GeneratorKind.student_t(1.0),
    GeneratorKind.student_t(4.0),
    GeneratorKind.power_exponential(-0.5),
    GeneratorKind.power_exponential(0.5),
    GeneratorKind.power_exponential(1.0),
    GeneratorKind.ebs(0.5),
    GeneratorKind.ebs(2.0),
]


def gen_id(g):
    return str(g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sim_spec():
    """A seeded n=1000 dataset from the default simulation design."""
    design = SimDesign()
    return generate_dataset(design, 0.5, 1000, np.random.default_rng(99))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
