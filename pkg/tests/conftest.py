from __future__ import annotations

import numpy as np
import pytest

from buddhaface.landmarks import LandmarkSet
from buddhaface.synthetic import canonical_face, make_cohort


@pytest.fixture(scope="session")
def template() -> LandmarkSet:
    return LandmarkSet("template", canonical_face())


@pytest.fixture(scope="session")
def cohort():
    return make_cohort(statues_per_style=8, images_per_statue=2, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
