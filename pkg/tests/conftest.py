import pytest

from crashforge.fixtures import fixture_case_28197
from crashforge.synth import replay_case_32548


@pytest.fixture
def case32548():
    return replay_case_32548()


@pytest.fixture
def case28197():
    return fixture_case_28197()
