import pytest

import genutil


@pytest.fixture
def quiz_record():
    return genutil.load_fixture_record("mathquiz.json")


@pytest.fixture
def loop_record():
    return genutil.load_fixture_record("whileloop.json")


@pytest.fixture
def fixture_gateway():
    gateway = genutil.fixture_gateway()
    yield gateway
    gateway.close()
