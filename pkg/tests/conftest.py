from __future__ import annotations

import pytest

from fastdiff import experiments as ex


@pytest.fixture(scope="session")
def ball():
    """Critical n = 4 ball, b = 0.3 lambda_1, with its stationary profile."""
    return ex.ball_setup()


@pytest.fixture(scope="session")
def ball_run(ball):
    return ex.rescaled_run(ball)


@pytest.fixture(scope="session")
def blowup():
    return ex.blowup_run()
