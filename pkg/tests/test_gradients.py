import pytest

from gradient_cases import CASES, worst_error

TOLERANCE = 1e-4


@pytest.mark.parametrize("name", list(CASES))
def test_matches_central_differences(name):
    assert worst_error(name) < TOLERANCE
