import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def example222():
    """2x2x2 tensor holding 1..8 in first-mode-fastest order."""
    return np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")
