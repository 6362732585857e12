import numpy as np
import pytest

from thurstonopt.subdivision import load_builtin


@pytest.fixture(scope="session")
def pillow():
    return load_builtin("pillow_lattes")


@pytest.fixture(scope="session")
def barycentric():
    return load_builtin("barycentric")


@pytest.fixture(scope="session")
def flap():
    return load_builtin("flap")


@pytest.fixture(params=["pillow_lattes", "barycentric", "flap"])
def any_rule(request):
    return load_builtin(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
