import numpy as np
import pytest

from fraccal import _backend, eigen, specfun

BACKENDS = sorted(_backend.available())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per importable kernel backend."""
    mod = _backend.available()[request.param]
    monkeypatch.setattr(specfun, "kernels", mod)
    monkeypatch.setattr(eigen, "kernels", mod)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
