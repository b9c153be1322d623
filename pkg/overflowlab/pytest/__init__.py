from functools import wraps
from typing import Callable, Optional, Sequence

import pytest

from ..network import NetworkSpec, ValidatedNetwork, validate


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long statistical studies (deselect with '-m \"not slow\"')"
    )


def network_fixture(
    lam: Sequence[float],
    mu: Sequence[float],
    routing: Sequence[Sequence[float]],
    name: Optional[str] = None,
):
    """
    Declares a pytest fixture returning the validated network with the given
    rates and routing matrix.

    Parameters:
        lam: External arrival rates
        mu: Service rates
        routing: Routing matrix; row deficits are exit probabilities
        name: Display name, defaults to the decorated function's name
    """

    def decorator(fn) -> Callable[..., ValidatedNetwork]:
        @pytest.fixture()
        @wraps(fn)
        def inner(*_args, **_kwargs) -> ValidatedNetwork:
            vn = validate(NetworkSpec.from_arrays(lam, mu, routing, name=name or fn.__name__))
            fn(*_args, **_kwargs)
            return vn

        return inner

    return decorator


@network_fixture(lam=[0.3], mu=[0.7], routing=[[0.0]], name="M/M/1")
def mm1() -> ValidatedNetwork:
    """Single station with rho = 3/7."""


@network_fixture(
    lam=[0.1, 0.0],
    mu=[0.45, 0.45],
    routing=[[0.0, 1.0], [0.0, 0.0]],
    name="symmetric tandem",
)
def symmetric_tandem() -> ValidatedNetwork:
    """Two stations in series, both bottlenecks with rho = 2/9."""


@network_fixture(
    lam=[0.1, 0.0],
    mu=[0.5, 0.4],
    routing=[[0.0, 1.0], [0.0, 0.0]],
    name="asymmetric tandem",
)
def asymmetric_tandem() -> ValidatedNetwork:
    """Two stations in series with rho = (0.2, 0.25); the second is the bottleneck."""


__all__ = ["asymmetric_tandem", "mm1", "network_fixture", "symmetric_tandem"]
