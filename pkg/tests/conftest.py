import pytest

from roundsim.engine import SimConfig


def mini_config(**overrides):
    """A consistent lightweight configuration for fast engine tests.

    60 vehicles per approach-pair over a 270 s dispatch window keeps the
    implied demand at the standard 800 vphpl.
    """
    defaults = dict(
        duration=420.0,
        dispatch_window=270.0,
        total_vehicles=120,
        demand_per_approach=800.0,
        mpr=1.0,
        seed=7,
    )
    defaults.update(overrides)
    return SimConfig(**defaults)


@pytest.fixture
def mini_cfg():
    return mini_config()
