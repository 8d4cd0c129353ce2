from dataclasses import replace

import pytest

from phytosim.podsim import Inversion, make_scenario, simulate

WATERING = int(5.5 * 86400)  # midday of day 6
INVERSION = Inversion(3 * 86400 + 22 * 3600, 22.0, 10.0)  # lights stay on through the night of day 4


@pytest.fixture(scope="session")
def c3_week():
    return simulate(make_scenario("env1", "c3", duration=7))


@pytest.fixture(scope="session")
def cam_week():
    return simulate(make_scenario("env1", "cam", duration=7))


@pytest.fixture(scope="session")
def facultative_run():
    return simulate(make_scenario("env1", "facultative", duration=10, watering_events=(WATERING,)))


def inverted(pathway: str, days: float = 7.0):
    sc = make_scenario("env1", pathway, duration=days)
    return replace(sc, schedule=replace(sc.schedule, inversion_events=(INVERSION,)))
