from pathlib import Path

import pytest

from apexplan.config import load_vehicle_params

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def vehicle_params():
    return load_vehicle_params(REPO / "config" / "vehicle.cfg")


@pytest.fixture(scope="session")
def repo_root():
    return REPO
