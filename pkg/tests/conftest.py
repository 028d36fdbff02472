import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fleet_sp.model import Instance

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture
def desk_instance():
    """2 locations, revenue 100, holding 20, transfer 5, capacity 10."""
    return Instance(locations=(1, 2),
                    revenue=np.array([100.0, 100.0]),
                    holding=np.array([20.0, 20.0]),
                    transfer=np.array([[0.0, 5.0], [5.0, 0.0]]),
                    capacity=10)


@pytest.fixture
def desk_instance_c8(desk_instance):
    return Instance(locations=desk_instance.locations,
                    revenue=desk_instance.revenue,
                    holding=desk_instance.holding,
                    transfer=desk_instance.transfer,
                    capacity=8)


@pytest.fixture
def single_location_instance():
    """1 location, revenue 100, holding 20, capacity 3."""
    return Instance(locations=(1,),
                    revenue=np.array([100.0]),
                    holding=np.array([20.0]),
                    transfer=np.zeros((1, 1)),
                    capacity=3)
