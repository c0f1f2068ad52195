import numpy as np
import pytest

from bemnet.bem import plane_wave_cauchy, plane_wave_field
from bemnet.config import TrainConfig
from bemnet.geometry import BoxDomain, build_box_mesh, uniform_sensor_points
from bemnet.training import TrainingData


@pytest.fixture
def unit_box():
    return BoxDomain((1.0, 1.0, 1.0))


@pytest.fixture
def coarse_mesh(unit_box):
    """24 elements: six faces of 2 x 2 panels."""
    return build_box_mesh(unit_box, 0.5)


@pytest.fixture
def plane_wave_data(unit_box, coarse_mesh):
    """Real parts of an exact plane wave on the coarse mesh and at 8 sensors."""
    k, direction = 1.0, (1.0, 0.0, 0.0)
    cauchy = plane_wave_cauchy(coarse_mesh, k, direction).real_view()
    sensors = uniform_sensor_points(unit_box, (2, 2, 2))
    values = plane_wave_field(k, direction, sensors.points).real
    return TrainingData(coarse_mesh, cauchy, sensors.with_values(values), k)


@pytest.fixture
def tiny_config():
    return TrainConfig(learning_rate=1e-3, batch_size=2, max_epochs=20, patience=5,
                       seeds=(0, 1), hidden_width=4, depth=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
