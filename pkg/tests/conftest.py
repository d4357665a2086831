import numpy as np
import pytest

from sensorlab.dataset import Dataset, fit_apply_scaler, interleaved_split
from sensorlab.synthetic import EngineGenSpec, generate_engine_dataset


def make_linear_dataset(n: int = 50, slope: float = 2.0, intercept: float = 1.0) -> Dataset:
    """The y = slope * x + intercept oracle fixture."""
    x = np.linspace(0.0, 10.0, n)
    return Dataset(input_names=("x",), inputs=x[:, None],
                   target_name="y", targets=slope * x + intercept)


@pytest.fixture
def linear_dataset() -> Dataset:
    return make_linear_dataset()


@pytest.fixture
def linear_prepared(linear_dataset):
    """(scaled dataset, split) for the linear fixture."""
    _, scaled = fit_apply_scaler(linear_dataset)
    return scaled, interleaved_split(linear_dataset.n)


@pytest.fixture
def engine_prepared():
    """Small scaled engine dataset with its split, for trainer-level tests."""
    data = generate_engine_dataset(EngineGenSpec(n=400, seed=3, noise_sd=0.5))
    _, scaled = fit_apply_scaler(data)
    return scaled, interleaved_split(data.n)
