"""Reproducible diesel-engine-style datasets for tests, demos and acceptance runs.

Oil pressure rises with engine speed (mildly saturating), rises with load and
falls with oil temperature. The map is smooth and well within a small tanh
network's capacity. Inputs and noise come from numpy's default PCG64
generator, so a spec (n, seed, noise_sd) always produces the same dataset.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

RPM_RANGE = (650.0, 2500.0)
LOAD_RANGE = (0.0, 100.0)
OIL_TEMP_RANGE = (60.0, 110.0)

INPUT_NAMES = ("rpm", "load", "oil_temp")
TARGET_NAME = "oil_pressure_kPa"


@dataclass(frozen=True)
class EngineGenSpec:
    n: int
    seed: int
    noise_sd: float = 0.0  # kPa

    def __post_init__(self):
        if self.n < 5:
            raise ValueError(f"need at least 5 samples, got {self.n}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


def oil_pressure_kpa(rpm, load, oil_temp):
    """Noiseless target map; strictly increasing in rpm over the generator range."""
    rpm = np.asarray(rpm, dtype=float)
    return (120.0 + 0.10 * rpm - 1.5e-5 * rpm ** 2
            + 0.8 * np.asarray(load, dtype=float)
            - 0.6 * (np.asarray(oil_temp, dtype=float) - 90.0))


def generate_engine_dataset(spec: EngineGenSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    rpm = rng.uniform(*RPM_RANGE, spec.n)
    load = rng.uniform(*LOAD_RANGE, spec.n)
    oil_temp = rng.uniform(*OIL_TEMP_RANGE, spec.n)
    noise = rng.normal(0.0, spec.noise_sd, spec.n)
    targets = oil_pressure_kpa(rpm, load, oil_temp) + noise
    return Dataset(input_names=INPUT_NAMES,
                   inputs=np.column_stack([rpm, load, oil_temp]),
                   target_name=TARGET_NAME,
                   targets=targets)
