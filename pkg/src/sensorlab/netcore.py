"""Single-hidden-layer feedforward regression network.

The network computes y = b2 + lw . tanh(iw x + b1): tanh hidden layer,
identity output neuron. Initial weights and biases are not random; each of
the four parameter groups is filled from one scalar coefficient, so an
initial state is fully described by a four-coefficient configuration.

A literal constant fill would make every hidden unit identical forever
(their Jacobian columns coincide), so each group gets a fixed multiplicative
perturbation: flat element k is scaled by (1 + 1e-3 * k). The perturbation
is deterministic, tiny, and preserves zero coefficients exactly, so sweeps
over a coefficient still isolate that coefficient's effect.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import Scaler

COEFF_MIN = -5.0
COEFF_MAX = 5.0
PERTURBATION = 1e-3


@dataclass(frozen=True)
class WeightConfig:
    """The four scalar coefficients that expand into a full initial state."""

    c_iw: float
    c_b1: float
    c_b2: float
    c_lw: float

    def __post_init__(self):
        for name, value in self.as_dict().items():
            value = float(value)
            object.__setattr__(self, name, value)
            if not np.isfinite(value):
                raise ValueError(f"coefficient {name} must be finite, got {value!r}")
            if not COEFF_MIN <= value <= COEFF_MAX:
                raise ValueError(f"coefficient {name}={value} outside [{COEFF_MIN}, {COEFF_MAX}]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.c_iw, self.c_b1, self.c_b2, self.c_lw)

    def as_dict(self) -> dict[str, float]:
        return {"c_iw": self.c_iw, "c_b1": self.c_b1, "c_b2": self.c_b2, "c_lw": self.c_lw}


#: The six hard-coded starting configurations, indexed by set id 1..6.
CONFIGURED_SETS: dict[int, WeightConfig] = {
    1: WeightConfig(c_iw=1.0, c_b1=1.0, c_b2=1.0, c_lw=0.0),
    2: WeightConfig(c_iw=1.0, c_b1=1.0, c_b2=1.0, c_lw=1.0),
    3: WeightConfig(c_iw=1.0, c_b1=0.0, c_b2=0.0, c_lw=1.0),
    4: WeightConfig(c_iw=1.0, c_b1=1.0, c_b2=0.0, c_lw=1.0),
    5: WeightConfig(c_iw=1.0, c_b1=0.0, c_b2=1.0, c_lw=1.0),
    6: WeightConfig(c_iw=0.0, c_b1=1.0, c_b2=1.0, c_lw=1.0),
}

SET_IDS = tuple(sorted(CONFIGURED_SETS))


def config_for_set(set_id: int) -> WeightConfig:
    try:
        return CONFIGURED_SETS[int(set_id)]
    except (KeyError, ValueError):
        raise ValueError(f"set id must be one of {SET_IDS}, got {set_id!r}") from None


@dataclass(frozen=True)
class MlpParams:
    """Live network parameters. Treated as an immutable value."""

    iw: np.ndarray  # h x d input weights
    b1: np.ndarray  # h hidden biases
    lw: np.ndarray  # h output-layer weights
    b2: float       # output bias

    def __post_init__(self):
        object.__setattr__(self, "iw", np.atleast_2d(np.asarray(self.iw, dtype=float)))
        object.__setattr__(self, "b1", np.asarray(self.b1, dtype=float).ravel())
        object.__setattr__(self, "lw", np.asarray(self.lw, dtype=float).ravel())
        object.__setattr__(self, "b2", float(self.b2))
        h, d = self.iw.shape
        if self.b1.shape != (h,) or self.lw.shape != (h,):
            raise ValueError(f"inconsistent parameter shapes: iw {self.iw.shape}, "
                             f"b1 {self.b1.shape}, lw {self.lw.shape}")
        if not (np.isfinite(self.iw).all() and np.isfinite(self.b1).all()
                and np.isfinite(self.lw).all() and np.isfinite(self.b2)):
            raise ValueError("network parameters must be finite")

    @property
    def h(self) -> int:
        return self.iw.shape[0]

    @property
    def d(self) -> int:
        return self.iw.shape[1]

    @property
    def n_params(self) -> int:
        return self.h * self.d + 2 * self.h + 1


def _configured_block(coefficient: float, shape: tuple[int, ...]) -> np.ndarray:
    """Constant fill with the fixed symmetry-breaking perturbation.

    Element k of the row-major flattened block is coefficient * (1 + 1e-3 k).
    A zero coefficient stays exactly zero.
    """
    size = int(np.prod(shape))
    block = coefficient * (1.0 + PERTURBATION * np.arange(size, dtype=float))
    return block.reshape(shape)


def init_params(d: int, h: int, cfg: WeightConfig) -> MlpParams:
    """Expand a four-coefficient configuration into full initial parameters."""
    if d < 1 or h < 1:
        raise ValueError(f"need d >= 1 and h >= 1, got d={d}, h={h}")
    return MlpParams(
        iw=_configured_block(cfg.c_iw, (h, d)),
        b1=_configured_block(cfg.c_b1, (h,)),
        lw=_configured_block(cfg.c_lw, (h,)),
        b2=cfg.c_b2,
    )


def forward(params: MlpParams, x: np.ndarray) -> float:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=float).ravel()
    return float(params.b2 + params.lw @ np.tanh(params.iw @ x + params.b1))


def predict(params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the network on an N x d batch of inputs."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    hidden = np.tanh(inputs @ params.iw.T + params.b1)
    return hidden @ params.lw + params.b2


def jacobian(params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """Derivatives of the per-sample error e_i = y(x_i) - t_i w.r.t. the flat parameters.

    Targets are constants, so this equals the Jacobian of the predictions.
    Column order follows the flattening convention: iw row-major, b1, lw, b2.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    n = inputs.shape[0]
    hidden = np.tanh(inputs @ params.iw.T + params.b1)   # N x h
    gate = (1.0 - hidden ** 2) * params.lw               # N x h, dy/dz_j
    d_iw = np.einsum("nj,nk->njk", gate, inputs).reshape(n, params.h * params.d)
    return np.hstack([d_iw, gate, hidden, np.ones((n, 1))])


def flatten(params: MlpParams) -> np.ndarray:
    """Pack parameters into one vector: iw row-major, then b1, lw, b2."""
    return np.concatenate([params.iw.ravel(), params.b1, params.lw, [params.b2]])


def unflatten(theta: np.ndarray, d: int, h: int) -> MlpParams:
    """Inverse of flatten; exact bijection for matching (d, h)."""
    theta = np.asarray(theta, dtype=float).ravel()
    expected = h * d + 2 * h + 1
    if theta.size != expected:
        raise ValueError(f"parameter vector has {theta.size} entries, expected {expected}")
    k = h * d
    return MlpParams(iw=theta[:k].reshape(h, d).copy(),
                     b1=theta[k:k + h].copy(),
                     lw=theta[k + h:k + 2 * h].copy(),
                     b2=theta[-1])


def save_model(path, params: MlpParams, cfg: WeightConfig, scaler: Scaler | None) -> None:
    """Serialize a trained model (with its input scaler) to JSON."""
    payload = {
        "d": params.d,
        "h": params.h,
        "cfg": cfg.as_dict(),
        "iw": [[float(v) for v in row] for row in params.iw],
        "b1": [float(v) for v in params.b1],
        "lw": [float(v) for v in params.lw],
        "b2": params.b2,
        "scaler": scaler.to_json_dict() if scaler is not None else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path) -> tuple[MlpParams, WeightConfig, Scaler | None]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    params = MlpParams(iw=np.array(payload["iw"], dtype=float),
                       b1=np.array(payload["b1"], dtype=float),
                       lw=np.array(payload["lw"], dtype=float),
                       b2=payload["b2"])
    cfg = WeightConfig(**payload["cfg"])
    scaler = Scaler.from_json_dict(payload["scaler"]) if payload.get("scaler") else None
    return params, cfg, scaler
