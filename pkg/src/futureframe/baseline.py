"""Iterative comparison system: a time-unaware autoencoder rolled out.

The baseline shares the main architecture minus the time branch (so its
embedding is the image embedding alone). It is trained on tuples at one
fixed displacement and reaches larger horizons only by feeding each
prediction back in as the next input, paying one forward pass per step and
accumulating its own prediction errors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .data import TupleStream
from .exceptions import ConfigurationError
from .frames import check_frame
from .networks import BaselineNet


@dataclass(frozen=True)
class BaselineConfig:
    """Geometry plus the fixed displacement the baseline is trained for."""

    model: ModelConfig
    step_millis: float = 40.0

    def __post_init__(self):
        if self.model.has_time_branch:
            raise ConfigurationError(
                "baseline model config must not contain a time branch; "
                "use ModelConfig.without_time_branch()"
            )
        if self.step_millis <= 0:
            raise ConfigurationError(f"step_millis must be positive, got {self.step_millis}")

    @classmethod
    def from_time_conditioned(cls, config: ModelConfig, step_millis: float = 40.0):
        return cls(model=config.without_time_branch(), step_millis=step_millis)

    def rollout_count(self, dt_millis: float) -> int:
        """How many fixed steps reach dt; dt must be an exact multiple."""
        ratio = dt_millis / self.step_millis
        k = round(ratio)
        if k < 1 or abs(ratio - k) > 1e-9:
            raise ConfigurationError(
                f"dt {dt_millis} ms is not a positive multiple of the baseline "
                f"step {self.step_millis} ms"
            )
        return k


def rollout(net: BaselineNet, frame: np.ndarray, k: int) -> list[np.ndarray]:
    """Feed the network its own output k times; returns all k predictions.

    Costs exactly k forward passes; the first j outputs equal those of a
    j-step rollout because each step depends only on the previous output.
    """
    if not isinstance(net, BaselineNet):
        raise ConfigurationError("rollout requires a baseline (time-unaware) network")
    if int(k) != k or k < 1:
        raise ConfigurationError(f"rollout length must be a positive integer, got {k}")
    current = check_frame(frame, resolution=net.config.input_resolution)
    outputs = []
    for _ in range(int(k)):
        current = net.predict_frame(current)
        outputs.append(current)
    return outputs


def fixed_step_stream(root, segments, split, side, config: BaselineConfig,
                      seed: int = 0) -> TupleStream:
    """Tuple stream restricted to the baseline's training displacement."""
    return TupleStream(
        root,
        segments,
        split,
        side,
        max_dt_millis=config.step_millis,
        seed=seed,
        exact_dt_millis=config.step_millis,
    )
