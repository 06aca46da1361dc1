"""Adam training on sample-tuple streams with deterministic resume.

All randomness is owned by exactly two restorable sources: the tuple
stream's numpy generator (batch content) and a torch generator (dropout
masks). Both are serialized into training-state checkpoints, so restoring
the last checkpoint and continuing reproduces the same parameter trajectory
as an uninterrupted run. The single TrainState writer is the loop below;
forward passes never mutate parameters.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (
    KIND_TRAIN_STATE,
    load_checkpoint,
    network_kind,
    network_tensors,
    save_checkpoint,
    save_network,
)
from .config import ModelConfig, TrainConfig
from .data import SampleTuple
from .exceptions import ConfigurationError, DivergenceError, ShapeAuditError
from .networks import build_network


def l2_loss(predicted: np.ndarray, target: np.ndarray) -> float:
    """Mean over pixels of the squared intensity difference (symmetric)."""
    a = np.asarray(predicted, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeAuditError(f"resolution mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


@dataclass
class TrainState:
    """Everything the optimizer loop owns: parameters, Adam moments, RNG."""

    net: torch.nn.Module
    optimizer: torch.optim.Adam
    dropout_generator: torch.Generator
    train_config: TrainConfig
    step: int = 0
    loss_history: list = field(default_factory=list)

    @property
    def last_loss(self) -> float | None:
        return self.loss_history[-1] if self.loss_history else None


def init_train_state(model_config: ModelConfig, train_config: TrainConfig) -> TrainState:
    """Fresh seeded network + optimizer; the starting point of every run."""
    net = build_network(model_config, seed=train_config.seed)
    net.set_dropout(train_config.resolved_keep_probability(model_config))
    optimizer = torch.optim.Adam(
        net.parameters(),
        lr=train_config.learning_rate,
        betas=(train_config.adam_beta1, train_config.adam_beta2),
        eps=train_config.adam_epsilon,
    )
    gen = torch.Generator()
    gen.manual_seed(train_config.seed + 0x5EED)
    return TrainState(net=net, optimizer=optimizer, dropout_generator=gen,
                      train_config=train_config)


def _batch_tensors(batch: list[SampleTuple], resolution, dtype):
    if not batch:
        raise ConfigurationError("training batch must be non-empty")
    for t in batch:
        if t.input_frame.shape != tuple(resolution):
            raise ShapeAuditError(
                f"tuple {t.source} resolution {t.input_frame.shape} does not match "
                f"model resolution {tuple(resolution)}"
            )
    x = torch.from_numpy(np.stack([t.input_frame for t in batch])[:, None]).to(dtype)
    y = torch.from_numpy(np.stack([t.target_frame for t in batch])[:, None]).to(dtype)
    dt = torch.tensor([[t.dt_millis] for t in batch], dtype=dtype)
    return x, dt, y


def train_step(state: TrainState, batch: list[SampleTuple]) -> TrainState:
    """One Adam update from the mean batch gradient of the L2 loss.

    Dropout is active; exactly one parameter update happens regardless of
    batch size. Raises DivergenceError (carrying the offending step) on a
    non-finite loss or gradient, leaving the step counter untouched.
    """
    net = state.net
    x, dt, y = _batch_tensors(batch, net.config.input_resolution, net.param_dtype())
    net.train()
    if net.config.has_time_branch:
        pred = net(x, dt, generator=state.dropout_generator)
    else:
        pred = net(x, generator=state.dropout_generator)
    loss = torch.mean((pred - y) ** 2)
    loss_value = float(loss.item())
    if not np.isfinite(loss_value) or loss_value < 0:
        raise DivergenceError(state.step + 1, f"non-finite loss at step {state.step + 1}")
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    for p in net.parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise DivergenceError(state.step + 1, f"non-finite gradient at step {state.step + 1}")
    state.optimizer.step()
    state.step += 1
    state.loss_history.append(loss_value)
    return state


# ----------------------------------------------------------------------
# Training-state serialization
# ----------------------------------------------------------------------


def save_train_state(path, state: TrainState, stream_rng_state: dict) -> None:
    tensors = network_tensors(state.net)
    adam_steps = {}
    names = [name for name, _ in state.net.named_parameters()]
    params = list(state.net.parameters())
    for name, p in zip(names, params):
        opt_state = state.optimizer.state.get(p)
        if not opt_state:
            continue
        tensors[f"adam.{name}.exp_avg"] = opt_state["exp_avg"].numpy()
        tensors[f"adam.{name}.exp_avg_sq"] = opt_state["exp_avg_sq"].numpy()
        step_t = opt_state["step"]
        adam_steps[name] = float(step_t.item() if torch.is_tensor(step_t) else step_t)
    extra = {
        "model_kind": network_kind(state.net),
        "train_config": state.train_config.to_dict(),
        "step": state.step,
        "adam_steps": adam_steps,
        "dropout_rng": state.dropout_generator.get_state().numpy().tobytes().hex(),
        "stream_rng": json.loads(json.dumps(stream_rng_state, default=int)),
        "resolved_keep_probability": state.net.image_encoder.dropout_keep_probability,
    }
    save_checkpoint(path, KIND_TRAIN_STATE, state.net.config, tensors, extra)


def load_train_state(path) -> tuple[TrainState, dict]:
    """Restore a TrainState; returns (state, stream_rng_state)."""
    data = load_checkpoint(path)
    if data.kind != KIND_TRAIN_STATE:
        raise ConfigurationError(f"{path} is not a training-state checkpoint")
    train_config = TrainConfig.from_dict(data.extra["train_config"])
    state = init_train_state(data.model_config, train_config)
    net_state = {
        name: torch.from_numpy(arr) for name, arr in data.parameter_tensors().items()
    }
    state.net.load_state_dict(net_state)
    state.step = int(data.extra["step"])
    adam_steps = data.extra.get("adam_steps", {})
    for name, p in zip([n for n, _ in state.net.named_parameters()], state.net.parameters()):
        key_avg = f"adam.{name}.exp_avg"
        if key_avg not in data.tensors:
            continue
        state.optimizer.state[p] = {
            "step": torch.tensor(float(adam_steps[name])),
            "exp_avg": torch.from_numpy(data.tensors[key_avg].copy()),
            "exp_avg_sq": torch.from_numpy(data.tensors[f"adam.{name}.exp_avg_sq"].copy()),
        }
    rng_bytes = bytes.fromhex(data.extra["dropout_rng"])
    state.dropout_generator.set_state(torch.from_numpy(np.frombuffer(rng_bytes, dtype=np.uint8).copy()))
    return state, data.extra["stream_rng"]


# ----------------------------------------------------------------------
# The loop
# ----------------------------------------------------------------------


class _TrainLog:
    """Line-delimited JSON training log: step, wall time, loss, lr."""

    def __init__(self, path, interval: int):
        self.path = Path(path) if path else None
        self.interval = max(1, interval)
        self._fh = open(self.path, "a") if self.path else None

    def record(self, step: int, loss: float, lr: float, force: bool = False) -> None:
        if self._fh is None:
            return
        if force or step % self.interval == 0:
            rec = {"step": step, "wall_time": time.time(), "loss": loss, "lr": lr}
            self._fh.write(json.dumps(rec) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    stream,
    out_checkpoint=None,
    log_path=None,
    resume_from=None,
) -> TrainState:
    """Run the optimizer loop for up to ``train_config.max_steps`` steps.

    ``stream`` must expose ``next_batch(n)`` and the ``rng_state`` property
    (see data.TupleStream). When ``out_checkpoint`` is given, the final
    parameters land there and the full training state (for resumption) at
    ``<out_checkpoint>.state``; intermediate states are written every
    ``checkpoint_interval`` steps. On divergence the last written state file
    is left in place and the error propagates.

    Resuming from a state file reproduces the exact parameter trajectory of
    an uninterrupted run with the same seed, batch for batch.
    """
    if resume_from is not None:
        state, stream_rng = load_train_state(resume_from)
        if state.train_config.to_dict() != train_config.to_dict():
            raise ConfigurationError(
                "resume requested with a train config different from the checkpoint's"
            )
        if state.net.config.to_dict() != model_config.to_dict():
            raise ConfigurationError(
                "resume requested with a model config different from the checkpoint's"
            )
        stream.rng_state = stream_rng
    else:
        state = init_train_state(model_config, train_config)

    out_checkpoint = Path(out_checkpoint) if out_checkpoint else None
    state_path = out_checkpoint.with_suffix(out_checkpoint.suffix + ".state") if out_checkpoint else None
    log = _TrainLog(log_path, train_config.log_interval)
    try:
        while state.step < train_config.max_steps:
            batch = stream.next_batch(train_config.batch_size)
            train_step(state, batch)
            log.record(state.step, state.last_loss, train_config.learning_rate)
            if (
                state_path is not None
                and train_config.checkpoint_interval > 0
                and state.step % train_config.checkpoint_interval == 0
                and state.step < train_config.max_steps
            ):
                save_train_state(state_path, state, stream.rng_state)
        if state.loss_history and state.step % log.interval != 0:
            log.record(state.step, state.last_loss, train_config.learning_rate, force=True)
        if out_checkpoint is not None:
            save_network(
                out_checkpoint,
                state.net,
                extra={
                    "step": state.step,
                    "train_config": train_config.to_dict(),
                    "resolved_keep_probability": state.net.image_encoder.dropout_keep_probability,
                },
            )
            save_train_state(state_path, state, stream.rng_state)
    finally:
        log.close()
    state.net.eval()
    return state
