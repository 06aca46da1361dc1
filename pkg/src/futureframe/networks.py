"""Encoder-decoder networks for one-step, time-conditioned frame prediction.

Two network classes share the same building blocks:

* TimeConditionedNet — an image-encoding branch (convolutions interleaved
  with stride-2 "pooling" convolutions, then fully-connected projections)
  runs parallel to a small fully-connected branch that embeds the requested
  temporal displacement. The two embeddings are concatenated (image first,
  time second) and decoded back to a frame in a single pass, whatever the
  displacement.
* BaselineNet — the same autoencoder without the time branch; it is trained
  for one fixed step and rolled out iteratively (see baseline.py).

Forward passes are pure functions of (inputs, parameters, dropout draw);
parameters are only mutated by the training loop. Dropout uses an explicit
torch.Generator so training runs are reproducible and resumable.
"""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig, expected_parameter_shapes
from .exceptions import ConfigurationError, ShapeAuditError
from .frames import check_displacement, check_frame


def _dropout(x: torch.Tensor, keep_prob: float, generator) -> torch.Tensor:
    """Inverted dropout: scale at train time so inference needs no rescaling."""
    if keep_prob >= 1.0:
        return x
    mask = torch.rand(x.shape, generator=generator, device=x.device) < keep_prob
    return x * mask.to(x.dtype) / keep_prob


def _same_pad(x: torch.Tensor, k: int) -> torch.Tensor:
    """Zero-pad so a stride-1 convolution with kernel k preserves H and W.

    Even kernels need asymmetric padding; the extra row/column goes to the
    bottom/right.
    """
    lo = (k - 1) // 2
    hi = k - 1 - lo
    if lo == 0 and hi == 0:
        return x
    return F.pad(x, (lo, hi, lo, hi))


class ImageEncoder(nn.Module):
    """Convolutional branch: frame -> image embedding vector."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.kernels = config.encoder_kernel_schedule
        chans = (1,) + config.encoder_channels + (config.projection_channels,)
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], self.kernels[i], stride=1, padding=0)
            for i in range(config.n_conv_layers)
        )
        self.pools = nn.ModuleList(
            nn.Conv2d(chans[i + 1], chans[i + 1], 2, stride=2, padding=0)
            for i in range(config.n_pool_stages)
        )
        widths = []
        if config.trainable_flatten_projection:
            widths.append(config.flatten_width)
        widths.extend(config.encoder_fc_sizes[1:])
        fcs, fc_in = [], config.flatten_width
        for width in widths:
            fcs.append(nn.Linear(fc_in, width))
            fc_in = width
        self.fcs = nn.ModuleList(fcs)
        self.dropout_keep_probability = config.dropout_keep_probability

    def forward(self, x: torch.Tensor, generator=None) -> torch.Tensor:
        for i, conv in enumerate(self.convs):
            x = F.relu(conv(_same_pad(x, self.kernels[i])))
            if i < len(self.pools):
                x = self.pools[i](x)
                x = F.relu(x)
        x = x.flatten(1)
        for fc in self.fcs:
            x = F.relu(fc(x))
            if self.training:
                x = _dropout(x, self.dropout_keep_probability, generator)
        return x


class TimeEncoder(nn.Module):
    """Fully-connected branch embedding the temporal displacement.

    The input is dt scaled by ``time_input_scale`` (milliseconds to seconds
    by default); the mapping is a composition of continuous layer maps, so
    predictions vary continuously with dt.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        fcs, fc_in = [], 1
        for width in config.time_branch_fc_sizes:
            fcs.append(nn.Linear(fc_in, width))
            fc_in = width
        self.fcs = nn.ModuleList(fcs)
        self.time_input_scale = config.time_input_scale

    def forward(self, dt_millis: torch.Tensor) -> torch.Tensor:
        x = dt_millis * self.time_input_scale
        for fc in self.fcs:
            x = F.relu(fc(x))
        return x


class FrameDecoder(nn.Module):
    """Embedding -> frame: FC layers, then alternating unpooling (stride-2
    transpose convolutions) and stride-1 transpose convolutions, finishing
    with a sigmoid that pins every output pixel inside [0, 1]."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        fcs, fc_in = [], config.embedding_size
        for width in config.decoder_fc_sizes:
            fcs.append(nn.Linear(fc_in, width))
            fc_in = width
        self.fcs = nn.ModuleList(fcs)
        self.seed_channels = config.decoder_seed_channels
        self.seed_size = config.final_feature_size
        self.kernels = config.decoder_kernel_schedule
        dchans = (self.seed_channels,) + config.decoder_channels
        self.ups = nn.ModuleList(
            nn.ConvTranspose2d(dchans[i], dchans[i], 2, stride=2, output_padding=op)
            for i, op in enumerate(config.decoder_output_paddings())
        )
        self.deconvs = nn.ModuleList(
            nn.ConvTranspose2d(
                dchans[i], dchans[i + 1], k, stride=1,
                padding=(k - 1) // 2 if k % 2 == 1 else 0,
            )
            for i, k in enumerate(self.kernels)
        )
        self.dropout_keep_probability = config.dropout_keep_probability

    def forward(self, z: torch.Tensor, generator=None) -> torch.Tensor:
        x = z
        for fc in self.fcs:
            x = F.relu(fc(x))
            if self.training:
                x = _dropout(x, self.dropout_keep_probability, generator)
        x = x.view(x.shape[0], self.seed_channels, *self.seed_size)
        for i, (up, deconv) in enumerate(zip(self.ups, self.deconvs)):
            x = F.relu(up(x))
            h, w = x.shape[-2:]
            x = deconv(x)
            if self.kernels[i] % 2 == 0:
                x = x[..., :h, :w]  # even kernel overshoots by k-1; crop bottom/right
            if i < len(self.ups) - 1:
                x = F.relu(x)
        return torch.sigmoid(x)


class _EncoderDecoderBase(nn.Module):
    """Shared plumbing: seeded init, shape audit, and forward-pass counters."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder_passes = 0
        self.decoder_passes = 0

    def reset_counters(self) -> None:
        self.encoder_passes = 0
        self.decoder_passes = 0

    def set_dropout(self, keep_probability: float) -> None:
        self.image_encoder.dropout_keep_probability = keep_probability
        self.decoder.dropout_keep_probability = keep_probability

    def initialize(self, seed: int) -> None:
        """Fan-in-scaled uniform weights, zero biases, fully seeded."""
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                    continue
                if ".ups." in name or ".deconvs." in name:
                    # transpose-conv weights are (in, out, kh, kw)
                    fan_in = int(p.shape[0] * math.prod(p.shape[2:]))
                else:
                    fan_in = int(math.prod(p.shape[1:]))
                bound = 1.0 / math.sqrt(fan_in)
                p.uniform_(-bound, bound, generator=g)

    def audit_shapes(self) -> None:
        """Check every parameter tensor against the config-implied shapes."""
        audit_state_shapes(
            {k: tuple(v.shape) for k, v in self.state_dict().items()}, self.config
        )

    def param_dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def _frame_to_tensor(self, frame: np.ndarray) -> torch.Tensor:
        arr = check_frame(frame, resolution=self.config.input_resolution)
        return torch.from_numpy(arr).to(self.param_dtype()).unsqueeze(0).unsqueeze(0)


class TimeConditionedNet(_EncoderDecoderBase):
    """One-step predictor mapping (frame, dt) to the anticipated frame."""

    def __init__(self, config: ModelConfig):
        if not config.has_time_branch:
            raise ConfigurationError("TimeConditionedNet requires a time branch")
        super().__init__(config)
        self.image_encoder = ImageEncoder(config)
        self.time_encoder = TimeEncoder(config)
        self.decoder = FrameDecoder(config)
        self.audit_shapes()

    def encode_image(self, x: torch.Tensor, generator=None) -> torch.Tensor:
        self.encoder_passes += 1
        return self.image_encoder(x, generator=generator)

    def encode_time(self, dt_millis: torch.Tensor) -> torch.Tensor:
        if not torch.all(dt_millis > 0):
            raise ConfigurationError("temporal displacement must be positive")
        return self.time_encoder(dt_millis)

    def decode(self, z: torch.Tensor, generator=None) -> torch.Tensor:
        if z.shape[-1] != self.config.embedding_size:
            raise ShapeAuditError(
                f"embedding has width {z.shape[-1]}, expected {self.config.embedding_size}"
            )
        self.decoder_passes += 1
        return self.decoder(z, generator=generator)

    def embed(self, x: torch.Tensor, dt_millis: torch.Tensor, generator=None) -> torch.Tensor:
        """Concatenated embedding: image part first, time part second."""
        z_img = self.encode_image(x, generator=generator)
        z_time = self.encode_time(dt_millis)
        return torch.cat([z_img, z_time], dim=1)

    def forward(self, x: torch.Tensor, dt_millis: torch.Tensor, generator=None) -> torch.Tensor:
        return self.decode(self.embed(x, dt_millis, generator=generator), generator=generator)

    # ------------------------------------------------------------------
    # Single-frame numpy API
    # ------------------------------------------------------------------

    def predict_frame(self, frame: np.ndarray, dt_millis: float) -> np.ndarray:
        """Predict the frame dt_millis milliseconds ahead, in one step."""
        dt = check_displacement(dt_millis)
        x = self._frame_to_tensor(frame)
        dt_t = torch.tensor([[dt]], dtype=self.param_dtype())
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                out = self.forward(x, dt_t)
        finally:
            self.train(was_training)
        return out[0, 0].numpy().astype(np.float32)

    def image_embedding(self, frame: np.ndarray) -> np.ndarray:
        x = self._frame_to_tensor(frame)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                z = self.encode_image(x)
        finally:
            self.train(was_training)
        return z[0].numpy()

    def time_embedding(self, dt_millis: float) -> np.ndarray:
        dt = check_displacement(dt_millis)
        with torch.no_grad():
            z = self.encode_time(torch.tensor([[dt]], dtype=self.param_dtype()))
        return z[0].numpy()


class BaselineNet(_EncoderDecoderBase):
    """Time-unaware autoencoder trained for one fixed step ahead."""

    def __init__(self, config: ModelConfig):
        if config.has_time_branch:
            raise ConfigurationError("BaselineNet must be configured without a time branch")
        super().__init__(config)
        self.image_encoder = ImageEncoder(config)
        self.decoder = FrameDecoder(config)
        self.audit_shapes()

    def encode_image(self, x: torch.Tensor, generator=None) -> torch.Tensor:
        self.encoder_passes += 1
        return self.image_encoder(x, generator=generator)

    def decode(self, z: torch.Tensor, generator=None) -> torch.Tensor:
        self.decoder_passes += 1
        return self.decoder(z, generator=generator)

    def forward(self, x: torch.Tensor, generator=None) -> torch.Tensor:
        return self.decode(self.encode_image(x, generator=generator), generator=generator)

    def predict_frame(self, frame: np.ndarray) -> np.ndarray:
        """One fixed-step prediction (the rollout base case)."""
        x = self._frame_to_tensor(frame)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                out = self.forward(x)
        finally:
            self.train(was_training)
        return out[0, 0].numpy().astype(np.float32)


def audit_state_shapes(shapes: dict[str, tuple[int, ...]], config: ModelConfig) -> None:
    """Raise ShapeAuditError unless `shapes` matches the config exactly."""
    expected = expected_parameter_shapes(config)
    problems = []
    for name, shape in sorted(expected.items()):
        got = shapes.get(name)
        if got is None:
            problems.append(f"missing tensor {name} (expected {shape})")
        elif tuple(got) != shape:
            problems.append(f"{name}: got {tuple(got)}, expected {shape}")
    for name in sorted(set(shapes) - set(expected)):
        problems.append(f"unexpected tensor {name}")
    if problems:
        raise ShapeAuditError("shape audit failed:\n  " + "\n  ".join(problems))


def build_network(config: ModelConfig, seed: int | None = None):
    """Construct (and optionally seed-initialize) the right network class."""
    net = TimeConditionedNet(config) if config.has_time_branch else BaselineNet(config)
    if seed is not None:
        net.initialize(seed)
    return net
