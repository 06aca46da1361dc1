"""Architecture and training hyperparameter containers.

ModelConfig pins the full network geometry: every parameter tensor shape is
derivable from it, which is what the checkpoint shape audit relies on. The
defaults reproduce the 120x120 grayscale architecture: conv feature maps
thinning 120->60->30->15 with channels (32, 64, 128), a flattened 7200-wide
map projected to a 4096 image embedding, a parallel 4-layer 64-wide branch
embedding the temporal displacement, and a 4160-wide concatenated embedding
presented to the mirrored decoder.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .exceptions import ConfigurationError

DEFAULT_TIME_INPUT_SCALE = 1e-3  # network consumes dt in seconds


@dataclass(frozen=True)
class ModelConfig:
    """Full geometry of the encoder-decoder with the parallel time branch.

    The convolutional encoder interleaves stride-1 convolutions with stride-2
    2x2 "pooling" convolutions; there is one more convolution than pooling
    stage, and the final convolution projects channels so that flattening the
    last feature map yields exactly ``encoder_fc_sizes[0]`` units.

    Setting ``time_branch_fc_sizes=()`` removes the time branch entirely,
    which is how the iterative baseline network is configured.
    """

    input_resolution: tuple[int, int] = (120, 120)
    encoder_channels: tuple[int, ...] = (32, 64, 128)
    encoder_kernel_schedule: tuple[int, ...] = (5, 5, 2, 1)
    encoder_fc_sizes: tuple[int, ...] = (7200, 4096)
    time_branch_fc_sizes: tuple[int, ...] = (64, 64, 64, 64)
    decoder_fc_sizes: tuple[int, ...] = (4096, 7200)
    decoder_kernel_schedule: tuple[int, ...] = (2, 5, 5)
    decoder_channels: tuple[int, ...] = (64, 32, 1)
    dropout_keep_probability: float = 0.8
    output_activation: str = "sigmoid"
    time_input_scale: float = DEFAULT_TIME_INPUT_SCALE
    # When True, the flatten width is followed by a trainable square
    # projection of the same size before the image-embedding projection.
    trainable_flatten_projection: bool = False

    def __post_init__(self):
        object.__setattr__(self, "input_resolution", tuple(self.input_resolution))
        for name in (
            "encoder_channels",
            "encoder_kernel_schedule",
            "encoder_fc_sizes",
            "time_branch_fc_sizes",
            "decoder_fc_sizes",
            "decoder_kernel_schedule",
            "decoder_channels",
        ):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    # ------------------------------------------------------------------
    # Derived geometry
    # ------------------------------------------------------------------

    @property
    def n_conv_layers(self) -> int:
        return len(self.encoder_kernel_schedule)

    @property
    def n_pool_stages(self) -> int:
        return self.n_conv_layers - 1

    def spatial_schedule(self) -> list[tuple[int, int]]:
        """Feature map sizes from the input through every pooling stage.

        Each 2x2 stride-2 pooling convolution maps H -> floor(H / 2)
        (for H >= 2: floor((H - 2) / 2) + 1 == floor(H / 2)).
        """
        h, w = self.input_resolution
        sizes = [(h, w)]
        for _ in range(self.n_pool_stages):
            h, w = h // 2, w // 2
            sizes.append((h, w))
        return sizes

    @property
    def final_feature_size(self) -> tuple[int, int]:
        return self.spatial_schedule()[-1]

    @property
    def flatten_width(self) -> int:
        return self.encoder_fc_sizes[0]

    @property
    def projection_channels(self) -> int:
        """Output channels of the last encoder conv, set so flatten == fc[0]."""
        h, w = self.final_feature_size
        return self.flatten_width // (h * w)

    @property
    def decoder_seed_channels(self) -> int:
        """Channels of the map the decoder FC output is reshaped into."""
        h, w = self.final_feature_size
        return self.decoder_fc_sizes[-1] // (h * w)

    @property
    def image_embedding_size(self) -> int:
        return self.encoder_fc_sizes[-1]

    @property
    def time_embedding_size(self) -> int:
        return self.time_branch_fc_sizes[-1] if self.time_branch_fc_sizes else 0

    @property
    def embedding_size(self) -> int:
        return self.image_embedding_size + self.time_embedding_size

    @property
    def has_time_branch(self) -> bool:
        return bool(self.time_branch_fc_sizes)

    def decoder_output_paddings(self) -> list[tuple[int, int]]:
        """Output padding per upsampling stage so the decoder retraces the
        encoder's spatial schedule exactly (needed when a stage size is odd)."""
        sizes = self.spatial_schedule()
        ups = []
        for (sh, sw), (lh, lw) in zip(sizes[:0:-1], sizes[-2::-1]):
            ups.append((lh - 2 * sh, lw - 2 * sw))
        return ups

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate(self) -> None:
        h, w = self.input_resolution
        if h < 2 or w < 2:
            raise ConfigurationError(f"input resolution too small: {self.input_resolution}")
        if self.n_conv_layers != len(self.encoder_channels) + 1:
            raise ConfigurationError(
                "encoder kernel schedule must have one more entry than "
                f"encoder_channels (projection conv included): got "
                f"{self.encoder_kernel_schedule} vs {self.encoder_channels}"
            )
        if len(self.encoder_fc_sizes) < 2:
            raise ConfigurationError("encoder_fc_sizes needs the flatten width and at least one projection")
        if len(self.decoder_fc_sizes) < 2:
            raise ConfigurationError("decoder_fc_sizes needs at least two entries")
        if len(self.decoder_kernel_schedule) != self.n_pool_stages:
            raise ConfigurationError(
                f"decoder needs {self.n_pool_stages} transpose-conv kernels, "
                f"got {self.decoder_kernel_schedule}"
            )
        if len(self.decoder_channels) != self.n_pool_stages:
            raise ConfigurationError(
                f"decoder needs {self.n_pool_stages} channel counts, got {self.decoder_channels}"
            )
        if self.decoder_channels[-1] != 1:
            raise ConfigurationError("decoder must emit a single-channel frame")
        fh, fw = self.final_feature_size
        if fh < 1 or fw < 1:
            raise ConfigurationError("too many pooling stages for the input resolution")
        if self.flatten_width % (fh * fw) != 0:
            raise ConfigurationError(
                f"encoder_fc_sizes[0]={self.flatten_width} is not a multiple of the "
                f"final feature area {fh}x{fw}"
            )
        if self.decoder_fc_sizes[-1] % (fh * fw) != 0:
            raise ConfigurationError(
                f"decoder_fc_sizes[-1]={self.decoder_fc_sizes[-1]} is not a multiple "
                f"of the final feature area {fh}x{fw}"
            )
        if not (0.0 < self.dropout_keep_probability <= 1.0):
            raise ConfigurationError(
                f"dropout keep probability must be in (0, 1], got {self.dropout_keep_probability}"
            )
        if self.output_activation != "sigmoid":
            raise ConfigurationError(f"unsupported output activation: {self.output_activation}")
        if self.time_input_scale <= 0:
            raise ConfigurationError("time_input_scale must be positive")

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)

    def without_time_branch(self) -> "ModelConfig":
        """The same geometry with the time branch removed (baseline net)."""
        d = self.to_dict()
        d["time_branch_fc_sizes"] = ()
        return ModelConfig(**d)


def expected_parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Shapes of every weight/bias tensor implied by a ModelConfig.

    Keys follow the state_dict naming of networks.TimeConditionedNet /
    BaselineNet; the checkpoint shape audit compares against this map.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    ks = config.encoder_kernel_schedule
    chans = (1,) + config.encoder_channels + (config.projection_channels,)
    for i in range(config.n_conv_layers):
        k = ks[i]
        shapes[f"image_encoder.convs.{i}.weight"] = (chans[i + 1], chans[i], k, k)
        shapes[f"image_encoder.convs.{i}.bias"] = (chans[i + 1],)
        if i < config.n_pool_stages:
            c = chans[i + 1]
            shapes[f"image_encoder.pools.{i}.weight"] = (c, c, 2, 2)
            shapes[f"image_encoder.pools.{i}.bias"] = (c,)
    fc_in = config.flatten_width
    idx = 0
    if config.trainable_flatten_projection:
        shapes[f"image_encoder.fcs.{idx}.weight"] = (fc_in, fc_in)
        shapes[f"image_encoder.fcs.{idx}.bias"] = (fc_in,)
        idx += 1
    for width in config.encoder_fc_sizes[1:]:
        shapes[f"image_encoder.fcs.{idx}.weight"] = (width, fc_in)
        shapes[f"image_encoder.fcs.{idx}.bias"] = (width,)
        fc_in = width
        idx += 1

    if config.has_time_branch:
        t_in = 1
        for i, width in enumerate(config.time_branch_fc_sizes):
            shapes[f"time_encoder.fcs.{i}.weight"] = (width, t_in)
            shapes[f"time_encoder.fcs.{i}.bias"] = (width,)
            t_in = width

    d_in = config.embedding_size
    for i, width in enumerate(config.decoder_fc_sizes):
        shapes[f"decoder.fcs.{i}.weight"] = (width, d_in)
        shapes[f"decoder.fcs.{i}.bias"] = (width,)
        d_in = width
    dchans = (config.decoder_seed_channels,) + config.decoder_channels
    for i in range(config.n_pool_stages):
        c_in, c_out = dchans[i], dchans[i + 1]
        k = config.decoder_kernel_schedule[i]
        shapes[f"decoder.ups.{i}.weight"] = (c_in, c_in, 2, 2)
        shapes[f"decoder.ups.{i}.bias"] = (c_in,)
        shapes[f"decoder.deconvs.{i}.weight"] = (c_in, c_out, k, k)
        shapes[f"decoder.deconvs.{i}.bias"] = (c_out,)
    return shapes


@dataclass
class TrainConfig:
    """Optimizer and loop settings for Adam training with L2 loss.

    ``dropout_keep_probability=None`` inherits the model config's value.
    ``dropout_semantics`` records how a "dropout rate of 80%" is read:
    "keep" treats it as keep-probability 0.8 (the default), "drop" as
    drop-probability 0.8. The resolved keep probability is stored in every
    checkpoint so training and inference agree.
    """

    batch_size: int = 16
    max_steps: int = 500_000
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    dropout_keep_probability: float | None = None
    dropout_semantics: str = "keep"
    checkpoint_interval: int = 0  # 0 = only the final checkpoint
    log_interval: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_steps < 0:
            raise ConfigurationError(f"max_steps must be >= 0, got {self.max_steps}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.dropout_semantics not in ("keep", "drop"):
            raise ConfigurationError(f"dropout_semantics must be 'keep' or 'drop', got {self.dropout_semantics!r}")
        if self.dropout_keep_probability is not None and not (
            0.0 < self.dropout_keep_probability <= 1.0
        ):
            raise ConfigurationError(
                f"dropout keep probability must be in (0, 1], got {self.dropout_keep_probability}"
            )
        if self.checkpoint_interval < 0:
            raise ConfigurationError("checkpoint_interval must be >= 0")

    def resolved_keep_probability(self, model_config: ModelConfig) -> float:
        p = self.dropout_keep_probability
        if p is None:
            p = model_config.dropout_keep_probability
        return p if self.dropout_semantics == "keep" else 1.0 - p

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)
