"""Synthetic moving-shape corpora with analytic groundtruth.

A scene is a single shape (square, disk, or bar) on a constant background,
moving either linearly or oscillating along one axis. Frames are rasterized
with exact area coverage for boundary pixels, so the shape's analytic
position is recoverable from rendered frames to sub-pixel accuracy.

Scenes double as stress modes: small foreground/background contrast, high
velocity relative to the frame interval, and oscillating (direction-ambiguous)
motion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import yaml

from .data import ActionSegment, frame_filename, write_segments
from .exceptions import ConfigurationError, IngestionError, SpecParseError
from .frames import save_frame_png

SHAPE_KINDS = ("square", "disk", "bar")
MOTION_KINDS = ("linear", "oscillating")

# a bar is an elongated rectangle: length `size` along x, thickness size/4
BAR_THICKNESS_RATIO = 0.25


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """One synthetic video: shape, trajectory, and rendering parameters."""

    video_id: str
    actor_id: str
    shape_kind: str
    size: float
    start: tuple[float, float]  # shape center (x, y) at t = 0, in px
    fps: float
    duration_millis: float
    resolution: tuple[int, int] = (64, 64)  # (height, width)
    motion_kind: str = "linear"
    velocity: tuple[float, float] = (0.0, 0.0)  # px/ms, linear motion
    amplitude: float = 0.0  # px, oscillating motion
    period_millis: float = 0.0
    axis: str = "x"
    foreground: float = 1.0
    background: float = 0.0
    action_label: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        if self.shape_kind not in SHAPE_KINDS:
            raise SpecParseError(f"unknown shape kind {self.shape_kind!r}")
        if self.motion_kind not in MOTION_KINDS:
            raise SpecParseError(f"unknown motion kind {self.motion_kind!r}")
        if self.size <= 0:
            raise SpecParseError(f"shape size must be positive, got {self.size}")
        if self.fps <= 0:
            raise SpecParseError(f"fps must be positive, got {self.fps}")
        if self.duration_millis < 0:
            raise SpecParseError("duration must be >= 0")
        if not (0.0 <= self.background <= 1.0 and 0.0 <= self.foreground <= 1.0):
            raise SpecParseError("foreground/background intensities must lie in [0, 1]")
        if self.foreground == self.background:
            raise SpecParseError("foreground and background intensities must differ")
        if self.motion_kind == "oscillating":
            if self.period_millis <= 0:
                raise SpecParseError("oscillating motion needs a positive period")
            if self.axis not in ("x", "y"):
                raise SpecParseError(f"oscillation axis must be 'x' or 'y', got {self.axis!r}")
        self._check_inside_frame()

    # -- geometry ---------------------------------------------------------

    @property
    def half_extents(self) -> tuple[float, float]:
        """Half-width and half-height of the shape's bounding box (x, y)."""
        if self.shape_kind == "bar":
            return self.size / 2.0, self.size * BAR_THICKNESS_RATIO / 2.0
        return self.size / 2.0, self.size / 2.0

    @property
    def frame_interval_millis(self) -> float:
        return 1000.0 / self.fps

    @property
    def n_frames(self) -> int:
        return int(self.duration_millis // self.frame_interval_millis) + 1

    def center_at(self, t_millis: float) -> tuple[float, float]:
        """Analytic shape center at time t (ms)."""
        x0, y0 = self.start
        if self.motion_kind == "linear":
            return x0 + self.velocity[0] * t_millis, y0 + self.velocity[1] * t_millis
        offset = self.amplitude * math.sin(2.0 * math.pi * t_millis / self.period_millis)
        if self.axis == "x":
            return x0 + offset, y0
        return x0, y0 + offset

    def _check_inside_frame(self) -> None:
        h, w = self.resolution
        ex, ey = self.half_extents
        if self.motion_kind == "linear":
            extreme_times = (0.0, self.duration_millis)
            centers = [self.center_at(t) for t in extreme_times]
        else:
            x0, y0 = self.start
            a = self.amplitude
            centers = [(x0 - a, y0), (x0 + a, y0)] if self.axis == "x" else [
                (x0, y0 - a), (x0, y0 + a)]
        for cx, cy in centers:
            if cx - ex < 0 or cx + ex > w or cy - ey < 0 or cy + ey > h:
                raise SpecParseError(
                    f"scene {self.video_id}: trajectory leaves the {w}x{h} frame "
                    f"(shape center reaches ({cx:.3g}, {cy:.3g}))"
                )

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------
# Exact coverage rasterization
# ----------------------------------------------------------------------


def _interval_overlap(lo: float, hi: float, n: int) -> np.ndarray:
    """Overlap of [lo, hi] with each unit cell [i, i+1), i = 0..n-1."""
    edges = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(hi, edges + 1.0) - np.maximum(lo, edges), 0.0, 1.0)


def _quarter_disk_area(a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    """Area of the disk x^2 + y^2 <= r^2 inside [0, a] x [0, b] for a, b >= 0."""
    a = np.minimum(a, r)
    b = np.minimum(b, r)
    inside = a * a + b * b <= r * r

    def antiderivative(t):
        t = np.clip(t, 0.0, r)
        return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0))
                      + r * r * np.arcsin(np.clip(t / r, -1.0, 1.0)))

    x_flat = np.minimum(a, np.sqrt(np.maximum(r * r - b * b, 0.0)))
    curved = antiderivative(a) - antiderivative(x_flat)
    return np.where(inside, a * b, b * x_flat + curved)


def _signed_quarter(a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    return np.sign(a) * np.sign(b) * _quarter_disk_area(np.abs(a), np.abs(b), r)


def _disk_coverage(cx: float, cy: float, r: float, shape: tuple[int, int]) -> np.ndarray:
    """Exact per-pixel area of a disk of radius r centered at (cx, cy)."""
    h, w = shape
    x0 = np.arange(w, dtype=np.float64)[None, :] - cx
    y0 = np.arange(h, dtype=np.float64)[:, None] - cy
    x1, y1 = x0 + 1.0, y0 + 1.0
    return (
        _signed_quarter(x1, y1, r)
        - _signed_quarter(x0, y1, r)
        - _signed_quarter(x1, y0, r)
        + _signed_quarter(x0, y0, r)
    )


def shape_coverage(spec: SyntheticSceneSpec, t_millis: float) -> np.ndarray:
    """Fraction of each pixel covered by the shape at time t (exact)."""
    h, w = spec.resolution
    cx, cy = spec.center_at(t_millis)
    if spec.shape_kind == "disk":
        return _disk_coverage(cx, cy, spec.size / 2.0, (h, w))
    ex, ey = spec.half_extents
    col = _interval_overlap(cx - ex, cx + ex, w)
    row = _interval_overlap(cy - ey, cy + ey, h)
    return row[:, None] * col[None, :]


def render_synthetic(spec: SyntheticSceneSpec, t_millis: float) -> np.ndarray:
    """Rasterize the scene at time t; deterministic analytic groundtruth."""
    if not (0.0 <= t_millis <= spec.duration_millis):
        raise ConfigurationError(
            f"t={t_millis} ms outside scene duration [0, {spec.duration_millis}]"
        )
    coverage = shape_coverage(spec, t_millis)
    frame = spec.background + (spec.foreground - spec.background) * coverage
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


# ----------------------------------------------------------------------
# Corpus generation
# ----------------------------------------------------------------------


def write_scene(root, spec: SyntheticSceneSpec) -> ActionSegment:
    """Render one scene to disk; the video directory must not exist yet."""
    segment = ActionSegment(
        video_id=spec.video_id,
        actor_id=spec.actor_id,
        action_label=spec.action_label,
        start_frame=0,
        end_frame=spec.n_frames - 1,
        fps=spec.fps,
    )
    video_dir = segment.frame_dir(root)
    if video_dir.exists():
        raise IngestionError(f"video directory already exists: {video_dir}")
    video_dir.mkdir(parents=True)
    for index in range(spec.n_frames):
        t = index * spec.frame_interval_millis
        save_frame_png(render_synthetic(spec, t), video_dir / frame_filename(index))
    return segment


def write_corpus(root, specs) -> list[ActionSegment]:
    """Render a list of scenes into the standard corpus layout."""
    specs = list(specs)
    if not specs:
        raise SpecParseError("no scenes to render")
    ids = [s.video_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SpecParseError("scene video_ids must be unique")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    segments = [write_scene(root, spec) for spec in specs]
    write_segments(root, segments)
    return segments


def moving_square_specs(
    n_videos: int,
    resolution: int = 64,
    fps: float = 25.0,
    duration_millis: float = 200.0,
    size: float = 8.0,
    speed: float = 0.25,
    x0_min: float | None = None,
    x0_max: float | None = None,
    action_label: str = "square",
) -> list[SyntheticSceneSpec]:
    """Rightward-moving squares with starts spread over the admissible range.

    One actor per video, so actor splits hold out whole start positions.
    All scenes share one velocity: the target at any displacement is then a
    deterministic function of the input frame alone.
    """
    half = size / 2.0
    travel = speed * duration_millis
    lo = half if x0_min is None else x0_min
    hi = (resolution - half - travel) if x0_max is None else x0_max
    if hi < lo:
        raise SpecParseError(
            f"no admissible start positions: range [{lo}, {hi}] is empty"
        )
    starts = np.linspace(lo, hi, n_videos)
    return [
        SyntheticSceneSpec(
            video_id=f"sq{i:03d}",
            actor_id=f"actor{i:02d}",
            shape_kind="square",
            size=size,
            start=(float(x0), resolution / 2.0),
            fps=fps,
            duration_millis=duration_millis,
            resolution=(resolution, resolution),
            motion_kind="linear",
            velocity=(speed, 0.0),
            action_label=action_label,
        )
        for i, x0 in enumerate(starts)
    ]


# ----------------------------------------------------------------------
# Scene spec files
# ----------------------------------------------------------------------

_SCENE_KEYS = {
    "video_id", "actor", "shape", "size", "start", "velocity", "oscillation",
    "foreground", "background", "fps", "duration_millis", "resolution", "action",
}


def parse_scene_specs(text: str) -> list[SyntheticSceneSpec]:
    """Parse a YAML scene spec document into SyntheticSceneSpec objects.

    Top-level keys (resolution, fps, duration_millis, action, defaults) apply
    to every scene unless the scene overrides them.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecParseError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict) or "scenes" not in doc:
        raise SpecParseError("spec file must be a mapping with a 'scenes' list")
    scenes = doc["scenes"]
    if not isinstance(scenes, list) or not scenes:
        raise SpecParseError("'scenes' must be a non-empty list")

    shared = dict(doc.get("defaults") or {})
    for key in ("resolution", "fps", "duration_millis", "action"):
        if key in doc:
            shared[key] = doc[key]

    specs = []
    for pos, raw in enumerate(scenes):
        if not isinstance(raw, dict):
            raise SpecParseError(f"scene #{pos}: expected a mapping")
        merged = {**shared, **raw}
        unknown = set(merged) - _SCENE_KEYS
        if unknown:
            raise SpecParseError(f"scene #{pos}: unknown fields {sorted(unknown)}")
        try:
            video_id = str(merged["video_id"])
            actor = str(merged["actor"])
            shape = merged.get("shape", "square")
            size = float(merged["size"])
            start = tuple(merged["start"])
            fps = float(merged.get("fps", 25.0))
            duration = float(merged["duration_millis"])
            resolution = tuple(merged.get("resolution", (64, 64)))
        except KeyError as exc:
            raise SpecParseError(f"scene #{pos}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise SpecParseError(f"scene #{pos}: {exc}") from exc
        kwargs = dict(
            video_id=video_id,
            actor_id=actor,
            shape_kind=shape,
            size=size,
            start=start,
            fps=fps,
            duration_millis=duration,
            resolution=resolution,
            foreground=float(merged.get("foreground", 1.0)),
            background=float(merged.get("background", 0.0)),
            action_label=str(merged.get("action", "synthetic")),
        )
        if "oscillation" in merged and merged["oscillation"] is not None:
            osc = merged["oscillation"]
            if not isinstance(osc, dict):
                raise SpecParseError(f"scene #{pos}: 'oscillation' must be a mapping")
            try:
                kwargs.update(
                    motion_kind="oscillating",
                    amplitude=float(osc["amplitude"]),
                    period_millis=float(osc["period_millis"]),
                    axis=str(osc.get("axis", "x")),
                )
            except KeyError as exc:
                raise SpecParseError(
                    f"scene #{pos}: oscillation missing field {exc.args[0]!r}"
                ) from exc
        elif "velocity" in merged and merged["velocity"] is not None:
            kwargs.update(motion_kind="linear", velocity=tuple(merged["velocity"]))
        else:
            kwargs.update(motion_kind="linear", velocity=(0.0, 0.0))
        specs.append(SyntheticSceneSpec(**kwargs))
    return specs
