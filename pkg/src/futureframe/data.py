"""Corpus ingestion, actor-disjoint splits, and training tuple streams.

On-disk corpus layout::

    <root>/<action>/<actor>/<video_id>/frame_%06d.png
    <root>/segments.tsv   # video_id  actor  action  start_frame  end_frame  fps

Frames are 8-bit grayscale PNGs; the tab-separated segment table records
where each action performance starts and ends inside its video and the
video frame rate, from which all temporal displacements are derived.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import IngestionError, SplitError, StreamError
from .frames import check_frame, load_frame_png, save_frame_png

KTH_ACTIONS = frozenset(
    {"walking", "jogging", "running", "hand-clapping", "hand-waving", "boxing"}
)

SEGMENTS_FILENAME = "segments.tsv"
_SEGMENT_COLUMNS = ("video_id", "actor", "action", "start_frame", "end_frame", "fps")


def frame_filename(index: int) -> str:
    return f"frame_{index:06d}.png"


def frame_time(frame_index: int, fps: float) -> float:
    """Milliseconds elapsed at a frame index, from the video frame rate."""
    if frame_index < 0:
        raise IngestionError(f"frame_index must be >= 0, got {frame_index}")
    if fps <= 0:
        raise IngestionError(f"fps must be positive, got {fps}")
    return frame_index * 1000.0 / fps


# ----------------------------------------------------------------------
# Records
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ActionSegment:
    """A contiguous run of frames in one video showing one action."""

    video_id: str
    actor_id: str
    action_label: str
    start_frame: int
    end_frame: int
    fps: float

    def __post_init__(self):
        if self.start_frame >= self.end_frame:
            raise IngestionError(
                f"segment {self.video_id}: start_frame {self.start_frame} must be "
                f"< end_frame {self.end_frame}"
            )
        if self.start_frame < 0:
            raise IngestionError(f"segment {self.video_id}: negative start_frame")
        if self.fps <= 0:
            raise IngestionError(f"segment {self.video_id}: fps must be positive")
        if not self.action_label:
            raise IngestionError(f"segment {self.video_id}: empty action label")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def frame_interval_millis(self) -> float:
        return 1000.0 / self.fps

    def frame_dir(self, root) -> Path:
        return Path(root) / self.action_label / self.actor_id / self.video_id


@dataclass(frozen=True)
class TupleSource:
    """Provenance of one training/evaluation tuple.

    Kept structured (not a bare string) so that the displacement can be
    recomputed exactly from frame indices and fps.
    """

    video_id: str
    actor_id: str
    action_label: str
    input_index: int
    target_index: int
    fps: float

    def dt_millis(self) -> float:
        return frame_time(self.target_index, self.fps) - frame_time(self.input_index, self.fps)

    def __str__(self) -> str:
        return (
            f"{self.video_id}/{self.actor_id}/{self.action_label}"
            f"[{self.input_index}->{self.target_index}]@{self.fps:g}fps"
        )


@dataclass(frozen=True)
class SampleTuple:
    """The training triple: input frame, displacement, groundtruth target."""

    input_frame: np.ndarray
    dt_millis: float
    target_frame: np.ndarray
    source: TupleSource

    def __post_init__(self):
        if self.dt_millis <= 0:
            raise StreamError(f"tuple {self.source}: dt must be positive")
        if self.input_frame.shape != self.target_frame.shape:
            raise StreamError(
                f"tuple {self.source}: frame resolutions differ "
                f"({self.input_frame.shape} vs {self.target_frame.shape})"
            )


@dataclass(frozen=True)
class SplitSpec:
    """Actor-disjoint train/test partition."""

    train_actor_ids: frozenset
    test_actor_ids: frozenset
    train_fraction: float
    seed: int

    def __post_init__(self):
        overlap = self.train_actor_ids & self.test_actor_ids
        if overlap:
            raise SplitError(f"actors on both sides of the split: {sorted(overlap)}")

    def side_of(self, actor_id: str) -> str:
        if actor_id in self.train_actor_ids:
            return "train"
        if actor_id in self.test_actor_ids:
            return "test"
        raise SplitError(f"actor {actor_id!r} is not covered by the split")

    def actors(self, side: str) -> frozenset:
        if side == "train":
            return self.train_actor_ids
        if side == "test":
            return self.test_actor_ids
        raise SplitError(f"unknown split side {side!r}")

    def to_dict(self) -> dict:
        return {
            "train_actor_ids": sorted(self.train_actor_ids),
            "test_actor_ids": sorted(self.test_actor_ids),
            "train_fraction": self.train_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitSpec":
        return cls(
            train_actor_ids=frozenset(data["train_actor_ids"]),
            test_actor_ids=frozenset(data["test_actor_ids"]),
            train_fraction=float(data["train_fraction"]),
            seed=int(data["seed"]),
        )


def make_split(actor_ids, train_fraction: float = 0.8, seed: int = 0) -> SplitSpec:
    """Randomly assign actors to train/test so no actor is on both sides.

    Deterministic for a fixed seed; train side gets round(fraction * n) actors.
    """
    actors = sorted(set(actor_ids))
    if len(actors) < 2:
        raise SplitError(f"need at least 2 actors to split, got {len(actors)}")
    if not (0.0 < train_fraction < 1.0):
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = round(train_fraction * len(actors))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(actors))
    train = frozenset(actors[i] for i in order[:n_train])
    test = frozenset(actors[i] for i in order[n_train:])
    return SplitSpec(train, test, train_fraction, seed)


# ----------------------------------------------------------------------
# Preprocessing
# ----------------------------------------------------------------------


def preprocess_frame(raw, raw_resolution: tuple[int, int] = (120, 160)) -> np.ndarray:
    """Center-crop a raw landscape frame to a square and scale to [0, 1].

    The default expects the 160x120 px source material, trimming 20 columns
    from each side to obtain 120x120. Frames that are already square are
    rejected rather than silently passed through: cropping is not idempotent.
    """
    arr = np.asarray(raw)
    if arr.ndim != 2:
        raise IngestionError(f"raw frame must be 2-D, got shape {arr.shape}")
    if tuple(arr.shape) != tuple(raw_resolution):
        raise IngestionError(
            f"raw frame has resolution {arr.shape}, expected {tuple(raw_resolution)}"
        )
    h, w = arr.shape
    if w <= h:
        raise IngestionError(
            f"raw frame must be wider than tall to crop ({w}x{h} given)"
        )
    offset = (w - h) // 2
    return check_frame(arr[:, offset : offset + h], name="cropped frame")


# ----------------------------------------------------------------------
# Corpus I/O
# ----------------------------------------------------------------------


def write_segments(root, segments) -> None:
    path = Path(root) / SEGMENTS_FILENAME
    lines = ["\t".join(_SEGMENT_COLUMNS)]
    for seg in segments:
        lines.append(
            "\t".join(
                [
                    seg.video_id,
                    seg.actor_id,
                    seg.action_label,
                    str(seg.start_frame),
                    str(seg.end_frame),
                    repr(seg.fps),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def read_segments(root) -> list[ActionSegment]:
    path = Path(root) / SEGMENTS_FILENAME
    if not path.is_file():
        raise IngestionError(f"no {SEGMENTS_FILENAME} found under {root}")
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != _SEGMENT_COLUMNS:
        raise IngestionError(f"{path}: malformed header")
    segments = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(_SEGMENT_COLUMNS):
            raise IngestionError(f"{path}:{ln}: expected {len(_SEGMENT_COLUMNS)} columns")
        segments.append(
            ActionSegment(
                video_id=parts[0],
                actor_id=parts[1],
                action_label=parts[2],
                start_frame=int(parts[3]),
                end_frame=int(parts[4]),
                fps=float(parts[5]),
            )
        )
    return segments


@functools.lru_cache(maxsize=8192)
def _cached_frame(path_str: str) -> np.ndarray:
    arr = load_frame_png(path_str)
    arr.setflags(write=False)
    return arr


def load_segment_frame(root, segment: ActionSegment, index: int) -> np.ndarray:
    if not (segment.start_frame <= index <= segment.end_frame):
        raise StreamError(
            f"frame {index} outside segment {segment.video_id} "
            f"[{segment.start_frame}, {segment.end_frame}]"
        )
    path = segment.frame_dir(root) / frame_filename(index)
    if not path.is_file():
        raise IngestionError(f"missing frame file {path}")
    return _cached_frame(str(path)).copy()


def corpus_actor_ids(segments) -> frozenset:
    return frozenset(seg.actor_id for seg in segments)


def ingest_corpus(raw_root, out_root, raw_resolution: tuple[int, int] = (120, 160)) -> int:
    """Crop a raw extracted-frames corpus into the square training layout.

    Action labels must come from the closed six-action set. Returns the
    number of frames written.
    """
    raw_root, out_root = Path(raw_root), Path(out_root)
    segments = read_segments(raw_root)
    for seg in segments:
        if seg.action_label not in KTH_ACTIONS:
            raise IngestionError(
                f"segment {seg.video_id}: action {seg.action_label!r} is not one of "
                f"{sorted(KTH_ACTIONS)}"
            )
    out_root.mkdir(parents=True, exist_ok=True)
    n_written = 0
    for seg in segments:
        src_dir = seg.frame_dir(raw_root)
        dst_dir = seg.frame_dir(out_root)
        dst_dir.mkdir(parents=True, exist_ok=True)
        for index in range(seg.start_frame, seg.end_frame + 1):
            src = src_dir / frame_filename(index)
            if not src.is_file():
                raise IngestionError(f"missing raw frame {src}")
            cropped = preprocess_frame(load_frame_png(src), raw_resolution)
            save_frame_png(cropped, dst_dir / frame_filename(index))
            n_written += 1
    write_segments(out_root, segments)
    return n_written


# ----------------------------------------------------------------------
# Tuple streams
# ----------------------------------------------------------------------


class TupleStream:
    """Uniform sampler over admissible (input, target) frame pairs.

    A pair (i, j) inside one segment is admissible when 1 <= j - i and
    the displacement (j - i) * frame_interval does not exceed ``max_dt``.
    Sampling is uniform over all admissible pairs of the requested split
    side, seeded, and fully restorable (``rng_state`` round-trips through
    checkpoints). Not safe to share across threads; create one stream per
    consumer.
    """

    def __init__(self, root, segments, split: SplitSpec, side: str,
                 max_dt_millis: float, seed: int = 0,
                 exact_dt_millis: float | None = None):
        self.root = Path(root)
        self.side = side
        self.max_dt_millis = float(max_dt_millis)
        self.exact_dt_millis = None if exact_dt_millis is None else float(exact_dt_millis)
        actors = split.actors(side)
        self.segments = [s for s in segments if s.actor_id in actors]
        if not self.segments:
            raise StreamError(f"no segments on the {side!r} side of the split")
        self._pair_counts = []
        for seg in self.segments:
            if self.max_dt_millis < seg.frame_interval_millis:
                raise StreamError(
                    f"max_dt {max_dt_millis} ms is below one frame interval "
                    f"({seg.frame_interval_millis:.6g} ms) for segment {seg.video_id}"
                )
            self._pair_counts.append(self._count_pairs(seg))
        self._cumulative = np.cumsum(self._pair_counts)
        if self.total_pairs == 0:
            raise StreamError(f"no admissible tuples on the {side!r} side")
        self._rng = np.random.default_rng(seed)

    def _k_values(self, seg: ActionSegment) -> range | list[int]:
        """Admissible index steps k (dt = k * frame interval) for a segment."""
        max_k = min(int(self.max_dt_millis // seg.frame_interval_millis), seg.n_frames - 1)
        if self.exact_dt_millis is None:
            return range(1, max_k + 1)
        ratio = self.exact_dt_millis / seg.frame_interval_millis
        k = round(ratio)
        if k < 1 or abs(ratio - k) > 1e-9:
            raise StreamError(
                f"exact dt {self.exact_dt_millis} ms is not a frame-interval multiple "
                f"for segment {seg.video_id} ({seg.frame_interval_millis:.6g} ms)"
            )
        return [k] if k <= max_k else []

    def _count_pairs(self, seg: ActionSegment) -> int:
        return sum(seg.n_frames - k for k in self._k_values(seg))

    @property
    def total_pairs(self) -> int:
        return int(self._cumulative[-1])

    # -- deterministic enumeration (used by tests and evaluation) -------

    def enumerate_pairs(self):
        """Yield (segment, input_index, target_index) in deterministic order."""
        for seg in self.segments:
            for k in self._k_values(seg):
                for i in range(seg.start_frame, seg.end_frame - k + 1):
                    yield seg, i, i + k

    # -- sampling --------------------------------------------------------

    @property
    def rng_state(self) -> dict:
        return self._rng.bit_generator.state

    @rng_state.setter
    def rng_state(self, state: dict) -> None:
        self._rng.bit_generator.state = state

    def _pair_at(self, global_index: int):
        seg_idx = int(np.searchsorted(self._cumulative, global_index, side="right"))
        seg = self.segments[seg_idx]
        u = global_index - (0 if seg_idx == 0 else int(self._cumulative[seg_idx - 1]))
        for k in self._k_values(seg):
            span = seg.n_frames - k
            if u < span:
                i = seg.start_frame + u
                return seg, i, i + k
            u -= span
        raise AssertionError("pair index out of range")  # unreachable

    def make_tuple(self, seg: ActionSegment, i: int, j: int) -> SampleTuple:
        source = TupleSource(
            video_id=seg.video_id,
            actor_id=seg.actor_id,
            action_label=seg.action_label,
            input_index=i,
            target_index=j,
            fps=seg.fps,
        )
        return SampleTuple(
            input_frame=load_segment_frame(self.root, seg, i),
            dt_millis=source.dt_millis(),
            target_frame=load_segment_frame(self.root, seg, j),
            source=source,
        )

    def draw(self) -> SampleTuple:
        idx = int(self._rng.integers(self.total_pairs))
        return self.make_tuple(*self._pair_at(idx))

    def next_batch(self, batch_size: int) -> list[SampleTuple]:
        return [self.draw() for _ in range(batch_size)]

    def __iter__(self):
        while True:
            yield self.draw()
