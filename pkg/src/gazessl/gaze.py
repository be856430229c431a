"""Gaze streams: saliency-peak extraction, gaze-centered crop geometry,
fixation segmentation and trajectory statistics.

All operations are pure functions over immutable inputs and are safe to
call concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: Reference interval, in ms, over which the fixation movement threshold is
#: expressed: a fixation keeps gaze velocity below ``p / VELOCITY_WINDOW_MS``
#: pixels per millisecond.
VELOCITY_WINDOW_MS = 200.0

#: Default frame period for 5 fps streams.
DEFAULT_FRAME_PERIOD_MS = 200.0


@dataclass(frozen=True)
class SaliencyMap:
    """Non-negative saliency values on a (height, width) pixel grid."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"saliency map must be a non-empty 2-D grid, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("saliency values must be non-negative")
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GazePoint:
    """A gaze location on one frame."""

    frame_idx: int
    timestamp_ms: float
    x: float
    y: float

    def __post_init__(self) -> None:
        if self.frame_idx < 0:
            raise ValueError("frame_idx must be >= 0")
        if self.timestamp_ms < 0:
            raise ValueError("timestamp_ms must be >= 0")
        if self.x < 0 or self.y < 0:
            raise ValueError("gaze coordinates must be >= 0")


@dataclass(frozen=True)
class GazeTrajectory:
    """Ordered gaze points of one clip, sampled at a fixed frame period.

    Points must be strictly increasing in frame_idx and timestamp, and
    timestamps must agree with frame_period_ms times the frame offset to
    within 1e-6 ms.
    """

    video_id: str
    clip_id: str
    points: tuple[GazePoint, ...]
    frame_period_ms: float

    def __post_init__(self) -> None:
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValueError("trajectory needs at least one point")
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be > 0")
        base = pts[0]
        for prev, cur in zip(pts, pts[1:]):
            if cur.frame_idx <= prev.frame_idx:
                raise ValueError("frame_idx must be strictly increasing")
            if cur.timestamp_ms <= prev.timestamp_ms:
                raise ValueError("timestamps must be strictly increasing")
        for pt in pts:
            expected = base.timestamp_ms + (pt.frame_idx - base.frame_idx) * self.frame_period_ms
            if abs(pt.timestamp_ms - expected) > 1e-6:
                raise ValueError(
                    f"timestamp {pt.timestamp_ms} of frame {pt.frame_idx} inconsistent "
                    f"with frame period {self.frame_period_ms}"
                )

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class FixationSegment:
    """Inclusive index range [start_idx, end_idx] into a trajectory."""

    start_idx: int
    end_idx: int

    def __post_init__(self) -> None:
        if self.start_idx > self.end_idx:
            raise ValueError("start_idx must be <= end_idx")

    def __contains__(self, idx: int) -> bool:
        return self.start_idx <= idx <= self.end_idx


@dataclass(frozen=True)
class CropWindow:
    """Square pixel window of side ``size`` at offset (left, top)."""

    left: int
    top: int
    size: int


@dataclass(frozen=True)
class DisplacementStats:
    """Gaze displacement magnitudes at a fixed temporal lag.

    mle_rate is the maximum-likelihood rate of an exponential fit,
    1 / mean(displacements). A degenerate all-zero sample reports
    mle_rate = +inf with the degenerate flag set instead of failing.
    """

    lag_ms: float
    displacements: np.ndarray
    histogram: tuple[np.ndarray, np.ndarray]
    mle_rate: float
    degenerate: bool = field(default=False)


def peak_gaze(saliency: SaliencyMap) -> tuple[int, int]:
    """Coordinates (x, y) of the most salient pixel.

    Ties break on the smallest row-major index, i.e. smallest y then
    smallest x.
    """
    flat_idx = int(np.argmax(saliency.values))
    y, x = divmod(flat_idx, saliency.width)
    return x, y


def crop_window(gaze: tuple[float, float], n: int, image_w: int, image_h: int) -> CropWindow:
    """n-by-n window centered on the gaze point, minimally shifted inside the image.

    Centering rounds half-up; when the centered window would cross an image
    border it is clamped, which is the minimal shift. The gaze point is
    always contained in the returned window.
    """
    x, y = gaze
    if n <= 0:
        raise ValueError("crop size must be > 0")
    if n > image_w or n > image_h:
        raise ValueError(f"crop size {n} exceeds image {image_w}x{image_h}")
    if not (0 <= x < image_w and 0 <= y < image_h):
        raise ValueError(f"gaze ({x}, {y}) outside image {image_w}x{image_h}")
    left = min(max(math.floor(x - n / 2 + 0.5), 0), image_w - n)
    top = min(max(math.floor(y - n / 2 + 0.5), 0), image_h - n)
    return CropWindow(left=left, top=top, size=n)


def apply_crop(frame: np.ndarray, window: CropWindow) -> np.ndarray:
    """Extract the window from a (H, W) or (C, H, W) pixel grid as a copy."""
    arr = np.asarray(frame)
    if arr.ndim not in (2, 3):
        raise ValueError(f"frame must be 2-D or 3-D, got shape {arr.shape}")
    height, width = arr.shape[-2], arr.shape[-1]
    left, top, n = window.left, window.top, window.size
    if left < 0 or top < 0 or left + n > width or top + n > height:
        raise ValueError(f"window {window} out of bounds for {width}x{height} frame")
    return arr[..., top : top + n, left : left + n].copy()


def segment_fixations(traj: GazeTrajectory, p: float) -> list[FixationSegment]:
    """Partition a trajectory into fixations using a velocity threshold.

    Consecutive points stay in the same segment iff their displacement per
    millisecond is strictly below p / 200 px/ms, i.e. gaze moves less than
    p pixels per 200 ms. Boundary velocities start a new segment.
    """
    if p <= 0:
        raise ValueError("velocity threshold p must be > 0")
    threshold = p / VELOCITY_WINDOW_MS
    segments: list[FixationSegment] = []
    start = 0
    pts = traj.points
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        dt = b.timestamp_ms - a.timestamp_ms
        dist = math.hypot(b.x - a.x, b.y - a.y)
        if not dist / dt < threshold:
            segments.append(FixationSegment(start, i))
            start = i + 1
    segments.append(FixationSegment(start, len(pts) - 1))
    return segments


def displacement_stats(
    trajs: Sequence[GazeTrajectory], lag_ms: float, bins: int = 30
) -> DisplacementStats:
    """Gaze displacement magnitudes between points separated by lag_ms.

    A pair qualifies when its time difference is within half a frame period
    of the lag, which absorbs timestamp jitter. The exponential MLE rate is
    1/mean; an all-zero sample yields +inf with the degenerate flag.
    """
    displacements: list[float] = []
    for traj in trajs:
        tol = traj.frame_period_ms / 2.0
        ts = np.array([pt.timestamp_ms for pt in traj.points])
        xs = np.array([pt.x for pt in traj.points])
        ys = np.array([pt.y for pt in traj.points])
        lo = np.searchsorted(ts, ts + lag_ms - tol, side="left")
        hi = np.searchsorted(ts, ts + lag_ms + tol, side="right")
        for i in range(len(ts)):
            for j in range(max(lo[i], i + 1), hi[i]):
                displacements.append(math.hypot(xs[j] - xs[i], ys[j] - ys[i]))
    if not displacements:
        raise ValueError(f"no point pairs at lag {lag_ms} ms")
    disp = np.asarray(displacements, dtype=np.float64)
    counts, edges = np.histogram(disp, bins=bins)
    mean = float(disp.mean())
    if mean > 0:
        rate, degenerate = 1.0 / mean, False
    else:
        rate, degenerate = math.inf, True
    return DisplacementStats(
        lag_ms=lag_ms,
        displacements=disp,
        histogram=(edges, counts),
        mle_rate=rate,
        degenerate=degenerate,
    )


def gaze_distribution(trajs: Sequence[GazeTrajectory]) -> tuple[float, float, float, float]:
    """Sample mean and population std of gaze coordinates over all points."""
    xs = [pt.x for traj in trajs for pt in traj.points]
    ys = [pt.y for traj in trajs for pt in traj.points]
    if not xs:
        raise ValueError("no gaze points")
    xa, ya = np.asarray(xs), np.asarray(ys)
    return float(xa.mean()), float(ya.mean()), float(xa.std()), float(ya.std())


def extract_trajectory(
    saliency_frames: Iterable[SaliencyMap],
    video_id: str,
    clip_id: str,
    frame_period_ms: float = DEFAULT_FRAME_PERIOD_MS,
) -> GazeTrajectory:
    """Build a trajectory from per-frame saliency maps via peak extraction."""
    points = []
    for idx, saliency in enumerate(saliency_frames):
        x, y = peak_gaze(saliency)
        points.append(GazePoint(frame_idx=idx, timestamp_ms=idx * frame_period_ms, x=x, y=y))
    if not points:
        raise ValueError("no saliency frames")
    return GazeTrajectory(
        video_id=video_id, clip_id=clip_id, points=tuple(points), frame_period_ms=frame_period_ms
    )


def write_trajectories(path: str | Path, trajs: Sequence[GazeTrajectory]) -> None:
    """Write trajectories as JSON lines, one object per gaze point."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajs:
            for pt in traj.points:
                fh.write(
                    json.dumps(
                        {
                            "video_id": traj.video_id,
                            "clip_id": traj.clip_id,
                            "frame_idx": pt.frame_idx,
                            "timestamp_ms": pt.timestamp_ms,
                            "x": pt.x,
                            "y": pt.y,
                        },
                        sort_keys=True,
                    )
                )
                fh.write("\n")


def read_trajectories(path: str | Path) -> list[GazeTrajectory]:
    """Read JSON-lines gaze points, grouped back into trajectories.

    Grouping keys on (video_id, clip_id) in order of first appearance; the
    frame period is inferred from the first two points (falling back to the
    5 fps default for single-point trajectories).
    """
    groups: dict[tuple[str, str], list[GazePoint]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON") from exc
            key = (str(rec["video_id"]), str(rec["clip_id"]))
            groups.setdefault(key, []).append(
                GazePoint(
                    frame_idx=int(rec["frame_idx"]),
                    timestamp_ms=float(rec["timestamp_ms"]),
                    x=float(rec["x"]),
                    y=float(rec["y"]),
                )
            )
    trajs = []
    for (video_id, clip_id), points in groups.items():
        if len(points) >= 2:
            p0, p1 = points[0], points[1]
            period = (p1.timestamp_ms - p0.timestamp_ms) / (p1.frame_idx - p0.frame_idx)
        else:
            period = DEFAULT_FRAME_PERIOD_MS
        trajs.append(
            GazeTrajectory(
                video_id=video_id, clip_id=clip_id, points=tuple(points), frame_period_ms=period
            )
        )
    return trajs
