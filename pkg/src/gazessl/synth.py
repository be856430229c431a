"""Synthetic gaze-annotated frame streams with controllable slow/fast structure.

Each video fixes a context class; a slowly changing object class persists for
a dwell of frames and is rendered in a patch around the gaze point, on top of
the full-image context template. Gaze alternates fixation-like jitter inside
a dwell with uniform jumps at dwell boundaries, so velocity-threshold
segmentation can recover the dwell structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .gaze import GazePoint, GazeTrajectory, apply_crop, crop_window
from .sampling import FrameManifest, FrameRecord
from .seeds import rng_for

#: Gaussian gaze jitter inside a fixation, in pixels.
FIXATION_JITTER_PX = 2.0

#: Amplitude of the object patch relative to the context layer; the object
#: must stay linearly decodable under context clutter inside a gaze crop.
OBJECT_TEMPLATE_SCALE = 2.0


@dataclass(frozen=True)
class WorldConfig:
    """Generator parameters for a synthetic stream."""

    n_videos: int = 12
    frames_per_video: int = 100
    frame_period_ms: float = 200.0
    image_size: int = 32
    n_object_classes: int = 4
    n_context_classes: int = 4
    object_dwell_frames: int = 10
    object_patch_size: int = 8
    nuisance_dim: int = 16
    noise_std: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        counts = (
            self.n_videos,
            self.frames_per_video,
            self.image_size,
            self.n_object_classes,
            self.n_context_classes,
            self.object_dwell_frames,
            self.object_patch_size,
        )
        if any(c <= 0 for c in counts):
            raise ValueError("all world counts must be > 0")
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be > 0")
        if self.nuisance_dim < 0:
            raise ValueError("nuisance_dim must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.object_patch_size > self.image_size:
            raise ValueError(
                f"object patch {self.object_patch_size} larger than image {self.image_size}"
            )


@dataclass(frozen=True)
class LabeledFrame:
    """Rendered frame with its generating factors."""

    pixels: np.ndarray
    object_class: int
    context_class: int
    gaze: GazePoint
    nuisance: np.ndarray


def gen_stream(
    cfg: WorldConfig,
    include_object: bool = True,
    include_context: bool = True,
) -> tuple[FrameManifest, list[LabeledFrame]]:
    """Generate a synthetic stream, deterministic given cfg.seed.

    The ablation flags re-render the identical stream without the object
    patch or without the context layer; all random draws are unchanged, so
    ablated streams stay frame-aligned with the full render.
    """
    size = cfg.image_size
    rng_templates = rng_for(cfg.seed, "templates")
    object_templates = OBJECT_TEMPLATE_SCALE * rng_templates.standard_normal(
        (cfg.n_object_classes, cfg.object_patch_size, cfg.object_patch_size)
    )
    context_templates = rng_templates.standard_normal((cfg.n_context_classes, size, size))

    records: list[FrameRecord] = []
    frames: list[LabeledFrame] = []
    for video in range(cfg.n_videos):
        rng = rng_for(cfg.seed, "video", video)
        video_id = f"v{video:03d}"
        context_class = video % cfg.n_context_classes
        object_class = 0
        anchor = np.zeros(2)
        for frame_idx in range(cfg.frames_per_video):
            if frame_idx % cfg.object_dwell_frames == 0:
                object_class = int(rng.integers(0, cfg.n_object_classes))
                anchor = rng.uniform(0.0, size, size=2)
            jitter = rng.normal(0.0, FIXATION_JITTER_PX, size=2)
            gx = float(np.clip(anchor[0] + jitter[0], 0.0, size - 1.0))
            gy = float(np.clip(anchor[1] + jitter[1], 0.0, size - 1.0))
            noise = rng.normal(0.0, 1.0, size=(size, size)) * cfg.noise_std
            nuisance = rng.standard_normal(cfg.nuisance_dim)

            pixels = noise
            if include_context:
                pixels = pixels + context_templates[context_class]
            if include_object:
                patch = crop_window((gx, gy), cfg.object_patch_size, size, size)
                pixels = pixels.copy()
                pixels[
                    patch.top : patch.top + patch.size, patch.left : patch.left + patch.size
                ] += object_templates[object_class]

            gaze = GazePoint(
                frame_idx=frame_idx,
                timestamp_ms=frame_idx * cfg.frame_period_ms,
                x=gx,
                y=gy,
            )
            frames.append(
                LabeledFrame(
                    pixels=pixels,
                    object_class=object_class,
                    context_class=context_class,
                    gaze=gaze,
                    nuisance=nuisance,
                )
            )
            records.append(
                FrameRecord(
                    video_id=video_id,
                    clip_id="c000",
                    frame_idx=frame_idx,
                    timestamp_ms=frame_idx * cfg.frame_period_ms,
                    payload_ref=f"{video_id}/f{frame_idx:04d}",
                )
            )
    return FrameManifest(records=tuple(records)), frames


def stream_trajectories(
    manifest: FrameManifest, frames: Iterable[LabeledFrame], frame_period_ms: float
) -> dict[tuple[str, str], GazeTrajectory]:
    """Group the stream's gaze points into one trajectory per clip."""
    grouped: dict[tuple[str, str], list[GazePoint]] = {}
    for rec, frame in zip(manifest.records, frames):
        grouped.setdefault((rec.video_id, rec.clip_id), []).append(frame.gaze)
    return {
        key: GazeTrajectory(
            video_id=key[0], clip_id=key[1], points=tuple(points), frame_period_ms=frame_period_ms
        )
        for key, points in grouped.items()
    }


def center_patch(frame: LabeledFrame, patch_size: int, image_size: int) -> np.ndarray:
    """Gaze-centered patch of the frame, used for raw-pixel sanity probes."""
    window = crop_window((frame.gaze.x, frame.gaze.y), patch_size, image_size, image_size)
    return apply_crop(frame.pixels, window)
