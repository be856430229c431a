"""Frame manifests and temporal positive-pair sampling.

Positive pairs are drawn inside a symmetric temporal window around the
query frame, optionally restricted to the query's fixation segment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .gaze import FixationSegment
from .seeds import rng_for

#: Frames per source clip; one frame per clip is dropped so the remainder
#: splits into whole sequences.
CLIP_FRAMES = 25
SEQUENCE_LEN = 8


@dataclass(frozen=True)
class FrameRecord:
    """One frame of a video stream with a reference to its stored payload."""

    video_id: str
    clip_id: str
    frame_idx: int
    timestamp_ms: float
    payload_ref: str


@dataclass(frozen=True)
class FrameManifest:
    """Ordered frame records; (video_id, frame_idx) unique, timestamps
    non-decreasing within each video."""

    records: tuple[FrameRecord, ...]

    def __post_init__(self) -> None:
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        seen: set[tuple[str, int]] = set()
        last_ts: dict[str, float] = {}
        for rec in records:
            key = (rec.video_id, rec.frame_idx)
            if key in seen:
                raise ValueError(f"duplicate (video_id, frame_idx) {key}")
            seen.add(key)
            prev = last_ts.get(rec.video_id)
            if prev is not None and rec.timestamp_ms < prev:
                raise ValueError(f"timestamps decrease within video {rec.video_id}")
            last_ts[rec.video_id] = rec.timestamp_ms

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class PairSpec:
    """Indices of a (query, key) positive pair into a manifest."""

    query_idx: int
    key_idx: int


@dataclass(frozen=True)
class SamplerConfig:
    """Pair sampling parameters.

    delta_t_ms bounds |timestamp(query) - timestamp(key)|. When
    fixation_constrained is set, keys must additionally share the query's
    fixation segment (segmented at velocity_threshold_p).
    """

    delta_t_ms: float
    fixation_constrained: bool = False
    velocity_threshold_p: float = 15.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.delta_t_ms < 0:
            raise ValueError("delta_t_ms must be >= 0")


def split_clips(frames: Sequence[FrameRecord]) -> list[list[FrameRecord]]:
    """Split clip-grouped frames into consecutive 8-frame sequences.

    A full 25-frame clip keeps frames 0..23 and yields three sequences; the
    last frame is dropped. Shorter clips truncate to the largest multiple
    of 8 frames.
    """
    groups: list[list[FrameRecord]] = []
    key: tuple[str, str] | None = None
    for rec in frames:
        rec_key = (rec.video_id, rec.clip_id)
        if rec_key != key:
            groups.append([])
            key = rec_key
        groups[-1].append(rec)
    sequences: list[list[FrameRecord]] = []
    for group in groups:
        usable = min(len(group), CLIP_FRAMES - 1)
        usable -= usable % SEQUENCE_LEN
        for start in range(0, usable, SEQUENCE_LEN):
            sequences.append(group[start : start + SEQUENCE_LEN])
    return sequences


def _clip_positions(manifest: FrameManifest) -> tuple[dict[tuple[str, str], list[int]], dict[int, int]]:
    """Record indices per clip and each record's position inside its clip."""
    clip_members: dict[tuple[str, str], list[int]] = {}
    position: dict[int, int] = {}
    for idx, rec in enumerate(manifest.records):
        members = clip_members.setdefault((rec.video_id, rec.clip_id), [])
        position[idx] = len(members)
        members.append(idx)
    return clip_members, position


def sample_pairs(
    manifest: FrameManifest,
    cfg: SamplerConfig,
    fixations: Mapping[tuple[str, str], Sequence[FixationSegment]] | None = None,
    count: int = 1,
) -> list[PairSpec]:
    """Draw positive pairs: a uniform query frame and a uniform key from its
    temporal window.

    The candidate set for a query holds all records of the same video within
    delta_t_ms, the query itself included, so it is never empty. With
    fixation_constrained the set is intersected with the query's fixation
    segment (segment indices address the clip's records in manifest order).
    Deterministic given cfg.seed.
    """
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    if cfg.fixation_constrained and fixations is None:
        raise ValueError("fixation-constrained sampling needs fixation segments")

    records = manifest.records
    video_members: dict[str, list[int]] = {}
    for idx, rec in enumerate(records):
        video_members.setdefault(rec.video_id, []).append(idx)
    video_ts = {vid: np.array([records[i].timestamp_ms for i in idxs]) for vid, idxs in video_members.items()}

    clip_members, clip_pos = _clip_positions(manifest)
    segment_of: dict[int, FixationSegment] = {}
    if cfg.fixation_constrained:
        assert fixations is not None
        for clip_key, members in clip_members.items():
            if clip_key not in fixations:
                raise ValueError(f"missing fixation segments for clip {clip_key}")
            for seg in fixations[clip_key]:
                for pos in range(seg.start_idx, seg.end_idx + 1):
                    if pos >= len(members):
                        raise ValueError(f"segment {seg} exceeds clip {clip_key} length")
                    segment_of[members[pos]] = seg

    rng = rng_for(cfg.seed, "pair-sampler")
    pairs: list[PairSpec] = []
    for _ in range(count):
        query = int(rng.integers(0, len(records)))
        rec = records[query]
        members = video_members[rec.video_id]
        ts = video_ts[rec.video_id]
        lo = int(np.searchsorted(ts, rec.timestamp_ms - cfg.delta_t_ms, side="left"))
        hi = int(np.searchsorted(ts, rec.timestamp_ms + cfg.delta_t_ms, side="right"))
        candidates = members[lo:hi]
        if cfg.fixation_constrained:
            seg = segment_of.get(query)
            if seg is None:
                raise ValueError(f"record {query} not covered by any fixation segment")
            clip = clip_members[(rec.video_id, rec.clip_id)]
            allowed = set(clip[seg.start_idx : seg.end_idx + 1])
            candidates = [c for c in candidates if c in allowed]
        key = candidates[int(rng.integers(0, len(candidates)))]
        pairs.append(PairSpec(query_idx=query, key_idx=key))
    return pairs


def write_manifest(path: str | Path, manifest: FrameManifest) -> None:
    """Write a manifest as JSON lines, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(
                json.dumps(
                    {
                        "video_id": rec.video_id,
                        "clip_id": rec.clip_id,
                        "frame_idx": rec.frame_idx,
                        "timestamp_ms": rec.timestamp_ms,
                        "payload_ref": rec.payload_ref,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def read_manifest(path: str | Path) -> FrameManifest:
    """Read a JSON-lines manifest."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON") from exc
            records.append(
                FrameRecord(
                    video_id=str(rec["video_id"]),
                    clip_id=str(rec["clip_id"]),
                    frame_idx=int(rec["frame_idx"]),
                    timestamp_ms=float(rec["timestamp_ms"]),
                    payload_ref=str(rec["payload_ref"]),
                )
            )
    return FrameManifest(records=tuple(records))


def write_pairs(path: str | Path, pairs: Sequence[PairSpec]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps({"query_idx": pair.query_idx, "key_idx": pair.key_idx}, sort_keys=True))
            fh.write("\n")


def read_pairs(path: str | Path) -> list[PairSpec]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            pairs.append(PairSpec(query_idx=int(rec["query_idx"]), key_idx=int(rec["key_idx"])))
    return pairs
