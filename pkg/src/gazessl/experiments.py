"""End-to-end experiment recipes over the synthetic world.

Recipes reproduce the mechanism-level findings at desk scale: a temporal
window sweep, a crop-size sweep with missing-object/background sensitivity,
a fixation-threshold sweep, and co-occurrence embedding alignment between
model representations and GloVe vectors. Every recipe is bitwise
reproducible from (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import checkpoints
from .cka import RepMatrix, SeedScores, concat_layers, linear_cka, paired_t_test
from .config import ExperimentConfig
from .contrastive import (
    EncoderConfig,
    ModelParams,
    TrainConfig,
    backbone_features,
    layer_activations,
    metrics_csv,
    train,
)
from .gaze import apply_crop, crop_window, segment_fixations
from .glove import CoocMatrix, GloveConfig, GloveModel, build_cooc, train_glove, validate_glove
from .probe import ProbeConfig, ProbeModel, evaluate, sensitivity_delta, train_probe
from .sampling import FrameManifest, SamplerConfig
from .seeds import derive_seed
from .synth import LabeledFrame, WorldConfig, gen_stream, stream_trajectories


@dataclass(frozen=True)
class Stream:
    """A generated world plus its ablated re-renders and gaze trajectories."""

    manifest: FrameManifest
    frames: list[LabeledFrame]
    frames_no_object: list[LabeledFrame]
    frames_no_context: list[LabeledFrame]
    world: WorldConfig


def world_from_config(cfg: ExperimentConfig, seed: int) -> WorldConfig:
    return WorldConfig(
        n_videos=cfg["world.n_videos"],
        frames_per_video=cfg["world.frames_per_video"],
        frame_period_ms=cfg["world.frame_period_ms"],
        image_size=cfg["world.image_size"],
        n_object_classes=cfg["world.n_object_classes"],
        n_context_classes=cfg["world.n_context_classes"],
        object_dwell_frames=cfg["world.object_dwell_frames"],
        object_patch_size=cfg["world.object_patch_size"],
        nuisance_dim=cfg["world.nuisance_dim"],
        noise_std=cfg["world.noise_std"],
        seed=seed,
    )


def generate_stream(world: WorldConfig) -> Stream:
    manifest, frames = gen_stream(world)
    _, frames_no_object = gen_stream(world, include_object=False)
    _, frames_no_context = gen_stream(world, include_context=False)
    return Stream(
        manifest=manifest,
        frames=frames,
        frames_no_object=frames_no_object,
        frames_no_context=frames_no_context,
        world=world,
    )


def build_payloads(
    frames: Sequence[LabeledFrame], world: WorldConfig, crop_size: int | None
) -> np.ndarray:
    """Flat feature vectors per frame: pixels (gaze crop or full frame)
    followed by the frame's nuisance vector."""
    rows = []
    for frame in frames:
        if crop_size is None or crop_size >= world.image_size:
            pixels = frame.pixels
        else:
            window = crop_window(
                (frame.gaze.x, frame.gaze.y), crop_size, world.image_size, world.image_size
            )
            pixels = apply_crop(frame.pixels, window)
        rows.append(np.concatenate([pixels.ravel(), frame.nuisance]))
    return np.stack(rows)


def payload_store(manifest: FrameManifest, payloads: np.ndarray) -> dict[str, np.ndarray]:
    return {rec.payload_ref: payloads[i] for i, rec in enumerate(manifest.records)}


def probe_split(manifest: FrameManifest, world: WorldConfig) -> tuple[np.ndarray, np.ndarray]:
    """Frame indices for probe training and evaluation.

    Videos are split in blocks of n_context_classes so that both splits see
    every context class (contexts cycle over videos); odd blocks evaluate.
    """
    video_ids = sorted({rec.video_id for rec in manifest.records})
    block = {vid: (i // world.n_context_classes) % 2 for i, vid in enumerate(video_ids)}
    flags = np.array([block[rec.video_id] for rec in manifest.records])
    return np.nonzero(flags == 0)[0], np.nonzero(flags == 1)[0]


@dataclass(frozen=True)
class ConditionResult:
    object_acc: float
    context_acc: float
    final_loss: float
    params: ModelParams
    enc_cfg: EncoderConfig
    train_cfg: TrainConfig
    history_csv: str


def _standardize(train_rows: np.ndarray, *others: np.ndarray) -> list[np.ndarray]:
    mean = train_rows.mean(axis=0, keepdims=True)
    std = np.maximum(train_rows.std(axis=0, keepdims=True), 1e-8)
    return [(rows - mean) / std for rows in (train_rows, *others)]


def _probe_accuracy(
    feats_train: np.ndarray,
    labels_train: np.ndarray,
    feats_test: np.ndarray,
    labels_test: np.ndarray,
    probe_cfg: ProbeConfig,
) -> float:
    train_std, test_std = _standardize(feats_train, feats_test)
    model = train_probe(train_std, labels_train, probe_cfg)
    return evaluate(model, test_std, labels_test)


def run_condition(
    stream: Stream,
    cfg: ExperimentConfig,
    crop_size: int | None,
    delta_t_ms: float,
    fixation_p: float | None,
    seed: int,
) -> ConditionResult:
    """Train one encoder on the stream and probe its frozen features."""
    world = stream.world
    payloads = build_payloads(stream.frames, world, crop_size)
    enc_cfg = EncoderConfig(
        input_dim=payloads.shape[1],
        hidden_dims=tuple(cfg["encoder.hidden_dims"]),
        embed_dim=cfg["encoder.embed_dim"],
        proj_hidden_dim=cfg["encoder.proj_hidden_dim"],
    )
    train_cfg = TrainConfig(
        tau=cfg["training.tau"],
        momentum_m=cfg["training.momentum_m"],
        learning_rate=cfg["training.learning_rate"],
        weight_decay=cfg["training.weight_decay"],
        batch_size=cfg["training.batch_size"],
        steps=cfg["training.steps"],
        seed=derive_seed(seed, "train"),
        augment_noise_std=cfg["training.augment_noise_std"],
        symmetrize_loss=cfg["training.symmetrize_loss"],
    )
    fixations = None
    if fixation_p is not None and np.isfinite(fixation_p):
        trajectories = stream_trajectories(stream.manifest, stream.frames, world.frame_period_ms)
        fixations = {key: segment_fixations(traj, fixation_p) for key, traj in trajectories.items()}
        sampler_cfg = SamplerConfig(
            delta_t_ms=delta_t_ms,
            fixation_constrained=True,
            velocity_threshold_p=fixation_p,
            seed=derive_seed(seed, "sampler"),
        )
    else:
        sampler_cfg = SamplerConfig(delta_t_ms=delta_t_ms, seed=derive_seed(seed, "sampler"))

    params, history = train(
        stream.manifest, payload_store(stream.manifest, payloads), sampler_cfg, enc_cfg, train_cfg,
        fixations=fixations,
    )

    feats = backbone_features(params.theta_q, payloads, enc_cfg)
    obj_labels = np.array([f.object_class for f in stream.frames])
    ctx_labels = np.array([f.context_class for f in stream.frames])
    train_idx, test_idx = probe_split(stream.manifest, world)
    probe_cfg = ProbeConfig(
        learning_rate=cfg["probe.learning_rate"],
        l2_reg=cfg["probe.l2_reg"],
        epochs=cfg["probe.epochs"],
        batch_size=cfg["probe.batch_size"],
        seed=derive_seed(seed, "probe"),
    )
    obj_acc = _probe_accuracy(
        feats[train_idx], obj_labels[train_idx], feats[test_idx], obj_labels[test_idx], probe_cfg
    )
    ctx_acc = _probe_accuracy(
        feats[train_idx], ctx_labels[train_idx], feats[test_idx], ctx_labels[test_idx],
        replace(probe_cfg, seed=derive_seed(seed, "probe-ctx")),
    )
    final_loss = history[-1].loss if history else float("nan")
    return ConditionResult(
        object_acc=obj_acc,
        context_acc=ctx_acc,
        final_loss=final_loss,
        params=params,
        enc_cfg=enc_cfg,
        train_cfg=train_cfg,
        history_csv=metrics_csv(history),
    )


def ablation_sensitivity(
    stream: Stream,
    cfg: ExperimentConfig,
    result: ConditionResult,
    crop_size: int | None,
    seed: int,
) -> dict[str, float]:
    """ImageNet-9-style deltas: evaluate the object probe on renders with the
    background or the object removed."""
    world = stream.world
    normal = build_payloads(stream.frames, world, crop_size)
    no_ctx = build_payloads(stream.frames_no_context, world, crop_size)
    no_obj = build_payloads(stream.frames_no_object, world, crop_size)
    feats = backbone_features(result.params.theta_q, normal, result.enc_cfg)
    feats_no_ctx = backbone_features(result.params.theta_q, no_ctx, result.enc_cfg)
    feats_no_obj = backbone_features(result.params.theta_q, no_obj, result.enc_cfg)

    obj_labels = np.array([f.object_class for f in stream.frames])
    train_idx, test_idx = probe_split(stream.manifest, world)
    probe_cfg = ProbeConfig(
        learning_rate=cfg["probe.learning_rate"],
        l2_reg=cfg["probe.l2_reg"],
        epochs=cfg["probe.epochs"],
        batch_size=cfg["probe.batch_size"],
        seed=derive_seed(seed, "probe-sens"),
    )
    train_std, test_std, no_ctx_std, no_obj_std = _standardize(
        feats[train_idx], feats[test_idx], feats_no_ctx[test_idx], feats_no_obj[test_idx]
    )
    model = train_probe(train_std, obj_labels[train_idx], probe_cfg)
    acc_normal = evaluate(model, test_std, obj_labels[test_idx])
    acc_missing_bg = evaluate(model, no_ctx_std, obj_labels[test_idx])
    acc_missing_obj = evaluate(model, no_obj_std, obj_labels[test_idx])
    bg_robustness, obj_reliance = sensitivity_delta(acc_normal, acc_missing_bg, acc_missing_obj)
    return {
        "acc_normal": acc_normal,
        "acc_missing_background": acc_missing_bg,
        "acc_missing_object": acc_missing_obj,
        "bg_robustness": bg_robustness,
        "obj_reliance": obj_reliance,
    }


def _save_condition(out_dir: Path, tag: str, cfg: ExperimentConfig, result: ConditionResult) -> None:
    (out_dir / f"metrics_{tag}.csv").write_text(result.history_csv, encoding="utf-8")
    checkpoints.save_model(
        out_dir / f"ckpt_{tag}.sscl",
        result.params,
        result.enc_cfg,
        result.train_cfg,
        cfg["training.steps"],
    )


def recipe_slowness_sweep(cfg: ExperimentConfig, out_dir: Path) -> dict[str, Any]:
    world = world_from_config(cfg, derive_seed(cfg.seed, "world"))
    stream = generate_stream(world)
    crop = cfg["pipeline.crop_size"]
    results = []
    for dt_s in cfg["sweep.delta_t_list_s"]:
        for rep in range(cfg["sweep.n_seeds"]):
            seed = derive_seed(cfg.seed, "slowness", int(round(dt_s * 1000)), rep)
            res = run_condition(stream, cfg, crop, dt_s * 1000.0, None, seed)
            tag = f"dt{dt_s:g}_rep{rep}"
            _save_condition(out_dir, tag, cfg, res)
            results.append(
                {
                    "delta_t_s": dt_s,
                    "rep": rep,
                    "object_acc": res.object_acc,
                    "context_acc": res.context_acc,
                    "final_loss": res.final_loss,
                }
            )
    return {"results": results}


def recipe_crop_sweep(cfg: ExperimentConfig, out_dir: Path) -> dict[str, Any]:
    world = world_from_config(cfg, derive_seed(cfg.seed, "world"))
    stream = generate_stream(world)
    delta_ms = cfg["sampler.delta_t_s"] * 1000.0
    results = []
    for size in cfg["sweep.crop_sizes"]:
        for rep in range(cfg["sweep.n_seeds"]):
            seed = derive_seed(cfg.seed, "crop", size, rep)
            res = run_condition(stream, cfg, size, delta_ms, None, seed)
            sens = ablation_sensitivity(stream, cfg, res, size, seed)
            tag = f"n{size}_rep{rep}"
            _save_condition(out_dir, tag, cfg, res)
            entry = {
                "crop_size": size,
                "rep": rep,
                "object_acc": res.object_acc,
                "context_acc": res.context_acc,
                "final_loss": res.final_loss,
            }
            entry.update(sens)
            results.append(entry)
    return {"results": results}


def recipe_fixation_sweep(cfg: ExperimentConfig, out_dir: Path) -> dict[str, Any]:
    world = world_from_config(cfg, derive_seed(cfg.seed, "world"))
    stream = generate_stream(world)
    crop = cfg["pipeline.crop_size"]
    delta_ms = cfg["sampler.delta_t_s"] * 1000.0
    results = []
    for p in cfg["sweep.p_list"]:
        for rep in range(cfg["sweep.n_seeds"]):
            p_key = "inf" if np.isinf(p) else f"{p:g}"
            seed = derive_seed(cfg.seed, "fixation", p_key, rep)
            res = run_condition(stream, cfg, crop, delta_ms, p, seed)
            tag = f"p{p_key}_rep{rep}"
            _save_condition(out_dir, tag, cfg, res)
            results.append(
                {
                    "p": None if np.isinf(p) else p,
                    "rep": rep,
                    "object_acc": res.object_acc,
                    "context_acc": res.context_acc,
                    "final_loss": res.final_loss,
                }
            )
    return {"results": results}


def clip_annotations(stream: Stream) -> tuple[list[tuple[str, set[str]]], list[str]]:
    """Label sets per clip: the object classes observed plus the context class."""
    per_clip: dict[tuple[str, str], set[str]] = {}
    for rec, frame in zip(stream.manifest.records, stream.frames):
        labels = per_clip.setdefault((rec.video_id, rec.clip_id), set())
        labels.add(f"obj{frame.object_class:02d}")
        labels.add(f"ctx{frame.context_class:02d}")
    vocabulary = [f"obj{i:02d}" for i in range(stream.world.n_object_classes)] + [
        f"ctx{i:02d}" for i in range(stream.world.n_context_classes)
    ]
    annotations = [("/".join(key), labels) for key, labels in sorted(per_clip.items())]
    return annotations, vocabulary


def model_rep_layers(
    stream: Stream, result: ConditionResult, crop_size: int | None, vocabulary: Sequence[str]
) -> list[RepMatrix]:
    """Per-layer representation matrices over the label vocabulary.

    Rows average each label's frames: object labels over frames showing the
    object, context labels over frames of videos with that context.
    """
    payloads = build_payloads(stream.frames, stream.world, crop_size)
    acts = layer_activations(result.params.theta_q, payloads, result.enc_cfg)
    obj_labels = np.array([f.object_class for f in stream.frames])
    ctx_labels = np.array([f.context_class for f in stream.frames])
    reps = []
    for layer in acts:
        rows = []
        for label in vocabulary:
            if label.startswith("obj"):
                mask = obj_labels == int(label[3:])
            else:
                mask = ctx_labels == int(label[3:])
            if not mask.any():
                raise ValueError(f"label {label} has no frames")
            rows.append(layer[mask].mean(axis=0))
        reps.append(RepMatrix(object_ids=tuple(vocabulary), features=np.stack(rows)))
    return reps


def recipe_cooc_align(cfg: ExperimentConfig, out_dir: Path) -> dict[str, Any]:
    """Alignment of model representations with co-occurrence embeddings.

    Trains a slow (configured temporal window) and a static (zero window)
    encoder, fits GloVe embeddings on clip-level co-occurrences for several
    seeds, and compares per-seed CKA scores with a paired t-test.
    """
    world = world_from_config(cfg, derive_seed(cfg.seed, "world"))
    stream = generate_stream(world)
    crop = cfg["pipeline.crop_size"]
    delta_ms = cfg["sampler.delta_t_s"] * 1000.0

    slow = run_condition(stream, cfg, crop, delta_ms, None, derive_seed(cfg.seed, "model-slow"))
    static = run_condition(stream, cfg, crop, 0.0, None, derive_seed(cfg.seed, "model-static"))
    _save_condition(out_dir, "slow", cfg, slow)
    _save_condition(out_dir, "static", cfg, static)

    annotations, vocabulary = clip_annotations(stream)
    even = [labels for i, (_, labels) in enumerate(annotations) if i % 2 == 0]
    odd = [labels for i, (_, labels) in enumerate(annotations) if i % 2 == 1]
    cooc_train = build_cooc(even, vocabulary)
    cooc_test = build_cooc(odd if odd else even, vocabulary)

    per_layer = cfg["cka.per_layer"]
    reps_slow = model_rep_layers(stream, slow, crop, vocabulary)
    reps_static = model_rep_layers(stream, static, crop, vocabulary)
    if not per_layer:
        reps_slow = [concat_layers(reps_slow)]
        reps_static = [concat_layers(reps_static)]

    glove_cfg_base = GloveConfig(
        dim=cfg["glove.dim"],
        alpha=cfg["glove.alpha"],
        x_max_quantile=cfg["glove.x_max_quantile"],
        learning_rate=cfg["glove.learning_rate"],
        epochs=cfg["glove.epochs"],
    )
    scores_slow: list[float] = []
    scores_static: list[float] = []
    per_seed = []
    for seed_idx in range(cfg["glove.n_seeds"]):
        glove_cfg = replace(glove_cfg_base, seed=derive_seed(cfg.seed, "glove", seed_idx))
        model = train_glove(cooc_train, glove_cfg)
        checkpoints.save_glove(
            out_dir / f"glove_seed{seed_idx:03d}.sscl", model, tuple(vocabulary), glove_cfg.seed
        )
        glove_rep = RepMatrix(object_ids=tuple(vocabulary), features=model.embeddings)
        r = validate_glove(model, cooc_test)
        layer_scores_slow = [linear_cka(rep, glove_rep) for rep in reps_slow]
        layer_scores_static = [linear_cka(rep, glove_rep) for rep in reps_static]
        score_slow = float(np.mean(layer_scores_slow))
        score_static = float(np.mean(layer_scores_static))
        scores_slow.append(score_slow)
        scores_static.append(score_static)
        per_seed.append(
            {
                "glove_seed_idx": seed_idx,
                "validation_r": r,
                "cka_slow": score_slow,
                "cka_static": score_static,
            }
        )
    test = paired_t_test(SeedScores(scores_a=tuple(scores_slow), scores_b=tuple(scores_static)))
    return {
        "results": per_seed,
        "summary_stats": {
            "cka_slow_mean": float(np.mean(scores_slow)),
            "cka_slow_std": float(np.std(scores_slow)),
            "cka_static_mean": float(np.mean(scores_static)),
            "cka_static_std": float(np.std(scores_static)),
            "t": test.t,
            "p": test.p,
            "cohens_d": test.cohens_d,
        },
    }


_RECIPES = {
    "slowness-sweep": recipe_slowness_sweep,
    "crop-sweep": recipe_crop_sweep,
    "fixation-sweep": recipe_fixation_sweep,
    "cooc-align": recipe_cooc_align,
}


def run_experiment(cfg: ExperimentConfig, out_override: str | None = None) -> Path:
    """Execute the configured recipe; returns the artifact directory.

    The summary echoes the resolved config (minus the output path) so that
    repeated runs with an identical config produce identical bytes.
    """
    out_dir = Path(out_override if out_override is not None else cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    body = _RECIPES[cfg.recipe](cfg, out_dir)
    summary = {"recipe": cfg.recipe, "seed": cfg.seed, "config": cfg.echo()}
    summary.update(body)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out_dir
