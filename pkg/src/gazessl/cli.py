"""Command-line interface.

Subcommands: gaze extract|segment|stats, crop, pairs sample, synth gen,
ssl train, probe train|eval, glove train|validate, cka, experiment run.
Exit codes: 0 ok, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoints, grids
from .cka import RepMatrix, SeedScores, concat_layers, linear_cka, paired_t_test
from .config import ConfigError, parse_config
from .contrastive import (
    EncoderConfig,
    TrainConfig,
    backbone_features,
    metrics_csv,
    train,
)
from .experiments import run_experiment
from .gaze import (
    SaliencyMap,
    apply_crop,
    crop_window,
    displacement_stats,
    extract_trajectory,
    gaze_distribution,
    read_trajectories,
    segment_fixations,
    write_trajectories,
)
from .glove import GloveConfig, read_cooc_csv, train_glove, validate_glove
from .probe import ProbeConfig, evaluate, train_probe
from .sampling import SamplerConfig, read_manifest, sample_pairs, write_pairs
from .seeds import derive_seed
from .synth import WorldConfig, gen_stream, stream_trajectories


def _read_labels(path: str) -> np.ndarray:
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            labels[int(rec["index"])] = int(rec["label"])
    if not labels:
        raise ValueError(f"{path}: no labels")
    out = np.zeros(max(labels) + 1, dtype=np.int64)
    for idx, label in labels.items():
        out[idx] = label
    return out


def _read_features(path: str) -> np.ndarray:
    grid = grids.read_grid(path)
    if grid.shape[0] != 1:
        raise ValueError(f"{path}: feature grids must have one channel")
    return grid[0].astype(np.float64)


def _cmd_gaze_extract(args: argparse.Namespace) -> int:
    stack = grids.read_grid(args.saliency)
    maps = [SaliencyMap(values=plane) for plane in stack]
    traj = extract_trajectory(maps, args.video_id, args.clip_id, args.frame_period_ms)
    write_trajectories(args.out, [traj])
    return 0


def _cmd_gaze_segment(args: argparse.Namespace) -> int:
    trajs = read_trajectories(args.traj)
    with open(args.out, "w", encoding="utf-8") as fh:
        for traj in trajs:
            segments = segment_fixations(traj, args.p)
            fh.write(
                json.dumps(
                    {
                        "video_id": traj.video_id,
                        "clip_id": traj.clip_id,
                        "segments": [[s.start_idx, s.end_idx] for s in segments],
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")
    return 0


def _cmd_gaze_stats(args: argparse.Namespace) -> int:
    trajs = read_trajectories(args.traj)
    stats = displacement_stats(trajs, args.lag_ms)
    mean_x, mean_y, std_x, std_y = gaze_distribution(trajs)
    edges, counts = stats.histogram
    payload = {
        "lag_ms": stats.lag_ms,
        "n_displacements": int(stats.displacements.size),
        "mle_rate": stats.mle_rate if math.isfinite(stats.mle_rate) else "inf",
        "degenerate": stats.degenerate,
        "histogram_edges": [float(e) for e in edges],
        "histogram_counts": [int(c) for c in counts],
        "gaze_mean": [mean_x, mean_y],
        "gaze_std": [std_x, std_y],
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_crop(args: argparse.Namespace) -> int:
    grid = grids.read_grid(args.frame)
    height, width = grid.shape[1], grid.shape[2]
    window = crop_window((args.x, args.y), args.n, width, height)
    grids.write_grid(args.out, apply_crop(grid, window))
    return 0


def _cmd_pairs_sample(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    fixations = None
    cfg = SamplerConfig(delta_t_ms=args.delta_t * 1000.0, seed=args.seed)
    if args.fixation_segments:
        from .gaze import FixationSegment

        fixations = {}
        with open(args.fixation_segments, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                fixations[(rec["video_id"], rec["clip_id"])] = [
                    FixationSegment(start_idx=s, end_idx=e) for s, e in rec["segments"]
                ]
        cfg = replace(cfg, fixation_constrained=True)
    pairs = sample_pairs(manifest, cfg, fixations=fixations, count=args.count)
    write_pairs(args.out, pairs)
    return 0


def _cmd_synth_gen(args: argparse.Namespace) -> int:
    cfg = WorldConfig(
        n_videos=args.n_videos,
        frames_per_video=args.frames_per_video,
        frame_period_ms=args.frame_period_ms,
        image_size=args.image_size,
        n_object_classes=args.n_object_classes,
        n_context_classes=args.n_context_classes,
        object_dwell_frames=args.object_dwell_frames,
        object_patch_size=args.object_patch_size,
        nuisance_dim=args.nuisance_dim,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest, frames = gen_stream(cfg)
    from .sampling import write_manifest

    write_manifest(out / "manifest.jsonl", manifest)
    frame_dir = out / "frames"
    frame_dir.mkdir(exist_ok=True)
    for rec, frame in zip(manifest.records, frames):
        grids.write_grid(frame_dir / (rec.payload_ref.replace("/", "_") + ".sgrd"), frame.pixels)
    if cfg.nuisance_dim > 0:
        grids.write_grid(out / "nuisance.sgrd", np.stack([f.nuisance for f in frames]))
    trajs = stream_trajectories(manifest, frames, cfg.frame_period_ms)
    write_trajectories(out / "gaze.jsonl", list(trajs.values()))
    with open(out / "labels.jsonl", "w", encoding="utf-8") as fh:
        for idx, frame in enumerate(frames):
            fh.write(
                json.dumps(
                    {
                        "index": idx,
                        "payload_ref": manifest.records[idx].payload_ref,
                        "object_class": frame.object_class,
                        "context_class": frame.context_class,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")
    return 0


def _cmd_ssl_train(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    features = _read_features(args.payloads)
    if features.shape[0] != len(manifest.records):
        raise ValueError("payload row count does not match manifest")
    payloads = {rec.payload_ref: features[i] for i, rec in enumerate(manifest.records)}
    enc_cfg = EncoderConfig(
        input_dim=features.shape[1],
        hidden_dims=tuple(args.hidden_dims),
        embed_dim=args.embed_dim,
        proj_hidden_dim=args.proj_hidden_dim,
    )
    train_cfg = TrainConfig(
        tau=args.tau,
        momentum_m=args.momentum_m,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        steps=args.steps,
        seed=args.seed,
        augment_noise_std=args.augment_noise_std,
        symmetrize_loss=args.symmetrize_loss,
    )
    sampler_cfg = SamplerConfig(delta_t_ms=args.delta_t * 1000.0, seed=derive_seed(args.seed, "sampler"))
    params, history = train(manifest, payloads, sampler_cfg, enc_cfg, train_cfg)
    checkpoints.save_model(args.out, params, enc_cfg, train_cfg, train_cfg.steps)
    if args.metrics_out:
        Path(args.metrics_out).write_text(metrics_csv(history), encoding="utf-8")
    if args.features_out:
        feats = backbone_features(params.theta_q, features, enc_cfg)
        grids.write_grid(args.features_out, feats[None, :, :])
    return 0


def _cmd_probe_train(args: argparse.Namespace) -> int:
    features = _read_features(args.features)
    labels = _read_labels(args.labels)
    cfg = ProbeConfig(
        learning_rate=args.learning_rate,
        l2_reg=args.l2_reg,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    model = train_probe(features, labels, cfg)
    checkpoints.save_probe(args.out, model, {"classes": int(model.weights.shape[0])})
    return 0


def _cmd_probe_eval(args: argparse.Namespace) -> int:
    model, _ = checkpoints.load_probe(args.model)
    features = _read_features(args.features)
    labels = _read_labels(args.labels)
    accuracy = evaluate(model, features, labels)
    print(json.dumps({"top1_accuracy": accuracy}, sort_keys=True))
    return 0


def _cmd_glove_train(args: argparse.Namespace) -> int:
    matrix = read_cooc_csv(args.cooc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed_idx in range(args.seeds):
        cfg = GloveConfig(
            dim=args.dim,
            alpha=args.alpha,
            x_max_quantile=args.xmax_quantile,
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            seed=derive_seed(args.seed, "glove", seed_idx),
        )
        model = train_glove(matrix, cfg)
        checkpoints.save_glove(out / f"glove_seed{seed_idx:03d}.sscl", model, matrix.labels, cfg.seed)
    return 0


def _cmd_glove_validate(args: argparse.Namespace) -> int:
    model, labels, _ = checkpoints.load_glove(args.model)
    matrix = read_cooc_csv(args.cooc)
    if labels != matrix.labels:
        raise ValueError("model labels do not match the co-occurrence matrix")
    r = validate_glove(model, matrix)
    print(json.dumps({"pearson_r": None if math.isnan(r) else r}, sort_keys=True))
    return 0


def _load_reps(directory: str) -> list[tuple[str, RepMatrix]]:
    reps = []
    for path in sorted(Path(directory).glob("*.sgrd")):
        sidecar = path.with_suffix(".json")
        if not sidecar.exists():
            raise ValueError(f"{path}: missing object_ids sidecar {sidecar.name}")
        object_ids = tuple(json.loads(sidecar.read_text(encoding="utf-8"))["object_ids"])
        features = _read_features(path)
        reps.append((path.stem, RepMatrix(object_ids=object_ids, features=features)))
    if not reps:
        raise ValueError(f"{directory}: no .sgrd representation files")
    return reps


def _cmd_cka(args: argparse.Namespace) -> int:
    model_layers = _load_reps(args.model_reps)
    glove_seeds = _load_reps(args.glove_reps)
    model_b_layers = _load_reps(args.model_reps_b) if args.model_reps_b else None
    if not args.per_layer:
        model_layers = [("all", concat_layers([rep for _, rep in model_layers]))]
        if model_b_layers is not None:
            model_b_layers = [("all", concat_layers([rep for _, rep in model_b_layers]))]

    lines = ["model,layer,seed,score,mean,std,t,p,d"]
    scores_a: list[float] = []
    scores_b: list[float] = []
    for seed_name, glove_rep in glove_seeds:
        layer_scores = [linear_cka(rep, glove_rep) for _, rep in model_layers]
        for (layer_name, _), score in zip(model_layers, layer_scores):
            lines.append(f"a,{layer_name},{seed_name},{score!r},,,,,")
        scores_a.append(float(np.mean(layer_scores)))
        if model_b_layers is not None:
            layer_scores_b = [linear_cka(rep, glove_rep) for _, rep in model_b_layers]
            for (layer_name, _), score in zip(model_b_layers, layer_scores_b):
                lines.append(f"b,{layer_name},{seed_name},{score!r},,,,,")
            scores_b.append(float(np.mean(layer_scores_b)))

    if model_b_layers is not None and len(scores_a) >= 2:
        test = paired_t_test(SeedScores(scores_a=tuple(scores_a), scores_b=tuple(scores_b)))
        diffs = np.asarray(scores_a) - np.asarray(scores_b)
        summary = (
            f"summary,ALL,,,{float(diffs.mean())!r},{float(diffs.std(ddof=1))!r},"
            f"{test.t!r},{test.p!r},{test.cohens_d!r}"
        )
    else:
        arr = np.asarray(scores_a)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        summary = f"summary,ALL,,,{float(arr.mean())!r},{std!r},,,"
    lines.append(summary)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    run_experiment(cfg, out_override=args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazessl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gaze = sub.add_parser("gaze", help="gaze trajectory tools").add_subparsers(
        dest="subcommand", required=True
    )
    extract = gaze.add_parser("extract", help="peak gaze locations from a saliency stack")
    extract.add_argument("--saliency", required=True)
    extract.add_argument("--video-id", required=True)
    extract.add_argument("--clip-id", required=True)
    extract.add_argument("--frame-period-ms", type=float, default=200.0)
    extract.add_argument("--out", required=True)
    extract.set_defaults(func=_cmd_gaze_extract)

    segment = gaze.add_parser("segment", help="fixation segmentation of trajectories")
    segment.add_argument("--traj", required=True)
    segment.add_argument("--p", type=float, required=True, help="max movement in px per 200 ms")
    segment.add_argument("--out", required=True)
    segment.set_defaults(func=_cmd_gaze_segment)

    stats = gaze.add_parser("stats", help="displacement and location statistics")
    stats.add_argument("--traj", required=True)
    stats.add_argument("--lag-ms", type=float, default=200.0)
    stats.add_argument("--out", required=True)
    stats.set_defaults(func=_cmd_gaze_stats)

    crop = sub.add_parser("crop", help="gaze-centered square crop of a frame grid")
    crop.add_argument("--frame", required=True)
    crop.add_argument("--x", type=float, required=True)
    crop.add_argument("--y", type=float, required=True)
    crop.add_argument("--n", type=int, required=True)
    crop.add_argument("--out", required=True)
    crop.set_defaults(func=_cmd_crop)

    pairs = sub.add_parser("pairs", help="temporal pair sampling").add_subparsers(
        dest="subcommand", required=True
    )
    sample = pairs.add_parser("sample", help="sample positive pairs from a manifest")
    sample.add_argument("--manifest", required=True)
    sample.add_argument("--delta-t", type=float, required=True, help="temporal window in seconds")
    sample.add_argument("--count", type=int, required=True)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--fixation-segments", default=None)
    sample.add_argument("--out", required=True)
    sample.set_defaults(func=_cmd_pairs_sample)

    synth = sub.add_parser("synth", help="synthetic world").add_subparsers(
        dest="subcommand", required=True
    )
    gen = synth.add_parser("gen", help="generate a synthetic gaze-annotated stream")
    gen.add_argument("--n-videos", type=int, default=12)
    gen.add_argument("--frames-per-video", type=int, default=100)
    gen.add_argument("--frame-period-ms", type=float, default=200.0)
    gen.add_argument("--image-size", type=int, default=32)
    gen.add_argument("--n-object-classes", type=int, default=4)
    gen.add_argument("--n-context-classes", type=int, default=4)
    gen.add_argument("--object-dwell-frames", type=int, default=10)
    gen.add_argument("--object-patch-size", type=int, default=8)
    gen.add_argument("--nuisance-dim", type=int, default=16)
    gen.add_argument("--noise-std", type=float, default=0.25)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_synth_gen)

    ssl = sub.add_parser("ssl", help="contrastive training").add_subparsers(
        dest="subcommand", required=True
    )
    ssl_train = ssl.add_parser("train", help="train the query/momentum encoder pair")
    ssl_train.add_argument("--manifest", required=True)
    ssl_train.add_argument("--payloads", required=True, help="feature grid, one row per record")
    ssl_train.add_argument("--delta-t", type=float, default=1.0, help="temporal window in seconds")
    ssl_train.add_argument("--hidden-dims", type=int, nargs="+", default=[128, 64])
    ssl_train.add_argument("--embed-dim", type=int, default=16)
    ssl_train.add_argument("--proj-hidden-dim", type=int, default=64)
    ssl_train.add_argument("--tau", type=float, default=0.1)
    ssl_train.add_argument("--momentum-m", type=float, default=0.996)
    ssl_train.add_argument("--learning-rate", type=float, default=0.05)
    ssl_train.add_argument("--weight-decay", type=float, default=1e-6)
    ssl_train.add_argument("--batch-size", type=int, default=32)
    ssl_train.add_argument("--steps", type=int, default=1200)
    ssl_train.add_argument("--augment-noise-std", type=float, default=0.5)
    ssl_train.add_argument("--symmetrize-loss", action="store_true")
    ssl_train.add_argument("--seed", type=int, default=0)
    ssl_train.add_argument("--out", required=True)
    ssl_train.add_argument("--metrics-out", default=None)
    ssl_train.add_argument("--features-out", default=None)
    ssl_train.set_defaults(func=_cmd_ssl_train)

    probe = sub.add_parser("probe", help="linear probing").add_subparsers(
        dest="subcommand", required=True
    )
    probe_train_p = probe.add_parser("train", help="fit a linear probe on frozen features")
    probe_train_p.add_argument("--features", required=True)
    probe_train_p.add_argument("--labels", required=True)
    probe_train_p.add_argument("--learning-rate", type=float, default=0.5)
    probe_train_p.add_argument("--l2-reg", type=float, default=1e-4)
    probe_train_p.add_argument("--epochs", type=int, default=100)
    probe_train_p.add_argument("--batch-size", type=int, default=256)
    probe_train_p.add_argument("--seed", type=int, default=0)
    probe_train_p.add_argument("--out", required=True)
    probe_train_p.set_defaults(func=_cmd_probe_train)

    probe_eval_p = probe.add_parser("eval", help="top-1 accuracy of a probe")
    probe_eval_p.add_argument("--model", required=True)
    probe_eval_p.add_argument("--features", required=True)
    probe_eval_p.add_argument("--labels", required=True)
    probe_eval_p.set_defaults(func=_cmd_probe_eval)

    glove = sub.add_parser("glove", help="co-occurrence embeddings").add_subparsers(
        dest="subcommand", required=True
    )
    glove_train_p = glove.add_parser("train", help="train tied GloVe embeddings")
    glove_train_p.add_argument("--cooc", required=True)
    glove_train_p.add_argument("--dim", type=int, default=128)
    glove_train_p.add_argument("--alpha", type=float, default=0.75)
    glove_train_p.add_argument("--xmax-quantile", type=float, default=0.9)
    glove_train_p.add_argument("--learning-rate", type=float, default=0.05)
    glove_train_p.add_argument("--epochs", type=int, default=200)
    glove_train_p.add_argument("--seeds", type=int, default=1)
    glove_train_p.add_argument("--seed", type=int, default=0)
    glove_train_p.add_argument("--out", required=True)
    glove_train_p.set_defaults(func=_cmd_glove_train)

    glove_val_p = glove.add_parser("validate", help="test-set correlation of a GloVe model")
    glove_val_p.add_argument("--model", required=True)
    glove_val_p.add_argument("--cooc", required=True)
    glove_val_p.set_defaults(func=_cmd_glove_validate)

    cka = sub.add_parser("cka", help="linear CKA between representation sets")
    cka.add_argument("--model-reps", required=True, help="directory of per-layer .sgrd + .json")
    cka.add_argument("--glove-reps", required=True, help="directory of per-seed .sgrd + .json")
    cka.add_argument(
        "--model-reps-b", default=None, help="second model for a paired seed comparison"
    )
    cka.add_argument("--per-layer", action="store_true")
    cka.add_argument("--out", default=None)
    cka.set_defaults(func=_cmd_cka)

    experiment = sub.add_parser("experiment", help="experiment recipes").add_subparsers(
        dest="subcommand", required=True
    )
    run = experiment.add_parser("run", help="run a recipe from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="override the configured output directory")
    run.set_defaults(func=_cmd_experiment_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, grids.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
