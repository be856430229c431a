"""Experiment configuration: a strict nested key-value text format.

Lines are `section.key = value` (or bare `key = value` for globals), with
`#` comments. Unknown keys, duplicates and malformed lines are errors with
the offending line number, keeping experiment files auditable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(Exception):
    """Invalid experiment configuration."""


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in text.split(",") if v.strip())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in text.split(",") if v.strip())


RECIPES = ("slowness-sweep", "crop-sweep", "fixation-sweep", "cooc-align")

#: key -> (parser, default); None default marks a required key.
SCHEMA: dict[str, tuple[Any, Any]] = {
    "recipe": (str, None),
    "seed": (int, None),
    "out": (str, None),
    "world.n_videos": (int, 12),
    "world.frames_per_video": (int, 100),
    "world.frame_period_ms": (float, 200.0),
    "world.image_size": (int, 32),
    "world.n_object_classes": (int, 4),
    "world.n_context_classes": (int, 4),
    "world.object_dwell_frames": (int, 10),
    "world.object_patch_size": (int, 8),
    "world.nuisance_dim": (int, 16),
    "world.noise_std": (float, 0.25),
    "pipeline.crop_size": (int, 16),
    "sampler.delta_t_s": (float, 1.0),
    "sampler.fixation_constrained": (_parse_bool, False),
    "sampler.velocity_threshold_p": (float, 15.0),
    "encoder.hidden_dims": (_parse_int_list, (128, 64)),
    "encoder.embed_dim": (int, 16),
    "encoder.proj_hidden_dim": (int, 64),
    "training.tau": (float, 0.1),
    "training.momentum_m": (float, 0.996),
    "training.learning_rate": (float, 0.05),
    "training.weight_decay": (float, 1e-6),
    "training.batch_size": (int, 32),
    "training.steps": (int, 1200),
    "training.augment_noise_std": (float, 0.5),
    "training.symmetrize_loss": (_parse_bool, False),
    "probe.learning_rate": (float, 0.5),
    "probe.l2_reg": (float, 1e-4),
    "probe.epochs": (int, 100),
    "probe.batch_size": (int, 256),
    "glove.dim": (int, 16),
    "glove.alpha": (float, 0.75),
    "glove.x_max_quantile": (float, 0.9),
    "glove.learning_rate": (float, 0.05),
    "glove.epochs": (int, 200),
    "glove.n_seeds": (int, 5),
    "cka.per_layer": (_parse_bool, False),
    "sweep.delta_t_list_s": (_parse_float_list, (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)),
    "sweep.crop_sizes": (_parse_int_list, (8, 16, 24, 32)),
    "sweep.p_list": (_parse_float_list, (5.0, 15.0, 30.0, 45.0, float("inf"))),
    "sweep.n_seeds": (int, 1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: str
    seed: int
    out: str
    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def echo(self) -> dict[str, Any]:
        """Resolved key values for the summary, output path excluded."""
        resolved = {k: v for k, v in sorted(self.values.items()) if k != "out"}
        for key, value in list(resolved.items()):
            if isinstance(value, tuple):
                resolved[key] = list(value)
        return resolved


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    raw: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        raw[key] = value

    values: dict[str, Any] = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{source}: key {key!r}: {exc}") from exc
        elif default is None:
            raise ConfigError(f"{source}: missing required key {key!r}")
        else:
            values[key] = default
    if values["recipe"] not in RECIPES:
        raise ConfigError(
            f"{source}: key 'recipe': unknown recipe {values['recipe']!r}, expected one of {RECIPES}"
        )
    return ExperimentConfig(
        recipe=values["recipe"], seed=values["seed"], out=values["out"], values=values
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))
