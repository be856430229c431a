"""Time-contrastive training of a query/momentum MLP encoder pair.

The query network is trained with an InfoNCE loss over cosine similarities:
for each query row the positive key sits at the matching row index and every
key embedding of the batch serves as a candidate. Gradients are exact
analytic derivatives; the momentum network follows the query network through
an exponential moving average and never receives gradient updates.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .gaze import FixationSegment
from .sampling import FrameManifest, SamplerConfig, sample_pairs
from .seeds import rng_for

#: Cosine denominators are floored here to keep the division finite.
NORM_FLOOR = 1e-12

Layer = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class EncoderConfig:
    """Shapes of the backbone MLP and its projection head.

    The backbone applies affine + ReLU per hidden layer; the projector is a
    two-layer MLP (hidden proj_hidden_dim, ReLU) ending in a linear map to
    embed_dim. Downstream probing reads the last backbone activation.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = (128, 64)
    embed_dim: int = 16
    proj_hidden_dim: int = 64
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.embed_dim, self.proj_hidden_dim)
        if any(d <= 0 for d in dims):
            raise ValueError("all encoder dimensions must be > 0")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        chain = [self.input_dim, *self.hidden_dims, self.proj_hidden_dim, self.embed_dim]
        return list(zip(chain[:-1], chain[1:]))

    @property
    def n_backbone_layers(self) -> int:
        return len(self.hidden_dims)


@dataclass
class ModelParams:
    """Weight/bias stacks for the query network and its momentum copy."""

    theta_q: list[Layer]
    theta_k: list[Layer]

    def __post_init__(self) -> None:
        if len(self.theta_q) != len(self.theta_k):
            raise ValueError("theta_q and theta_k must have the same layer count")
        for (wq, bq), (wk, bk) in zip(self.theta_q, self.theta_k):
            if wq.shape != wk.shape or bq.shape != bk.shape:
                raise ValueError("theta_q and theta_k must be shape-identical")


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.1
    momentum_m: float = 0.996
    learning_rate: float = 0.05
    weight_decay: float = 1e-6
    batch_size: int = 32
    steps: int = 1200
    seed: int = 0
    augment_noise_std: float = 0.5
    symmetrize_loss: bool = False

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if not 0.0 <= self.momentum_m <= 1.0:
            raise ValueError("momentum_m must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.augment_noise_std < 0:
            raise ValueError("augment_noise_std must be >= 0")


def init_layers(cfg: EncoderConfig, rng: np.random.Generator) -> list[Layer]:
    """Glorot-uniform weights, zero biases."""
    layers: list[Layer] = []
    for fan_in, fan_out in cfg.layer_dims:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((weight, np.zeros(fan_out)))
    return layers


def init_params(cfg: EncoderConfig, seed: int) -> ModelParams:
    """Fresh query parameters with the momentum side initialized as a copy."""
    theta_q = init_layers(cfg, rng_for(seed, "encoder-init"))
    return ModelParams(theta_q=theta_q, theta_k=copy.deepcopy(theta_q))


def forward(layers: Sequence[Layer], batch: np.ndarray) -> np.ndarray:
    """MLP forward pass: ReLU after every affine layer except the last.

    No normalization is applied here; the contrastive loss normalizes
    inside its cosine similarity.
    """
    out, _, _ = _forward_cached(layers, batch)
    return out


def _forward_cached(
    layers: Sequence[Layer], batch: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"batch must be 2-D, got shape {x.shape}")
    if x.shape[1] != layers[0][0].shape[0]:
        raise ValueError(
            f"batch width {x.shape[1]} does not match input dim {layers[0][0].shape[0]}"
        )
    inputs = [x]
    pre_acts = []
    h = x
    last = len(layers) - 1
    for i, (weight, bias) in enumerate(layers):
        z = h @ weight + bias
        pre_acts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        inputs.append(h)
    return h, inputs, pre_acts


def _backward(
    layers: Sequence[Layer],
    inputs: list[np.ndarray],
    pre_acts: list[np.ndarray],
    grad_out: np.ndarray,
) -> list[Layer]:
    """Per-layer parameter gradients for a cached forward pass."""
    grads: list[Layer] = [None] * len(layers)  # type: ignore[list-item]
    g = grad_out
    last = len(layers) - 1
    for i in range(last, -1, -1):
        dz = g if i == last else g * (pre_acts[i] > 0)
        grads[i] = (inputs[i].T @ dz, dz.sum(axis=0))
        g = dz @ layers[i][0].T
    return grads


def backbone_features(layers: Sequence[Layer], batch: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """Frozen representation read out before the projection head."""
    h = np.asarray(batch, dtype=np.float64)
    for weight, bias in layers[: cfg.n_backbone_layers]:
        h = np.maximum(h @ weight + bias, 0.0)
    return h


def layer_activations(
    layers: Sequence[Layer], batch: np.ndarray, cfg: EncoderConfig
) -> list[np.ndarray]:
    """Post-ReLU activations of each backbone layer, shallow to deep."""
    h = np.asarray(batch, dtype=np.float64)
    acts = []
    for weight, bias in layers[: cfg.n_backbone_layers]:
        h = np.maximum(h @ weight + bias, 0.0)
        acts.append(h)
    return acts


def info_nce(q: np.ndarray, k: np.ndarray, tau: float) -> tuple[float, np.ndarray, np.ndarray]:
    """InfoNCE loss over cosine similarities with its analytic gradients.

    loss = mean_t -log[ exp(sim(q_t, k_t)/tau) / sum_i exp(sim(q_t, k_i)/tau) ]

    The log-sum-exp subtracts the row max for stability. Returns
    (loss, dloss/dq, dloss/dk); the k gradient is only consumed when the
    caller symmetrizes the loss, since the momentum encoder itself is never
    updated by gradients.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 2:
        raise ValueError(f"q and k must share a 2-D shape, got {q.shape} and {k.shape}")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    norm_q = np.linalg.norm(q, axis=1)
    norm_k = np.linalg.norm(k, axis=1)
    if np.any(norm_q == 0) or np.any(norm_k == 0):
        raise ValueError("zero-norm embedding row; cosine similarity undefined")
    dq = np.maximum(norm_q, NORM_FLOOR)[:, None]
    dk = np.maximum(norm_k, NORM_FLOOR)[:, None]
    qn = q / dq
    kn = k / dk

    batch = q.shape[0]
    sims = qn @ kn.T
    logits = sims / tau
    row_max = logits.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    loss = float(np.mean(lse - np.diag(logits)))

    probs = np.exp(logits - lse[:, None])
    gsim = (probs - np.eye(batch)) / (batch * tau)
    grad_q = (gsim @ kn - (gsim * sims).sum(axis=1, keepdims=True) * qn) / dq
    grad_k = (gsim.T @ qn - (gsim * sims).sum(axis=0)[:, None] * kn) / dk
    return loss, grad_q, grad_k


def ema_update(theta_k: Sequence[Layer], theta_q: Sequence[Layer], m: float) -> list[Layer]:
    """Momentum update theta_k <- m * theta_k + (1 - m) * theta_q, per entry."""
    if not 0.0 <= m <= 1.0:
        raise ValueError("momentum m must lie in [0, 1]")
    if len(theta_k) != len(theta_q):
        raise ValueError("parameter sets must have the same layer count")
    updated: list[Layer] = []
    for (wk, bk), (wq, bq) in zip(theta_k, theta_q):
        if wk.shape != wq.shape or bk.shape != bq.shape:
            raise ValueError("parameter sets must be shape-identical")
        updated.append((m * wk + (1.0 - m) * wq, m * bk + (1.0 - m) * bq))
    return updated


@dataclass(frozen=True)
class StepMetrics:
    step: int
    loss: float
    pos_top1: float


def train(
    manifest: FrameManifest,
    payloads: Mapping[str, np.ndarray],
    sampler_cfg: SamplerConfig,
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    fixations: Mapping[tuple[str, str], Sequence[FixationSegment]] | None = None,
) -> tuple[ModelParams, list[StepMetrics]]:
    """Run the contrastive training loop.

    Each step samples a batch of temporal pairs, augments both views with
    additive Gaussian noise, computes InfoNCE and its gradients, updates the
    query network by SGD with decoupled weight decay and moves the momentum
    network by EMA. Fully deterministic given the seeds in the configs.
    """
    params = init_params(enc_cfg, train_cfg.seed)
    history: list[StepMetrics] = []
    if train_cfg.steps == 0:
        return params, history

    store = np.stack([np.asarray(payloads[rec.payload_ref], dtype=np.float64) for rec in manifest.records])
    if store.shape[1] != enc_cfg.input_dim:
        raise ValueError(f"payload dim {store.shape[1]} does not match input dim {enc_cfg.input_dim}")

    pairs = sample_pairs(
        manifest, sampler_cfg, fixations=fixations, count=train_cfg.steps * train_cfg.batch_size
    )
    query_idx = np.array([p.query_idx for p in pairs])
    key_idx = np.array([p.key_idx for p in pairs])
    noise_rng = rng_for(train_cfg.seed, "augment")
    lr, wd = train_cfg.learning_rate, train_cfg.weight_decay

    for step in range(train_cfg.steps):
        lo, hi = step * train_cfg.batch_size, (step + 1) * train_cfg.batch_size
        xq = store[query_idx[lo:hi]]
        xk = store[key_idx[lo:hi]]
        if train_cfg.augment_noise_std > 0:
            xq = xq + noise_rng.normal(0.0, train_cfg.augment_noise_std, size=xq.shape)
            xk = xk + noise_rng.normal(0.0, train_cfg.augment_noise_std, size=xk.shape)

        q, q_inputs, q_pre = _forward_cached(params.theta_q, xq)
        k = forward(params.theta_k, xk)
        loss, grad_q, grad_k = info_nce(q, k, train_cfg.tau)
        if train_cfg.symmetrize_loss:
            # Reverse direction treats k rows as queries; its key-side gradient
            # lands on q and is the only route by which grad_k reaches theta_q.
            loss_rev, _, grad_q_rev = info_nce(k, q, train_cfg.tau)
            loss = 0.5 * (loss + loss_rev)
            grad_q = 0.5 * (grad_q + grad_q_rev)

        grads = _backward(params.theta_q, q_inputs, q_pre, grad_q)
        theta_q = []
        for (weight, bias), (gw, gb) in zip(params.theta_q, grads):
            theta_q.append((weight - lr * gw - lr * wd * weight, bias - lr * gb))
        params = ModelParams(
            theta_q=theta_q, theta_k=ema_update(params.theta_k, theta_q, train_cfg.momentum_m)
        )

        sims = (q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), NORM_FLOOR)) @ (
            k / np.maximum(np.linalg.norm(k, axis=1, keepdims=True), NORM_FLOOR)
        ).T
        pos_top1 = float(np.mean(np.argmax(sims, axis=1) == np.arange(sims.shape[0])))
        history.append(StepMetrics(step=step, loss=loss, pos_top1=pos_top1))
    return params, history


def metrics_csv(history: Sequence[StepMetrics]) -> str:
    """Metrics history as CSV text (step, loss, pos_top1)."""
    lines = ["step,loss,pos_top1"]
    for rec in history:
        lines.append(f"{rec.step},{rec.loss!r},{rec.pos_top1!r}")
    return "\n".join(lines) + "\n"


def desk_sampler_config(delta_t_ms: float, seed: int, fixation_p: float | None = None) -> SamplerConfig:
    """Convenience constructor used by the experiment recipes."""
    if fixation_p is None:
        return SamplerConfig(delta_t_ms=delta_t_ms, fixation_constrained=False, seed=seed)
    return replace(
        SamplerConfig(delta_t_ms=delta_t_ms, fixation_constrained=True, seed=seed),
        velocity_threshold_p=fixation_p,
    )
