"""Training loop: composite loss, Adam, cosine schedule, QAT.

Each step samples a mini-batch of frame indices, runs the decoder with
(optionally) quantized weights, refreshes the frame buffer with the
batch's detached independent frames, aggregates neighbors from the
buffer, and descends the combined L1/SSIM objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .functional import qat_quantize
from .metrics import psnr, ssim
from .model import FFNeRVModel, FrameBuffer, update_buffer
from .tensor import Tensor, backward


@dataclass
class LossWeights:
    alpha: float = 0.7
    lambda1: float = 0.1
    lambda2: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be non-negative")


@dataclass
class TrainConfig:
    epochs: int = 300
    batch: int = 1
    lr: float = 5e-4
    schedule: str = "cosine"  # "cosine" | "constant"
    warmup_frac: float = 0.1
    qat_enabled: bool = True
    qat_bits: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 2 <= self.qat_bits <= 16:
            raise ValueError(f"qat bit width must be in [2,16], got {self.qat_bits}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


class TrainingDiverged(RuntimeError):
    pass


def frame_loss(pred: Tensor, target: Tensor, alpha: float) -> Tensor:
    """alpha * L1 + (1 - alpha) * (1 - SSIM)."""
    l1 = (pred - target).abs().mean()
    if alpha == 1.0:
        return l1
    return alpha * l1 + (1.0 - alpha) * (1.0 - ssim(pred, target))


def composite_loss(final: Tensor, aggregated: Tensor | None, independent: Tensor,
                   target: Tensor, weights: LossWeights) -> Tensor:
    """lambda1*l(A,F) + lambda2*l(I,F) + l(f,F); the aggregated term is
    dropped when aggregation is disabled (flow-off ablation)."""
    total = frame_loss(final, target, weights.alpha)
    if weights.lambda2 != 0.0:
        total = total + weights.lambda2 * frame_loss(independent, target, weights.alpha)
    if aggregated is not None and weights.lambda1 != 0.0:
        total = total + weights.lambda1 * frame_loss(aggregated, target, weights.alpha)
    return total


class Adam:
    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            update = lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            p.data -= update.astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def schedule_lr(cfg: TrainConfig, step: int, total_steps: int) -> float:
    """Linear warmup then cosine annealing to zero."""
    if cfg.schedule == "constant":
        return cfg.lr
    warmup = max(1, int(round(cfg.warmup_frac * total_steps)))
    if step < warmup:
        return cfg.lr * (step + 1) / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def quantized_params(model: FFNeRVModel, bits: int) -> dict[str, Tensor]:
    """Straight-through quantized views of the weight-class parameters."""
    params = model.parameters()
    return {name: qat_quantize(params[name], bits)
            for name in model.weight_class_names()}


def train(model: FFNeRVModel, frames: np.ndarray, cfg: TrainConfig,
          loss_weights: LossWeights | None = None,
          max_steps: int | None = None,
          on_epoch=None) -> list[dict]:
    """Overfit the model to ``frames`` ((T,3,H,W) float32 in [0,1]).

    Returns per-epoch records: epoch, lr, loss, psnr, ssim. ``max_steps``
    truncates the run (the schedule still spans the configured epochs so a
    truncated run matches the prefix of a full one).
    """
    cfg_m = model.config
    T = cfg_m.num_frames
    if frames.shape != (T, 3, *cfg_m.frame_hw):
        raise ValueError(f"frames shape {frames.shape} does not match config "
                         f"{(T, 3, *cfg_m.frame_hw)}")
    lw = loss_weights or LossWeights()
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params)
    targets = [Tensor(frames[t]) for t in range(T)]

    steps_per_epoch = math.ceil(T / cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch

    def pmap_now():
        return quantized_params(model, cfg.qat_bits) if cfg.qat_enabled else None

    buffer = FrameBuffer(T, cfg_m.frame_hw)
    if cfg_m.flow_enabled:
        pm = pmap_now()
        for t in range(T):
            buffer.write(t, model.independent_frame(t, pm))

    records: list[dict] = []
    step = 0
    done = False
    for epoch in range(cfg.epochs):
        order = rng.permutation(T)
        ep_loss, ep_psnr, ep_ssim, ep_n = 0.0, 0.0, 0.0, 0
        for start in range(0, T, cfg.batch):
            batch = order[start:start + cfg.batch]
            pm = pmap_now()
            losses = []
            for t in batch:
                t = int(t)
                comp = model.forward_components(t, pm)
                update_buffer([t], [comp.independent.detach()], buffer)
                if cfg_m.flow_enabled:
                    agg = model.aggregate(comp, buffer, t)
                    final = model.final_frame(comp, agg)
                else:
                    agg = None
                    final = comp.independent
                losses.append(composite_loss(final, agg, comp.independent,
                                             targets[t], lw))
                ep_psnr += psnr(final.data, frames[t])
                ep_ssim += float(ssim(Tensor(final.data), targets[t]).item())
                ep_n += 1
            loss = losses[0] if len(losses) == 1 else (
                sum(losses[1:], losses[0]) * (1.0 / len(losses)))
            lv = float(loss.item())
            if not math.isfinite(lv):
                raise TrainingDiverged(
                    f"non-finite loss {lv} at epoch {epoch} step {step} "
                    f"(batch {list(map(int, batch))})")
            ep_loss += lv * len(batch)
            backward(loss)
            opt.step(schedule_lr(cfg, step, total_steps))
            opt.zero_grad()
            step += 1
            if max_steps is not None and step >= max_steps:
                done = True
                break
        record = {
            "epoch": epoch,
            "lr": schedule_lr(cfg, step - 1, total_steps),
            "loss": ep_loss / max(ep_n, 1),
            "psnr": ep_psnr / max(ep_n, 1),
            "ssim": ep_ssim / max(ep_n, 1),
        }
        records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if done:
            break
    return records
