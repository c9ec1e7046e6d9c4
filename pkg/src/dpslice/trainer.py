"""Training loop against a slice bundle.

Everything here is post-processing of the privacy mechanism's output: the
only data inputs are the SliceBundle, the configuration, and seeds. All
per-step randomness (batch order, latents, synthetic-side noise) is derived
from fixed labelled substreams of the config seed, so a run is a pure
function of (bundle, initial model, config) and can be resumed from a
checkpoint bit-exactly.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import divergence, generator
from .divergence import KernelConfig, get_generator
from .generator import GeneratorModel, OptimizerState
from .mechanism import ColumnSchema, SliceBundle, decode, substream

LOSS_SMOOTHED_SLICED = "smoothed-sliced-f"
LOSS_SLICED_WASSERSTEIN = "sliced-wasserstein-1d"

_STREAM_EPOCH = 10
_STREAM_LATENT = 11
_STREAM_SYN_NOISE = 12
_STREAM_SLICE_CHOICE = 13
_STREAM_GENERATE = 14


class TrainingDivergedError(RuntimeError):
    """The loss became non-finite; kernel/ridge settings need attention."""


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_steps: int = 1000
    learning_rate: float = 2e-5
    loss: str = LOSS_SMOOTHED_SLICED
    f_name: str = "KL"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0
    checkpoint_interval: int = 0  # 0 disables checkpointing
    noise_resample: str = "step"  # "step" | "epoch"
    slices_per_step: Optional[int] = None  # None = use all slices

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.loss not in (LOSS_SMOOTHED_SLICED, LOSS_SLICED_WASSERSTEIN):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.noise_resample not in ("step", "epoch"):
            raise ValueError("noise_resample must be 'step' or 'epoch'")


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss"])
            for i, loss in enumerate(self.losses):
                writer.writerow([i, loss])


def _batch_indices(n: int, batch_size: int, step: int, seed: int) -> np.ndarray:
    """Without-replacement batch for a step, reshuffled every epoch."""
    per_epoch = n // batch_size
    epoch, pos = divmod(step, per_epoch)
    perm = substream(seed, _STREAM_EPOCH, epoch).permutation(n)
    return perm[pos * batch_size:(pos + 1) * batch_size]


def _step_slices(bundle: SliceBundle, idx: np.ndarray, cfg: TrainConfig, step: int):
    """(theta_s, o-batch_s) pairs for this step, optionally subsampling slices."""
    k = bundle.dims.k
    if cfg.slices_per_step is None or cfg.slices_per_step >= bundle.dims.m:
        chosen = range(bundle.dims.m)
    else:
        chosen = substream(cfg.seed, _STREAM_SLICE_CHOICE, step).choice(
            bundle.dims.m, size=cfg.slices_per_step, replace=False
        )
    return [
        (bundle.U[:, s * k:(s + 1) * k], bundle.O[np.ix_(idx, range(s * k, (s + 1) * k))])
        for s in chosen
    ]


def _syn_noise(bundle: SliceBundle, cfg: TrainConfig, n_slices: int, step: int) -> np.ndarray:
    per_epoch = bundle.n // cfg.batch_size
    tick = step if cfg.noise_resample == "step" else step // per_epoch
    rng = substream(cfg.seed, _STREAM_SYN_NOISE, tick)
    return rng.normal(0.0, bundle.sigma, size=(n_slices, cfg.batch_size, bundle.dims.k))


def step_loss(
    bundle: SliceBundle, model: GeneratorModel, cfg: TrainConfig, step: int
) -> tuple[float, np.ndarray, list]:
    """Loss and synthetic-point gradient for one step; also returns the
    forward tape so the caller can backpropagate into the model."""
    idx = _batch_indices(bundle.n, cfg.batch_size, step, cfg.seed)
    slices = _step_slices(bundle, idx, cfg, step)
    z = substream(cfg.seed, _STREAM_LATENT, step).standard_normal(
        (cfg.batch_size, model.latent_dim)
    )
    x_syn, tape = generator.forward(model, z)
    noise = _syn_noise(bundle, cfg, len(slices), step)
    if cfg.loss == LOSS_SMOOTHED_SLICED:
        loss, grad_syn = divergence.smoothed_sliced_loss(
            slices, x_syn, noise, get_generator(cfg.f_name), cfg.kernel
        )
    else:
        loss, grad_syn = divergence.sliced_wasserstein_1d_loss(slices, x_syn, noise)
    return loss, grad_syn, tape


def train(
    bundle: SliceBundle,
    model: GeneratorModel,
    cfg: TrainConfig,
    checkpoint_dir=None,
    start_step: int = 0,
    opt_state: Optional[OptimizerState] = None,
    history: Optional[TrainHistory] = None,
) -> tuple[GeneratorModel, TrainHistory]:
    """Run the optimization loop from start_step to cfg.max_steps.

    The model is copied, never mutated in place. Resuming with the state from
    a checkpoint reproduces an uninterrupted run exactly.
    """
    if model.output_dim != bundle.dims.d:
        raise ValueError(
            f"model output width {model.output_dim} != bundle d {bundle.dims.d}"
        )
    if bundle.n < cfg.batch_size:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds bundle rows {bundle.n}"
        )
    model = model.copy()
    state = opt_state if opt_state is not None else OptimizerState.for_model(
        model, learning_rate=cfg.learning_rate
    )
    history = history if history is not None else TrainHistory()
    per_epoch = bundle.n // cfg.batch_size
    epoch_start = time.monotonic()
    for step in range(start_step, cfg.max_steps):
        loss, grad_syn, tape = step_loss(bundle, model, cfg, step)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at step {step}; check kernel ridge/bandwidths"
            )
        gw, gb = generator.backward(model, tape, grad_syn)
        generator.adam_step(model, state, gw, gb)
        history.losses.append(loss)
        if (step + 1) % per_epoch == 0:
            history.epoch_seconds.append(time.monotonic() - epoch_start)
            epoch_start = time.monotonic()
        if checkpoint_dir and cfg.checkpoint_interval and (
            (step + 1) % cfg.checkpoint_interval == 0 or step + 1 == cfg.max_steps
        ):
            history.checkpoints.append(
                save_checkpoint(checkpoint_dir, step + 1, model, state, history)
            )
    return model, history


def save_checkpoint(
    directory, step: int, model: GeneratorModel, state: OptimizerState,
    history: TrainHistory,
) -> str:
    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, f"ckpt_{step:07d}")
    model.save(stem + ".gen")
    np.savez(
        stem + ".opt",
        step=state.step,
        learning_rate=state.learning_rate,
        beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        **{f"m{i}": a for i, a in enumerate(state.m)},
        **{f"v{i}": a for i, a in enumerate(state.v)},
    )
    with open(stem + ".json", "w") as fh:
        json.dump({"step": step, "losses": history.losses,
                   "epoch_seconds": history.epoch_seconds}, fh)
    return stem


def load_checkpoint(stem) -> tuple[int, GeneratorModel, OptimizerState, TrainHistory]:
    stem = str(stem)
    model = GeneratorModel.load(stem + ".gen")
    with np.load(stem + ".opt.npz") as z:
        n = len(model.parameters())
        state = OptimizerState(
            learning_rate=float(z["learning_rate"]),
            beta1=float(z["beta1"]), beta2=float(z["beta2"]), eps=float(z["eps"]),
            step=int(z["step"]),
            m=[z[f"m{i}"] for i in range(n)],
            v=[z[f"v{i}"] for i in range(n)],
        )
    with open(stem + ".json") as fh:
        meta = json.load(fh)
    history = TrainHistory(losses=meta["losses"],
                           epoch_seconds=meta["epoch_seconds"])
    return meta["step"], model, state, history


def evaluate_loss(
    bundle: SliceBundle, model: GeneratorModel, cfg: TrainConfig, step: int = 0
) -> float:
    """Loss of a model on one seeded batch, without updating anything."""
    loss, _, _ = step_loss(bundle, model, cfg, step)
    return loss


def generate(
    model: GeneratorModel, count: int, schema: ColumnSchema, seed: int
) -> pd.DataFrame:
    """Sample synthetic table rows; free of privacy cost for any count."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if model.output_dim != schema.encoded_width:
        raise ValueError(
            f"model output width {model.output_dim} != schema width "
            f"{schema.encoded_width}"
        )
    if count == 0:
        return pd.DataFrame({c.name: [] for c in schema.columns})
    z = substream(seed, _STREAM_GENERATE).standard_normal((count, model.latent_dim))
    rows, _ = generator.forward(model, z)
    return decode(rows, schema)
