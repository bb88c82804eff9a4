"""Three-step self-supervised training protocol for the despeckler.

Step A trains on clean reflectivity images corrupted by synthetic
uncorrelated speckle: per patch two independent speckle draws form the
(input, target) pair. Step B fine-tunes on co-registered acquisition
stacks whose speckle is spatially correlated; scene changes between the
input date and the target date are compensated by replacing the target
y2 with y2 - xhat2 + xhat1, where the reflectivity estimates come from
the frozen step-A network evaluated at half resolution (downsample by 2,
denoise, upsample back) to break the speckle correlation it was not
trained for. Step C repeats the fine-tuning with estimates from the
frozen step-B network at full resolution.
"""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..raster import Raster, downsample2, log_transform, upsample2
from .loss import ft_loss_torch
from .model import DenoiserModel, forward


@dataclass(frozen=True)
class TrainConfig:
    step: str
    epochs: int
    batch_size: int = 16
    patch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 1.0
    seed: int = 0
    looks: float = 4.0
    patches_per_epoch: int = 500

    def __post_init__(self):
        if self.step not in ("A", "B", "C"):
            raise ValueError(f"step must be A, B or C, got {self.step!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.patch_size < 1:
            raise ValueError("epochs must be >= 0, batch_size and patch_size >= 1")
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if not self.looks > 0:
            raise ValueError(f"looks must be > 0, got {self.looks}")


@dataclass
class AcquisitionStack:
    """Co-registered intensity rasters of one scene at n acquisition dates."""

    images: list
    stack_id: str = ""

    def __post_init__(self):
        if len(self.images) < 1:
            raise ValueError("acquisition stack must hold at least one raster")
        shape = self.images[0].shape
        for img in self.images:
            if img.kind != "intensity":
                raise ValueError("acquisition stacks hold intensity rasters")
            if img.shape != shape:
                raise ValueError("acquisition stack rasters must share dims")

    def __len__(self) -> int:
        return len(self.images)


def change_compensated_target(y1: Raster, y2: Raster, xhat1: Raster, xhat2: Raster) -> Raster:
    """Training target y2 - xhat2 + xhat1 for the input date y1.

    Cancels reflectivity changes between the two dates so they do not
    bias the self-supervised loss; reduces to y2 when xhat1 = xhat2.
    """
    for other in (y2, xhat1, xhat2):
        if other.shape != y1.shape:
            raise ValueError(f"shape mismatch {y1.shape} vs {other.shape}")
    return Raster(y2.data - xhat2.data + xhat1.data, "log-intensity")


def validation_mse(model: DenoiserModel, val_pairs) -> float:
    """Mean squared log-domain error of forward(y) against clean x over pairs."""
    errs = [np.mean((forward(model, y).data - x.data) ** 2) for y, x in val_pairs]
    return float(np.mean(errs))


def write_training_log(rows, path) -> None:
    """CSV training curve: epoch, step, mean loss, validation MSE."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["epoch", "step", "mean_loss", "val_mse"])
        for row in rows:
            wr.writerow([row[0], row[1], f"{row[2]:.6f}", f"{row[3]:.6f}"])


def _check_finite_params(net) -> None:
    for name, p in net.named_parameters():
        if not torch.all(torch.isfinite(p)):
            raise RuntimeError(f"non-finite parameter {name} after update")


def _fit(model: DenoiserModel, sample_batch, cfg: TrainConfig, val_pairs, step_name: str):
    """Shared optimizer loop. sample_batch(rng) -> (input, target) float32 arrays."""
    if cfg.patch_size % (2 ** model.levels) != 0:
        raise ValueError(f"patch_size {cfg.patch_size} not divisible by "
                         f"2**levels = {2 ** model.levels}")
    net = model.net
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=(0.9, 0.999))
    rng = np.random.default_rng(cfg.seed)
    batches = max(1, cfg.patches_per_epoch // cfg.batch_size)
    rows = []
    for epoch in range(cfg.epochs):
        for g in opt.param_groups:
            g["lr"] = cfg.lr * (cfg.lr_decay ** epoch)
        net.train()
        losses = []
        for b in range(batches):
            inp, tgt = sample_batch(rng)
            z = torch.from_numpy((inp - model.mu_norm) / model.sigma_norm).float()
            tgt_t = torch.from_numpy(tgt).float()
            opt.zero_grad()
            pred = net(z[:, None]) * model.sigma_norm + model.mu_norm
            loss = ft_loss_torch(pred[:, 0], tgt_t)
            if not torch.isfinite(loss):
                raise RuntimeError(f"NaN/Inf loss in step {step_name}, "
                                   f"epoch {epoch}, batch {b}")
            loss.backward()
            opt.step()
            _check_finite_params(net)
            losses.append(float(loss.detach()))
        val = validation_mse(model, val_pairs) if val_pairs else float("nan")
        net.train()
        rows.append((epoch, step_name, float(np.mean(losses)), val))
    net.eval()
    model.training_log = rows
    return model


def _sample_patch_coords(rng, shapes, count, ps):
    idx = rng.integers(0, len(shapes), size=count)
    rows = np.empty(count, dtype=np.intp)
    cols = np.empty(count, dtype=np.intp)
    for k, i in enumerate(idx):
        h, w = shapes[i]
        if h < ps or w < ps:
            raise ValueError(f"image {i} smaller than patch size {ps}")
        rows[k] = rng.integers(0, h - ps + 1)
        cols[k] = rng.integers(0, w - ps + 1)
    return idx, rows, cols


def train_step_a(model: DenoiserModel, clean_images, cfg: TrainConfig,
                 val_pairs=None, log_path=None, supervised_targets=False) -> DenoiserModel:
    """Train on clean reflectivities with two synthetic speckle draws per patch.

    Input is log(v * u'), target log(v * u) with independent unit-mean gamma
    speckle u', u of cfg.looks looks. With supervised_targets=True the target
    is the clean log-reflectivity itself (reference mode for checking that
    noisy-target training matches supervised training).

    Returns a new model; the argument is left untouched. Normalization
    constants are estimated from a pilot sample of noisy patches.
    """
    if cfg.step != "A":
        raise ValueError(f"train_step_a requires cfg.step == 'A', got {cfg.step!r}")
    for img in clean_images:
        if img.kind != "intensity":
            raise ValueError("clean images must be intensity (reflectivity) rasters")
    model = copy.deepcopy(model)
    logs = [np.log(img.data) for img in clean_images]
    shapes = [a.shape for a in logs]
    ps = cfg.patch_size

    pilot_rng = np.random.default_rng([cfg.seed, 0xA])
    idx, rr, cc = _sample_patch_coords(pilot_rng, shapes, min(64, cfg.patches_per_epoch), ps)
    pilot = []
    for i, r, c in zip(idx, rr, cc):
        u = pilot_rng.gamma(cfg.looks, 1.0 / cfg.looks, size=(ps, ps))
        pilot.append(logs[i][r:r + ps, c:c + ps] + np.log(u))
    pilot = np.stack(pilot)
    model.mu_norm = float(pilot.mean())
    model.sigma_norm = float(pilot.std()) or 1.0

    def sample_batch(rng):
        idx, rr, cc = _sample_patch_coords(rng, shapes, cfg.batch_size, ps)
        x = np.stack([logs[i][r:r + ps, c:c + ps] for i, r, c in zip(idx, rr, cc)])
        u_in = rng.gamma(cfg.looks, 1.0 / cfg.looks, size=x.shape)
        u_tg = rng.gamma(cfg.looks, 1.0 / cfg.looks, size=x.shape)
        inp = (x + np.log(u_in)).astype(np.float32)
        tgt = x.astype(np.float32) if supervised_targets else (x + np.log(u_tg)).astype(np.float32)
        return inp, tgt

    model = _fit(model, sample_batch, cfg, val_pairs, "A")
    if log_path is not None:
        write_training_log(model.training_log, log_path)
    return model


def _finetune_on_stacks(model_in: DenoiserModel, stacks, cfg: TrainConfig,
                        estimate_fn, step_name: str, val_pairs, log_path) -> DenoiserModel:
    for stack in stacks:
        if len(stack) < 2:
            raise ValueError(f"stack {stack.stack_id!r} needs >= 2 dates, has {len(stack)}")
    frozen = model_in  # estimates always come from the incoming network
    model = copy.deepcopy(model_in)

    stack_logs = []
    pair_targets = []  # (stack index, input date, target array)
    for s, stack in enumerate(stacks):
        logs = [log_transform(img) for img in stack.images]
        estimates = [estimate_fn(frozen, y) for y in logs]
        stack_logs.append([y.data for y in logs])
        for i in range(len(logs)):
            for j in range(len(logs)):
                if i != j:
                    tgt = change_compensated_target(logs[i], logs[j],
                                                    estimates[i], estimates[j])
                    pair_targets.append((s, i, tgt.data))

    ps = cfg.patch_size

    def sample_batch(rng):
        picks = rng.integers(0, len(pair_targets), size=cfg.batch_size)
        inp = np.empty((cfg.batch_size, ps, ps), dtype=np.float32)
        tgt = np.empty((cfg.batch_size, ps, ps), dtype=np.float32)
        for k, p in enumerate(picks):
            s, i, tgt_arr = pair_targets[p]
            h, w = tgt_arr.shape
            if h < ps or w < ps:
                raise ValueError(f"stack {s} smaller than patch size {ps}")
            r = rng.integers(0, h - ps + 1)
            c = rng.integers(0, w - ps + 1)
            inp[k] = stack_logs[s][i][r:r + ps, c:c + ps]
            tgt[k] = tgt_arr[r:r + ps, c:c + ps]
        return inp, tgt

    model = _fit(model, sample_batch, cfg, val_pairs, step_name)
    if log_path is not None:
        write_training_log(model.training_log, log_path)
    return model


def train_step_b(model_a: DenoiserModel, stacks, cfg: TrainConfig,
                 val_pairs=None, log_path=None) -> DenoiserModel:
    """Fine-tune on correlated-speckle stacks with half-resolution estimates.

    Reflectivity estimates for change compensation are produced by the
    frozen incoming network on factor-2 downsampled images and upsampled
    back, which suppresses the speckle correlation it never saw in step A.
    """
    if cfg.step != "B":
        raise ValueError(f"train_step_b requires cfg.step == 'B', got {cfg.step!r}")

    def estimate(frozen, y):
        half = forward(frozen, downsample2(y))
        return upsample2(half, y.width, y.height)

    return _finetune_on_stacks(model_a, stacks, cfg, estimate, "B", val_pairs, log_path)


def train_step_c(model_b: DenoiserModel, stacks, cfg: TrainConfig,
                 val_pairs=None, log_path=None) -> DenoiserModel:
    """Final refinement: like step B but with full-resolution estimates,
    which the incoming network can now produce reliably."""
    if cfg.step != "C":
        raise ValueError(f"train_step_c requires cfg.step == 'C', got {cfg.step!r}")

    def estimate(frozen, y):
        return forward(frozen, y)

    return _finetune_on_stacks(model_b, stacks, cfg, estimate, "C", val_pairs, log_path)
