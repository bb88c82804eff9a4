"""Speckle log-likelihood training loss for log-domain denoisers.

For a predicted log-reflectivity and an observed log-intensity the
per-pixel negative log-likelihood of multilook speckle reduces (up to a
constant) to

    loss(pred, target) = pred - target + exp(target - pred)

averaged over pixels. It is minimized at pred = target with value 1 and,
because unit-mean speckle satisfies E[exp(s)] = 1, its expectation over
noisy targets is minimized at the true log-reflectivity.
"""
from __future__ import annotations

import warnings

import numpy as np
import torch

from ..raster import Raster

# exp argument clamp; cold-start predictions can otherwise overflow
EXP_CLAMP = 50.0


def _diff_clamped(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    d = target - pred
    if np.any(d > EXP_CLAMP):
        warnings.warn(f"loss exponent clamped at {EXP_CLAMP}; predictions are far "
                      "below the observed log-intensity", RuntimeWarning)
        d = np.minimum(d, EXP_CLAMP)
    return d


def ft_loss(pred: Raster, target: Raster) -> float:
    """Mean over pixels of pred - target + exp(target - pred)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    d = _diff_clamped(pred.data, target.data)
    return float(np.mean(-d + np.exp(d)))


def ft_loss_grad(pred: Raster, target: Raster) -> Raster:
    """Per-pixel derivative of ft_loss w.r.t. pred: (1 - exp(target - pred)) / N."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    d = _diff_clamped(pred.data, target.data)
    return Raster((1.0 - np.exp(d)) / pred.data.size, "response")


def ft_loss_torch(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Torch version of ft_loss used inside training loops (autograd-friendly)."""
    d = torch.clamp(target - pred, max=EXP_CLAMP)
    return torch.mean(-d + torch.exp(d))
