"""Encoder-decoder denoiser mapping log-intensity to log-reflectivity.

The network is a compact U-Net: per level two 3x3 convolutions with
leaky-ReLU activations, average-pool downsampling, bilinear upsampling,
skip connections by channel concatenation, and a linear 1x1 output head.
An optional input-to-output skip makes the network predict a correction
to the identity, which speeds up despeckler training considerably.

Checkpoints use a small self-describing binary format (magic "RLDN"):
architecture descriptor, normalization constants, then named parameter
tensors as little-endian float32 with explicit shapes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..raster import Raster, exp_transform, log_transform

CHECKPOINT_MAGIC = b"RLDN"
CHECKPOINT_VERSION = 1


class _ConvBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel_size: int):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv2d(in_ch, out_ch, kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(out_ch, out_ch, kernel_size, padding=pad)
        self.act = nn.LeakyReLU(0.1)

    def forward(self, x):
        x = self.act(self.conv1(x))
        return self.act(self.conv2(x))


class UNet(nn.Module):
    """U-Net over single-channel images; output dims equal input dims
    provided both dims are divisible by 2**len(channels)."""

    def __init__(self, channels: tuple[int, ...] = (32, 64), kernel_size: int = 3,
                 residual: bool = True):
        super().__init__()
        self.channels = tuple(int(c) for c in channels)
        self.kernel_size = int(kernel_size)
        self.residual = bool(residual)
        encs = []
        prev = 1
        for c in self.channels:
            encs.append(_ConvBlock(prev, c, kernel_size))
            prev = c
        self.encoders = nn.ModuleList(encs)
        self.bottleneck = _ConvBlock(prev, prev, kernel_size)
        decs = []
        for c in reversed(self.channels):
            decs.append(_ConvBlock(prev + c, c, kernel_size))
            prev = c
        self.decoders = nn.ModuleList(decs)
        self.head = nn.Conv2d(prev, 1, kernel_size=1)
        self.pool = nn.AvgPool2d(2)

    def forward(self, x):
        skips = []
        h = x
        for enc in self.encoders:
            h = enc(h)
            skips.append(h)
            h = self.pool(h)
        h = self.bottleneck(h)
        for dec, skip in zip(self.decoders, reversed(skips)):
            h = nn.functional.interpolate(h, scale_factor=2, mode="bilinear",
                                          align_corners=False)
            h = dec(torch.cat([h, skip], dim=1))
        out = self.head(h)
        return x + out if self.residual else out


@dataclass
class DenoiserModel:
    """Trained denoiser plus its input-standardization constants.

    mu_norm/sigma_norm standardize log-intensities before the network and
    are undone on the output, so callers always work in raw log units.
    """

    net: UNet
    mu_norm: float = 0.0
    sigma_norm: float = 1.0
    training_log: list = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.net.channels)

    def parameter_vector(self) -> np.ndarray:
        """All parameters flattened, in state_dict order (for diff/no-op checks)."""
        with torch.no_grad():
            parts = [t.detach().cpu().double().numpy().ravel()
                     for t in self.net.state_dict().values()]
        return np.concatenate(parts)


def create_model(channels: tuple[int, ...] = (32, 64), kernel_size: int = 3,
                 residual: bool = True, seed: int = 0) -> DenoiserModel:
    """Fresh model with seeded weight initialization."""
    torch.manual_seed(seed)
    net = UNet(channels=channels, kernel_size=kernel_size, residual=residual)
    net.eval()
    return DenoiserModel(net=net)


def _pad_multiple(a: np.ndarray, mult: int) -> tuple[np.ndarray, int, int]:
    h, w = a.shape
    ph = (-h) % mult
    pw = (-w) % mult
    if ph or pw:
        a = np.pad(a, ((0, ph), (0, pw)), mode="reflect")
    return a, h, w


def forward(model: DenoiserModel, y: Raster) -> Raster:
    """Shape-preserving denoiser prediction on a log-intensity raster.

    Dims not divisible by 2**levels are reflect-padded and cropped back.
    """
    mult = 2 ** model.levels
    arr, h, w = _pad_multiple(y.data, mult)
    z = (arr - model.mu_norm) / model.sigma_norm
    dtype = next(model.net.parameters()).dtype
    with torch.no_grad():
        model.net.eval()
        t = torch.from_numpy(z[None, None]).to(dtype)
        out = model.net(t)[0, 0].numpy().astype(np.float64)
    out = out * model.sigma_norm + model.mu_norm
    return Raster(out[:h, :w], "log-intensity")


def despeckle(model: DenoiserModel, w: Raster, tile: int = 256, overlap: int = 32) -> Raster:
    """Full despeckling chain: log, network (tiled with blending), exp.

    Rasters larger than `tile` are processed in overlapping tiles whose
    predictions are average-blended to avoid seams.
    """
    y = log_transform(w)
    h, wd = y.shape
    if h <= tile and wd <= tile:
        return exp_transform(forward(model, y))
    stride = tile - overlap
    acc = np.zeros((h, wd))
    weight = np.zeros((h, wd))
    rows = list(range(0, max(h - tile, 0) + 1, stride))
    if rows[-1] + tile < h:
        rows.append(h - tile)
    cols = list(range(0, max(wd - tile, 0) + 1, stride))
    if cols[-1] + tile < wd:
        cols.append(wd - tile)
    for r in rows:
        for c in cols:
            r1, c1 = min(r + tile, h), min(c + tile, wd)
            sub = Raster(y.data[r:r1, c:c1], "log-intensity")
            acc[r:r1, c:c1] += forward(model, sub).data
            weight[r:r1, c:c1] += 1.0
    return exp_transform(Raster(acc / weight, "log-intensity"))


def save_checkpoint(model: DenoiserModel, path) -> None:
    """Write the versioned binary checkpoint (magic RLDN)."""
    net = model.net
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(net.channels))
    blob += struct.pack(f"<{len(net.channels)}I", *net.channels)
    blob += struct.pack("<I", net.kernel_size)
    blob += struct.pack("<B", 1 if net.residual else 0)
    blob += struct.pack("<dd", model.mu_norm, model.sigma_norm)
    state = net.state_dict()
    blob += struct.pack("<I", len(state))
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        name_b = name.encode("utf-8")
        blob += struct.pack("<H", len(name_b)) + name_b
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes(order="C")
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(bytes(blob))
    tmp.replace(path)


class CheckpointError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CheckpointError("truncated checkpoint file")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> DenoiserModel:
    """Read a checkpoint written by save_checkpoint and rebuild the model."""
    rd = _Reader(Path(path).read_bytes())
    if rd.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic in {path}: not a denoiser checkpoint")
    (version,) = rd.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n_levels,) = rd.unpack("<I")
    channels = rd.unpack(f"<{n_levels}I")
    (kernel_size,) = rd.unpack("<I")
    (residual,) = rd.unpack("<B")
    mu, sigma = rd.unpack("<dd")
    net = UNet(channels=channels, kernel_size=kernel_size, residual=bool(residual))
    (n_tensors,) = rd.unpack("<I")
    state = {}
    for _ in range(n_tensors):
        (name_len,) = rd.unpack("<H")
        name = rd.take(name_len).decode("utf-8")
        (ndim,) = rd.unpack("<I")
        shape = rd.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(rd.take(4 * count), dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
    net.load_state_dict(state)
    net.eval()
    return DenoiserModel(net=net, mu_norm=mu, sigma_norm=sigma)
