"""Differentiable generator (residual 3D U-Net) and critic (3D conv net).

Both networks are written functionally: parameters live in a plain ordered
dict of named tensors (ParamStore) and the forward passes are pure functions
of (config, params, input).  That keeps initialization, serialization, and
finite-difference checking straightforward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn.functional as F

from . import container
from .errors import ShapeError

ParamStore = dict[str, torch.Tensor]

# (kernel, stride) per critic conv block; padding is 1 on every axis.
CRITIC_CONV_TABLE = (
    ((3, 4, 4), (1, 2, 2)),
    ((3, 4, 4), (1, 2, 2)),
    ((4, 4, 4), (2, 2, 2)),
    ((3, 4, 4), (1, 2, 2)),
    ((4, 4, 4), (2, 2, 2)),
    ((3, 4, 4), (1, 2, 2)),
)


@dataclass(frozen=True)
class GeneratorConfig:
    levels: int = 4
    base_channels: int = 8
    input_shape: tuple[int, int, int] = (8, 64, 64)   # (T, H, W)

    def __post_init__(self):
        t, h, w = self.input_shape
        if t < 2:
            raise ShapeError("need at least 2 frames")
        div = 2 ** self.levels
        if h % div or w % div:
            raise ShapeError(f"H and W must be divisible by {div}")

    def channel_plan(self) -> list[int]:
        return [self.base_channels * 2 ** i for i in range(self.levels)]


@dataclass(frozen=True)
class DiscriminatorConfig:
    first_out_channels: int = 4
    conv_blocks: tuple = CRITIC_CONV_TABLE
    leaky_slope_conv: float = 0.2
    leaky_slope_dense: float = 0.01
    dense_layers: int = 4
    dense_shrink: float = 0.75
    input_shape: tuple[int, int, int] = (8, 64, 64)

    def conv_channel_plan(self) -> list[int]:
        return [self.first_out_channels * 2 ** i for i in range(len(self.conv_blocks))]

    def conv_shape_trace(self) -> list[tuple[int, int, int]]:
        """Spatial dims after each block; raises if any block underflows."""
        dims = tuple(self.input_shape)
        trace = [dims]
        for b, (kernel, stride) in enumerate(self.conv_blocks):
            dims = tuple((d + 2 - k) // s + 1 for d, k, s in zip(dims, kernel, stride))
            if any(d <= 0 for d in dims):
                raise ShapeError(f"conv block {b + 1} underflows to {dims} "
                                 f"for input {self.input_shape}")
            trace.append(dims)
        return trace

    def dense_widths(self) -> list[int]:
        t, h, w = self.conv_shape_trace()[-1]
        widths = [self.conv_channel_plan()[-1] * t * h * w]
        for _ in range(self.dense_layers):
            nxt = int(widths[-1] * self.dense_shrink)
            if nxt < 1:
                raise ShapeError("dense stack shrank below one unit")
            widths.append(nxt)
        return widths


def _uniform(gen: torch.Generator, shape: tuple[int, ...], fan_in: int,
             dtype: torch.dtype) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return (torch.rand(shape, generator=gen, dtype=torch.float64) * 2.0 - 1.0).to(dtype) * bound


def init_generator_params(cfg: GeneratorConfig, seed: int,
                          dtype: torch.dtype = torch.float32) -> ParamStore:
    """Deterministic init; the zeroed final conv makes the net start as identity."""
    gen = torch.Generator().manual_seed(seed)
    params: ParamStore = {}

    def conv(name, c_out, c_in, kernel):
        fan = c_in * int(np.prod(kernel))
        params[f"{name}.w"] = _uniform(gen, (c_out, c_in) + kernel, fan, dtype)
        params[f"{name}.b"] = torch.zeros(c_out, dtype=dtype)

    def norm(name, c):
        params[f"{name}.g"] = torch.ones(c, dtype=dtype)
        params[f"{name}.o"] = torch.zeros(c, dtype=dtype)

    chans = cfg.channel_plan()
    c_prev = 1
    for i, c in enumerate(chans):
        conv(f"enc{i}.conv", c, c_prev, (3, 3, 3))
        norm(f"enc{i}.norm", c)
        conv(f"enc{i}.down", c, c, (1, 2, 2))
        c_prev = c
    for i in reversed(range(cfg.levels)):
        c = chans[i]
        conv(f"dec{i}.up", c, c_prev, (1, 2, 2))   # transpose conv uses (c_in, c_out, ...) layout
        params[f"dec{i}.up.w"] = params[f"dec{i}.up.w"].permute(1, 0, 2, 3, 4).contiguous()
        conv(f"dec{i}.conv", c, 2 * c, (3, 3, 3))
        norm(f"dec{i}.norm", c)
        c_prev = c
    conv("final", 1, chans[0], (1, 1, 1))
    params["final.w"] = torch.zeros_like(params["final.w"])
    return params


def init_discriminator_params(cfg: DiscriminatorConfig, seed: int,
                              dtype: torch.dtype = torch.float32) -> ParamStore:
    gen = torch.Generator().manual_seed(seed)
    params: ParamStore = {}
    cfg.conv_shape_trace()   # validate up front
    c_prev = 1
    for i, ((kernel, _), c) in enumerate(zip(cfg.conv_blocks, cfg.conv_channel_plan())):
        fan = c_prev * int(np.prod(kernel))
        params[f"conv{i}.w"] = _uniform(gen, (c, c_prev) + tuple(kernel), fan, dtype)
        params[f"conv{i}.b"] = torch.zeros(c, dtype=dtype)
        params[f"conv{i}.norm.g"] = torch.ones(c, dtype=dtype)
        params[f"conv{i}.norm.o"] = torch.zeros(c, dtype=dtype)
        c_prev = c
    widths = cfg.dense_widths()
    for i in range(cfg.dense_layers):
        params[f"dense{i}.w"] = _uniform(gen, (widths[i + 1], widths[i]), widths[i], dtype)
        params[f"dense{i}.b"] = torch.zeros(widths[i + 1], dtype=dtype)
    params["out.w"] = _uniform(gen, (1, widths[-1]), widths[-1], dtype)
    params["out.b"] = torch.zeros(1, dtype=dtype)
    return params


def _instance_norm(x: torch.Tensor, gain: torch.Tensor, offset: torch.Tensor,
                   eps: float = 1e-5) -> torch.Tensor:
    mean = x.mean(dim=(2, 3, 4), keepdim=True)
    var = x.var(dim=(2, 3, 4), unbiased=False, keepdim=True)
    y = (x - mean) / torch.sqrt(var + eps)
    return y * gain.view(1, -1, 1, 1, 1) + offset.view(1, -1, 1, 1, 1)


def _as_batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 4:          # (1, T, H, W) single sample
        return x.unsqueeze(0), True
    if x.dim() == 5:
        return x, False
    raise ShapeError(f"expected 4D or 5D input, got {x.dim()}D")


def generator_forward(cfg: GeneratorConfig, params: ParamStore,
                      x: torch.Tensor) -> torch.Tensor:
    """Residual denoiser: output = x + unet(x); shape preserved."""
    xb, squeeze = _as_batched(x)
    _, _, t, h, w = xb.shape
    div = 2 ** cfg.levels
    if t < 2 or h % div or w % div:
        raise ShapeError(f"input (T,H,W)=({t},{h},{w}) incompatible with {cfg.levels} levels")
    slope = 0.2
    skips = []
    y = xb
    for i in range(cfg.levels):
        y = F.conv3d(y, params[f"enc{i}.conv.w"], params[f"enc{i}.conv.b"], padding=1)
        y = _instance_norm(y, params[f"enc{i}.norm.g"], params[f"enc{i}.norm.o"])
        y = F.leaky_relu(y, slope)
        skips.append(y)
        y = F.conv3d(y, params[f"enc{i}.down.w"], params[f"enc{i}.down.b"], stride=(1, 2, 2))
    for i in reversed(range(cfg.levels)):
        y = F.conv_transpose3d(y, params[f"dec{i}.up.w"], params[f"dec{i}.up.b"],
                               stride=(1, 2, 2))
        y = torch.cat([y, skips[i]], dim=1)
        y = F.conv3d(y, params[f"dec{i}.conv.w"], params[f"dec{i}.conv.b"], padding=1)
        y = _instance_norm(y, params[f"dec{i}.norm.g"], params[f"dec{i}.norm.o"])
        y = F.leaky_relu(y, slope)
    y = F.conv3d(y, params["final.w"], params["final.b"])
    out = xb + y
    return out.squeeze(0) if squeeze else out


def discriminator_forward(cfg: DiscriminatorConfig, params: ParamStore,
                          x: torch.Tensor) -> torch.Tensor:
    """Critic score in (0, 1); returns a scalar per sample."""
    xb, squeeze = _as_batched(x)
    trace = DiscriminatorConfig(
        first_out_channels=cfg.first_out_channels, conv_blocks=cfg.conv_blocks,
        dense_layers=cfg.dense_layers, dense_shrink=cfg.dense_shrink,
        input_shape=tuple(xb.shape[2:]))
    trace.conv_shape_trace()   # raises ShapeError on underflow
    y = xb
    for i, (kernel, stride) in enumerate(cfg.conv_blocks):
        y = F.conv3d(y, params[f"conv{i}.w"], params[f"conv{i}.b"],
                     stride=stride, padding=1)
        y = _instance_norm(y, params[f"conv{i}.norm.g"], params[f"conv{i}.norm.o"])
        y = F.leaky_relu(y, cfg.leaky_slope_conv)
    y = y.reshape(y.shape[0], -1)
    for i in range(cfg.dense_layers):
        y = F.linear(y, params[f"dense{i}.w"], params[f"dense{i}.b"])
        y = F.leaky_relu(y, cfg.leaky_slope_dense)
    y = F.linear(y, params["out.w"], params["out.b"])
    out = torch.sigmoid(y).squeeze(-1)
    return out.squeeze(0) if squeeze else out


def params_to_numpy(params: ParamStore) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in params.items()}


def params_from_numpy(arrays: dict[str, np.ndarray],
                      dtype: torch.dtype = torch.float32) -> ParamStore:
    return {k: torch.from_numpy(np.ascontiguousarray(v)).to(dtype) for k, v in arrays.items()}


def save_params(path, params: ParamStore, manifest: dict | None = None) -> None:
    container.save_checkpoint(path, manifest or {}, params_to_numpy(params))


def load_params(path, dtype: torch.dtype = torch.float32) -> tuple[dict, ParamStore]:
    manifest, arrays = container.load_checkpoint(path)
    return manifest, params_from_numpy(arrays, dtype)


def generator_config_to_dict(cfg: GeneratorConfig) -> dict:
    return asdict(cfg)


def generator_config_from_dict(doc: dict) -> GeneratorConfig:
    return GeneratorConfig(levels=doc["levels"], base_channels=doc["base_channels"],
                           input_shape=tuple(doc["input_shape"]))
