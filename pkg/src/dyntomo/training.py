"""Loss functions and the alternating adversarial/supervised training loop.

The generator loss blends a per-sample normalized l2 supervised term, the
negated critic objective, and a mass-conservation regularizer; the critic
loss is the usual score gap plus the gradient penalty.  Training alternates
one critic step and one generator step per mini-batch and keeps the
checkpoint with the lowest validation error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from . import container
from .errors import ShapeError, TrainingDiverged
from .networks import (DiscriminatorConfig, GeneratorConfig, ParamStore,
                       discriminator_forward, generator_forward,
                       init_discriminator_params, init_generator_params,
                       params_from_numpy, params_to_numpy)
from .phantom import DensityTimeSeries, GridSpec, revolved_mass_weights
from .wasserstein import gradient_penalty


@dataclass
class TrainConfig:
    lambda_init: float = 0.99
    lambda_decay: float = 0.97     # multiplicative per epoch
    lambda_mass: float = 10.0
    eta: float = 10.0
    lr_g: float = 2e-6
    lr_d: float = 1e-6
    adam_momentum: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 2
    epochs: int = 10
    gd_ratio: int = 1              # critic updates per generator update
    supervised_only: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.lr_g, self.lr_d, self.eta + 1, self.batch_size, self.epochs) <= 0:
            raise ValueError("rates, batch size and epochs must be positive")
        if not (0 < self.lambda_init <= 1):
            raise ValueError("lambda_init must be in (0, 1]")


@dataclass
class StepRecord:
    step: int
    epoch: int
    loss_d: float
    loss_g_total: float
    loss_g_sup: float
    loss_g_adv: float
    loss_g_mass: float


@dataclass
class TrainHistory:
    steps: list[StepRecord] = field(default_factory=list)
    val_nl2: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_rows(self) -> list[dict]:
        rows = []
        for rec in self.steps:
            row = asdict(rec)
            row["val_nl2"] = self.val_nl2[rec.epoch] if rec.epoch < len(self.val_nl2) else ""
            rows.append(row)
        return rows


@dataclass
class Checkpoint:
    kind: str                       # "supervised" or "wgan-sup"
    g_cfg: GeneratorConfig
    params: dict[str, np.ndarray]   # float32 tensors
    epoch: int
    val_nl2: float
    seed: int

    def generator_params(self, dtype: torch.dtype = torch.float32) -> ParamStore:
        return params_from_numpy(self.params, dtype)

    def save(self, path) -> None:
        manifest = {
            "kind": self.kind,
            "config": {"levels": self.g_cfg.levels,
                       "base_channels": self.g_cfg.base_channels,
                       "input_shape": list(self.g_cfg.input_shape)},
            "epoch": self.epoch,
            "val_nl2": self.val_nl2,
            "seed": self.seed,
        }
        container.save_checkpoint(path, manifest, self.params)

    @staticmethod
    def load(path) -> "Checkpoint":
        manifest, tensors = container.load_checkpoint(path)
        cfg = GeneratorConfig(levels=manifest["config"]["levels"],
                              base_channels=manifest["config"]["base_channels"],
                              input_shape=tuple(manifest["config"]["input_shape"]))
        return Checkpoint(kind=manifest["kind"], g_cfg=cfg, params=tensors,
                          epoch=manifest["epoch"], val_nl2=manifest["val_nl2"],
                          seed=manifest["seed"])


def mass_of(series: DensityTimeSeries) -> np.ndarray:
    """Revolved mass of each frame: sum of rho * 2*pi*|x| * dx^2."""
    w = revolved_mass_weights(series.grid)
    return np.einsum("thw,w->t", series.frames.astype(np.float64), w)


def torch_mass_weights(grid: GridSpec, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.from_numpy(revolved_mass_weights(grid)).to(dtype)


def _torch_masses(x: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Frame masses for a batch (N, 1, T, H, W) -> (N, T)."""
    return torch.einsum("ncthw,w->nt", x, weights)


def lambda_schedule(cfg: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    if cfg.supervised_only:
        return 1.0
    return cfg.lambda_init * cfg.lambda_decay ** epoch


def d_loss(d_cfg: DiscriminatorConfig, d_params: ParamStore,
           fake_batch: torch.Tensor, real_batch: torch.Tensor,
           eta: float, seed: int) -> torch.Tensor:
    """Critic objective: E[D(fake)] - E[D(real)] + gradient penalty."""
    if fake_batch.shape != real_batch.shape:
        raise ShapeError(f"batch shapes differ: {tuple(fake_batch.shape)} "
                         f"vs {tuple(real_batch.shape)}")

    def critic(x):
        return discriminator_forward(d_cfg, d_params, x)

    gap = critic(fake_batch).mean() - critic(real_batch).mean()
    return gap + gradient_penalty(critic, real_batch, fake_batch, eta, seed)


def g_loss(g_cfg: GeneratorConfig, g_params: ParamStore,
           d_cfg: DiscriminatorConfig | None, d_params: ParamStore | None,
           noisy_batch: torch.Tensor, clean_batch: torch.Tensor,
           lam: float, lam_mass: float,
           mass_weights: torch.Tensor) -> tuple[torch.Tensor, dict[str, float]]:
    """Generator objective with component breakdown.

    total = lam * supervised + (1 - lam) * adversarial + lam_mass * mass
    where supervised is the batch mean of per-sample normalized l2 errors,
    adversarial is E[D(clean)] - E[D(G(noisy))] (the negated critic gap,
    without the gradient penalty, which regularizes only the critic), and
    mass is the batch mean of ||M(G(noisy)) - M(clean)||_2.
    """
    if noisy_batch.shape != clean_batch.shape:
        raise ShapeError("noisy/clean batch shapes differ")
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must lie in [0, 1]")
    n = clean_batch.shape[0]
    clean_norms = clean_batch.reshape(n, -1).norm(dim=1)
    if torch.any(clean_norms == 0):
        raise ValueError("clean batch contains a zero-norm sample")

    denoised = generator_forward(g_cfg, g_params, noisy_batch)
    sup = ((denoised - clean_batch).reshape(n, -1).norm(dim=1) / clean_norms).mean()
    mass_gap = (_torch_masses(denoised, mass_weights)
                - _torch_masses(clean_batch, mass_weights)).norm(dim=1).mean()

    if lam < 1.0:
        if d_cfg is None or d_params is None:
            raise ValueError("critic required when lambda < 1")
        adv = (discriminator_forward(d_cfg, d_params, clean_batch).mean()
               - discriminator_forward(d_cfg, d_params, denoised).mean())
    else:
        adv = torch.zeros((), dtype=sup.dtype)

    total = lam * sup + (1.0 - lam) * adv + lam_mass * mass_gap
    parts = {"supervised": float(sup.detach()), "adversarial": float(adv.detach()),
             "mass": float(mass_gap.detach())}
    return total, parts


def _series_to_tensor(series: DensityTimeSeries, dtype: torch.dtype) -> torch.Tensor:
    """Series frames as a (1, 1, T, H, W) batch of one sample."""
    return torch.from_numpy(np.ascontiguousarray(series.frames)).to(dtype)[None, None]


def validation_nl2(g_cfg: GeneratorConfig, g_params: ParamStore,
                   pairs: list[tuple[DensityTimeSeries, DensityTimeSeries]],
                   dtype: torch.dtype = torch.float32) -> float:
    """Mean normalized l2 error of the denoiser over (noisy, clean) pairs."""
    errs = []
    with torch.no_grad():
        for noisy, clean in pairs:
            den = generator_forward(g_cfg, g_params, _series_to_tensor(noisy, dtype))
            tgt = _series_to_tensor(clean, dtype)
            errs.append(float((den - tgt).norm() / tgt.norm()))
    return float(np.mean(errs))


def train(train_pairs: list[tuple[DensityTimeSeries, DensityTimeSeries]],
          val_pairs: list[tuple[DensityTimeSeries, DensityTimeSeries]],
          cfg: TrainConfig,
          g_cfg: GeneratorConfig | None = None,
          d_cfg: DiscriminatorConfig | None = None) -> tuple[Checkpoint, TrainHistory]:
    """Run the alternating loop and return the best-validation checkpoint.

    Fully deterministic for a fixed config seed: batch order, gradient-penalty
    interpolates, and parameter init all derive from it.
    """
    if not train_pairs or not val_pairs:
        raise ValueError("train and validation sets must be nonempty")
    shape = train_pairs[0][0].frames.shape
    for noisy, clean in train_pairs + val_pairs:
        if noisy.frames.shape != shape or clean.frames.shape != shape:
            raise ShapeError("all series must share one shape")

    grid = train_pairs[0][0].grid
    g_cfg = g_cfg or GeneratorConfig(input_shape=shape)
    adversarial = not cfg.supervised_only
    if adversarial:
        d_cfg = d_cfg or DiscriminatorConfig(input_shape=shape)

    torch.manual_seed(cfg.seed)
    g_params = init_generator_params(g_cfg, cfg.seed)
    for p in g_params.values():
        p.requires_grad_(True)
    opt_g = torch.optim.Adam(g_params.values(), lr=cfg.lr_g,
                             betas=(cfg.adam_momentum, cfg.adam_beta2), eps=cfg.adam_eps)
    if adversarial:
        d_params = init_discriminator_params(d_cfg, cfg.seed + 1)
        for p in d_params.values():
            p.requires_grad_(True)
        opt_d = torch.optim.Adam(d_params.values(), lr=cfg.lr_d,
                                 betas=(cfg.adam_momentum, cfg.adam_beta2), eps=cfg.adam_eps)

    mass_w = torch_mass_weights(grid)
    dtype = torch.float32
    noisy_all = torch.cat([_series_to_tensor(n, dtype) for n, _ in train_pairs])
    clean_all = torch.cat([_series_to_tensor(c, dtype) for _, c in train_pairs])

    order_rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    best: Checkpoint | None = None
    step = 0
    for epoch in range(cfg.epochs):
        lam = lambda_schedule(cfg, epoch)
        perm = order_rng.permutation(len(train_pairs))
        for start in range(0, len(train_pairs), cfg.batch_size):
            idx = torch.from_numpy(perm[start:start + cfg.batch_size].copy())
            noisy_b = noisy_all[idx]
            clean_b = clean_all[idx]

            loss_d_val = 0.0
            if adversarial:
                for _ in range(cfg.gd_ratio):
                    with torch.no_grad():
                        fake = generator_forward(g_cfg, g_params, noisy_b)
                    opt_d.zero_grad(set_to_none=True)
                    ld = d_loss(d_cfg, d_params, fake, clean_b, cfg.eta,
                                seed=cfg.seed + 7919 * step)
                    ld.backward()
                    opt_d.step()
                    loss_d_val = float(ld.detach())

            opt_g.zero_grad(set_to_none=True)
            lg, parts = g_loss(g_cfg, g_params,
                               d_cfg if adversarial else None,
                               d_params if adversarial else None,
                               noisy_b, clean_b, lam, cfg.lambda_mass, mass_w)
            lg.backward()
            opt_g.step()

            lg_val = float(lg.detach())
            if not (math.isfinite(lg_val) and math.isfinite(loss_d_val)):
                raise TrainingDiverged(
                    f"non-finite loss at step {step} (epoch {epoch}): "
                    f"loss_g={lg_val}, loss_d={loss_d_val}")
            history.steps.append(StepRecord(step=step, epoch=epoch,
                                            loss_d=loss_d_val, loss_g_total=lg_val,
                                            loss_g_sup=parts["supervised"],
                                            loss_g_adv=parts["adversarial"],
                                            loss_g_mass=parts["mass"]))
            step += 1

        score = validation_nl2(g_cfg, g_params, val_pairs)
        history.val_nl2.append(score)
        if best is None or score < best.val_nl2:
            best = Checkpoint(kind="supervised" if cfg.supervised_only else "wgan-sup",
                              g_cfg=g_cfg, params=params_to_numpy(g_params),
                              epoch=epoch, val_nl2=score, seed=cfg.seed)
            history.best_epoch = epoch

    return best, history


def apply_denoiser(ckpt: Checkpoint, noisy: DensityTimeSeries) -> DensityTimeSeries:
    """Run a trained generator over one noisy series."""
    params = ckpt.generator_params()
    with torch.no_grad():
        out = generator_forward(ckpt.g_cfg, params,
                                _series_to_tensor(noisy, torch.float32))
    frames = out[0, 0].numpy().astype(np.float64)
    result = noisy.copy_with(frames)
    result.meta["denoiser"] = ckpt.kind
    return result
