"""Mass + total-variation post-processing of denoised density series.

Minimizes
    lambda0 * ||rho - anchor||_2 / ||anchor||_2
  + lambda1 * ||M(rho) - M_true||_2
  + lambda2 * sum_t TV-A(rho_t)
with RMSprop subgradient descent (sign convention 0 at kinks), iterates
projected to [0, 1], and the best-objective iterate returned.  With
lambda0 = 0 and the noisy series as the starting point this is the classical
mass/TV denoiser baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phantom import DensityTimeSeries, revolved_mass_weights


@dataclass
class RefineConfig:
    lambda0: float = 5.0
    lambda1: float = 100.0
    lambda2: float = 1e-4
    step_size: float = 1e-5
    max_iters: int = 7000
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-8
    true_masses: np.ndarray | None = None

    def __post_init__(self):
        if min(self.lambda0, self.lambda1, self.lambda2) < 0:
            raise ValueError("weights must be nonnegative")
        if self.step_size <= 0 or self.max_iters <= 0:
            raise ValueError("step_size and max_iters must be positive")


@dataclass
class RefineResult:
    series: DensityTimeSeries
    initial_objective: float
    best_objective: float
    best_iter: int
    components: dict


def tva_norm(X: np.ndarray) -> float:
    """Anisotropic total variation: l1 norms of row and column differences."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a matrix")
    return float(np.abs(np.diff(X, axis=0)).sum() + np.abs(np.diff(X, axis=1)).sum())


def _tva_grad(X: np.ndarray) -> np.ndarray:
    """Subgradient of tva_norm; np.sign gives 0 at zero differences."""
    g = np.zeros_like(X)
    dr = np.sign(np.diff(X, axis=0))
    g[1:, :] += dr
    g[:-1, :] -= dr
    dc = np.sign(np.diff(X, axis=1))
    g[:, 1:] += dc
    g[:, :-1] -= dc
    return g


def _objective_parts(rho: np.ndarray, anchor: np.ndarray, cfg: RefineConfig,
                     mass_w: np.ndarray, anchor_norm: float) -> dict:
    parts = {"data": 0.0, "mass": 0.0, "tv": 0.0}
    if cfg.lambda0 > 0:
        parts["data"] = float(np.linalg.norm(rho - anchor) / anchor_norm)
    if cfg.lambda1 > 0:
        dm = np.einsum("thw,w->t", rho, mass_w) - cfg.true_masses
        parts["mass"] = float(np.linalg.norm(dm))
    if cfg.lambda2 > 0:
        parts["tv"] = float(sum(tva_norm(f) for f in rho))
    return parts


def _total(parts: dict, cfg: RefineConfig) -> float:
    return cfg.lambda0 * parts["data"] + cfg.lambda1 * parts["mass"] + cfg.lambda2 * parts["tv"]


def refine_objective(rho: DensityTimeSeries, anchor: DensityTimeSeries,
                     cfg: RefineConfig) -> tuple[float, dict]:
    """Objective value and unweighted component breakdown."""
    if rho.frames.shape != anchor.frames.shape:
        raise ValueError("shape mismatch")
    anchor_norm = float(np.linalg.norm(anchor.frames))
    if cfg.lambda0 > 0 and anchor_norm == 0:
        raise ValueError("anchor has zero norm but lambda0 > 0")
    if cfg.lambda1 > 0 and cfg.true_masses is None:
        raise ValueError("true_masses required when lambda1 > 0")
    mass_w = revolved_mass_weights(anchor.grid)
    parts = _objective_parts(rho.frames.astype(np.float64),
                             anchor.frames.astype(np.float64), cfg, mass_w, anchor_norm)
    return _total(parts, cfg), parts


def _gradient(rho: np.ndarray, anchor: np.ndarray, cfg: RefineConfig,
              mass_w: np.ndarray, anchor_norm: float) -> np.ndarray:
    g = np.zeros_like(rho)
    if cfg.lambda0 > 0:
        diff = rho - anchor
        nrm = np.linalg.norm(diff)
        if nrm > 0:
            g += cfg.lambda0 * diff / (nrm * anchor_norm)
    if cfg.lambda1 > 0:
        dm = np.einsum("thw,w->t", rho, mass_w) - cfg.true_masses
        nrm = np.linalg.norm(dm)
        if nrm > 0:
            g += cfg.lambda1 * (dm / nrm)[:, None, None] * mass_w[None, None, :]
    if cfg.lambda2 > 0:
        for t in range(rho.shape[0]):
            g[t] += cfg.lambda2 * _tva_grad(rho[t])
    return g


def refine(anchor: DensityTimeSeries, cfg: RefineConfig,
           init: DensityTimeSeries | None = None) -> RefineResult:
    """RMSprop descent on the refinement objective; returns the best iterate."""
    if cfg.lambda1 > 0 and cfg.true_masses is None:
        raise ValueError("true_masses required when lambda1 > 0")
    anchor_frames = anchor.frames.astype(np.float64)
    anchor_norm = float(np.linalg.norm(anchor_frames))
    if cfg.lambda0 > 0 and anchor_norm == 0:
        raise ValueError("anchor has zero norm but lambda0 > 0")
    mass_w = revolved_mass_weights(anchor.grid)

    rho = (init.frames if init is not None else anchor.frames).astype(np.float64).copy()
    parts = _objective_parts(rho, anchor_frames, cfg, mass_w, anchor_norm)
    obj = _total(parts, cfg)
    initial = obj
    best_obj, best_rho, best_iter, best_parts = obj, rho.copy(), 0, dict(parts)

    ms = np.zeros_like(rho)
    for it in range(1, cfg.max_iters + 1):
        g = _gradient(rho, anchor_frames, cfg, mass_w, anchor_norm)
        ms = cfg.rmsprop_decay * ms + (1.0 - cfg.rmsprop_decay) * g * g
        rho = np.clip(rho - cfg.step_size * g / (np.sqrt(ms) + cfg.rmsprop_eps), 0.0, 1.0)
        parts = _objective_parts(rho, anchor_frames, cfg, mass_w, anchor_norm)
        obj = _total(parts, cfg)
        if not np.isfinite(obj):
            raise RuntimeError(f"objective became non-finite at iteration {it}")
        if obj < best_obj:
            best_obj, best_rho, best_iter, best_parts = obj, rho.copy(), it, dict(parts)

    out = anchor.copy_with(best_rho)
    out.meta["refined"] = {"lambda0": cfg.lambda0, "lambda1": cfg.lambda1,
                           "lambda2": cfg.lambda2, "iters": cfg.max_iters}
    return RefineResult(series=out, initial_objective=initial,
                        best_objective=best_obj, best_iter=best_iter,
                        components=best_parts)


def classical_denoise(noisy: DensityTimeSeries, true_masses: np.ndarray,
                      max_iters: int = 10000) -> DensityTimeSeries:
    """Mass/TV-only denoiser: lambda0 = 0, started from the noisy series."""
    cfg = RefineConfig(lambda0=0.0, lambda1=100.0, lambda2=1e-4,
                       step_size=1e-5, max_iters=max_iters,
                       true_masses=np.asarray(true_masses, dtype=np.float64))
    result = refine(noisy, cfg, init=noisy)
    result.series.meta["denoiser"] = "classical"
    return result.series
