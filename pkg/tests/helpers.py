"""Shared test utilities: finite-difference gradient oracle and toy data."""
from __future__ import annotations

import numpy as np
import torch


def central_difference_check(make_loss, params: dict[str, torch.Tensor],
                             step: float = 1e-4, max_coords: int = 64,
                             seed: int = 0) -> tuple[float, int, int]:
    """Compare autodiff parameter gradients against central differences.

    Works in the dtype of the supplied params (use float64).  Every
    coordinate of small tensors and a seeded sample of large ones is probed.
    Where the half-step and full-step difference quotients disagree the loss
    crosses a leaky-ReLU kink inside the interval, so the quotient does not
    estimate the derivative autodiff reports; such coordinates are retried
    at step/8 and excluded only if still inconsistent.  Returns (relative
    l2 error over kept coordinates, kept count, excluded count).
    """
    for p in params.values():
        p.requires_grad_(True)
    loss = make_loss()
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    rng = np.random.default_rng(seed)
    auto, fd = [], []
    excluded = 0

    def f() -> float:
        return float(make_loss().detach())

    def quotient(flat, i, orig, h) -> tuple[float, bool]:
        flat[i] = orig + h
        lp = f()
        flat[i] = orig - h
        lm = f()
        flat[i] = orig + 0.5 * h
        lp2 = f()
        flat[i] = orig - 0.5 * h
        lm2 = f()
        flat[i] = orig
        d_full = (lp - lm) / (2.0 * h)
        d_half = (lp2 - lm2) / h
        return d_full, abs(d_full - d_half) <= 1e-3 * max(1.0, abs(d_full))

    with torch.no_grad():
        for (name, p), g in zip(params.items(), grads):
            flat = p.reshape(-1)
            n = flat.numel()
            idx = range(n) if n <= max_coords else rng.choice(n, max_coords, replace=False)
            for i in idx:
                orig = float(flat[i])
                d, ok = quotient(flat, i, orig, step)
                if not ok:
                    d, ok = quotient(flat, i, orig, step / 8.0)
                if not ok:
                    excluded += 1
                    continue
                fd.append(d)
                auto.append(float(g.reshape(-1)[i]) if g is not None else 0.0)
    auto_v = np.asarray(auto)
    fd_v = np.asarray(fd)
    rel = float(np.linalg.norm(auto_v - fd_v) / max(np.linalg.norm(fd_v), 1e-300))
    return rel, len(fd), excluded


def line_integral_oracle(slice2d: np.ndarray, dx: float, n_samples: int = 1000) -> np.ndarray:
    """Brute-force areal densities of the revolved piecewise-constant slice.

    For the detector pixel at (row z_j, column offset y_i) the ray runs
    perpendicular to the slice; the revolved field at depth u has radius
    sqrt(y^2 + u^2) and is looked up in row j by nearest pixel center on the
    right half-profile (so the slice is assumed mirror symmetric).
    """
    h, w = slice2d.shape
    coords = (np.arange(w) - (w - 1) / 2.0) * dx
    half_len = w * dx / 2.0
    u = (np.arange(n_samples) + 0.5) / n_samples * 2 * half_len - half_len
    du = 2 * half_len / n_samples
    radius_offset = 0.5 if w % 2 == 0 else 0.0
    out = np.zeros_like(slice2d, dtype=np.float64)
    for j in range(h):
        row = slice2d[j]
        for i, y in enumerate(coords):
            r = np.sqrt(y * y + u * u)
            k = np.round(r / dx - radius_offset).astype(int)
            col = w // 2 + k
            out[j, i] = row[col[col < w]].sum() * du
    return out
