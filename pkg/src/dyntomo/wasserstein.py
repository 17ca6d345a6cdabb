"""Wasserstein-1 machinery: exact 1-D oracle, dual estimate, gradient penalty.

The exact 1-D distance doubles as the testing oracle for the dual estimator;
the gradient penalty is the critic regularizer used during adversarial
training.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
import torch


def _check_samples(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("expected a nonempty 1-D sample array")
    if not np.all(np.isfinite(a)):
        raise ValueError("samples must be finite")
    return a


def w1_exact_1d(a, b) -> float:
    """Exact Wasserstein-1 distance between equal-size empirical distributions.

    Equals the mean absolute difference of the sorted samples.
    """
    a = _check_samples(a)
    b = _check_samples(b)
    if a.size != b.size:
        raise ValueError(f"sample counts differ: {a.size} vs {b.size}")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def dual_estimate(critic: Callable[[np.ndarray], np.ndarray], a, b) -> float:
    """Kantorovich-Rubinstein dual value  mean critic(a) - mean critic(b).

    For any 1-Lipschitz critic this lower-bounds w1_exact_1d(a, b).
    """
    a = _check_samples(a)
    b = _check_samples(b)
    return float(np.mean(critic(a)) - np.mean(critic(b)))


def random_lipschitz_critic(seed: int, n_knots: int = 16) -> Callable[[np.ndarray], np.ndarray]:
    """Piecewise-linear function with slopes in [-1, 1] (hence 1-Lipschitz)."""
    rng = np.random.default_rng(seed)
    knots = np.sort(rng.uniform(-10.0, 10.0, size=n_knots))
    slopes = rng.uniform(-1.0, 1.0, size=n_knots + 1)
    offset = rng.uniform(-5.0, 5.0)
    # values at the knots from cumulative slopes
    values = np.concatenate([[offset], offset + np.cumsum(slopes[1:-1] * np.diff(knots))])

    def critic(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        below = x < knots[0]
        above = x >= knots[-1]
        out = np.empty_like(x)
        out[below] = values[0] + slopes[0] * (x[below] - knots[0])
        out[above] = values[-1] + slopes[-1] * (x[above] - knots[-1])
        mid = ~(below | above)
        idx = np.searchsorted(knots, x[mid], side="right") - 1
        out[mid] = values[idx] + slopes[idx + 1] * (x[mid] - knots[idx])
        return out

    return critic


def gradient_penalty(critic: Callable[[torch.Tensor], torch.Tensor],
                     real: torch.Tensor, fake: torch.Tensor,
                     eta: float, seed: int) -> torch.Tensor:
    """eta * E[(||grad_x critic(x_hat)||_2 - 1)^2] at random interpolates.

    x_hat = u * real + (1 - u) * fake with one u ~ Uniform[0, 1] per pair.
    The returned tensor stays differentiable with respect to the critic's
    parameters (double backward), and is deterministic for a fixed seed.
    """
    if real.shape != fake.shape:
        raise ValueError(f"batch shapes differ: {tuple(real.shape)} vs {tuple(fake.shape)}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    gen = torch.Generator().manual_seed(seed)
    n = real.shape[0]
    u = torch.rand((n,) + (1,) * (real.dim() - 1), generator=gen, dtype=real.dtype)
    with torch.enable_grad():   # the input gradient is needed even at eval time
        x_hat = (u * real.detach() + (1.0 - u) * fake.detach()).requires_grad_(True)
        scores = critic(x_hat)
        grads, = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)
    norms = grads.reshape(n, -1).norm(dim=1)
    return eta * ((norms - 1.0) ** 2).mean()
