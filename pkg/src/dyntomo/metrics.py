"""Reconstruction-quality metrics and line profiles."""
from __future__ import annotations

import numpy as np

from .phantom import DensityTimeSeries


def _frames(obj) -> np.ndarray:
    return obj.frames if isinstance(obj, DensityTimeSeries) else np.asarray(obj, dtype=np.float64)


def normalized_lp_error(clean, est, p: int = 2) -> float:
    """||clean - est||_p / ||clean||_p over the full stack."""
    c = _frames(clean)
    e = _frames(est)
    if c.shape != e.shape:
        raise ValueError(f"shape mismatch {c.shape} vs {e.shape}")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    denom = np.linalg.norm(c.ravel(), ord=p)
    if denom == 0:
        raise ValueError("clean stack has zero norm")
    return float(np.linalg.norm((c - e).ravel(), ord=p) / denom)


def relative_mass_error(clean: DensityTimeSeries, est: DensityTimeSeries) -> float:
    """Mean over frames of |M(est_t) - M(clean_t)| / M(clean_t)."""
    from .training import mass_of  # local import; training pulls in torch

    m_clean = mass_of(clean)
    m_est = mass_of(est)
    if np.any(m_clean <= 0):
        raise ValueError("clean series has a nonpositive frame mass")
    return float(np.mean(np.abs(m_est - m_clean) / m_clean))


def line_profile(frame: np.ndarray, which: str = "y=0") -> np.ndarray:
    """Horizontal profile through the center (row floor(H/2))."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValueError("expected a 2D frame")
    if which != "y=0":
        raise ValueError(f"unsupported profile {which!r}")
    return frame[frame.shape[0] // 2, :].copy()
