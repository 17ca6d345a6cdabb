"""Surrogate imploding-shell phantoms.

Generates deterministic, mass-conserving density time-series on a 2D grid
(the central slice of an axisymmetric 3D field), plus standalone evaluators
for the Mie-Grüneisen pressure law and the perturbed-interface curve.

The dynamics are kinematic, not hydrodynamic: both interfaces travel inward
at the shell speed until a configurable rebound time, after which the inner
interface reverses and its sinusoidal perturbation grows linearly.  Each
frame is rescaled so the revolved mass matches frame 0 exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import EosDomainError, GeometryError

# Converts a stored speed in m/s into cm per frame-time unit.  The nominal
# frame times and shell speed are mutually inconsistent under any literal
# unit reading; this constant is chosen so the default time window spans
# implosion, rebound onset, and perturbation growth inside the grid.
SPEED_TO_CM_PER_MS = 1e-3


@dataclass(frozen=True)
class EosParams:
    """Mie-Grüneisen equation-of-state parameters."""

    rho0: float = 16.65      # reference density, g/cc
    T0: float = 0.0253       # reference temperature, eV
    cs: float = 339000.0     # sound speed, m/s
    Gamma0: float = 1.6      # Grüneisen parameter
    s1: float = 1.32         # linear Hugoniot slope
    cV: float = 1.6e10       # specific heat, erg/(g eV)

    def __post_init__(self):
        if self.rho0 <= 0 or self.cV <= 0 or self.s1 <= 0:
            raise ValueError("EosParams requires rho0 > 0, cV > 0, s1 > 0")


@dataclass(frozen=True)
class ShellSpec:
    """Initial geometry and kinematics of the imploding shell."""

    r_in: float = 8.0          # inner radius, cm
    r_out: float = 10.0        # outer radius, cm
    v_impl: float = 943.0      # implosion speed, m/s (positive, applied inward)
    delta: float = 0.2         # inner-interface perturbation magnitude, cm
    kappa: int = 5             # perturbation wavenumber
    rho_nominal: float = 16.65  # shell density, g/cc

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out):
            raise ValueError("need 0 < r_in < r_out")
        if self.kappa < 0 or self.delta < 0 or self.rho_nominal <= 0:
            raise ValueError("kappa, delta must be >= 0 and rho_nominal > 0")


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid for the central slice."""

    n_cells: int = 64
    dx: float = 0.34375   # cm; default spans an 11 cm radius at 64 cells

    def __post_init__(self):
        if self.n_cells <= 0 or self.n_cells % 16 != 0:
            raise ValueError("n_cells must be positive and divisible by 16")
        if self.dx <= 0:
            raise ValueError("dx must be positive")

    @property
    def r_domain(self) -> float:
        return self.n_cells * self.dx / 2.0

    def x_centers(self) -> np.ndarray:
        """Signed horizontal pixel-center coordinates (cm)."""
        n = self.n_cells
        return (np.arange(n) - (n - 1) / 2.0) * self.dx

    def z_centers(self) -> np.ndarray:
        return self.x_centers()


@dataclass(frozen=True)
class SeriesSpec:
    """Frame times and the density normalization constant."""

    frame_times: tuple[float, ...] = (37.0, 37.6, 38.1, 38.7, 39.3, 39.9, 40.4, 41.0)
    norm_factor: float = 50.0

    def __post_init__(self):
        times = np.asarray(self.frame_times, dtype=float)
        if times.size < 1 or np.any(np.diff(times) <= 0):
            raise ValueError("frame_times must be strictly increasing")
        if self.norm_factor <= 0:
            raise ValueError("norm_factor must be positive")


@dataclass(frozen=True)
class GenSettings:
    """Artifact knobs of the surrogate dynamics (not physical constants)."""

    t_start: float = 37.0        # time at which inward motion begins
    collapse_time: float = 39.9  # rebound onset (shock return, phenomenological)
    rebound_factor: float = 0.5  # inner-interface rebound speed / implosion speed
    growth_rate: float = 0.8     # perturbation growth per time unit after rebound
    fill_density: float = 0.5    # interior gas density, g/cc
    min_thickness: float = 0.5   # floor on shell thickness, cm
    texture_amplitude: float = 0.1  # max relative radial density modulation
    speed_scale: float = SPEED_TO_CM_PER_MS


@dataclass
class DensityTimeSeries:
    """Stack of T normalized central density slices plus grid metadata."""

    frames: np.ndarray          # (T, H, W), values in [0, 1]
    grid: GridSpec
    norm_factor: float = 50.0
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def copy_with(self, frames: np.ndarray) -> "DensityTimeSeries":
        return DensityTimeSeries(frames=frames, grid=self.grid,
                                 norm_factor=self.norm_factor, meta=dict(self.meta))


def eos_pressure(params: EosParams, chi: float, T: float) -> float:
    """Mie-Grüneisen pressure at compression ``chi = 1 - rho0/rho`` and temperature ``T``.

    Raises EosDomainError at or beyond the Hugoniot singularity ``chi >= 1/s1``
    and for ``chi >= 1``.
    """
    if chi >= 1.0 / params.s1 or chi >= 1.0:
        raise EosDomainError(f"chi={chi} outside valid range (< {min(1.0, 1.0 / params.s1)})")
    cold = params.rho0 * params.cs ** 2 * chi * (1.0 - 0.5 * params.Gamma0 * chi) \
        / (1.0 - params.s1 * chi) ** 2
    thermal = params.Gamma0 * params.rho0 * params.cV * (T - params.T0)
    return cold + thermal


def perturbed_interface(R: float, delta: float, kappa: int, theta):
    """Parametric interface point(s): both coordinates share the sinusoidal offset."""
    if R <= 0:
        raise ValueError("R must be positive")
    theta = np.asarray(theta, dtype=float)
    bump = delta * np.sin(kappa * theta)
    return R * np.cos(theta) + bump, R * np.sin(theta) + bump


def revolved_mass_weights(grid: GridSpec) -> np.ndarray:
    """Per-column mass weights of the revolved volume element.

    Each half-profile revolves through 2*pi; summing a full-width slice
    therefore weighs every column by pi*|x|*dx^2 so the two mirror halves
    together account for one revolution (exact for symmetric slices, the
    half-average otherwise).
    """
    return math.pi * np.abs(grid.x_centers()) * grid.dx ** 2


def normalize_series(raw: np.ndarray, norm_factor: float, grid: GridSpec,
                     meta: dict | None = None) -> DensityTimeSeries:
    """Clip at ``norm_factor`` then divide by it."""
    raw = np.asarray(raw, dtype=np.float64)
    if np.any(raw < 0):
        raise ValueError("raw densities must be nonnegative")
    frames = np.minimum(raw, norm_factor) / norm_factor
    return DensityTimeSeries(frames=frames, grid=grid, norm_factor=norm_factor,
                             meta=meta or {})


def denormalize(series: DensityTimeSeries) -> np.ndarray:
    """Inverse of normalize_series for unclipped values."""
    return series.frames * series.norm_factor


def _interface_radii(shell: ShellSpec, settings: GenSettings, t: float):
    """Inner base radius, outer radius, and perturbation magnitude at time t."""
    v = shell.v_impl * settings.speed_scale
    t_c = settings.collapse_time
    travel_out = v * max(0.0, min(t, t_c) - settings.t_start)
    r_out = shell.r_out - travel_out
    if t <= t_c:
        r_in = shell.r_in - v * max(0.0, t - settings.t_start)
        delta = shell.delta
    else:
        r_in_c = shell.r_in - v * max(0.0, t_c - settings.t_start)
        r_in = r_in_c + settings.rebound_factor * v * (t - t_c)
        delta = shell.delta * (1.0 + settings.growth_rate * (t - t_c))
    r_in = min(r_in, r_out - settings.min_thickness)
    return r_in, r_out, delta


def generate_series(shell: ShellSpec, grid: GridSpec, series: SeriesSpec,
                    seed: int, settings: GenSettings | None = None,
                    eos: EosParams | None = None) -> DensityTimeSeries:
    """Rasterize the surrogate implosion at each frame time.

    Deterministic for fixed inputs.  The seed selects a smooth radial density
    modulation of the shell (texture) and is recorded in the metadata.  Every
    frame is rescaled so its revolved mass equals the frame-0 mass.
    """
    settings = settings or GenSettings()
    eos = eos or EosParams()
    if len(series.frame_times) < 2:
        raise ValueError("need at least 2 frames")
    if shell.r_out + shell.delta > grid.r_domain:
        raise GeometryError(f"shell (r_out={shell.r_out}) does not fit half-width "
                            f"{grid.r_domain}")

    rng = np.random.default_rng(seed)
    tex_amp = rng.uniform(0.0, settings.texture_amplitude)
    tex_freq = int(rng.integers(1, 4))
    tex_phase = rng.uniform(0.0, 2.0 * math.pi)

    x = grid.x_centers()
    z = grid.z_centers()
    xx, zz = np.meshgrid(x, z)          # row index -> z, column index -> x
    rr = np.hypot(xx, zz)
    theta = np.arctan2(zz, xx)
    weights = revolved_mass_weights(grid)

    raw_frames = []
    mass0 = None
    for t in series.frame_times:
        r_in, r_out, delta = _interface_radii(shell, settings, t)
        if r_out <= 0 or r_in - delta <= 0:
            raise GeometryError(f"collapse drove radii nonpositive at t={t} "
                                f"(r_in={r_in:.3f}, r_out={r_out:.3f}, delta={delta:.3f})")
        inner_edge = r_in + delta * np.sin(shell.kappa * theta)
        thickness = max(r_out - r_in, 1e-12)
        shell_rho = shell.rho_nominal * (
            1.0 + tex_amp * np.sin(2.0 * math.pi * tex_freq * (rr - r_in) / thickness
                                   + tex_phase))
        frame = np.where(rr < inner_edge, settings.fill_density,
                         np.where(rr < r_out, shell_rho, 0.0))
        mass = float(frame.sum(axis=0) @ weights)
        if mass0 is None:
            mass0 = mass
        elif mass > 0:
            frame = frame * (mass0 / mass)
        raw_frames.append(frame)

    raw = np.stack(raw_frames)
    meta = {
        "shell": asdict(shell),
        "eos": asdict(eos),
        "generation": asdict(settings),
        "frame_times": list(series.frame_times),
        "seed": int(seed),
    }
    return normalize_series(raw, series.norm_factor, grid, meta=meta)
