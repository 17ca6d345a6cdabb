"""Workspace layout and JSON/tensor serialization of datasets.

A workspace directory holds one dataset plus everything derived from it:

    dataset.json                 index: per-series id, split, seeds, shell spec
    clean/<id>.dwt               normalized clean series
    radiographs/<id>.{d,s,m}.dwt + <id>.json sidecar (betas, configs, seed)
    noisy/<id>.dwt               inverse-projection reconstructions
    denoised/<method>/<id>.dwt
    checkpoints/<name>.ckpt, <name>_history.csv
    reports/, plots/
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import container
from .errors import ValidationError
from .forward_model import BeamConfig, RadiographSeries, ScatterConfig
from .phantom import (DensityTimeSeries, EosParams, GenSettings, GridSpec,
                      SeriesSpec, ShellSpec)

SPLITS = ("train", "val", "test")


def write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def shell_from_dict(doc: dict) -> ShellSpec:
    return ShellSpec(**doc)


def grid_from_dict(doc: dict) -> GridSpec:
    return GridSpec(**doc)


def series_spec_from_dict(doc: dict) -> SeriesSpec:
    doc = dict(doc)
    doc["frame_times"] = tuple(doc["frame_times"])
    return SeriesSpec(**doc)


def gen_settings_from_dict(doc: dict) -> GenSettings:
    return GenSettings(**doc)


def load_phantom_config(path: Path):
    """(base shell, grid, series spec, generation settings, eos) from JSON."""
    try:
        doc = read_json(path)
        shell = shell_from_dict(doc.get("shell", {}))
        grid = grid_from_dict(doc.get("grid", {}))
        sspec = series_spec_from_dict(doc["series"]) if "series" in doc else SeriesSpec()
        settings = gen_settings_from_dict(doc.get("generation", {}))
        eos = EosParams(**doc.get("eos", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad phantom config {path}: {exc}") from exc
    return shell, grid, sspec, settings, eos


def save_series(path: Path, series: DensityTimeSeries) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    container.save_tensor(path, series.frames.astype(np.float32))


def load_series(path: Path, grid: GridSpec, norm_factor: float,
                meta: dict | None = None) -> DensityTimeSeries:
    frames = container.load_tensor(path).astype(np.float64)
    return DensityTimeSeries(frames=frames, grid=grid, norm_factor=norm_factor,
                             meta=meta or {})


def save_radiographs(stem: Path, rg: RadiographSeries) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    container.save_tensor(stem.with_suffix(".d.dwt"), rg.direct.astype(np.float32))
    container.save_tensor(stem.with_suffix(".s.dwt"), rg.scatter.astype(np.float32))
    container.save_tensor(stem.with_suffix(".m.dwt"), rg.measured.astype(np.float32))
    write_json(stem.with_suffix(".json"), rg.sidecar())


def load_radiographs(stem: Path) -> RadiographSeries:
    doc = read_json(stem.with_suffix(".json"))
    beam = BeamConfig(**doc["beam"])
    scfg = ScatterConfig(**doc["scatter"]) if "scatter" in doc else None
    return RadiographSeries(
        direct=container.load_tensor(stem.with_suffix(".d.dwt")).astype(np.float64),
        scatter=container.load_tensor(stem.with_suffix(".s.dwt")).astype(np.float64),
        measured=container.load_tensor(stem.with_suffix(".m.dwt")).astype(np.float64),
        betas=np.asarray(doc["betas"], dtype=np.float64),
        beam=beam, scatter_cfg=scfg, seed=doc.get("seed"))


class Workspace:
    """Thin path helper over a dataset directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._index_cache: tuple[tuple, dict] | None = None

    @property
    def index_path(self) -> Path:
        return self.root / "dataset.json"

    def index(self) -> dict:
        if not self.index_path.exists():
            raise ValidationError(f"no dataset.json under {self.root}")
        stat = self.index_path.stat()
        key = (stat.st_mtime_ns, stat.st_size)
        if self._index_cache is None or self._index_cache[0] != key:
            self._index_cache = (key, read_json(self.index_path))
        return self._index_cache[1]

    def grid(self) -> GridSpec:
        return grid_from_dict(self.index()["grid"])

    def series_spec(self) -> SeriesSpec:
        return series_spec_from_dict(self.index()["series_spec"])

    def ids(self, split: str | None = None) -> list[str]:
        entries = self.index()["series"]
        if split is not None:
            entries = [e for e in entries if e["split"] == split]
        return [e["id"] for e in entries]

    def clean_path(self, sid: str) -> Path:
        return self.root / "clean" / f"{sid}.dwt"

    def radiograph_stem(self, sid: str) -> Path:
        return self.root / "radiographs" / sid

    def noisy_path(self, sid: str) -> Path:
        return self.root / "noisy" / f"{sid}.dwt"

    def denoised_path(self, method: str, sid: str) -> Path:
        return self.root / "denoised" / method / f"{sid}.dwt"

    def checkpoint_path(self, name: str) -> Path:
        return self.root / "checkpoints" / f"{name}.ckpt"

    def reports_dir(self) -> Path:
        return self.root / "reports"

    def plots_dir(self) -> Path:
        return self.root / "plots"

    def load_clean(self, sid: str) -> DensityTimeSeries:
        idx = self.index()
        return load_series(self.clean_path(sid), grid_from_dict(idx["grid"]),
                           idx["series_spec"]["norm_factor"])

    def load_noisy(self, sid: str) -> DensityTimeSeries:
        idx = self.index()
        return load_series(self.noisy_path(sid), grid_from_dict(idx["grid"]),
                           idx["series_spec"]["norm_factor"])

    def load_denoised(self, method: str, sid: str) -> DensityTimeSeries:
        idx = self.index()
        return load_series(self.denoised_path(method, sid), grid_from_dict(idx["grid"]),
                           idx["series_spec"]["norm_factor"])


def format_float(x: float) -> str:
    """CSV float format: 9 significant digits."""
    return f"{x:.9g}"


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """Deterministic CSV: comma separated, LF endings, 9 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = [format_float(v) if isinstance(v, float) else str(v) for v in row]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
