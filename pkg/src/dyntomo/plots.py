"""Report rendering: profile/box-stat CSVs, PGM frame images, and figures.

CSV and PGM outputs are byte-deterministic; the matplotlib PNGs are rendered
alongside them for quick inspection.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .dataio import Workspace, write_csv
from .metrics import line_profile

METRIC_LABELS = {"nl2": "normalized l2 error", "nl1": "normalized l1 error",
                 "rel_mass": "relative mass error"}


def write_pgm(path: Path, frame: np.ndarray, log_scale: bool = False,
              clamp_eps: float = 1e-6) -> None:
    """8-bit binary PGM; densities map [0, max] linearly, radiographs in log."""
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(frame, dtype=np.float64)
    if log_scale:
        img = np.log(np.maximum(img, clamp_eps))
        lo, hi = img.min(), img.max()
        scaled = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    else:
        hi = img.max()
        scaled = np.clip(img, 0.0, None) / hi if hi > 0 else np.zeros_like(img)
    data = np.round(255.0 * scaled).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def profile_csv(path: Path, x: np.ndarray, curves: dict[str, np.ndarray]) -> None:
    """Columns: x, clean, then one per method."""
    names = list(curves.keys())
    header = ["x"] + names
    rows = [[float(x[i])] + [float(curves[n][i]) for n in names]
            for i in range(len(x))]
    write_csv(path, header, rows)


def boxstats_csv(path: Path, summary: dict, metric: str) -> None:
    rows = [[m, summary[m][metric]["median"], summary[m][metric]["q1"],
             summary[m][metric]["q3"], summary[m][metric]["mean"],
             summary[m][metric]["std"]] for m in sorted(summary)]
    write_csv(path, ["method", "median", "q1", "q3", "mean", "std"], rows)


def _box_figure(path: Path, report: dict, metric: str) -> None:
    methods = sorted({r["method"] for r in report["rows"]})
    data = [[r[metric] for r in report["rows"] if r["method"] == m] for m in methods]
    fig, ax = plt.subplots(figsize=(1.2 * len(methods) + 2, 4))
    ax.boxplot(data, tick_labels=methods)
    ax.set_ylabel(METRIC_LABELS[metric])
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _profile_figure(path: Path, x: np.ndarray, curves: dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, curve in curves.items():
        ax.plot(x, curve, label=name, linewidth=1.2)
    ax.set_xlabel("x (cm)")
    ax.set_ylabel("normalized density")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _frames_figure(path: Path, stacks: dict[str, np.ndarray], frame_idx: int) -> None:
    fig, axes = plt.subplots(1, len(stacks), figsize=(3.2 * len(stacks), 3.2))
    axes = np.atleast_1d(axes)
    for ax, (name, stack) in zip(axes, stacks.items()):
        ax.imshow(stack[frame_idx], cmap="viridis", origin="lower")
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_plots(ws: Workspace, report: dict, methods: list[str],
               series_ids: list[str] | None = None,
               frame_idx: int = -1) -> list[Path]:
    """Render the evaluation report: CSVs, PGM frames, and PNG figures."""
    out = ws.plots_dir()
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for metric in ("nl2", "nl1", "rel_mass"):
        p = out / f"boxstats_{metric}.csv"
        boxstats_csv(p, report["summary"], metric)
        written.append(p)
        f = out / f"box_{metric}.png"
        _box_figure(f, report, metric)
        written.append(f)

    grid = ws.grid()
    x = grid.x_centers()
    ids = series_ids or ws.ids(report.get("split", "test"))[:2]
    est_methods = [m for m in methods if m != "noisy"]
    for sid in ids:
        clean = ws.load_clean(sid)
        noisy = ws.load_noisy(sid)
        t = frame_idx % clean.n_frames
        curves = {"clean": line_profile(clean.frames[t]),
                  "noisy": line_profile(noisy.frames[t])}
        stacks = {"clean": clean.frames, "noisy": noisy.frames}
        for method in est_methods:
            p = ws.denoised_path(method, sid)
            if p.exists():
                est = ws.load_denoised(method, sid)
                curves[method] = line_profile(est.frames[t])
                stacks[method] = est.frames
        p = out / f"profile_{sid}.csv"
        profile_csv(p, x, curves)
        written.append(p)
        f = out / f"profile_{sid}.png"
        _profile_figure(f, x, curves)
        written.append(f)
        for name, stack in stacks.items():
            p = out / f"density_{sid}_{name.replace('+', '_')}_t{t}.pgm"
            write_pgm(p, stack[t])
            written.append(p)
        stem = ws.radiograph_stem(sid)
        if stem.with_suffix(".m.dwt").exists():
            from .dataio import load_radiographs
            rg = load_radiographs(stem)
            for name, img in (("direct", rg.direct[t]), ("measured", rg.measured[t])):
                p = out / f"radiograph_{sid}_{name}_t{t}.pgm"
                write_pgm(p, img, log_scale=True)
                written.append(p)
        f = out / f"frames_{sid}_t{t}.png"
        _frames_figure(f, stacks, t)
        written.append(f)
    return written
