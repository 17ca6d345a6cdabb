"""Command-line interface.

Stages operate on a workspace directory (``--out``/``--workspace``) and JSON
config files whose keys mirror the dataclass fields.  Exit codes: 0 success,
1 for configuration/validation problems, 2 for runtime stage failures.
"""
from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from .dataio import Workspace, load_phantom_config, read_json
from .errors import StageError, ValidationError
from .forward_model import BeamConfig, ScatterConfig
from .phantom import GenSettings, GridSpec, SeriesSpec, ShellSpec
from .pipeline import (SweepSpec, corrupt_dataset, evaluate_methods,
                       reconstruct_dataset, simulate_dataset, sweep,
                       train_checkpoint, write_report, write_sweep_report)
from .refine import RefineConfig, refine
from .training import Checkpoint, TrainConfig, mass_of


def stage(fn):
    """Map validation errors to exit 1 and stage failures to exit 2."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, FileNotFoundError, KeyError) as exc:
            click.echo(f"validation error: {exc}", err=True)
            sys.exit(1)
        except (StageError, Exception) as exc:
            click.echo(f"stage failure: {exc}", err=True)
            sys.exit(2)

    return wrapper


@click.group()
def main():
    """Dynamic-tomography density reconstruction toolkit."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=False, help="Phantom JSON (shell/grid/series/generation).")
@click.option("--n-train", default=40, show_default=True)
@click.option("--n-val", default=8, show_default=True)
@click.option("--n-test", default=16, show_default=True)
@click.option("--seed", default=1234, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@stage
def simulate(config_path, n_train, n_val, n_test, seed, out):
    """Generate a clean phantom dataset."""
    if config_path:
        shell, grid, sspec, settings, _ = load_phantom_config(config_path)
    else:
        shell, grid, sspec, settings = ShellSpec(), GridSpec(), SeriesSpec(), GenSettings()
    ws = Workspace(out)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    index = simulate_dataset(ws, shell, grid, sspec, settings, counts, seed)
    click.echo(f"wrote {len(index['series'])} series under {out}")


@main.command()
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=False, help="JSON with beam/scatter settings.")
@click.option("--beta0", default=None, type=float, help="Override nominal scatter scaling.")
@click.option("--noise-var", default=None, type=float)
@stage
def corrupt(workspace, config_path, beta0, noise_var):
    """Project, attenuate, and corrupt every clean series."""
    doc = read_json(config_path) if config_path else {}
    try:
        beam = BeamConfig(**doc.get("beam", {}))
        sdoc = dict(doc.get("scatter", {}))
        if beta0 is not None:
            sdoc["beta0"] = beta0
        if noise_var is not None:
            sdoc["noise_var"] = noise_var
        scfg = ScatterConfig(**sdoc)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    corrupt_dataset(Workspace(workspace), beam, scfg)
    click.echo(f"corrupted radiographs written (beta0={scfg.beta0})")


@main.command()
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--clamp-eps", default=None, type=float)
@stage
def reconstruct(workspace, clamp_eps):
    """Inverse-project measured radiographs into noisy density series."""
    reconstruct_dataset(Workspace(workspace), clamp_eps=clamp_eps)
    click.echo("noisy reconstructions written")


@main.command()
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=False, help="TrainConfig JSON.")
@click.option("--name", default=None, help="Checkpoint name (default from mode).")
@click.option("--supervised-only", is_flag=True, default=None)
@click.option("--seed", default=None, type=int)
@stage
def train(workspace, config_path, name, supervised_only, seed):
    """Train a denoiser on the workspace's train/val splits."""
    doc = read_json(config_path) if config_path else {}
    if supervised_only:
        doc["supervised_only"] = True
    if seed is not None:
        doc["seed"] = seed
    try:
        cfg = TrainConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    name = name or ("supervised" if cfg.supervised_only else "wgan_sup")
    ckpt = train_checkpoint(Workspace(workspace), cfg, name)
    click.echo(f"checkpoint '{name}': best epoch {ckpt.epoch}, val nl2 {ckpt.val_nl2:.5f}")


@main.command()
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--checkpoint", "ckpt_name", required=True,
              help="Checkpoint name under checkpoints/ or a path.")
@click.option("--split", default="test", show_default=True)
@stage
def denoise(workspace, ckpt_name, split):
    """Apply a trained denoiser to the noisy series of a split."""
    from .dataio import save_series
    from .training import apply_denoiser

    ws = Workspace(workspace)
    path = Path(ckpt_name)
    if not path.exists():
        path = ws.checkpoint_path(ckpt_name)
    if not path.exists():
        raise ValidationError(f"checkpoint not found: {ckpt_name}")
    ckpt = Checkpoint.load(path)
    method = "supervised" if ckpt.kind == "supervised" else "wgan-sup"
    for sid in ws.ids(split):
        den = apply_denoiser(ckpt, ws.load_noisy(sid))
        save_series(ws.denoised_path(method, sid), den)
    click.echo(f"denoised '{split}' split with {method}")


@main.command(name="refine")
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--method", default="supervised", show_default=True,
              help="Which denoised series to refine (or 'noisy').")
@click.option("--split", default="test", show_default=True)
@click.option("--lambda0", default=5.0, show_default=True)
@click.option("--lambda1", default=100.0, show_default=True)
@click.option("--lambda2", default=1e-4, show_default=True)
@click.option("--step-size", default=1e-5, show_default=True)
@click.option("--max-iters", default=7000, show_default=True)
@click.option("--rmsprop-decay", default=0.99, show_default=True)
@click.option("--rmsprop-eps", default=1e-8, show_default=True)
@stage
def refine_cmd(workspace, method, split, lambda0, lambda1, lambda2, step_size,
               max_iters, rmsprop_decay, rmsprop_eps):
    """Mass/TV refinement of denoised (or noisy) series."""
    from .dataio import save_series

    ws = Workspace(workspace)
    out_method = f"{method}+pp" if method != "noisy" else "classical"
    for sid in ws.ids(split):
        anchor = ws.load_noisy(sid) if method == "noisy" else ws.load_denoised(method, sid)
        cfg = RefineConfig(lambda0=lambda0, lambda1=lambda1, lambda2=lambda2,
                           step_size=step_size, max_iters=max_iters,
                           rmsprop_decay=rmsprop_decay, rmsprop_eps=rmsprop_eps,
                           true_masses=mass_of(ws.load_clean(sid)))
        save_series(ws.denoised_path(out_method, sid), refine(anchor, cfg).series)
    click.echo(f"refined '{method}' -> '{out_method}' on split '{split}'")


@main.command()
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--methods", default="noisy", show_default=True,
              help="Comma-separated method list.")
@click.option("--split", default="test", show_default=True)
@click.option("--checkpoint", "ckpts", multiple=True,
              help="name=path pairs, e.g. supervised=checkpoints/supervised.ckpt")
@click.option("--classical-iters", default=10000, show_default=True)
@click.option("--refine-iters", default=7000, show_default=True)
@stage
def evaluate(workspace, methods, split, ckpts, classical_iters, refine_iters):
    """Compute per-series metrics and summary statistics."""
    ws = Workspace(workspace)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    checkpoints = {}
    for spec_str in ckpts:
        name, _, p = spec_str.partition("=")
        path = Path(p) if p else ws.checkpoint_path(name)
        if not path.exists():
            raise ValidationError(f"checkpoint not found: {spec_str}")
        checkpoints[name] = Checkpoint.load(path)
    for name in ("supervised", "wgan_sup"):
        if name not in checkpoints and ws.checkpoint_path(name).exists():
            checkpoints[name] = Checkpoint.load(ws.checkpoint_path(name))
    rcfg = RefineConfig(max_iters=refine_iters)
    report = evaluate_methods(ws, method_list, checkpoints, rcfg, split=split,
                              classical_iters=classical_iters, save_estimates=True)
    path = write_report(ws, report)
    click.echo(f"report written to {path}")


@main.command(name="sweep")
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="SweepSpec JSON (beta0_values, noise_vars, methods).")
@click.option("--split", default="test", show_default=True)
@click.option("--classical-iters", default=10000, show_default=True)
@click.option("--refine-iters", default=7000, show_default=True)
@stage
def sweep_cmd(workspace, config_path, split, classical_iters, refine_iters):
    """Generalization sweep over scatter scalings and noise settings."""
    ws = Workspace(workspace)
    doc = read_json(config_path)
    try:
        spec = SweepSpec(beta0_values=doc["beta0_values"],
                         noise_vars=doc.get("noise_vars", [0.0]),
                         methods=doc.get("methods", ["noisy"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad sweep config: {exc}") from exc
    checkpoints = {}
    for name in ("supervised", "wgan_sup"):
        if ws.checkpoint_path(name).exists():
            checkpoints[name] = Checkpoint.load(ws.checkpoint_path(name))
    cells = sweep(spec, ws, checkpoints, RefineConfig(), split=split,
                  classical_iters=classical_iters, refine_iters=refine_iters)
    path = write_sweep_report(ws, cells)
    click.echo(f"sweep report written to {path}")


@main.command(name="plot")
@click.option("--workspace", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--series", "series_ids", multiple=True, help="Series ids to render.")
@click.option("--frame", default=-1, show_default=True)
@stage
def plot_cmd(workspace, series_ids, frame):
    """Render report CSVs, PGM frames, and PNG figures."""
    from .plots import emit_plots

    ws = Workspace(workspace)
    report_path = ws.reports_dir() / "metrics.csv"
    if not report_path.exists():
        raise ValidationError("no reports/metrics.csv; run evaluate first")
    rows = []
    with open(report_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            cells = line.strip().split(",")
            rows.append({"method": cells[0], "series_id": cells[1],
                         "nl2": float(cells[2]), "nl1": float(cells[3]),
                         "rel_mass": float(cells[4])})
    methods = sorted({r["method"] for r in rows})
    summary = {}
    for method in methods:
        vals = {m: np.array([r[m] for r in rows if r["method"] == method])
                for m in ("nl2", "nl1", "rel_mass")}
        summary[method] = {m: {"median": float(np.median(v)), "q1": float(np.percentile(v, 25)),
                               "q3": float(np.percentile(v, 75)), "mean": float(np.mean(v)),
                               "std": float(np.std(v))} for m, v in vals.items()}
    report = {"rows": rows, "summary": summary, "split": "test"}
    written = emit_plots(ws, report, methods, series_ids=list(series_ids) or None,
                         frame_idx=frame)
    click.echo(f"wrote {len(written)} plot artifacts under {ws.plots_dir()}")


if __name__ == "__main__":
    main()
