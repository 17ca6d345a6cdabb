"""Experiment orchestration: dataset builds, method evaluation, sweeps.

Every stage is deterministic given the manifest seeds: per-series generation
and corruption seeds are drawn once from the master seed and recorded in
dataset.json, so stages can be rerun independently and bit-identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dataio import (Workspace, gen_settings_from_dict,
                     grid_from_dict, load_radiographs, read_json,
                     save_radiographs, save_series, series_spec_from_dict,
                     shell_from_dict, write_csv, write_json)
from .errors import StageError, ValidationError
from .forward_model import (BeamConfig, ScatterConfig, corrupt,
                            direct_radiographs, reconstruct_density)
from .metrics import normalized_lp_error, relative_mass_error
from .phantom import (DensityTimeSeries, GenSettings, GridSpec, SeriesSpec,
                      ShellSpec, generate_series)
from .refine import RefineConfig, classical_denoise, refine
from .training import Checkpoint, TrainConfig, apply_denoiser, mass_of, train

METHODS = ("noisy", "classical", "supervised", "supervised+pp",
           "wgan-sup", "wgan-sup+pp")


@dataclass
class SweepSpec:
    beta0_values: list[float]
    noise_vars: list[float] = field(default_factory=lambda: [0.0])
    methods: list[str] = field(default_factory=lambda: list(METHODS))

    def __post_init__(self):
        if not self.beta0_values or not self.noise_vars or not self.methods:
            raise ValidationError("sweep lists must be nonempty")


def jitter_shell(base: ShellSpec, rng: np.random.Generator,
                 jitter: dict | None = None) -> ShellSpec:
    """Draw one dataset variation around the base shell."""
    j = {"radius": 0.02, "speed": 0.05, "delta_range": (0.1, 0.3),
         "kappa_range": (3, 8)}
    j.update(jitter or {})
    lo, hi = j["kappa_range"]
    return ShellSpec(
        r_in=base.r_in * rng.uniform(1 - j["radius"], 1 + j["radius"]),
        r_out=base.r_out * rng.uniform(1 - j["radius"], 1 + j["radius"]),
        v_impl=base.v_impl * rng.uniform(1 - j["speed"], 1 + j["speed"]),
        delta=rng.uniform(*j["delta_range"]),
        kappa=int(rng.integers(lo, hi + 1)),
        rho_nominal=base.rho_nominal)


def simulate_dataset(ws: Workspace, base: ShellSpec, grid: GridSpec,
                     sspec: SeriesSpec, settings: GenSettings,
                     counts: dict[str, int], seed: int,
                     jitter: dict | None = None) -> dict:
    """Generate clean series for every split and write the dataset index."""
    rng = np.random.default_rng(seed)
    entries = []
    i = 0
    for split in ("train", "val", "test"):
        for _ in range(counts.get(split, 0)):
            sid = f"s{i:04d}"
            shell = jitter_shell(base, rng, jitter)
            series_seed = int(rng.integers(0, 2 ** 31))
            corrupt_seed = int(rng.integers(0, 2 ** 31))
            clean = generate_series(shell, grid, sspec, series_seed, settings)
            save_series(ws.clean_path(sid), clean)
            entries.append({"id": sid, "split": split, "shell": asdict(shell),
                            "series_seed": series_seed, "corrupt_seed": corrupt_seed})
            i += 1
    index = {"series": entries, "grid": asdict(grid), "series_spec": asdict(sspec),
             "generation": asdict(settings), "base_shell": asdict(base),
             "seed": seed}
    index["series_spec"]["frame_times"] = list(sspec.frame_times)
    write_json(ws.index_path, index)
    return index


def corrupt_dataset(ws: Workspace, beam: BeamConfig, scfg: ScatterConfig,
                    ids: list[str] | None = None) -> None:
    """Project, attenuate, and corrupt every clean series."""
    index = ws.index()
    grid = grid_from_dict(index["grid"])
    by_id = {e["id"]: e for e in index["series"]}
    for sid in ids or ws.ids():
        clean = ws.load_clean(sid)
        d = direct_radiographs(clean, beam)
        rg = corrupt(d, scfg, beam, seed=by_id[sid]["corrupt_seed"])
        save_radiographs(ws.radiograph_stem(sid), rg)
    write_json(ws.root / "corrupt.json",
               {"beam": asdict(beam), "scatter": asdict(scfg)})


def reconstruct_dataset(ws: Workspace, clamp_eps: float | None = None,
                        ids: list[str] | None = None) -> None:
    grid = ws.grid()
    norm = ws.series_spec().norm_factor
    for sid in ids or ws.ids():
        rg = load_radiographs(ws.radiograph_stem(sid))
        noisy = reconstruct_density(rg, grid, norm_factor=norm, clamp_eps=clamp_eps)
        save_series(ws.noisy_path(sid), noisy)


def load_pairs(ws: Workspace, split: str) -> list[tuple[DensityTimeSeries, DensityTimeSeries]]:
    return [(ws.load_noisy(sid), ws.load_clean(sid)) for sid in ws.ids(split)]


def train_checkpoint(ws: Workspace, cfg: TrainConfig, name: str,
                     g_cfg=None, d_cfg=None) -> Checkpoint:
    """Train on the workspace's train/val splits and persist the result."""
    ckpt, history = train(load_pairs(ws, "train"), load_pairs(ws, "val"), cfg,
                          g_cfg=g_cfg, d_cfg=d_cfg)
    path = ws.checkpoint_path(name)
    path.parent.mkdir(parents=True, exist_ok=True)
    ckpt.save(path)
    rows = [[r["step"], r["epoch"], r["loss_d"], r["loss_g_total"], r["loss_g_sup"],
             r["loss_g_adv"], r["loss_g_mass"], r["val_nl2"]]
            for r in history.to_rows()]
    write_csv(ws.root / "checkpoints" / f"{name}_history.csv",
              ["step", "epoch", "loss_d", "loss_g_total", "loss_g_sup",
               "loss_g_adv", "loss_g_mass", "val_nl2"], rows)
    return ckpt


def _estimate(ws: Workspace, method: str, sid: str,
              checkpoints: dict[str, Checkpoint],
              refine_cfg: RefineConfig | None,
              classical_iters: int = 10000) -> DensityTimeSeries:
    noisy = ws.load_noisy(sid)
    clean = ws.load_clean(sid)
    true_masses = mass_of(clean)
    if method == "noisy":
        return noisy
    if method == "classical":
        return classical_denoise(noisy, true_masses, max_iters=classical_iters)
    base = method.removesuffix("+pp")
    key = {"supervised": "supervised", "wgan-sup": "wgan_sup"}.get(base)
    if key is None:
        raise ValidationError(f"unknown method {method!r}")
    if key not in checkpoints:
        raise StageError("denoise", f"missing checkpoint {key!r} for method {method!r}")
    den = apply_denoiser(checkpoints[key], noisy)
    if not method.endswith("+pp"):
        return den
    cfg = refine_cfg or RefineConfig()
    cfg = RefineConfig(lambda0=cfg.lambda0, lambda1=cfg.lambda1, lambda2=cfg.lambda2,
                       step_size=cfg.step_size, max_iters=cfg.max_iters,
                       rmsprop_decay=cfg.rmsprop_decay, rmsprop_eps=cfg.rmsprop_eps,
                       true_masses=true_masses)
    return refine(den, cfg).series


def evaluate_methods(ws: Workspace, methods: list[str],
                     checkpoints: dict[str, Checkpoint] | None = None,
                     refine_cfg: RefineConfig | None = None,
                     split: str = "test", classical_iters: int = 10000,
                     save_estimates: bool = False) -> dict:
    """Per-series metrics and summary statistics for each method.

    Returns {"rows": [(method, sid, nl2, nl1, rel_mass)], "summary": {...}}.
    """
    checkpoints = checkpoints or {}
    rows = []
    for method in methods:
        for sid in ws.ids(split):
            clean = ws.load_clean(sid)
            est = _estimate(ws, method, sid, checkpoints, refine_cfg, classical_iters)
            if save_estimates and method != "noisy":
                save_series(ws.denoised_path(method, sid), est)
            rows.append({"method": method, "series_id": sid,
                         "nl2": normalized_lp_error(clean, est, 2),
                         "nl1": normalized_lp_error(clean, est, 1),
                         "rel_mass": relative_mass_error(clean, est)})
    rows.sort(key=lambda r: (r["method"], r["series_id"]))
    summary = {}
    for method in methods:
        vals = {m: np.array([r[m] for r in rows if r["method"] == method])
                for m in ("nl2", "nl1", "rel_mass")}
        summary[method] = {
            m: {"median": float(np.median(v)),
                "q1": float(np.percentile(v, 25)),
                "q3": float(np.percentile(v, 75)),
                "mean": float(np.mean(v)),
                "std": float(np.std(v))}
            for m, v in vals.items()}
    return {"rows": rows, "summary": summary, "split": split}


def write_report(ws: Workspace, report: dict, name: str = "metrics") -> Path:
    out = ws.reports_dir()
    write_csv(out / f"{name}.csv",
              ["method", "series_id", "nl2", "nl1", "rel_mass"],
              [[r["method"], r["series_id"], r["nl2"], r["nl1"], r["rel_mass"]]
               for r in report["rows"]])
    srows = []
    for method in sorted(report["summary"]):
        for metric in ("nl2", "nl1", "rel_mass"):
            s = report["summary"][method][metric]
            srows.append([method, metric, s["median"], s["q1"], s["q3"],
                          s["mean"], s["std"]])
    write_csv(out / f"{name}_summary.csv",
              ["method", "metric", "median", "q1", "q3", "mean", "std"], srows)
    return out / f"{name}.csv"


def validate_manifest(doc: dict, base_dir: Path) -> None:
    for key in ("phantom", "dataset"):
        if key not in doc:
            raise ValidationError(f"manifest missing {key!r}")
    for name, p in (doc.get("checkpoints") or {}).items():
        if not (base_dir / p).exists():
            raise ValidationError(f"checkpoint {name!r} not found: {p}")
    methods = doc.get("methods", ["noisy"])
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}")


def run_pipeline(manifest: dict, out_dir: str | Path,
                 base_dir: str | Path | None = None) -> dict:
    """Execute simulate, corrupt, reconstruct, train, denoise, evaluate.

    The manifest binds phantom/beam/scatter configs, dataset sizes, seeds,
    the training configs or existing checkpoint paths, the refinement
    weights, and the method list.  Writes metrics CSVs under out_dir/reports
    and returns the in-memory report.
    """
    out = Path(out_dir)
    base = Path(base_dir) if base_dir else out
    validate_manifest(manifest, base)
    ws = Workspace(out)
    ph = manifest["phantom"]
    try:
        base_shell = shell_from_dict(ph.get("shell", {}))
        grid = grid_from_dict(ph.get("grid", {}))
        sspec = series_spec_from_dict(ph["series"]) if "series" in ph else SeriesSpec()
        settings = gen_settings_from_dict(ph.get("generation", {}))
        beam = BeamConfig(**manifest.get("beam", {}))
        scfg = ScatterConfig(**manifest.get("scatter", {}))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad manifest: {exc}") from exc

    ds = manifest["dataset"]
    counts = {s: int(ds.get(f"n_{s}", 0)) for s in ("train", "val", "test")}
    try:
        simulate_dataset(ws, base_shell, grid, sspec, settings, counts,
                         seed=int(ds["seed"]), jitter=ds.get("jitter"))
    except Exception as exc:
        raise StageError("simulate", str(exc)) from exc
    try:
        corrupt_dataset(ws, beam, scfg)
        reconstruct_dataset(ws, clamp_eps=manifest.get("clamp_eps"))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("corrupt/reconstruct", str(exc)) from exc

    checkpoints: dict[str, Checkpoint] = {}
    for name, rel in (manifest.get("checkpoints") or {}).items():
        checkpoints[name] = Checkpoint.load(base / rel)
    for name, cfg_doc in (manifest.get("train") or {}).items():
        cfg = TrainConfig(**cfg_doc)
        try:
            checkpoints[name] = train_checkpoint(ws, cfg, name)
        except Exception as exc:
            raise StageError("train", str(exc)) from exc

    refine_cfg = RefineConfig(**manifest["refine"]) if "refine" in manifest else None
    methods = manifest.get("methods", ["noisy"])
    try:
        report = evaluate_methods(ws, methods, checkpoints, refine_cfg,
                                  classical_iters=manifest.get("classical_iters", 10000),
                                  save_estimates=True)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("evaluate", str(exc)) from exc
    write_report(ws, report)
    write_json(ws.root / "manifest.json", manifest)
    return report


def sweep(spec: SweepSpec, ws: Workspace,
          checkpoints: dict[str, Checkpoint],
          refine_cfg: RefineConfig | None = None,
          split: str = "test", classical_iters: int = 10000,
          refine_iters: int | None = None) -> list[dict]:
    """Re-corrupt the test split over a (beta0, noise) grid and evaluate.

    Uses the fixed trained checkpoints; per-frame corruption seeds come from
    the dataset index so every cell is reproducible.
    """
    base_scfg = ScatterConfig(**read_json(ws.root / "corrupt.json")["scatter"]) \
        if (ws.root / "corrupt.json").exists() else ScatterConfig()
    beam = BeamConfig(**read_json(ws.root / "corrupt.json")["beam"]) \
        if (ws.root / "corrupt.json").exists() else BeamConfig()
    if refine_cfg is not None and refine_iters is not None:
        refine_cfg = RefineConfig(lambda0=refine_cfg.lambda0, lambda1=refine_cfg.lambda1,
                                  lambda2=refine_cfg.lambda2, step_size=refine_cfg.step_size,
                                  max_iters=refine_iters)
    ids = ws.ids(split)
    cells = []
    for noise_var in spec.noise_vars:
        for beta0 in spec.beta0_values:
            scfg = ScatterConfig(beta0=beta0, beta_variation=base_scfg.beta_variation,
                                 sigma=base_scfg.sigma, noise_var=noise_var)
            corrupt_dataset(ws, beam, scfg, ids=ids)
            reconstruct_dataset(ws, ids=ids)
            report = evaluate_methods(ws, spec.methods, checkpoints, refine_cfg,
                                      split=split, classical_iters=classical_iters)
            cells.append({"beta0": beta0, "noise_var": noise_var,
                          "summary": report["summary"], "rows": report["rows"]})
    # restore the workspace's nominal corruption for the swept ids
    corrupt_dataset(ws, beam, base_scfg, ids=ids)
    reconstruct_dataset(ws, ids=ids)
    return cells


def write_sweep_report(ws: Workspace, cells: list[dict],
                       name: str = "sweep") -> Path:
    rows = []
    for cell in cells:
        for method in sorted(cell["summary"]):
            for metric in ("nl2", "nl1", "rel_mass"):
                s = cell["summary"][method][metric]
                rows.append([cell["beta0"], cell["noise_var"], method, metric,
                             s["mean"], s["std"]])
    path = ws.reports_dir() / f"{name}.csv"
    write_csv(path, ["beta0", "noise_var", "method", "metric", "mean", "std"], rows)
    return path
